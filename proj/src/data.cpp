#include "bslip/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "binio.hpp"
#include "bslip/error.hpp"

namespace bslip {

namespace {

constexpr std::string_view kPressureHeader = "t_ns,p0,p1,p2,p3,p4,p5";
constexpr std::string_view kVelocityHeader = "t_ns,vx,vy,omega";
constexpr std::string_view kCacheMagic = "BSLD";
constexpr std::uint16_t kCacheVersion = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n'))
    s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string range_string(std::int64_t a, std::int64_t b) {
  return "[" + std::to_string(a) + ", " + std::to_string(b) + "] ns";
}

}  // namespace

// --- enums -----------------------------------------------------------------------

std::string_view to_string(Label l) {
  return l == Label::Slip ? "slip" : "static";
}

std::string_view to_string(Curvature c) {
  switch (c) {
    case Curvature::Planar: return "planar";
    case Curvature::Spherical: return "spherical";
    case Curvature::CylX: return "cyl_x";
    case Curvature::CylY: return "cyl_y";
  }
  return "planar";
}

std::string_view to_string(Motion m) {
  switch (m) {
    case Motion::Static: return "static";
    case Motion::Translation: return "translation";
    case Motion::Rotation: return "rotation";
  }
  return "static";
}

Curvature parse_curvature(std::string_view s) {
  if (s == "planar") return Curvature::Planar;
  if (s == "spherical") return Curvature::Spherical;
  if (s == "cyl_x") return Curvature::CylX;
  if (s == "cyl_y") return Curvature::CylY;
  throw DataError("unknown curvature: " + std::string(s));
}

Motion parse_motion(std::string_view s) {
  if (s == "static") return Motion::Static;
  if (s == "translation") return Motion::Translation;
  if (s == "rotation") return Motion::Rotation;
  throw DataError("unknown motion: " + std::string(s));
}

// --- checks and synchronization ---------------------------------------------------

LogCheck check_log(std::span<const PressureFrame> frames) {
  LogCheck check;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const auto dt = frames[i].t_ns - frames[i - 1].t_ns;
    if (dt <= 0) check.strictly_increasing = false;
    if (dt > 3 * kNominalPeriodNs) ++check.gaps;
  }
  return check;
}

std::vector<SyncedFrame> synchronize(std::span<const PressureFrame> pressure,
                                     std::span<const VelocitySample> velocity) {
  if (pressure.empty() || velocity.empty()) {
    throw DataError("synchronize: both logs must be nonempty");
  }
  for (std::size_t i = 1; i < velocity.size(); ++i) {
    if (velocity[i].t_ns <= velocity[i - 1].t_ns) {
      throw DataError("synchronize: velocity timestamps not increasing at row " +
                      std::to_string(i));
    }
  }
  if (!check_log(pressure).strictly_increasing) {
    throw DataError("synchronize: pressure timestamps not increasing");
  }
  const auto v0 = velocity.front().t_ns, v1 = velocity.back().t_ns;
  const auto p0 = pressure.front().t_ns, p1 = pressure.back().t_ns;
  if (p1 < v0 || p0 > v1) {
    throw DataError("synchronize: no overlap between pressure " +
                    range_string(p0, p1) + " and velocity " +
                    range_string(v0, v1));
  }

  std::vector<SyncedFrame> out;
  out.reserve(pressure.size());
  std::size_t j = 0;
  for (const auto& f : pressure) {
    if (f.t_ns < v0 || f.t_ns > v1) continue;
    while (j + 1 < velocity.size() && velocity[j + 1].t_ns < f.t_ns) ++j;
    const VelocitySample& a = velocity[j];
    VelocitySample v;
    v.t_ns = f.t_ns;
    if (j + 1 >= velocity.size() || a.t_ns == f.t_ns) {
      v.vx = a.vx;
      v.vy = a.vy;
      v.omega = a.omega;
    } else {
      const VelocitySample& b = velocity[j + 1];
      const double w = static_cast<double>(f.t_ns - a.t_ns) /
                       static_cast<double>(b.t_ns - a.t_ns);
      v.vx = a.vx + w * (b.vx - a.vx);
      v.vy = a.vy + w * (b.vy - a.vy);
      if (a.omega && b.omega) {
        v.omega = *a.omega + w * (*b.omega - *a.omega);
      } else {
        v.omega = a.omega ? a.omega : b.omega;
      }
    }
    out.push_back({f, v});
  }
  return out;
}

// --- labeling ---------------------------------------------------------------------

double surface_speed(const VelocitySample& v, double r_eff) {
  double s = std::hypot(v.vx, v.vy);
  if (v.omega) s += r_eff * std::abs(*v.omega);
  return s;
}

std::vector<LabeledFrame> label_frames(std::span<const SyncedFrame> pairs,
                                       const LabelConfig& config) {
  if (!(config.v_static > 0.0 && config.v_static < config.v_slip)) {
    throw ConfigError("label thresholds need 0 < v_static < v_slip");
  }
  std::vector<LabeledFrame> out;
  out.reserve(pairs.size());
  Label current = Label::Static;
  for (const auto& p : pairs) {
    const double s = surface_speed(p.velocity, config.r_eff);
    if (s >= config.v_slip) {
      current = Label::Slip;
    } else if (s <= config.v_static) {
      current = Label::Static;
    }
    out.push_back({p.frame, current, s});
  }
  return out;
}

// --- windows ------------------------------------------------------------------------

nn::Tensor frames_to_tensor(std::span<const PressureFrame> frames) {
  const std::size_t n = frames.size();
  nn::Tensor x({kTaxels, n});
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t c = 0; c < kTaxels; ++c) x.at(c, t) = frames[t].p[c];
  return x;
}

std::vector<LabeledWindow> make_windows(std::span<const LabeledFrame> frames,
                                        const Annotation& meta,
                                        std::size_t stride,
                                        std::size_t length) {
  if (stride < 1) throw ConfigError("window stride must be >= 1");
  if (length < 1) throw ConfigError("window length must be >= 1");
  std::vector<LabeledWindow> out;
  if (frames.size() < length) {
    std::clog << "warning: recording '" << meta.source_id << "' has "
              << frames.size() << " frames, shorter than one window; skipped\n";
    return out;
  }
  out.reserve((frames.size() - length) / stride + 1);
  for (std::size_t start = 0; start + length <= frames.size(); start += stride) {
    LabeledWindow w;
    w.x = nn::Tensor({kTaxels, length});
    for (std::size_t t = 0; t < length; ++t)
      for (std::size_t c = 0; c < kTaxels; ++c)
        w.x.at(c, t) = frames[start + t].frame.p[c];
    w.label = frames[start + length - 1].label;
    w.meta = meta;
    out.push_back(std::move(w));
  }
  return out;
}

NormStats compute_stats(std::span<const LabeledWindow> windows) {
  if (windows.empty()) throw DataError("compute_stats: no windows");
  NormStats s;
  std::array<double, kTaxels> sum{}, count{};
  for (const auto& w : windows) {
    const std::size_t len = w.x.dim(1);
    for (std::size_t c = 0; c < kTaxels; ++c) {
      for (std::size_t t = 0; t < len; ++t) sum[c] += w.x.at(c, t);
      count[c] += static_cast<double>(len);
    }
  }
  for (std::size_t c = 0; c < kTaxels; ++c) s.mean[c] = sum[c] / count[c];
  std::array<double, kTaxels> sq{};
  for (const auto& w : windows) {
    const std::size_t len = w.x.dim(1);
    for (std::size_t c = 0; c < kTaxels; ++c)
      for (std::size_t t = 0; t < len; ++t) {
        const double d = w.x.at(c, t) - s.mean[c];
        sq[c] += d * d;
      }
  }
  for (std::size_t c = 0; c < kTaxels; ++c) {
    s.stddev[c] = std::max(std::sqrt(sq[c] / count[c]), 1e-9);
  }
  return s;
}

void normalize(nn::Tensor& x, const NormStats& stats) {
  const std::size_t len = x.dim(1);
  for (std::size_t c = 0; c < kTaxels; ++c) {
    const double sd = std::max(stats.stddev[c], 1e-9);
    for (std::size_t t = 0; t < len; ++t) {
      x.at(c, t) = (x.at(c, t) - stats.mean[c]) / sd;
    }
  }
}

void normalize(std::span<LabeledWindow> windows, const NormStats& stats) {
  for (auto& w : windows) normalize(w.x, stats);
}

std::vector<std::size_t> undersample(std::span<const LabeledWindow> windows,
                                     Rng& rng) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < windows.size(); ++i) {
    by_class[static_cast<int>(windows[i].label)].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw DataError("undersample: class '" +
                    std::string(by_class[0].empty() ? "static" : "slip") +
                    "' is empty");
  }
  const std::size_t keep = std::min(by_class[0].size(), by_class[1].size());
  std::vector<std::size_t> out;
  out.reserve(2 * keep);
  for (auto& cls : by_class) {
    rng.shuffle(cls);
    out.insert(out.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  rng.shuffle(out);
  return out;
}

// --- augmentation --------------------------------------------------------------------

ChannelMap compose(const ChannelMap& first, const ChannelMap& second) {
  ChannelMap out{};
  for (std::size_t c = 0; c < kTaxels; ++c) out[c] = first[second[c]];
  return out;
}

nn::Tensor permute_channels(const nn::Tensor& x, const ChannelMap& map) {
  if (x.rank() != 2 || x.dim(0) != kTaxels) {
    throw ShapeError("permute_channels expects [6 x T], got " +
                     nn::shape_string(x.shape));
  }
  nn::Tensor out(x.shape);
  const std::size_t len = x.dim(1);
  for (std::size_t c = 0; c < kTaxels; ++c)
    for (std::size_t t = 0; t < len; ++t) out.at(c, t) = x.at(map[c], t);
  return out;
}

LabeledWindow augment(const LabeledWindow& window, Rng& rng,
                      const AugmentConfig& config) {
  ChannelMap map = kIdentityMap;
  for (const ChannelMap& m : {kFlipXMap, kFlipYMap, kRotate180Map}) {
    if (rng.bernoulli(config.transform_probability)) map = compose(map, m);
  }
  LabeledWindow out;
  out.label = window.label;
  out.meta = window.meta;
  out.x = permute_channels(window.x, map);
  if (config.noise_sigma > 0.0) {
    for (double& v : out.x.values) v += rng.normal(0.0, config.noise_sigma);
  }
  return out;
}

// --- splitting -------------------------------------------------------------------------

Dataset split(std::vector<std::vector<LabeledWindow>> recordings, Rng& rng,
              double val_fraction) {
  if (recordings.size() < 10) {
    throw DataError("split needs at least 10 recordings, got " +
                    std::to_string(recordings.size()));
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must be in (0, 1)");
  }
  const std::size_t n = recordings.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))));
  std::vector<bool> is_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;

  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = is_val[i] ? ds.val : ds.train;
    for (auto& w : recordings[i]) dst.push_back(std::move(w));
  }
  ds.stats = compute_stats(ds.train);
  normalize(ds.train, ds.stats);
  normalize(ds.val, ds.stats);
  return ds;
}

std::vector<LabeledWindow> windows_from_recording(const Recording& rec,
                                                  const LabelConfig& labels,
                                                  std::size_t stride) {
  const auto synced = synchronize(rec.frames, rec.velocity);
  const auto labeled = label_frames(synced, labels);
  return make_windows(labeled, rec.meta, stride);
}

// --- CSV and sidecars ----------------------------------------------------------------------

std::optional<PressureFrame> parse_pressure_row(std::string_view line) {
  const auto fields = split_fields(trim(line));
  if (fields.size() != 1 + kTaxels) return std::nullopt;
  PressureFrame f;
  if (!parse_number(fields[0], f.t_ns)) return std::nullopt;
  for (std::size_t c = 0; c < kTaxels; ++c) {
    if (!parse_number(fields[1 + c], f.p[c]) || !std::isfinite(f.p[c])) {
      return std::nullopt;
    }
  }
  return f;
}

void write_pressure_csv(std::ostream& os, std::span<const PressureFrame> frames) {
  os << kPressureHeader << '\n';
  for (const auto& f : frames) {
    os << f.t_ns;
    for (double p : f.p) os << ',' << format_double(p);
    os << '\n';
  }
}

std::vector<PressureFrame> read_pressure_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != kPressureHeader) {
    throw DataError("pressure log: expected header '" +
                    std::string(kPressureHeader) + "'");
  }
  std::vector<PressureFrame> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto f = parse_pressure_row(line);
    if (!f) throw DataError("pressure log: malformed row " + std::to_string(row));
    out.push_back(*f);
  }
  return out;
}

void write_velocity_csv(std::ostream& os, std::span<const VelocitySample> v) {
  os << kVelocityHeader << '\n';
  for (const auto& s : v) {
    os << s.t_ns << ',' << format_double(s.vx) << ',' << format_double(s.vy)
       << ',';
    if (s.omega) os << format_double(*s.omega);
    os << '\n';
  }
}

std::vector<VelocitySample> read_velocity_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != kVelocityHeader) {
    throw DataError("velocity log: expected header '" +
                    std::string(kVelocityHeader) + "'");
  }
  std::vector<VelocitySample> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(trim(line));
    VelocitySample s;
    bool ok = fields.size() == 4 && parse_number(fields[0], s.t_ns) &&
              parse_number(fields[1], s.vx) && parse_number(fields[2], s.vy) &&
              std::isfinite(s.vx) && std::isfinite(s.vy);
    if (ok && !fields[3].empty()) {
      double w = 0.0;
      ok = parse_number(fields[3], w) && std::isfinite(w);
      s.omega = w;
    }
    if (!ok) throw DataError("velocity log: malformed row " + std::to_string(row));
    out.push_back(s);
  }
  return out;
}

std::string annotation_to_json(const Annotation& a) {
  nlohmann::ordered_json j;
  j["source_id"] = a.source_id;
  j["speed_mps"] = a.speed_mps;
  j["direction_deg"] = a.direction_deg;
  j["curvature"] = std::string(to_string(a.curvature));
  j["motion"] = std::string(to_string(a.motion));
  j["angular_rate"] = a.angular_rate;
  return j.dump(2) + "\n";
}

Annotation annotation_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Annotation a;
    a.source_id = j.value("source_id", std::string{});
    a.speed_mps = j.at("speed_mps").get<double>();
    a.direction_deg = j.at("direction_deg").get<double>();
    a.curvature = parse_curvature(j.at("curvature").get<std::string>());
    a.motion = parse_motion(j.at("motion").get<std::string>());
    a.angular_rate = j.value("angular_rate", 0.0);
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("annotation: ") + e.what());
  }
}

void write_recording(const std::filesystem::path& dir, const Recording& rec) {
  std::filesystem::create_directories(dir);
  const std::string& id = rec.meta.source_id;
  std::ofstream p(dir / (id + ".pressure.csv"));
  write_pressure_csv(p, rec.frames);
  std::ofstream v(dir / (id + ".velocity.csv"));
  write_velocity_csv(v, rec.velocity);
  std::ofstream m(dir / (id + ".json"));
  m << annotation_to_json(rec.meta);
  if (!p || !v || !m) throw DataError("failed writing recording " + id);
}

Recording read_recording(const std::filesystem::path& dir,
                         const std::string& source_id) {
  auto open = [&](const std::string& suffix) {
    std::ifstream f(dir / (source_id + suffix));
    if (!f) {
      throw DataError("cannot open " + (dir / (source_id + suffix)).string());
    }
    return f;
  };
  Recording rec;
  {
    auto f = open(".json");
    std::stringstream ss;
    ss << f.rdbuf();
    rec.meta = annotation_from_json(ss.str());
    if (rec.meta.source_id.empty()) rec.meta.source_id = source_id;
  }
  {
    auto f = open(".pressure.csv");
    rec.frames = read_pressure_csv(f);
  }
  {
    auto f = open(".velocity.csv");
    rec.velocity = read_velocity_csv(f);
  }
  return rec;
}

std::vector<std::string> list_recordings(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("not a directory: " + dir.string());
  }
  std::vector<std::string> ids;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") {
      ids.push_back(e.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

// --- window cache ------------------------------------------------------------------------

void write_window_cache(const std::filesystem::path& path,
                        std::span<const LabeledWindow> windows) {
  binio::Writer w;
  w.bytes(kCacheMagic);
  w.u16(kCacheVersion);
  w.u32(static_cast<std::uint32_t>(windows.size()));
  w.u32(static_cast<std::uint32_t>(kTaxels));
  w.u32(static_cast<std::uint32_t>(kWindowLength));
  for (const auto& win : windows) {
    if (win.x.size() != kTaxels * kWindowLength) {
      throw ShapeError("window cache: window of shape " +
                       nn::shape_string(win.x.shape));
    }
    w.u8(static_cast<std::uint8_t>(win.label));
    w.u8(static_cast<std::uint8_t>(win.meta.curvature));
    w.u8(static_cast<std::uint8_t>(win.meta.motion));
    w.f32(static_cast<float>(win.meta.speed_mps));
    w.f32(static_cast<float>(win.meta.direction_deg));
    w.f32(static_cast<float>(win.meta.angular_rate));
    w.str(win.meta.source_id);
    for (double v : win.x.values) w.f32(static_cast<float>(v));
  }
  binio::write_file(path.string(), w.data());
}

std::vector<LabeledWindow> read_window_cache(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path.string());
  binio::Reader r(bytes.data(), bytes.size());
  if (r.bytes(4) != kCacheMagic) throw DataError("window cache: bad magic");
  if (r.u16() != kCacheVersion) throw DataError("window cache: unsupported version");
  const std::uint32_t count = r.u32();
  const std::uint32_t channels = r.u32();
  const std::uint32_t length = r.u32();
  if (channels != kTaxels || length != kWindowLength) {
    throw DataError("window cache: unexpected window shape");
  }
  std::vector<LabeledWindow> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count && !r.truncated(); ++i) {
    LabeledWindow win;
    const auto label = r.u8(), curv = r.u8(), motion = r.u8();
    if (label > 1 || curv > 3 || motion > 2) {
      throw DataError("window cache: bad enum value in window " + std::to_string(i));
    }
    win.label = static_cast<Label>(label);
    win.meta.curvature = static_cast<Curvature>(curv);
    win.meta.motion = static_cast<Motion>(motion);
    win.meta.speed_mps = r.f32();
    win.meta.direction_deg = r.f32();
    win.meta.angular_rate = r.f32();
    win.meta.source_id = r.str();
    for (double& v : win.x.values) v = r.f32();
    out.push_back(std::move(win));
  }
  if (r.truncated()) throw DataError("window cache: truncated file");
  return out;
}

}  // namespace bslip
