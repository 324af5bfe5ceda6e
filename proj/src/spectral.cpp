#include "bslip/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "bslip/error.hpp"

namespace bslip::baseline {

namespace {

/// cos/sin tables for an n-point DFT, bins 0 .. n/2.
struct DftTable {
  std::size_t n = 0;
  std::vector<double> cos, sin;  // [bin * n + sample]

  explicit DftTable(std::size_t n_) : n(n_) {
    const std::size_t bins = n / 2 + 1;
    cos.resize(bins * n);
    sin.resize(bins * n);
    for (std::size_t k = 0; k < bins; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        // Reduce k*j mod n first so large products keep full precision.
        const double a = 2.0 * std::numbers::pi *
                         static_cast<double>((k * j) % n) / static_cast<double>(n);
        cos[k * n + j] = std::cos(a);
        sin[k * n + j] = std::sin(a);
      }
    }
  }
};

const DftTable& table(std::size_t n) {
  thread_local std::deque<DftTable> cache;  // stable references
  for (const auto& t : cache) {
    if (t.n == n) return t;
  }
  return cache.emplace_back(n);
}

}  // namespace

void validate(const PsdConfig& c) {
  if (c.segment < 2 || c.segment > kWindowLength) {
    throw ConfigError("PSD segment length must be in [2, " +
                      std::to_string(kWindowLength) + "]");
  }
  if (!(c.overlap >= 0.0 && c.overlap < 1.0)) {
    throw ConfigError("PSD overlap must be in [0, 1)");
  }
  if (!(c.cutoff_hz > 0.0 && c.cutoff_hz < kSampleRateHz / 2.0)) {
    throw ConfigError("PSD cutoff must be in (0, 50) Hz");
  }
}

Psd welch_psd(std::span<const double> x, double fs, const PsdConfig& config) {
  validate(config);
  const std::size_t n = config.segment;
  if (x.size() < n) {
    throw ShapeError("signal of " + std::to_string(x.size()) +
                     " samples is shorter than the PSD segment (" + std::to_string(n) + ")");
  }
  const auto step = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - config.overlap))));
  const std::size_t segments = (x.size() - n) / step + 1;
  const std::size_t bins = n / 2 + 1;

  std::vector<double> window(n);
  double wss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    window[j] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(j) /
                                     static_cast<double>(n));
    wss += window[j] * window[j];
  }
  const DftTable& dft = table(n);

  Psd out;
  out.df = fs / static_cast<double>(n);
  out.freqs.resize(bins);
  out.density.assign(bins, 0.0);
  for (std::size_t k = 0; k < bins; ++k) out.freqs[k] = static_cast<double>(k) * out.df;

  std::vector<double> seg(n);
  for (std::size_t s = 0; s < segments; ++s) {
    const auto part = x.subspan(s * step, n);
    const double mean = std::accumulate(part.begin(), part.end(), 0.0) / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) seg[j] = (part[j] - mean) * window[j];
    for (std::size_t k = 0; k < bins; ++k) {
      const double* c = &dft.cos[k * n];
      const double* si = &dft.sin[k * n];
      double re = 0.0, im = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        re += seg[j] * c[j];
        im -= seg[j] * si[j];
      }
      double p = (re * re + im * im) / (fs * wss);
      if (k != 0 && !(n % 2 == 0 && k == n / 2)) p *= 2.0;
      out.density[k] += p;
    }
  }
  for (auto& p : out.density) p /= static_cast<double>(segments);
  return out;
}

double psd_score(const nn::Tensor& window, const PsdConfig& config) {
  if (window.rank() != 2) throw ShapeError("psd_score expects a [channels x T] window");
  const std::size_t channels = window.dim(0), steps = window.dim(1);
  double score = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const Psd psd = welch_psd(std::span(window.values).subspan(c * steps, steps),
                              kSampleRateHz, config);
    for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
      if (psd.freqs[k] >= config.cutoff_hz) score += psd.density[k];
    }
  }
  return score;
}

ThresholdFit calibrate_threshold(std::span<const double> scores,
                                 std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("scores and labels differ in length");
  }
  std::size_t pos = 0, neg = 0;
  for (auto l : labels) (l == Label::Slip ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw DataError("threshold calibration needs both classes");
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  if (*lo == *hi) throw DataError("every score is equal; no threshold separates them");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Sweep thresholds upwards; at each distinct score everything up to and
  // including it is predicted static.
  ThresholdFit best{scores[order[0]], -1.0};
  std::size_t static_below = 0, slip_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) {
      (labels[order[i]] == Label::Slip ? slip_below : static_below) += 1;
    }
    const double tnr = static_cast<double>(static_below) / static_cast<double>(neg);
    const double tpr = static_cast<double>(pos - slip_below) / static_cast<double>(pos);
    const double ba = 0.5 * (tnr + tpr);
    if (ba > best.balanced_accuracy) best = {t, ba};
  }
  return best;
}

ThresholdFit calibrate_threshold(std::span<const LabeledWindow> windows,
                                 PsdConfig& config) {
  std::vector<double> scores;
  std::vector<Label> labels;
  scores.reserve(windows.size());
  for (const auto& w : windows) {
    scores.push_back(psd_score(w.x, config));
    labels.push_back(w.label);
  }
  const ThresholdFit fit = calibrate_threshold(scores, labels);
  config.threshold = fit.threshold;
  return fit;
}

Label psd_predict(const nn::Tensor& window, const PsdConfig& config) {
  return psd_score(window, config) > config.threshold ? Label::Slip : Label::Static;
}

std::string psd_to_json(const PsdBaseline& b) {
  nlohmann::ordered_json j;
  j["segment"] = b.config.segment;
  j["overlap"] = b.config.overlap;
  j["cutoff_hz"] = b.config.cutoff_hz;
  j["threshold"] = b.config.threshold;
  j["mean"] = b.norm.mean;
  j["stddev"] = b.norm.stddev;
  return j.dump(2) + "\n";
}

PsdBaseline psd_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    PsdBaseline b;
    b.config.segment = j.at("segment").get<std::size_t>();
    b.config.overlap = j.at("overlap").get<double>();
    b.config.cutoff_hz = j.at("cutoff_hz").get<double>();
    b.config.threshold = j.at("threshold").get<double>();
    b.norm.mean = j.at("mean").get<std::array<double, kTaxels>>();
    b.norm.stddev = j.at("stddev").get<std::array<double, kTaxels>>();
    validate(b.config);
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad PSD baseline file: ") + e.what());
  }
}

void save_psd(const std::filesystem::path& path, const PsdBaseline& baseline) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << psd_to_json(baseline);
}

PsdBaseline load_psd(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return psd_from_json(ss.str());
}

std::size_t freq_bins(const FreqImageConfig& config) { return config.dft_length / 2; }

nn::Tensor freq_image(const nn::Tensor& window, const FreqImageConfig& config) {
  if (window.rank() != 2) throw ShapeError("freq_image expects a [channels x T] window");
  const std::size_t n = config.dft_length;
  if (n < 2) throw ConfigError("DFT length must be at least 2");
  const std::size_t channels = window.dim(0), steps = window.dim(1);
  const std::size_t used = std::min(steps, n);
  const std::size_t bins = freq_bins(config);
  const DftTable& dft = table(n);

  nn::Tensor out({channels, bins});
  for (std::size_t c = 0; c < channels; ++c) {
    const double* x = &window.values[c * steps + (steps - used)];
    for (std::size_t k = 1; k <= bins; ++k) {
      const double* co = &dft.cos[k * n];
      const double* si = &dft.sin[k * n];
      double re = 0.0, im = 0.0;
      for (std::size_t j = 0; j < used; ++j) {
        re += x[j] * co[j];
        im -= x[j] * si[j];
      }
      out.at(c, k - 1) = std::log1p(std::hypot(re, im) / static_cast<double>(n));
    }
  }
  return out;
}

}  // namespace bslip::baseline
