#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "bslip/detector.hpp"
#include "bslip/error.hpp"
#include "bslip/simulator.hpp"
#include "bslip/tcn.hpp"

using namespace bslip;
using namespace bslip::runtime;

namespace {

constexpr Label S = Label::Static, P = Label::Slip;

/// Slip logit equals the newest taxel-0 value of the window; nothing else.
class LastFrameModel final : public Classifier {
 public:
  nn::ParamStore& params() override { return params_; }
  const nn::ParamStore& params() const override { return params_; }
  nn::Matrix forward(std::span<const nn::Tensor> windows, bool, Rng*,
                     std::unique_ptr<ForwardCache>*) const override {
    nn::Matrix out = nn::Matrix::Zero(2, static_cast<Eigen::Index>(windows.size()));
    for (std::size_t i = 0; i < windows.size(); ++i) {
      out(1, static_cast<Eigen::Index>(i)) = windows[i].at(0, windows[i].dim(1) - 1);
    }
    return out;
  }
  void backward(const ForwardCache*, const nn::Matrix&) override {
    throw StateError("no backward");
  }
  nn::Matrix input_gradient(const ForwardCache*, const nn::Matrix&) override {
    throw StateError("no backward");
  }

 private:
  nn::ParamStore params_;
};

PressureFrame frame(std::int64_t i, double x) {
  PressureFrame f;
  f.t_ns = i * 10'000'000;
  f.p.fill(x);
  return f;
}

/// Static (x = -3) except frames [from, to), which are slip (x = +3).
std::vector<PressureFrame> stream(std::size_t n, std::size_t from, std::size_t to) {
  std::vector<PressureFrame> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(frame(static_cast<std::int64_t>(i), i >= from && i < to ? 3.0 : -3.0));
  }
  return out;
}

std::vector<std::optional<Transition>> run(Debouncer& d, const std::vector<Label>& labels) {
  std::vector<std::optional<Transition>> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out.push_back(d.push(labels[i], static_cast<std::int64_t>(i), 0.5 + 0.01 * i));
  }
  return out;
}

}  // namespace

TEST(Debounce, OpensOnSecondConsecutiveSlip) {
  Debouncer d;
  const auto t = run(d, {S, S, P, S, P, P, P});
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i == 5) continue;
    EXPECT_FALSE(t[i]) << i;
  }
  ASSERT_TRUE(t[5]);
  EXPECT_EQ(t[5]->type, Transition::Type::Open);
  EXPECT_EQ(t[5]->t_ns, 5);
  EXPECT_DOUBLE_EQ(t[5]->peak_p_slip, 0.55);  // run peak, not the isolated blip
  EXPECT_EQ(d.active_event()->onset_ns, 5);
  EXPECT_DOUBLE_EQ(d.active_event()->peak_p_slip, 0.56);
}

TEST(Debounce, SingleBlipsNeverOpen) {
  Debouncer d;
  for (const auto& t : run(d, {P, S, P, S, S, P, S, P})) EXPECT_FALSE(t);
  EXPECT_FALSE(d.active_event());
}

TEST(Debounce, ClosesOnSecondConsecutiveStatic) {
  Debouncer d;
  const auto t = run(d, {P, P, S, P, S, S, S});
  ASSERT_TRUE(t[1]);
  for (std::size_t i : {2u, 3u, 4u, 6u}) EXPECT_FALSE(t[i]) << i;
  ASSERT_TRUE(t[5]);
  EXPECT_EQ(t[5]->type, Transition::Type::Close);
  EXPECT_EQ(t[5]->t_ns, 5);
  EXPECT_DOUBLE_EQ(t[5]->peak_p_slip, 0.53);
  EXPECT_FALSE(d.active_event());
  EXPECT_EQ(d.consecutive_static(), 3u);
}

TEST(Debounce, AlternatingLabelsHoldState) {
  Debouncer d;
  run(d, {P, P});
  for (int i = 0; i < 20; ++i) {
    EXPECT_FALSE(d.push(i % 2 ? P : S, 100 + i, 0.4));
    EXPECT_TRUE(d.active_event());
  }
}

TEST(Detector, JsonLine) {
  EXPECT_EQ(to_json_line({Transition::Type::Open, 5, 0.5}),
            R"({"type":"open","t_ns":5,"peak_p_slip":0.5})");
  EXPECT_EQ(to_json_line({Transition::Type::Close, 1'700'000'000'000'000'000, 0.25}),
            R"({"type":"close","t_ns":1700000000000000000,"peak_p_slip":0.25})");
}

TEST(Detector, StaticStreamEmitsNothing) {
  LastFrameModel m;
  Detector d(m);
  for (const auto& f : stream(300, 0, 0)) EXPECT_FALSE(d.push_frame(f));
  EXPECT_EQ(d.debouncer().consecutive_static(), 201u);
  EXPECT_EQ(d.buffered(), kWindowLength);
}

TEST(Detector, FirstClassificationAtFullWindow) {
  LastFrameModel m;
  Detector d(m);
  const auto s = stream(101, 0, 0);
  for (std::size_t i = 0; i < 99; ++i) d.push_frame(s[i]);
  EXPECT_FALSE(d.last());
  d.push_frame(s[99]);
  ASSERT_TRUE(d.last());
  EXPECT_EQ(d.last()->t_ns, s[99].t_ns);
  EXPECT_EQ(d.last()->label, S);
}

TEST(Detector, OutOfOrderFrameLeavesStateUnchanged) {
  LastFrameModel m;
  Detector d(m), ref(m);
  const auto s = stream(160, 120, 160);
  for (std::size_t i = 0; i < 121; ++i) {
    d.push_frame(s[i]);
    ref.push_frame(s[i]);
  }
  const auto before = *d.last();
  EXPECT_THROW(d.push_frame(s[120]), DataError);
  EXPECT_THROW(d.push_frame(s[50]), DataError);
  EXPECT_EQ(d.last()->t_ns, before.t_ns);
  EXPECT_EQ(d.debouncer().consecutive_slip(), 1u);
  for (std::size_t i = 121; i < s.size(); ++i) {
    const auto a = d.push_frame(s[i]);
    const auto b = ref.push_frame(s[i]);
    EXPECT_EQ(a.has_value(), b.has_value()) << i;
    EXPECT_EQ(d.last()->p_slip, ref.last()->p_slip);
  }
}

TEST(Detector, RunDetectEmitsOneEvent) {
  LastFrameModel m;
  std::stringstream csv, out, warn;
  write_pressure_csv(csv, stream(400, 150, 250));
  const auto stats = run_detect(csv, m, out, warn);
  const double peak = m.predict(frames_to_tensor(stream(100, 0, 100)))[1];
  EXPECT_NEAR(peak, 1.0 / (1.0 + std::exp(-3.0)), 1e-15);
  const std::string expected =
      to_json_line({Transition::Type::Open, frame(151, 0).t_ns, peak}) + "\n" +
      to_json_line({Transition::Type::Close, frame(251, 0).t_ns, peak}) + "\n";
  EXPECT_EQ(out.str(), expected);
  EXPECT_EQ(stats.rows, 400u);
  EXPECT_EQ(stats.classifications, 301u);
  EXPECT_EQ(stats.events, 2u);
  EXPECT_EQ(warn.str(), "");
}

TEST(Detector, HeaderIsSkipped) {
  LastFrameModel m;
  std::stringstream csv, out, warn;
  write_pressure_csv(csv, stream(120, 0, 0));
  ASSERT_TRUE(csv.str().starts_with("t_ns"));
  EXPECT_EQ(run_detect(csv, m, out, warn).rows, 120u);
  std::stringstream bare(csv.str().substr(csv.str().find('\n') + 1));
  EXPECT_EQ(run_detect(bare, m, out, warn).rows, 120u);
  EXPECT_EQ(warn.str(), "");
}

TEST(Detector, MalformedBudget) {
  LastFrameModel m;
  auto input = [](std::size_t bad) {
    std::stringstream csv;
    write_pressure_csv(csv, stream(200, 0, 0));
    std::string text = csv.str();
    std::string mangled;
    std::istringstream is(text);
    std::string line;
    std::size_t row = 0;
    while (std::getline(is, line)) {
      // Rows 10, 20, ... become malformed.
      mangled += (row > 0 && row % 10 == 0 && row / 10 <= bad) ? "1,2,x\n" : line + "\n";
      ++row;
    }
    return mangled;
  };
  std::stringstream out, warn;
  std::stringstream two(input(2));
  const auto stats = run_detect(two, m, out, warn);
  EXPECT_EQ(stats.malformed, 2u);
  EXPECT_EQ(stats.rows, 200u);
  EXPECT_NE(warn.str().find("malformed row 10"), std::string::npos);
  std::stringstream three(input(3));
  EXPECT_THROW(run_detect(three, m, out, warn), DataError);
  // Non-increasing timestamps count against the same budget.
  std::stringstream csv;
  auto s = stream(150, 0, 0);
  s.insert(s.begin() + 120, {s[100], s[101]});
  write_pressure_csv(csv, s);
  EXPECT_THROW(run_detect(csv, m, out, warn), DataError);
}

// The online ring buffer and the offline window path see the same numbers.
TEST(Detector, OnlineMatchesOfflineBitForBit) {
  sim::SimConfig c;
  c.motion = Motion::Translation;
  c.speed_mps = 0.1;
  c.direction_deg = 45.0;
  c.duration_s = 6.0;
  c.seed = 3;
  c.source_id = "t";
  const Recording r = sim::simulate(c);
  auto windows = windows_from_recording(r, LabelConfig{}, 1);
  ASSERT_EQ(windows.size(), r.frames.size() - kWindowLength + 1);

  Rng rng(9);
  TcnModel model = TcnModel::build(TcnConfig{}, rng);
  model.norm = compute_stats(windows);
  normalize(windows, model.norm);
  const auto labels = classify(model, windows);

  Detector d(model);
  for (std::size_t i = 0; i < r.frames.size(); ++i) {
    d.push_frame(r.frames[i]);
    if (i + 1 < kWindowLength) continue;
    const std::size_t k = i + 1 - kWindowLength;
    const auto p = model.predict(windows[k].x);
    ASSERT_EQ(d.last()->p_slip, p[1]) << i;
    ASSERT_EQ(d.last()->label, labels[k]) << i;
  }
}
