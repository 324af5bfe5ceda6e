#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "bslip/checkpoint.hpp"
#include "bslip/error.hpp"
#include "bslip/freq_cnn.hpp"
#include "bslip/simulator.hpp"
#include "bslip/spectral.hpp"
#include "bslip/tcn.hpp"
#include "support.hpp"

using namespace bslip;
using namespace bslip::baseline;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> tone(double hz, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * kPi * hz * static_cast<double>(i) / 100.0);
  return x;
}

// scipy.signal.welch(x, fs=100, window="hann", nperseg=50, noverlap=25,
// detrend="constant", scaling="density") for x[n] = sin(0.7n) + 0.5cos(2.1n)
// + 0.01n^2, n = 0..99.
const std::vector<double> kScipyWelch{
    0.21920839179621252,    28.21353821989724,      1.4650160538592711,
    0.085261422465774,      0.010386940041819314,   0.13168856542129362,
    0.11967672827137911,    0.009488262352660452,   0.00045998742528243234,
    0.00014072955013155698, 6.313680778483696e-05,  3.279295800110951e-05,
    1.8647196761524638e-05, 1.2116903795357672e-05, 1.5791079165086445e-05,
    0.0002461330364878936,  0.021201091275471068,   0.037410289536218416,
    0.0036098118654815446,  2.8293846828155455e-05, 2.871251584008917e-06,
    6.88514620593558e-07,   2.425614828241531e-07,  9.080164976776652e-08,
    2.7870093183004467e-08, 4.915948344905499e-09};

// Window drawn from a simulated trace: frames [start, start + 100).
nn::Tensor trace_window(const Recording& r, std::size_t start) {
  return frames_to_tensor(std::span(r.frames).subspan(start, kWindowLength));
}

}  // namespace

TEST(Welch, MatchesScipy) {
  std::vector<double> x(100);
  for (std::size_t n = 0; n < 100; ++n) {
    const double t = static_cast<double>(n);
    x[n] = std::sin(0.7 * t) + 0.5 * std::cos(2.1 * t) + 0.01 * t * t;
  }
  const Psd p = welch_psd(x, 100.0, PsdConfig{});
  ASSERT_EQ(p.density.size(), kScipyWelch.size());
  EXPECT_DOUBLE_EQ(p.df, 2.0);
  for (std::size_t k = 0; k < kScipyWelch.size(); ++k) {
    EXPECT_NEAR(p.density[k], kScipyWelch[k], 1e-12 * std::max(1.0, kScipyWelch[k])) << k;
    EXPECT_DOUBLE_EQ(p.freqs[k], 2.0 * static_cast<double>(k));
  }
}

TEST(Welch, ConstantSignal) {
  const Psd p = welch_psd(std::vector<double>(100, 3.5), 100.0, PsdConfig{});
  for (double d : p.density) EXPECT_NEAR(d, 0.0, 1e-20);
}

TEST(Welch, ToneLocatedExactly) {
  const Psd p = welch_psd(tone(20.0, 100), 100.0, PsdConfig{});
  const auto peak = std::max_element(p.density.begin(), p.density.end()) - p.density.begin();
  EXPECT_EQ(p.freqs[static_cast<std::size_t>(peak)], 20.0);
}

TEST(Welch, ParsevalOnWhiteNoise) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(100);
    for (double& v : x) v = rng.normal();
    const Psd p = welch_psd(x, 100.0, PsdConfig{});
    double mass = 0.0;
    for (double d : p.density) mass += d * p.df;
    double mean = 0.0, var = 0.0;
    for (double v : x) mean += v / 100.0;
    for (double v : x) var += (v - mean) * (v - mean) / 100.0;
    EXPECT_NEAR(mass / var, 1.0, 0.15);
  }
}

TEST(Welch, OffsetInvariantAndShortSignal) {
  Rng rng(2);
  std::vector<double> x(100), y(100);
  for (std::size_t i = 0; i < 100; ++i) {
    x[i] = rng.normal();
    y[i] = x[i] + 250.0;
  }
  const Psd a = welch_psd(x, 100.0, PsdConfig{}), b = welch_psd(y, 100.0, PsdConfig{});
  for (std::size_t k = 0; k < a.density.size(); ++k) EXPECT_NEAR(a.density[k], b.density[k], 1e-9);
  EXPECT_THROW(welch_psd(std::vector<double>(40, 0.0), 100.0, PsdConfig{}), ShapeError);
}

TEST(PsdConfig, Validation) {
  PsdConfig c;
  EXPECT_NO_THROW(validate(c));
  c.cutoff_hz = 50.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = PsdConfig{};
  c.overlap = 1.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = PsdConfig{};
  c.segment = 101;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(PsdScore, ZeroAdditiveAndInvariant) {
  EXPECT_EQ(psd_score(nn::Tensor({kTaxels, kWindowLength}), PsdConfig{}), 0.0);
  const auto w = test::toy_windows(3, 2)[1];
  double sum = 0.0;
  for (std::size_t c = 0; c < kTaxels; ++c) {
    nn::Tensor one({kTaxels, kWindowLength});
    for (std::size_t t = 0; t < kWindowLength; ++t) one.at(c, t) = w.x.at(c, t);
    sum += psd_score(one, PsdConfig{});
  }
  const double s = psd_score(w.x, PsdConfig{});
  EXPECT_NEAR(s, sum, 1e-12 * s);
  for (const auto& m : {kFlipXMap, kFlipYMap, kRotate180Map}) {
    EXPECT_NEAR(psd_score(permute_channels(w.x, m), PsdConfig{}), s, 1e-12 * s);
  }
}

TEST(PsdScore, SlipAboveStaticOnSimulatedTraces) {
  int wins = 0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    sim::SimConfig c;
    c.motion = Motion::Translation;
    c.speed_mps = 0.1;
    c.direction_deg = 45.0 * static_cast<double>(i % 8);
    c.curvature = static_cast<Curvature>(i % 4);
    c.duration_s = 4.0;
    c.seed = 100 + i;
    const Recording r = sim::simulate(c);
    // Static phase covers frames 0..199, slip 200..399.
    const double stat = psd_score(trace_window(r, 50), PsdConfig{});
    const double slip = psd_score(trace_window(r, 250), PsdConfig{});
    wins += slip > stat;
  }
  EXPECT_GE(wins, 190);
}

TEST(Calibrate, SeparatedScores) {
  const std::vector<double> s{1, 2, 3, 4};
  const std::vector<Label> l{Label::Static, Label::Static, Label::Slip, Label::Slip};
  const auto fit = calibrate_threshold(s, l);
  EXPECT_EQ(fit.balanced_accuracy, 1.0);
  EXPECT_EQ(fit.threshold, 2.0);
}

TEST(Calibrate, TiesGoToLowestThreshold) {
  const std::vector<double> s{1, 2, 3, 4};
  const std::vector<Label> l{Label::Static, Label::Slip, Label::Static, Label::Slip};
  const auto fit = calibrate_threshold(s, l);
  EXPECT_EQ(fit.balanced_accuracy, 0.75);
  EXPECT_EQ(fit.threshold, 1.0);
}

TEST(Calibrate, ShuffledLabelsNearChance) {
  Rng rng(5);
  std::vector<double> s(4000);
  std::vector<Label> l(4000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform();
    l[i] = i % 2 ? Label::Slip : Label::Static;
  }
  rng.shuffle(l);
  const auto fit = calibrate_threshold(s, l);
  EXPECT_NEAR(fit.balanced_accuracy, 0.5, 0.05);
  const auto again = calibrate_threshold(s, l);
  EXPECT_EQ(again.threshold, fit.threshold);
}

TEST(Calibrate, Errors) {
  const std::vector<Label> l{Label::Static, Label::Slip};
  EXPECT_THROW(calibrate_threshold(std::vector<double>{1, 1}, l), DataError);
  EXPECT_THROW(calibrate_threshold(std::vector<double>{1, 2},
                                   std::vector<Label>{Label::Slip, Label::Slip}),
               DataError);
}

TEST(Calibrate, WindowsAndPredict) {
  auto ws = test::toy_windows(6, 40);
  PsdConfig c;
  const auto fit = calibrate_threshold(ws, c);
  EXPECT_EQ(c.threshold, fit.threshold);
  EXPECT_EQ(fit.balanced_accuracy, 1.0);
  for (const auto& w : ws) EXPECT_EQ(psd_predict(w.x, c), w.label);
}

TEST(PsdBaseline, JsonRoundTrip) {
  PsdBaseline b;
  b.config.threshold = 0.1 + 0.2;
  b.config.cutoff_hz = 17.5;
  b.norm.mean = {1, 2, 3, 4, 5, 6.25};
  const auto dir = test::temp_dir("psd");
  save_psd(dir / "p.json", b);
  const PsdBaseline back = load_psd(dir / "p.json");
  EXPECT_EQ(back.config.threshold, b.config.threshold);
  EXPECT_EQ(back.config.cutoff_hz, 17.5);
  EXPECT_EQ(back.config.segment, b.config.segment);
  EXPECT_EQ(back.norm.mean, b.norm.mean);
  EXPECT_THROW(psd_from_json("{\"segment\": 50"), DataError);
}

TEST(FreqImage, ZeroAndTone) {
  const nn::Tensor zero = freq_image(nn::Tensor({kTaxels, kWindowLength}));
  EXPECT_EQ(zero.shape, (std::vector<std::size_t>{kTaxels, 50}));
  for (double v : zero.values) EXPECT_EQ(v, 0.0);

  nn::Tensor w({kTaxels, kWindowLength});
  const auto x = tone(20.0, 100, 2.0);
  for (std::size_t t = 0; t < 100; ++t) w.at(0, t) = x[t];
  const nn::Tensor img = freq_image(w);
  std::size_t arg = 0;
  for (std::size_t k = 0; k < 50; ++k)
    if (img.at(0, k) > img.at(0, arg)) arg = k;
  EXPECT_EQ(arg + 1, 20u);  // column k holds bin k + 1 = (k + 1) Hz
  EXPECT_NEAR(img.at(0, 19), std::log1p(1.0), 1e-12);  // |X|/N = A/2
  for (std::size_t c = 1; c < kTaxels; ++c)
    for (std::size_t k = 0; k < 50; ++k) EXPECT_EQ(img.at(c, k), 0.0);
}

TEST(FreqImage, MatchesDirectDft) {
  const auto w = test::toy_windows(7, 1)[0];
  const nn::Tensor img = freq_image(w.x);
  for (std::size_t c = 0; c < kTaxels; ++c) {
    for (std::size_t k = 1; k <= 50; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t n = 0; n < 100; ++n)
        acc += w.x.at(c, n) * std::polar(1.0, -2 * kPi * static_cast<double>(k * n) / 100.0);
      EXPECT_NEAR(img.at(c, k - 1), std::log1p(std::abs(acc) / 100.0), 1e-12);
    }
  }
}

TEST(FreqImage, FlipsPermuteRows) {
  const auto w = test::toy_windows(8, 1)[0];
  const nn::Tensor img = freq_image(w.x);
  for (const auto& m : {kFlipXMap, kFlipYMap, kRotate180Map}) {
    const nn::Tensor flipped = freq_image(permute_channels(w.x, m));
    for (std::size_t c = 0; c < kTaxels; ++c)
      for (std::size_t k = 0; k < 50; ++k) EXPECT_EQ(flipped.at(c, k), img.at(m[c], k));
  }
}

TEST(FreqCnn, ProbabilitiesAndCheckpoint) {
  Rng rng(9);
  FreqCnn m = FreqCnn::build(FreqCnnConfig{}, rng);
  const auto ws = test::toy_windows(10, 20);
  for (const auto& w : ws) {
    const nn::Tensor p = m.predict(w.x);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-9);
  }
  const auto dir = test::temp_dir("fcnn");
  m.norm.stddev = {2, 2, 2, 2, 2, 2};
  m.save(dir / "f.bslf");
  const FreqCnn back = FreqCnn::load(dir / "f.bslf", FreqCnnConfig{});
  EXPECT_EQ(back.norm.stddev, m.norm.stddev);
  for (const auto& w : ws) EXPECT_LE(std::abs(back.predict(w.x)[1] - m.predict(w.x)[1]), 1e-6);

  Rng trng(11);
  TcnModel::build(TcnConfig{}, trng).save(dir / "t.bslp");
  try {
    FreqCnn::load(dir / "t.bslp");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.code(), CheckpointError::Code::BadMagic);
  }
  FreqCnnConfig other;
  other.fc_width = 16;
  try {
    FreqCnn::load(dir / "f.bslf", other);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.code(), CheckpointError::Code::ShapeMismatch);
  }
}

TEST(FreqCnn, SingleBatchOverfit) {
  Rng noise(12);
  Dataset d;
  for (std::size_t i = 0; i < 256; ++i) {
    d.train.push_back(test::toy_window(noise, Label::Static, 0.0));
    d.train.back().label = i % 2 ? Label::Slip : Label::Static;
  }
  Rng rng(13);
  FreqCnn m = FreqCnn::build(FreqCnnConfig{}, rng);
  TrainSchedule s;
  s.epochs = 200;
  s.augment = false;
  train(m, d, s);
  EXPECT_GE(score(m, d.train).accuracy, 0.99);
}
