#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "bslip/data.hpp"
#include "bslip/rng.hpp"

namespace bslip::test {

/// White-noise window; slip windows carry a 20 Hz tone on every taxel.
inline LabeledWindow toy_window(Rng& rng, Label label, double tone = 1.5) {
  LabeledWindow w;
  w.label = label;
  for (std::size_t c = 0; c < kTaxels; ++c) {
    const double phase = rng.uniform() * 2.0 * std::numbers::pi;
    for (std::size_t t = 0; t < kWindowLength; ++t) {
      double v = rng.normal();
      if (label == Label::Slip) {
        v += tone * std::sin(2.0 * std::numbers::pi * 20.0 * static_cast<double>(t) /
                                 kSampleRateHz + phase);
      }
      w.x.at(c, t) = v;
    }
  }
  return w;
}

inline std::vector<LabeledWindow> toy_windows(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<LabeledWindow> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(toy_window(rng, i % 2 ? Label::Slip : Label::Static));
  }
  return out;
}

inline Dataset toy_dataset(std::uint64_t seed, std::size_t train, std::size_t val) {
  Dataset d;
  d.train = toy_windows(seed, train);
  d.val = toy_windows(seed + 1000, val);
  return d;
}

/// Metrics recomputed by counting raw (pred, label) pairs, independent of
/// the confusion-matrix code.
struct OracleMetrics {
  double accuracy = 0.0;
  double precision[2]{}, recall[2]{}, f1[2]{};
  double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
};

inline OracleMetrics oracle_metrics(const std::vector<Label>& preds,
                                    const std::vector<Label>& labels) {
  OracleMetrics m;
  const double n = static_cast<double>(labels.size());
  double correct = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += preds[i] == labels[i];
  m.accuracy = correct / n;
  for (int c = 0; c < 2; ++c) {
    const Label cls = static_cast<Label>(c);
    double tp = 0.0, predicted = 0.0, actual = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      tp += preds[i] == cls && labels[i] == cls;
      predicted += preds[i] == cls;
      actual += labels[i] == cls;
    }
    m.precision[c] = predicted > 0 ? tp / predicted : 0.0;
    m.recall[c] = actual > 0 ? tp / actual : 0.0;
    const double pr = m.precision[c] + m.recall[c];
    m.f1[c] = pr > 0 ? 2.0 * m.precision[c] * m.recall[c] / pr : 0.0;
    m.weighted_precision += m.precision[c] * actual / n;
    m.weighted_recall += m.recall[c] * actual / n;
    m.weighted_f1 += m.f1[c] * actual / n;
  }
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("bslip_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace bslip::test
