#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bslip/classifier.hpp"
#include "bslip/data.hpp"
#include "bslip/metrics.hpp"

namespace bslip::pipeline {

/// Windows of every recording in `dir`, one group per recording, raw
/// (not normalized). Throws DataError when the directory has no recordings.
std::vector<std::vector<LabeledWindow>> load_windows(const std::filesystem::path& dir,
                                                     std::size_t stride,
                                                     const LabelConfig& labels = {});

/// Recording-level split keyed by `seed`, normalized with train stats.
Dataset build_dataset(std::vector<std::vector<LabeledWindow>> groups, std::uint64_t seed,
                      double val_fraction = 0.1);

/// Flattens the groups and normalizes with `stats`.
std::vector<LabeledWindow> flatten(std::vector<std::vector<LabeledWindow>> groups,
                                   const NormStats& stats);

/// Class-balanced subset (random undersampling keyed by `seed`), in corpus
/// order.
std::vector<LabeledWindow> balance(std::span<const LabeledWindow> windows,
                                   std::uint64_t seed);

/// epoch,train_loss,train_accuracy,val_loss,val_accuracy with
/// round-trippable numbers.
std::string epochs_csv(std::span<const EpochMetrics> epochs);

struct Evaluation {
  eval::MetricsReport metrics;
  eval::BreakdownReport breakdown;
};

Evaluation evaluate(std::span<const Label> preds, std::span<const LabeledWindow> windows);

/// metrics.csv, breakdown.csv and report.md in `dir`.
void write_reports(const std::filesystem::path& dir, const Evaluation& e);

}  // namespace bslip::pipeline
