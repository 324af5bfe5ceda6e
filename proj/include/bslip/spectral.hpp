#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bslip/data.hpp"
#include "bslip/tensor.hpp"

namespace bslip::baseline {

struct PsdConfig {
  std::size_t segment = 50;
  double overlap = 0.5;
  double cutoff_hz = 15.0;
  double threshold = 0.0;  // learned by calibrate_threshold
};

/// Throws ConfigError on a segment longer than the window, an overlap outside
/// [0, 1) or a cutoff outside (0, Nyquist).
void validate(const PsdConfig& config);

struct Psd {
  std::vector<double> freqs;    // Hz, bins 0 .. segment/2
  std::vector<double> density;  // one-sided, units^2 / Hz
  double df = 0.0;
};

/// Welch estimate: constant-detrended, periodic-Hann-windowed segments,
/// averaged one-sided periodograms scaled so that sum(density) * df is the
/// signal variance.
Psd welch_psd(std::span<const double> signal, double fs, const PsdConfig& config);

/// Sum over channels of the PSD bins at or above the cutoff.
double psd_score(const nn::Tensor& window, const PsdConfig& config);

struct ThresholdFit {
  double threshold = 0.0;
  double balanced_accuracy = 0.0;
};

/// Threshold maximizing balanced accuracy of "score > threshold means slip",
/// searched over the observed scores; ties go to the lowest threshold.
/// Throws DataError when a class is missing or every score is equal.
ThresholdFit calibrate_threshold(std::span<const double> scores,
                                 std::span<const Label> labels);

/// Scores `windows`, fits the threshold and stores it in `config`.
ThresholdFit calibrate_threshold(std::span<const LabeledWindow> windows,
                                 PsdConfig& config);

Label psd_predict(const nn::Tensor& window, const PsdConfig& config);

/// A calibrated detector plus the normalization its windows were scored in.
struct PsdBaseline {
  PsdConfig config;
  NormStats norm;
};

std::string psd_to_json(const PsdBaseline& baseline);
PsdBaseline psd_from_json(const std::string& text);
void save_psd(const std::filesystem::path& path, const PsdBaseline& baseline);
PsdBaseline load_psd(const std::filesystem::path& path);

struct FreqImageConfig {
  std::size_t dft_length = 100;
};

/// Number of image columns: bins 1 .. dft_length/2.
std::size_t freq_bins(const FreqImageConfig& config);

/// Per-taxel one-sided magnitude spectrum |X_k| / N of the last
/// min(T, N) samples (zero-padded to N), DC dropped, then log(1 + m).
/// Rows follow the window's channel order.
nn::Tensor freq_image(const nn::Tensor& window, const FreqImageConfig& config = {});

}  // namespace bslip::baseline
