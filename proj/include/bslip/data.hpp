#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bslip/rng.hpp"
#include "bslip/tensor.hpp"

namespace bslip {

inline constexpr std::size_t kTaxels = 6;
inline constexpr std::size_t kGridRows = 2;
inline constexpr std::size_t kGridCols = 3;
inline constexpr std::size_t kWindowLength = 100;
inline constexpr double kSampleRateHz = 100.0;
inline constexpr std::int64_t kNominalPeriodNs = 10'000'000;

/// One sample of the 2x3 barometer array. Channel index = 3 * row + col.
struct PressureFrame {
  std::int64_t t_ns = 0;
  std::array<double, kTaxels> p{};
};

/// Planar fingertip velocity (m/s) and optional angular rate (rad/s).
struct VelocitySample {
  std::int64_t t_ns = 0;
  double vx = 0.0;
  double vy = 0.0;
  std::optional<double> omega;
};

enum class Label : int { Static = 0, Slip = 1 };
enum class Curvature : int { Planar = 0, Spherical = 1, CylX = 2, CylY = 3 };
enum class Motion : int { Static = 0, Translation = 1, Rotation = 2 };

std::string_view to_string(Label l);
std::string_view to_string(Curvature c);
std::string_view to_string(Motion m);
Curvature parse_curvature(std::string_view s);
Motion parse_motion(std::string_view s);

/// Per-recording conditions; propagated into every window cut from it.
struct Annotation {
  std::string source_id;
  Curvature curvature = Curvature::Planar;
  Motion motion = Motion::Static;
  double speed_mps = 0.0;
  double direction_deg = 0.0;
  double angular_rate = 0.0;
};

struct LabeledWindow {
  nn::Tensor x{{kTaxels, kWindowLength}};  // [6 x 100]
  Label label = Label::Static;
  Annotation meta;
};

struct SyncedFrame {
  PressureFrame frame;
  VelocitySample velocity;
};

struct LabeledFrame {
  PressureFrame frame;
  Label label = Label::Static;
  double surface_speed = 0.0;
};

struct Recording {
  Annotation meta;
  std::vector<PressureFrame> frames;
  std::vector<VelocitySample> velocity;
};

struct NormStats {
  std::array<double, kTaxels> mean{};
  std::array<double, kTaxels> stddev{1, 1, 1, 1, 1, 1};
};

struct Dataset {
  std::vector<LabeledWindow> train;
  std::vector<LabeledWindow> val;
  NormStats stats;
};

// --- log checks and synchronization ------------------------------------------

struct LogCheck {
  bool strictly_increasing = true;
  std::size_t gaps = 0;  // intervals longer than 3x the nominal period
  bool flagged() const { return !strictly_increasing || gaps > 0; }
};

LogCheck check_log(std::span<const PressureFrame> frames);

/// Pairs every pressure frame inside the velocity log's time range with the
/// velocity linearly interpolated to its timestamp.
std::vector<SyncedFrame> synchronize(std::span<const PressureFrame> pressure,
                                     std::span<const VelocitySample> velocity);

// --- labeling ------------------------------------------------------------------

struct LabelConfig {
  double v_slip = 0.01;    // m/s
  double v_static = 0.005; // m/s
  double r_eff = 0.02;     // m, converts angular rate to surface speed
};

/// Surface speed |v| + r_eff * |omega|.
double surface_speed(const VelocitySample& v, double r_eff);

/// Hysteresis labeling: >= v_slip is slip, <= v_static is static, anything
/// in between keeps the previous label (static before the first frame).
std::vector<LabeledFrame> label_frames(std::span<const SyncedFrame> pairs,
                                       const LabelConfig& config = {});

// --- windows -------------------------------------------------------------------

/// Sliding windows of `length` frames. Each window takes the label of its
/// final frame. Returns nothing (and logs a warning) for short recordings.
std::vector<LabeledWindow> make_windows(std::span<const LabeledFrame> frames,
                                        const Annotation& meta,
                                        std::size_t stride,
                                        std::size_t length = kWindowLength);

/// Raw pressures of the last `length` frames as a [6 x length] tensor.
nn::Tensor frames_to_tensor(std::span<const PressureFrame> frames);

NormStats compute_stats(std::span<const LabeledWindow> windows);
void normalize(std::span<LabeledWindow> windows, const NormStats& stats);
void normalize(nn::Tensor& x, const NormStats& stats);

/// Indices of a class-balanced random subset, in shuffled order. Each class
/// is cut down to the minority count. Throws DataError if a class is empty.
std::vector<std::size_t> undersample(std::span<const LabeledWindow> windows,
                                     Rng& rng);

// --- augmentation -----------------------------------------------------------------

using ChannelMap = std::array<std::size_t, kTaxels>;
/// out channel c reads in channel map[c].
inline constexpr ChannelMap kIdentityMap{0, 1, 2, 3, 4, 5};
inline constexpr ChannelMap kFlipXMap{2, 1, 0, 5, 4, 3};
inline constexpr ChannelMap kFlipYMap{3, 4, 5, 0, 1, 2};
inline constexpr ChannelMap kRotate180Map{5, 4, 3, 2, 1, 0};

ChannelMap compose(const ChannelMap& first, const ChannelMap& second);
nn::Tensor permute_channels(const nn::Tensor& x, const ChannelMap& map);

struct AugmentConfig {
  double transform_probability = 0.25;
  double noise_sigma = 0.05;  // normalized units
};

/// Each grid transform is applied independently with the configured
/// probability, then i.i.d. Gaussian noise is added.
LabeledWindow augment(const LabeledWindow& window, Rng& rng,
                      const AugmentConfig& config = {});

// --- splitting --------------------------------------------------------------------

/// Splits per-recording window groups into train/val at recording
/// granularity, computes stats on train and normalizes both splits.
Dataset split(std::vector<std::vector<LabeledWindow>> recordings, Rng& rng,
              double val_fraction = 0.1);

/// synchronize -> label -> window for one recording.
std::vector<LabeledWindow> windows_from_recording(const Recording& rec,
                                                  const LabelConfig& labels,
                                                  std::size_t stride);

// --- file formats ------------------------------------------------------------------

/// Parses one `t_ns,p0,...,p5` row. nullopt when malformed.
std::optional<PressureFrame> parse_pressure_row(std::string_view line);

void write_pressure_csv(std::ostream& os, std::span<const PressureFrame> frames);
std::vector<PressureFrame> read_pressure_csv(std::istream& is);
void write_velocity_csv(std::ostream& os, std::span<const VelocitySample> v);
std::vector<VelocitySample> read_velocity_csv(std::istream& is);
std::string annotation_to_json(const Annotation& a);
Annotation annotation_from_json(std::string_view text);

/// <dir>/<id>.pressure.csv, <id>.velocity.csv, <id>.json
void write_recording(const std::filesystem::path& dir, const Recording& rec);
Recording read_recording(const std::filesystem::path& dir,
                         const std::string& source_id);
/// Source ids of every recording sidecar in `dir`, sorted.
std::vector<std::string> list_recordings(const std::filesystem::path& dir);

/// Versioned binary window cache (little-endian, 32-bit float values).
void write_window_cache(const std::filesystem::path& path,
                        std::span<const LabeledWindow> windows);
std::vector<LabeledWindow> read_window_cache(const std::filesystem::path& path);

}  // namespace bslip
