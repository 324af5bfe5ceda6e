#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "bslip/classifier.hpp"
#include "bslip/data.hpp"

namespace bslip::runtime {

struct SlipEvent {
  std::int64_t onset_ns = 0;
  std::optional<std::int64_t> offset_ns;
  double peak_p_slip = 0.0;
};

struct Transition {
  enum class Type { Open, Close };
  Type type = Type::Open;
  std::int64_t t_ns = 0;
  double peak_p_slip = 0.0;
};

/// {"type":"open"|"close","t_ns":...,"peak_p_slip":...}
std::string to_json_line(const Transition& t);

/// Two-step debounce: an event opens at the second consecutive slip label
/// and closes at the second consecutive static label.
class Debouncer {
 public:
  std::optional<Transition> push(Label label, std::int64_t t_ns, double p_slip);

  std::size_t consecutive_slip() const { return slip_run_; }
  std::size_t consecutive_static() const { return static_run_; }
  const std::optional<SlipEvent>& active_event() const { return active_; }

 private:
  std::size_t slip_run_ = 0, static_run_ = 0;
  double run_peak_ = 0.0;  // highest p_slip in the current slip run
  std::optional<SlipEvent> active_;
};

struct Classification {
  std::int64_t t_ns = 0;
  double p_slip = 0.0;
  Label label = Label::Static;
};

/// Sliding-window online detector. Holds the last 100 frames in a fixed ring
/// buffer; once full, every frame triggers a classification of the window
/// ending at it, normalized with the model's stats.
class Detector {
 public:
  explicit Detector(const Classifier& model);

  /// Throws DataError (and leaves the state unchanged) when the timestamp
  /// does not increase, NumericError on a non-finite model output.
  std::optional<Transition> push_frame(const PressureFrame& frame);

  /// Result of the most recent classification, if any.
  const std::optional<Classification>& last() const { return last_; }
  const Debouncer& debouncer() const { return debounce_; }
  std::size_t buffered() const { return count_; }

 private:
  const Classifier& model_;
  std::array<PressureFrame, kWindowLength> ring_{};
  std::size_t head_ = 0, count_ = 0;  // head_ is the oldest frame once full
  nn::Tensor window_{{kTaxels, kWindowLength}};
  std::optional<std::int64_t> last_t_;
  std::optional<Classification> last_;
  Debouncer debounce_;
};

struct DetectStats {
  std::size_t rows = 0;
  std::size_t malformed = 0;
  std::size_t rejected = 0;  // well-formed rows with a non-increasing timestamp
  std::size_t classifications = 0;
  std::size_t events = 0;
};

/// Streams pressure CSV rows (optional header) through a detector and writes
/// one JSON line per transition. Bad rows are skipped with a warning on
/// `warn`; throws DataError once more than 1% of rows are bad (checked from
/// the 100th row on, and at the end).
DetectStats run_detect(std::istream& in, const Classifier& model, std::ostream& out,
                       std::ostream& warn);

}  // namespace bslip::runtime
