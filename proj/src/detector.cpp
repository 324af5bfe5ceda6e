#include "bslip/detector.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "bslip/error.hpp"

namespace bslip::runtime {

std::string to_json_line(const Transition& t) {
  nlohmann::ordered_json j;
  j["type"] = t.type == Transition::Type::Open ? "open" : "close";
  j["t_ns"] = t.t_ns;
  j["peak_p_slip"] = t.peak_p_slip;
  return j.dump();
}

std::optional<Transition> Debouncer::push(Label label, std::int64_t t_ns, double p_slip) {
  if (label == Label::Slip) {
    run_peak_ = slip_run_ == 0 ? p_slip : std::max(run_peak_, p_slip);
    ++slip_run_;
    static_run_ = 0;
    if (active_) {
      active_->peak_p_slip = std::max(active_->peak_p_slip, p_slip);
      return std::nullopt;
    }
    if (slip_run_ == 2) {
      active_ = SlipEvent{t_ns, std::nullopt, run_peak_};
      return Transition{Transition::Type::Open, t_ns, run_peak_};
    }
    return std::nullopt;
  }
  ++static_run_;
  slip_run_ = 0;
  if (active_ && static_run_ == 2) {
    const Transition close{Transition::Type::Close, t_ns, active_->peak_p_slip};
    active_.reset();
    return close;
  }
  return std::nullopt;
}

Detector::Detector(const Classifier& model) : model_(model) {}

std::optional<Transition> Detector::push_frame(const PressureFrame& frame) {
  if (last_t_ && frame.t_ns <= *last_t_) {
    throw DataError("frame at t_ns=" + std::to_string(frame.t_ns) +
                    " does not follow t_ns=" + std::to_string(*last_t_));
  }
  last_t_ = frame.t_ns;
  if (count_ < kWindowLength) {
    ring_[count_++] = frame;
    if (count_ < kWindowLength) return std::nullopt;
  } else {
    ring_[head_] = frame;
    head_ = (head_ + 1) % kWindowLength;
  }

  // Same tensor layout and normalization as the offline window path.
  for (std::size_t t = 0; t < kWindowLength; ++t) {
    const PressureFrame& f = ring_[(head_ + t) % kWindowLength];
    for (std::size_t c = 0; c < kTaxels; ++c) window_.at(c, t) = f.p[c];
  }
  normalize(window_, model_.norm);
  const nn::Tensor p = model_.predict(window_);
  if (!p.is_finite()) {
    throw NumericError("non-finite slip probability at t_ns=" + std::to_string(frame.t_ns));
  }
  const Label label = p[1] > p[0] ? Label::Slip : Label::Static;
  last_ = Classification{frame.t_ns, p[1], label};
  return debounce_.push(label, frame.t_ns, p[1]);
}

DetectStats run_detect(std::istream& in, const Classifier& model, std::ostream& out,
                       std::ostream& warn) {
  Detector detector(model);
  DetectStats stats;
  auto over_budget = [&] { return (stats.malformed + stats.rejected) * 100 > stats.rows; };
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line.starts_with("t_ns")) continue;
    }
    if (line.empty()) continue;
    ++stats.rows;
    const auto frame = parse_pressure_row(line);
    bool bad = false;
    if (!frame) {
      ++stats.malformed;
      warn << "warning: skipping malformed row " << stats.rows << '\n';
      bad = true;
    } else {
      try {
        const auto transition = detector.push_frame(*frame);
        if (detector.last() && detector.last()->t_ns == frame->t_ns) ++stats.classifications;
        if (transition) {
          out << to_json_line(*transition) << '\n';
          ++stats.events;
        }
      } catch (const DataError& e) {
        ++stats.rejected;
        warn << "warning: " << e.what() << '\n';
        bad = true;
      }
    }
    if (bad && stats.rows >= 100 && over_budget()) {
      throw DataError("more than 1% of input rows are malformed (" +
                      std::to_string(stats.malformed + stats.rejected) + " of " +
                      std::to_string(stats.rows) + ")");
    }
  }
  if (over_budget()) {
    throw DataError("more than 1% of input rows are malformed (" +
                    std::to_string(stats.malformed + stats.rejected) + " of " +
                    std::to_string(stats.rows) + ")");
  }
  return stats;
}

}  // namespace bslip::runtime
