#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bslip/data.hpp"

namespace bslip::eval {

/// counts[true][pred], class 0 = static, 1 = slip.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 2>, 2> counts{};

  std::uint64_t total() const;
  std::uint64_t support(int cls) const { return counts[cls][0] + counts[cls][1]; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws ShapeError on a length mismatch and DataError on empty input.
ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> labels);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
  // Set when the metric's denominator was zero and it was defined as 0.
  bool precision_degenerate = false;
  bool recall_degenerate = false;
  bool f1_degenerate = false;
};

struct MetricsReport {
  ConfusionMatrix cm;
  std::array<ClassMetrics, 2> per_class;
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  bool degenerate = false;  // any per-class flag set
};

/// Per-class and support-weighted metrics. Throws DataError when empty.
MetricsReport metrics(const ConfusionMatrix& cm);

/// Rows are motion/speed/axis groups, columns curvatures; the last row and
/// column pool every window of their column or row. Cells with no windows
/// are absent.
struct BreakdownReport {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<ConfusionMatrix>> cells;
  std::vector<std::vector<bool>> present;

  /// Weighted F1 of a cell, nullopt when absent.
  std::optional<double> f1(std::size_t row, std::size_t col) const;
  /// Pooled translation F1 at each speed (both axis groups, all curvatures).
  std::map<double, double> translation_f1_by_speed() const;
  std::size_t row_index(std::string_view name) const;
};

inline constexpr std::string_view kAllMotions = "All motions";
inline constexpr std::string_view kAllCurvatures = "All curvatures";

/// Primary axes are 0/90/180/270 degrees, oblique 45/135/225/315.
bool is_primary_axis(double direction_deg);
std::string translation_row(std::string_view axes, double speed_mps);

BreakdownReport breakdown(std::span<const Label> preds, std::span<const Label> labels,
                          std::span<const Annotation> meta);

// --- rendering -------------------------------------------------------------------

enum class Format { Csv, Markdown };

/// Pre-formatted text table; the first column holds row labels.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  bool operator==(const Table&) const = default;
};

/// One decimal percent: 0.914 -> "91.4%".
std::string format_percent(double fraction);
/// Inverse of format_percent, for reading reports back.
double parse_percent(std::string_view text);

/// Absent cells render as "n/a".
Table to_table(const BreakdownReport& report);
/// Rows static, slip, weighted with precision/recall/F1/support, plus an
/// accuracy row.
Table to_table(const MetricsReport& report);

std::string render(const Table& table, Format format);
/// Parses render(table, Format::Csv). Throws DataError on ragged rows or bad
/// quoting.
Table parse_csv(std::string_view text);

}  // namespace bslip::eval
