#include "bslip/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "bslip/error.hpp"

namespace bslip::eval {

std::uint64_t ConfusionMatrix::total() const {
  return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  for (int t = 0; t < 2; ++t)
    for (int p = 0; p < 2; ++p) counts[t][p] += o.counts[t][p];
  return *this;
}

ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> labels) {
  if (preds.size() != labels.size()) {
    throw ShapeError("confusion: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw DataError("confusion: no predictions");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++cm.counts[static_cast<int>(labels[i])][static_cast<int>(preds[i])];
  }
  return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw DataError("metrics of an empty confusion matrix");
  MetricsReport r;
  r.cm = cm;
  for (int c = 0; c < 2; ++c) {
    ClassMetrics& m = r.per_class[c];
    const std::uint64_t tp = cm.counts[c][c];
    const std::uint64_t predicted = cm.counts[0][c] + cm.counts[1][c];
    m.support = cm.support(c);
    m.precision = ratio(tp, predicted, m.precision_degenerate);
    m.recall = ratio(tp, m.support, m.recall_degenerate);
    if (m.precision + m.recall == 0.0) {
      m.f1 = 0.0;
      m.f1_degenerate = true;
    } else {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    r.degenerate |= m.precision_degenerate || m.recall_degenerate || m.f1_degenerate;
    const double w = static_cast<double>(m.support) / static_cast<double>(total);
    r.weighted_precision += w * m.precision;
    r.weighted_recall += w * m.recall;
    r.weighted_f1 += w * m.f1;
  }
  r.accuracy = static_cast<double>(cm.counts[0][0] + cm.counts[1][1]) /
               static_cast<double>(total);
  return r;
}

// --- breakdown -------------------------------------------------------------------

bool is_primary_axis(double direction_deg) {
  const double m = std::fmod(std::fmod(direction_deg, 90.0) + 90.0, 90.0);
  return m < 1e-9 || 90.0 - m < 1e-9;
}

std::string translation_row(std::string_view axes, double speed_mps) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "Translation (%.*s) %g m/s",
                static_cast<int>(axes.size()), axes.data(), speed_mps);
  return buf;
}

std::optional<double> BreakdownReport::f1(std::size_t row, std::size_t col) const {
  if (!present.at(row).at(col)) return std::nullopt;
  return metrics(cells[row][col]).weighted_f1;
}

std::size_t BreakdownReport::row_index(std::string_view name) const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] == name) return i;
  }
  throw DataError("breakdown has no row '" + std::string(name) + "'");
}

std::map<double, double> BreakdownReport::translation_f1_by_speed() const {
  std::map<double, double> out;
  const std::string prefix = "Translation (All Axes) ";
  const std::size_t all_col = columns.size() - 1;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!rows[r].starts_with(prefix) || !present[r][all_col]) continue;
    const std::string rest = rows[r].substr(prefix.size());
    out[std::stod(rest)] = *f1(r, all_col);
  }
  return out;
}

BreakdownReport breakdown(std::span<const Label> preds, std::span<const Label> labels,
                          std::span<const Annotation> meta) {
  if (preds.size() != labels.size() || preds.size() != meta.size()) {
    throw ShapeError("breakdown: predictions, labels and metadata differ in length");
  }
  if (preds.empty()) throw DataError("breakdown: no predictions");

  std::set<double> speeds;
  bool rotation = false, still = false;
  for (const auto& m : meta) {
    if (m.motion == Motion::Translation) speeds.insert(m.speed_mps);
    rotation |= m.motion == Motion::Rotation;
    still |= m.motion == Motion::Static;
  }
  BreakdownReport r;
  for (const char* axes : {"Primary Axes", "Oblique Axes", "All Axes"}) {
    for (double s : speeds) r.rows.push_back(translation_row(axes, s));
  }
  if (rotation) r.rows.emplace_back("Rotation");
  if (still) r.rows.emplace_back("Static");
  r.rows.emplace_back(kAllMotions);
  r.columns = {"Planar", "Spherical", "Cylindrical (x)", "Cylindrical (y)",
               std::string(kAllCurvatures)};
  r.cells.assign(r.rows.size(), std::vector<ConfusionMatrix>(r.columns.size()));
  r.present.assign(r.rows.size(), std::vector<bool>(r.columns.size(), false));

  const std::size_t all_row = r.rows.size() - 1, all_col = r.columns.size() - 1;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Annotation& m = meta[i];
    std::vector<std::size_t> rows{all_row};
    switch (m.motion) {
      case Motion::Translation:
        rows.push_back(r.row_index(translation_row(
            is_primary_axis(m.direction_deg) ? "Primary Axes" : "Oblique Axes", m.speed_mps)));
        rows.push_back(r.row_index(translation_row("All Axes", m.speed_mps)));
        break;
      case Motion::Rotation:
        rows.push_back(r.row_index("Rotation"));
        break;
      case Motion::Static:
        rows.push_back(r.row_index("Static"));
        break;
    }
    const std::size_t col = static_cast<std::size_t>(m.curvature);
    for (auto row : rows) {
      for (auto c : {col, all_col}) {
        ++r.cells[row][c].counts[static_cast<int>(labels[i])][static_cast<int>(preds[i])];
        r.present[row][c] = true;
      }
    }
  }
  return r;
}

// --- rendering -------------------------------------------------------------------

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
  return buf;
}

double parse_percent(std::string_view text) {
  if (!text.ends_with('%')) throw DataError("not a percentage: '" + std::string(text) + "'");
  text.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError("not a percentage: '" + std::string(text) + "%'");
  }
  return v / 100.0;
}

Table to_table(const BreakdownReport& report) {
  Table t;
  t.header.emplace_back("Condition");
  t.header.insert(t.header.end(), report.columns.begin(), report.columns.end());
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    std::vector<std::string> row{report.rows[r]};
    for (std::size_t c = 0; c < report.columns.size(); ++c) {
      const auto f = report.f1(r, c);
      row.push_back(f ? format_percent(*f) : "n/a");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table to_table(const MetricsReport& m) {
  Table t;
  t.header = {"Class", "Precision", "Recall", "F1", "Support"};
  const char* names[2] = {"static", "slip"};
  for (int c = 0; c < 2; ++c) {
    const ClassMetrics& cm = m.per_class[c];
    t.rows.push_back({names[c], format_percent(cm.precision), format_percent(cm.recall),
                      format_percent(cm.f1), std::to_string(cm.support)});
  }
  t.rows.push_back({"weighted", format_percent(m.weighted_precision),
                    format_percent(m.weighted_recall), format_percent(m.weighted_f1),
                    std::to_string(m.cm.total())});
  t.rows.push_back({"accuracy", format_percent(m.accuracy), "", "",
                    std::to_string(m.cm.total())});
  return t;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void csv_line(std::ostringstream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << csv_field(fields[i]);
  }
  os << '\n';
}

void markdown_line(std::ostringstream& os, const std::vector<std::string>& fields) {
  os << '|';
  for (const auto& f : fields) os << ' ' << f << " |";
  os << '\n';
}

}  // namespace

std::string render(const Table& table, Format format) {
  std::ostringstream os;
  if (format == Format::Csv) {
    csv_line(os, table.header);
    for (const auto& r : table.rows) csv_line(os, r);
    return os.str();
  }
  markdown_line(os, table.header);
  os << '|';
  for (std::size_t i = 0; i < table.header.size(); ++i) os << (i ? " ---: |" : " --- |");
  os << '\n';
  for (const auto& r : table.rows) markdown_line(os, r);
  return os.str();
}

Table parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      field.clear();
      lines.push_back(std::move(fields));
      fields.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (quoted) throw DataError("unterminated quote in CSV");
  if (any) {
    fields.push_back(std::move(field));
    lines.push_back(std::move(fields));
  }
  if (lines.empty()) throw DataError("empty CSV table");
  Table t;
  t.header = std::move(lines.front());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].size() != t.header.size()) {
      throw DataError("CSV row " + std::to_string(i) + " has " +
                      std::to_string(lines[i].size()) + " fields, header has " +
                      std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(lines[i]));
  }
  return t;
}

}  // namespace bslip::eval
