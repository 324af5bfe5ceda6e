#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "bslip/error.hpp"
#include "bslip/metrics.hpp"
#include "support.hpp"

using namespace bslip;
using namespace bslip::eval;

namespace {

constexpr Label S = Label::Static, P = Label::Slip;

ConfusionMatrix cm_of(std::uint64_t tn, std::uint64_t fp, std::uint64_t fn, std::uint64_t tp) {
  ConfusionMatrix cm;
  cm.counts = {{{tn, fp}, {fn, tp}}};
  return cm;
}

void expand(const ConfusionMatrix& cm, std::vector<Label>& preds, std::vector<Label>& labels) {
  for (int t = 0; t < 2; ++t)
    for (int p = 0; p < 2; ++p)
      for (std::uint64_t i = 0; i < cm.counts[t][p]; ++i) {
        labels.push_back(static_cast<Label>(t));
        preds.push_back(static_cast<Label>(p));
      }
}

Annotation translation(Curvature cv, double speed, double dir) {
  return {"x", cv, Motion::Translation, speed, dir, 0.0};
}

/// Appends `cm` worth of windows with annotation `a`.
void add_cell(const ConfusionMatrix& cm, const Annotation& a, std::vector<Label>& preds,
              std::vector<Label>& labels, std::vector<Annotation>& meta) {
  const auto before = labels.size();
  expand(cm, preds, labels);
  meta.insert(meta.end(), labels.size() - before, a);
}

/// A fixed corpus touching every row kind; shared with the golden files.
BreakdownReport golden_breakdown() {
  std::vector<Label> preds, labels;
  std::vector<Annotation> meta;
  const Curvature cvs[4] = {Curvature::Planar, Curvature::Spherical, Curvature::CylX,
                            Curvature::CylY};
  std::uint64_t k = 0;
  for (const auto cv : cvs) {
    for (double speed : {0.05, 0.075, 0.1}) {
      for (double dir : {0.0, 45.0, 90.0, 135.0}) {
        if (cv == Curvature::CylY && speed == 0.075 && dir == 45.0) continue;  // absent cell
        add_cell(cm_of(20, k % 3, k % 4, 18 + k % 5), translation(cv, speed, dir), preds, labels,
                 meta);
        ++k;
      }
    }
    if (cv != Curvature::Spherical) {
      add_cell(cm_of(15, 2, 3, 12), {"r", cv, Motion::Rotation, 0.0, 0.0, 1.0}, preds, labels,
               meta);
    }
    add_cell(cm_of(30, 1 + k % 2, 0, 0), {"s", cv, Motion::Static, 0.0, 0.0, 0.0}, preds, labels,
             meta);
  }
  return breakdown(preds, labels, meta);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void check_golden(const std::string& name, const std::string& text) {
  const std::filesystem::path path = std::filesystem::path(BSLIP_GOLDEN_DIR) / name;
  if (std::getenv("BSLIP_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << text;
  }
  ASSERT_TRUE(std::filesystem::exists(path)) << path;
  EXPECT_EQ(text, read_file(path)) << name;
}

}  // namespace

TEST(Confusion, Counts) {
  const std::vector<Label> l{S, S, P, P, P};
  EXPECT_EQ(confusion(l, l), cm_of(2, 0, 0, 3));
  const std::vector<Label> flipped{P, P, S, S, S};
  EXPECT_EQ(confusion(flipped, l), cm_of(0, 2, 3, 0));
  EXPECT_THROW(confusion(std::vector<Label>{S}, l), ShapeError);
  EXPECT_THROW(confusion(std::vector<Label>{}, std::vector<Label>{}), DataError);
  ConfusionMatrix a = cm_of(1, 2, 3, 4);
  a += cm_of(1, 1, 1, 1);
  EXPECT_EQ(a, cm_of(2, 3, 4, 5));
  EXPECT_EQ(a.total(), 14u);
  EXPECT_EQ(a.support(1), 9u);
}

TEST(Metrics, HandComputedExample) {
  const MetricsReport m = metrics(cm_of(9, 1, 2, 8));
  EXPECT_DOUBLE_EQ(m.accuracy, 0.85);
  EXPECT_NEAR(m.per_class[0].f1, 18.0 / 21.0, 1e-15);  // 0.8571
  EXPECT_NEAR(m.per_class[1].f1, 16.0 / 19.0, 1e-15);  // 0.8421
  EXPECT_NEAR(m.weighted_f1, 0.5 * (18.0 / 21.0 + 16.0 / 19.0), 1e-15);
  EXPECT_NEAR(m.weighted_f1, 0.8496, 5e-5);
  EXPECT_EQ(m.per_class[0].support, 10u);
  EXPECT_FALSE(m.degenerate);
}

TEST(Metrics, PerfectAndAllStatic) {
  const MetricsReport p = metrics(cm_of(7, 0, 0, 5));
  EXPECT_EQ(p.accuracy, 1.0);
  EXPECT_EQ(p.weighted_precision, 1.0);
  EXPECT_EQ(p.weighted_recall, 1.0);
  EXPECT_EQ(p.weighted_f1, 1.0);
  const MetricsReport s = metrics(cm_of(10, 0, 10, 0));
  EXPECT_EQ(s.accuracy, 0.5);
  EXPECT_EQ(s.per_class[1].recall, 0.0);
  EXPECT_EQ(s.per_class[1].precision, 0.0);
  EXPECT_TRUE(s.per_class[1].precision_degenerate);
  EXPECT_FALSE(s.per_class[1].recall_degenerate);
  EXPECT_TRUE(s.degenerate);
  EXPECT_THROW(metrics(ConfusionMatrix{}), DataError);
}

TEST(Metrics, MatchesOracleAndIdentities) {
  Rng rng(1);
  for (int i = 0; i < 300; ++i) {
    const auto cm = cm_of(rng.below(30), rng.below(30), rng.below(30), rng.below(30) + 1);
    std::vector<Label> preds, labels;
    expand(cm, preds, labels);
    const auto o = test::oracle_metrics(preds, labels);
    const MetricsReport m = metrics(confusion(preds, labels));
    EXPECT_NEAR(m.accuracy, o.accuracy, 1e-12);
    EXPECT_NEAR(m.weighted_precision, o.weighted_precision, 1e-12);
    EXPECT_NEAR(m.weighted_recall, o.weighted_recall, 1e-12);
    EXPECT_NEAR(m.weighted_f1, o.weighted_f1, 1e-12);
    EXPECT_NEAR(m.weighted_recall, m.accuracy, 1e-12);
    for (int c = 0; c < 2; ++c) {
      EXPECT_NEAR(m.per_class[c].f1, o.f1[c], 1e-12);
      EXPECT_GE(m.per_class[c].f1, 0.0);
      EXPECT_LE(m.per_class[c].f1, 1.0);
    }
    // Swapping class names in both preds and labels changes nothing weighted.
    const MetricsReport sw = metrics(cm_of(cm.counts[1][1], cm.counts[1][0], cm.counts[0][1],
                                           cm.counts[0][0]));
    EXPECT_NEAR(sw.weighted_f1, m.weighted_f1, 1e-12);
    EXPECT_NEAR(sw.accuracy, m.accuracy, 1e-12);
  }
}

TEST(Metrics, BalancedWeightedEqualsMacro) {
  const MetricsReport m = metrics(cm_of(13, 7, 4, 16));
  EXPECT_NEAR(m.weighted_f1, 0.5 * (m.per_class[0].f1 + m.per_class[1].f1), 1e-15);
}

TEST(Breakdown, AxisClassification) {
  for (double d : {0.0, 90.0, 180.0, 270.0}) EXPECT_TRUE(is_primary_axis(d));
  for (double d : {45.0, 135.0, 225.0, 315.0}) EXPECT_FALSE(is_primary_axis(d));
  EXPECT_EQ(translation_row("Primary Axes", 0.075), "Translation (Primary Axes) 0.075 m/s");
}

TEST(Breakdown, SingleCellEqualsOverall) {
  std::vector<Label> preds, labels;
  std::vector<Annotation> meta;
  const auto cm = cm_of(8, 2, 3, 7);
  add_cell(cm, translation(Curvature::Spherical, 0.1, 90.0), preds, labels, meta);
  const auto b = breakdown(preds, labels, meta);
  const auto row = b.row_index(translation_row("Primary Axes", 0.1));
  const double overall = metrics(cm).weighted_f1;
  EXPECT_DOUBLE_EQ(*b.f1(row, 1), overall);
  EXPECT_DOUBLE_EQ(*b.f1(row, b.columns.size() - 1), overall);
  const auto all = b.row_index(kAllMotions);
  EXPECT_DOUBLE_EQ(*b.f1(all, 1), overall);
  EXPECT_FALSE(b.f1(row, 0));
  EXPECT_EQ(b.columns.back(), kAllCurvatures);
}

TEST(Breakdown, PooledMarginalDiffersFromMean) {
  std::vector<Label> preds, labels;
  std::vector<Annotation> meta;
  add_cell(cm_of(5, 0, 0, 5), translation(Curvature::Planar, 0.05, 0.0), preds, labels, meta);
  add_cell(cm_of(0, 1, 1, 0), translation(Curvature::Spherical, 0.05, 0.0), preds, labels, meta);
  const auto b = breakdown(preds, labels, meta);
  const auto row = b.row_index(translation_row("Primary Axes", 0.05));
  const double a = *b.f1(row, 0), c = *b.f1(row, 1);
  EXPECT_EQ(a, 1.0);
  EXPECT_EQ(c, 0.0);
  const double pooled = *b.f1(row, b.columns.size() - 1);
  EXPECT_NEAR(pooled, test::oracle_metrics(preds, labels).weighted_f1, 1e-12);
  EXPECT_GT(std::abs(pooled - 0.5 * (a + c)), 0.1);
}

TEST(Breakdown, TranslationBySpeedPoolsAxesAndCurvatures) {
  std::vector<Label> preds, labels;
  std::vector<Annotation> meta;
  add_cell(cm_of(4, 1, 0, 5), translation(Curvature::Planar, 0.05, 0.0), preds, labels, meta);
  add_cell(cm_of(3, 0, 2, 5), translation(Curvature::CylX, 0.05, 45.0), preds, labels, meta);
  add_cell(cm_of(9, 0, 0, 9), translation(Curvature::CylY, 0.1, 180.0), preds, labels, meta);
  add_cell(cm_of(9, 9, 9, 9), {"r", Curvature::Planar, Motion::Rotation, 0, 0, 1}, preds, labels,
           meta);
  const auto by = breakdown(preds, labels, meta).translation_f1_by_speed();
  ASSERT_EQ(by.size(), 2u);
  EXPECT_NEAR(by.at(0.05), metrics(cm_of(7, 1, 2, 10)).weighted_f1, 1e-12);
  EXPECT_EQ(by.at(0.1), 1.0);
}

TEST(Render, PercentFormat) {
  EXPECT_EQ(format_percent(0.914), "91.4%");
  EXPECT_EQ(format_percent(1.0), "100.0%");
  EXPECT_EQ(format_percent(0.0), "0.0%");
  EXPECT_EQ(format_percent(0.8496), "85.0%");
  EXPECT_NEAR(parse_percent("91.4%"), 0.914, 1e-15);
  EXPECT_THROW(parse_percent("91.4"), DataError);
}

TEST(Render, CsvFixpoint) {
  const Table t = to_table(golden_breakdown());
  const std::string csv = render(t, Format::Csv);
  const Table back = parse_csv(csv);
  EXPECT_EQ(back, t);
  EXPECT_EQ(render(back, Format::Csv), csv);
  Table quoted{{"a", "b,c"}, {{"x \"y\"", "1"}}};
  EXPECT_EQ(parse_csv(render(quoted, Format::Csv)), quoted);
  EXPECT_THROW(parse_csv("a,b\n1\n"), DataError);
}

TEST(Render, MarkdownRowPerCondition) {
  const auto b = golden_breakdown();
  const std::string md = render(to_table(b), Format::Markdown);
  std::size_t lines = 0;
  for (char c : md) lines += c == '\n';
  EXPECT_EQ(lines, b.rows.size() + 2);  // header and separator
  EXPECT_NE(md.find("| Translation (Oblique Axes) 0.075 m/s |"), std::string::npos);
  EXPECT_NE(md.find("n/a"), std::string::npos);
}

TEST(Render, Golden) {
  const auto b = golden_breakdown();
  check_golden("breakdown.csv", render(to_table(b), Format::Csv));
  check_golden("breakdown.md", render(to_table(b), Format::Markdown));
  const auto m = metrics(cm_of(9, 1, 2, 8));
  check_golden("metrics.csv", render(to_table(m), Format::Csv));
  check_golden("metrics.md", render(to_table(m), Format::Markdown));
}
