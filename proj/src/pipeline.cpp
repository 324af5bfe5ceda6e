#include "bslip/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "bslip/error.hpp"

namespace bslip::pipeline {

namespace {

enum Stream : std::uint64_t { kSplit = 0x73706c74, kBalance = 0x62616c };

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw DataError("cannot write " + path.string());
}

}  // namespace

std::vector<std::vector<LabeledWindow>> load_windows(const std::filesystem::path& dir,
                                                     std::size_t stride,
                                                     const LabelConfig& labels) {
  const auto ids = list_recordings(dir);
  if (ids.empty()) throw DataError("no recordings in " + dir.string());
  std::vector<std::vector<LabeledWindow>> groups;
  groups.reserve(ids.size());
  for (const auto& id : ids) {
    groups.push_back(windows_from_recording(read_recording(dir, id), labels, stride));
  }
  return groups;
}

Dataset build_dataset(std::vector<std::vector<LabeledWindow>> groups, std::uint64_t seed,
                      double val_fraction) {
  Rng rng = Rng(seed).derive({kSplit});
  return split(std::move(groups), rng, val_fraction);
}

std::vector<LabeledWindow> flatten(std::vector<std::vector<LabeledWindow>> groups,
                                   const NormStats& stats) {
  std::vector<LabeledWindow> out;
  for (auto& g : groups) std::move(g.begin(), g.end(), std::back_inserter(out));
  normalize(out, stats);
  return out;
}

std::vector<LabeledWindow> balance(std::span<const LabeledWindow> windows,
                                   std::uint64_t seed) {
  Rng rng = Rng(seed).derive({kBalance});
  auto idx = undersample(windows, rng);
  std::sort(idx.begin(), idx.end());
  std::vector<LabeledWindow> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(windows[i]);
  return out;
}

std::string epochs_csv(std::span<const EpochMetrics> epochs) {
  std::string out = "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                  e.train_accuracy, e.val_loss, e.val_accuracy);
    out += buf;
  }
  return out;
}

Evaluation evaluate(std::span<const Label> preds, std::span<const LabeledWindow> windows) {
  std::vector<Label> labels;
  std::vector<Annotation> meta;
  labels.reserve(windows.size());
  meta.reserve(windows.size());
  for (const auto& w : windows) {
    labels.push_back(w.label);
    meta.push_back(w.meta);
  }
  return {eval::metrics(eval::confusion(preds, labels)),
          eval::breakdown(preds, labels, meta)};
}

void write_reports(const std::filesystem::path& dir, const Evaluation& e) {
  std::filesystem::create_directories(dir);
  const auto m = eval::to_table(e.metrics);
  const auto b = eval::to_table(e.breakdown);
  write_text(dir / "metrics.csv", eval::render(m, eval::Format::Csv));
  write_text(dir / "breakdown.csv", eval::render(b, eval::Format::Csv));
  write_text(dir / "report.md", "## Metrics\n\n" + eval::render(m, eval::Format::Markdown) +
                                    "\n## F1 by condition\n\n" +
                                    eval::render(b, eval::Format::Markdown));
}

}  // namespace bslip::pipeline
