// bslip: simulate, train, eval, baseline, detect, gradcheck.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bslip/checkpoint.hpp"
#include "bslip/detector.hpp"
#include "bslip/error.hpp"
#include "bslip/freq_cnn.hpp"
#include "bslip/gradcheck.hpp"
#include "bslip/pipeline.hpp"
#include "bslip/simulator.hpp"
#include "bslip/spectral.hpp"
#include "bslip/tcn.hpp"

namespace {

using namespace bslip;

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::string config_scalar(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_object() || v.is_array()) throw ConfigError("config values must be scalars or flat arrays");
  return v.dump();
}

/// Expands `--config FILE` into flags appended to `args`. Keys are long flag
/// names without dashes; a flag already on the command line wins.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].starts_with("--config=")) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  const auto given = [&](const std::string& flag) {
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == flag || args[i].starts_with(flag + "=")) return true;
    }
    return false;
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (key == "config" || given(flag)) continue;
    if (value.is_boolean()) {
      extra.push_back(flag + (value.get<bool>() ? "" : "=false"));
    } else if (value.is_array()) {
      extra.push_back(flag);
      for (const auto& v : value) extra.push_back(config_scalar(v));
    } else {
      extra.push_back(flag + "=" + config_scalar(value));
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

void add_config(CLI::App* app) {
  app->add_option("--config")->description("JSON file of option values; flags override it");
}

/// For commands that draw no random numbers; accepted so every command takes --seed.
void add_inert_seed(CLI::App* app) {
  app->add_option("--seed")->description("Accepted for uniformity; this command is not random");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw DataError("cannot write " + path);
}

// --- shared option groups ----------------------------------------------------------

struct CorpusOptions {
  std::string data;
  std::size_t stride = 5;
  LabelConfig labels;

  void add(CLI::App* app, bool required = true) {
    auto* o = app->add_option("--data", data, "Directory of recordings");
    if (required) o->required()->check(CLI::ExistingDirectory);
    app->add_option("--stride", stride, "Window stride in frames")->capture_default_str();
    app->add_option("--v-slip", labels.v_slip, "Slip threshold, m/s")->capture_default_str();
    app->add_option("--v-static", labels.v_static, "Static threshold, m/s")->capture_default_str();
    app->add_option("--r-eff", labels.r_eff, "Effective radius for angular rate, m")
        ->capture_default_str();
  }
};

struct ScheduleOptions {
  TrainSchedule schedule;
  double val_fraction = 0.1;
  bool no_augment = false;
  std::string metrics;

  void add(CLI::App* app) {
    app->add_option("--epochs", schedule.epochs)->capture_default_str();
    app->add_option("--batch-size", schedule.batch_size)->capture_default_str();
    app->add_option("--lr", schedule.lr)->capture_default_str();
    app->add_option("--max-batches", schedule.max_batches, "Batches per epoch cap, 0 = all")
        ->capture_default_str();
    app->add_option("--val-fraction", val_fraction)->capture_default_str();
    app->add_flag("--no-augment", no_augment, "Disable grid transforms and input noise");
    app->add_option("--noise-sigma", schedule.augmentation.noise_sigma)->capture_default_str();
    app->add_option("--transform-probability", schedule.augmentation.transform_probability)
        ->capture_default_str();
    app->add_option("--metrics", metrics, "Per-epoch CSV (default: <out>.epochs.csv)");
  }
};

/// Trains `model` on the corpus and writes the per-epoch CSV.
void fit(Classifier& model, const CorpusOptions& corpus, ScheduleOptions& opts,
         std::uint64_t seed, const std::string& out) {
  Dataset ds = pipeline::build_dataset(
      pipeline::load_windows(corpus.data, corpus.stride, corpus.labels), seed,
      opts.val_fraction);
  opts.schedule.seed = seed;
  opts.schedule.augment = !opts.no_augment;
  std::cerr << "train " << ds.train.size() << " windows, val " << ds.val.size() << "\n";
  const auto epochs = train(model, ds, opts.schedule, [](const EpochMetrics& m) {
    std::fprintf(stderr, "epoch %zu train_loss %.4f train_acc %.4f val_loss %.4f val_acc %.4f\n",
                 m.epoch, m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy);
  });
  write_text(opts.metrics.empty() ? out + ".epochs.csv" : opts.metrics,
             pipeline::epochs_csv(epochs));
}

void print_summary(const pipeline::Evaluation& e) {
  std::printf("accuracy %.4f weighted_precision %.4f weighted_recall %.4f weighted_f1 %.4f\n",
              e.metrics.accuracy, e.metrics.weighted_precision, e.metrics.weighted_recall,
              e.metrics.weighted_f1);
}

std::vector<LabeledWindow> eval_windows(const CorpusOptions& corpus, const NormStats& stats,
                                        bool balanced, std::uint64_t seed) {
  auto windows = pipeline::flatten(
      pipeline::load_windows(corpus.data, corpus.stride, corpus.labels), stats);
  return balanced ? pipeline::balance(windows, seed) : windows;
}

std::string read_magic(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(CheckpointError::Code::Io, "cannot open " + path);
  std::string magic(4, '\0');
  is.read(magic.data(), 4);
  return is ? magic : std::string();
}

std::unique_ptr<Classifier> load_classifier(const std::string& path) {
  const std::string magic = read_magic(path);
  if (magic == baseline::kFreqCnnMagic) {
    return std::make_unique<baseline::FreqCnn>(baseline::FreqCnn::load(path));
  }
  return std::make_unique<TcnModel>(TcnModel::load(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Barometric tactile slip detection"};
  app.require_subcommand(1);

  // simulate
  std::uint64_t sim_seed = 1;
  std::string sim_out;
  double sim_duration = 12.0;
  sim::SimNoise noise;
  auto* simulate = app.add_subcommand("simulate", "Generate the condition-matrix corpus");
  add_config(simulate);
  simulate->add_option("--seed", sim_seed)->capture_default_str();
  simulate->add_option("--out", sim_out, "Output directory")->required();
  simulate->add_option("--duration", sim_duration, "Seconds per condition")->capture_default_str();
  simulate->add_option("--sensor-sigma", noise.sensor_sigma)->capture_default_str();
  simulate->add_option("--vibration-gain", noise.vibration_gain)->capture_default_str();
  simulate->add_option("--band-lo", noise.band_lo_hz)->capture_default_str();
  simulate->add_option("--band-hi", noise.band_hi_hz)->capture_default_str();
  simulate->add_option("--glitch-rate", noise.glitch_rate_hz)->capture_default_str();
  simulate->add_option("--glitch-amplitude", noise.glitch_amplitude)->capture_default_str();

  // train
  std::uint64_t train_seed = 1;
  std::string train_out;
  CorpusOptions train_corpus;
  ScheduleOptions train_opts;
  TcnConfig tcn_config;
  auto* train_cmd = app.add_subcommand("train", "Train the TCN");
  add_config(train_cmd);
  train_cmd->add_option("--seed", train_seed)->capture_default_str();
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_corpus.add(train_cmd);
  train_opts.add(train_cmd);
  train_cmd->add_option("--dilations", tcn_config.dilations)->capture_default_str();
  train_cmd->add_option("--kernel-size", tcn_config.kernel_size)->capture_default_str();
  train_cmd->add_option("--convs-per-block", tcn_config.convs_per_block)->capture_default_str();
  train_cmd->add_option("--channels", tcn_config.channels)->capture_default_str();
  train_cmd->add_option("--dropout", tcn_config.dropout_rate)->capture_default_str();
  train_cmd->add_option("--fc1", tcn_config.fc_widths[0])->capture_default_str();
  train_cmd->add_option("--fc2", tcn_config.fc_widths[1])->capture_default_str();

  // eval
  std::uint64_t eval_seed = 1;
  std::string eval_model, eval_predictor = "model", eval_out = "eval";
  bool eval_balance = false;
  CorpusOptions eval_corpus;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a corpus");
  add_config(eval_cmd);
  eval_cmd->add_option("--seed", eval_seed, "Seed for --balance")->capture_default_str();
  eval_cmd->add_option("--model", eval_model, "TCN or frequency-CNN checkpoint");
  eval_cmd->add_option("--predictor", eval_predictor, "model | static | slip")
      ->check(CLI::IsMember({"model", "static", "slip"}))
      ->capture_default_str();
  eval_cmd->add_option("--out-dir", eval_out)->capture_default_str();
  eval_cmd->add_flag("--balance", eval_balance, "Undersample the corpus to equal classes");
  eval_corpus.add(eval_cmd);

  // baseline psd|freqcnn train|eval
  auto* baseline_cmd = app.add_subcommand("baseline", "PSD threshold or frequency CNN");
  baseline_cmd->require_subcommand(1);
  auto* psd_cmd = baseline_cmd->add_subcommand("psd", "PSD threshold detector");
  psd_cmd->require_subcommand(1);
  auto* freq_cmd = baseline_cmd->add_subcommand("freqcnn", "Frequency-image CNN");
  freq_cmd->require_subcommand(1);

  std::uint64_t psd_seed = 1;
  std::string psd_out, psd_model, psd_eval_out = "eval";
  CorpusOptions psd_train_corpus, psd_eval_corpus;
  baseline::PsdConfig psd_config;
  double psd_val_fraction = 0.1;
  auto* psd_train = psd_cmd->add_subcommand("train", "Calibrate the threshold");
  add_config(psd_train);
  psd_train->add_option("--seed", psd_seed)->capture_default_str();
  psd_train->add_option("--out", psd_out, "Baseline JSON path")->required();
  psd_train->add_option("--segment", psd_config.segment)->capture_default_str();
  psd_train->add_option("--overlap", psd_config.overlap)->capture_default_str();
  psd_train->add_option("--cutoff", psd_config.cutoff_hz)->capture_default_str();
  psd_train->add_option("--val-fraction", psd_val_fraction)->capture_default_str();
  psd_train_corpus.add(psd_train);
  auto* psd_eval = psd_cmd->add_subcommand("eval", "Score the PSD detector");
  add_config(psd_eval);
  add_inert_seed(psd_eval);
  psd_eval->add_option("--model", psd_model, "Baseline JSON path")->required();
  psd_eval->add_option("--out-dir", psd_eval_out)->capture_default_str();
  psd_eval_corpus.add(psd_eval);

  std::uint64_t freq_seed = 1;
  std::string freq_out, freq_model, freq_eval_out = "eval";
  CorpusOptions freq_train_corpus, freq_eval_corpus;
  ScheduleOptions freq_opts;
  baseline::FreqCnnConfig freq_config;
  auto* freq_train = freq_cmd->add_subcommand("train", "Train the frequency CNN");
  add_config(freq_train);
  freq_train->add_option("--seed", freq_seed)->capture_default_str();
  freq_train->add_option("--out", freq_out, "Checkpoint path")->required();
  freq_train->add_option("--conv-channels", freq_config.conv_channels)->capture_default_str();
  freq_train->add_option("--kernel-size", freq_config.kernel_size)->capture_default_str();
  freq_train->add_option("--fc", freq_config.fc_width)->capture_default_str();
  freq_train->add_option("--dropout", freq_config.dropout_rate)->capture_default_str();
  freq_train_corpus.add(freq_train);
  freq_opts.add(freq_train);
  auto* freq_eval = freq_cmd->add_subcommand("eval", "Score the frequency CNN");
  add_config(freq_eval);
  add_inert_seed(freq_eval);
  freq_eval->add_option("--model", freq_model, "Checkpoint path")->required();
  freq_eval->add_option("--out-dir", freq_eval_out)->capture_default_str();
  freq_eval_corpus.add(freq_eval);

  // detect
  std::string detect_model, detect_in = "-", detect_out = "-";
  auto* detect = app.add_subcommand("detect", "Stream a pressure CSV through the detector");
  add_config(detect);
  add_inert_seed(detect);
  detect->add_option("--model", detect_model, "TCN checkpoint")->required();
  detect->add_option("--input", detect_in, "Pressure CSV, - for stdin")->capture_default_str();
  detect->add_option("--output", detect_out, "JSON-lines events, - for stdout")
      ->capture_default_str();

  // gradcheck
  nn::GradCheckOptions gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  add_config(gradcheck);
  gradcheck->add_option("--seed", gc.seed)->capture_default_str();
  gradcheck->add_option("--configurations", gc.configurations)->capture_default_str();
  gradcheck->add_option("--step", gc.step)->capture_default_str();
  gradcheck->add_option("--tolerance", gc.tolerance)->capture_default_str();

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(std::move(args));
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  std::vector<char*> arg_ptrs;
  for (auto& a : args) arg_ptrs.push_back(a.data());
  try {
    app.parse(static_cast<int>(arg_ptrs.size()), arg_ptrs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) {
      std::filesystem::create_directories(sim_out);
      const auto configs = sim::condition_matrix(sim_seed, sim_duration, noise);
      for (const auto& c : configs) write_recording(sim_out, sim::simulate(c));
      std::printf("wrote %zu recordings to %s\n", configs.size(), sim_out.c_str());
    } else if (*train_cmd) {
      Rng rng(train_seed);
      TcnModel model = TcnModel::build(tcn_config, rng);
      fit(model, train_corpus, train_opts, train_seed, train_out);
      model.save(train_out);
    } else if (*eval_cmd) {
      std::vector<Label> preds;
      std::vector<LabeledWindow> windows;
      if (eval_predictor == "model") {
        if (eval_model.empty()) throw ConfigError("eval needs --model or --predictor static|slip");
        const auto model = load_classifier(eval_model);
        windows = eval_windows(eval_corpus, model->norm, eval_balance, eval_seed);
        preds = classify(*model, windows);
      } else {
        windows = eval_windows(eval_corpus, NormStats{}, eval_balance, eval_seed);
        preds.assign(windows.size(), eval_predictor == "slip" ? Label::Slip : Label::Static);
      }
      const auto e = pipeline::evaluate(preds, windows);
      pipeline::write_reports(eval_out, e);
      print_summary(e);
    } else if (*psd_train) {
      Dataset ds = pipeline::build_dataset(
          pipeline::load_windows(psd_train_corpus.data, psd_train_corpus.stride,
                                 psd_train_corpus.labels),
          psd_seed, psd_val_fraction);
      const auto fit_result = baseline::calibrate_threshold(ds.train, psd_config);
      baseline::save_psd(psd_out, {psd_config, ds.stats});
      std::printf("threshold %.17g train_balanced_accuracy %.4f\n", fit_result.threshold,
                  fit_result.balanced_accuracy);
    } else if (*psd_eval) {
      const auto psd = baseline::load_psd(psd_model);
      const auto windows = eval_windows(psd_eval_corpus, psd.norm, false, 0);
      std::vector<Label> preds;
      preds.reserve(windows.size());
      for (const auto& w : windows) preds.push_back(baseline::psd_predict(w.x, psd.config));
      const auto e = pipeline::evaluate(preds, windows);
      pipeline::write_reports(psd_eval_out, e);
      print_summary(e);
    } else if (*freq_train) {
      Rng rng(freq_seed);
      auto model = baseline::FreqCnn::build(freq_config, rng);
      fit(model, freq_train_corpus, freq_opts, freq_seed, freq_out);
      model.save(freq_out);
    } else if (*freq_eval) {
      const auto model = baseline::FreqCnn::load(freq_model);
      const auto windows = eval_windows(freq_eval_corpus, model.norm, false, 0);
      const auto e = pipeline::evaluate(classify(model, windows), windows);
      pipeline::write_reports(freq_eval_out, e);
      print_summary(e);
    } else if (*detect) {
      const TcnModel model = TcnModel::load(detect_model);
      std::ifstream fin;
      std::ofstream fout;
      std::istream* in = &std::cin;
      std::ostream* out = &std::cout;
      if (detect_in != "-") {
        fin.open(detect_in, std::ios::binary);
        if (!fin) throw DataError("cannot open " + detect_in);
        in = &fin;
      }
      if (detect_out != "-") {
        fout.open(detect_out, std::ios::binary);
        if (!fout) throw DataError("cannot write " + detect_out);
        out = &fout;
      }
      const auto stats = runtime::run_detect(*in, model, *out, std::cerr);
      out->flush();
      std::fprintf(stderr, "rows %zu malformed %zu rejected %zu classifications %zu events %zu\n",
                   stats.rows, stats.malformed, stats.rejected, stats.classifications,
                   stats.events);
    } else if (*gradcheck) {
      bool ok = true;
      for (const auto& r : nn::run_gradcheck_suite(gc)) {
        std::printf("%-24s max_rel_error %.3e coordinates %zu kink_skipped %zu %s\n",
                    r.name.c_str(), r.max_rel_error, r.coordinates, r.kink_skipped,
                    r.passed ? "PASS" : "FAIL");
        ok &= r.passed;
      }
      return ok ? kOk : kNumeric;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
