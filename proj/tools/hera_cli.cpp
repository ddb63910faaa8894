// SPDX-License-Identifier: Apache-2.0
//
// hera: train, evaluate and inspect two-level activity forecasters.
//
//   hera synth    --out data.jsonl [--n 1000] [--seed 0]
//   hera train    --model hera --data data.jsonl --checkpoint model.ckpt [--fold 0]
//   hera evaluate --model hera --data data.jsonl --out results.csv [--checkpoint model.ckpt --fold 0]
//   hera predict  --checkpoint model.ckpt --data data.jsonl --video ID --observe 0.2
//   hera report   --in results.csv [--metric f1k]
//
// Exit status: 0 on success, 2 on invalid input or configuration, 1 on
// other failures.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hera/hera.hpp"

namespace fs = std::filesystem;
using namespace hera;

namespace {

struct DataOptions {
  std::string data;
  std::string format = "canonical";
};

struct ModelOptions {
  std::string model = "hera";
  std::size_t epochs = 20;
  std::size_t hidden = 16;
  std::size_t batch = 512;
  double lr = 1e-3;
  std::size_t splits = 32;
  std::uint64_t seed = 0;
  bool no_messages = false;
  bool no_label_message = false;
  bool no_encoder_loss = false;
};

struct FoldOptions {
  std::size_t folds = 4;
  std::size_t fold = 0;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--data", o.data, "Annotation file (canonical) or directory (breakfast); default from HERA_DATA_DIR");
  cmd->add_option("--format", o.format, "Annotation format")->check(CLI::IsMember({"canonical", "breakfast"}));
}

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option("--model", o.model, "hera, dummy, ind-rnn, joint-rnn or synced-rnn");
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--hidden", o.hidden, "Hidden state size");
  cmd->add_option("--batch", o.batch, "Mini-batch size in observation splits");
  cmd->add_option("--lr", o.lr, "ADAM learning rate");
  cmd->add_option("--splits", o.splits, "Observation cuts per training video and epoch");
  cmd->add_option("--seed", o.seed, "Seed for initialization, sampling and folds");
  cmd->add_flag("--no-messages", o.no_messages, "Disable cross-level messages");
  cmd->add_flag("--no-label-message", o.no_label_message, "Leave the coarse label out of downward messages");
  cmd->add_flag("--no-encoder-loss", o.no_encoder_loss, "Drop the encoder prediction losses");
}

void add_fold_options(CLI::App* cmd, FoldOptions& o) {
  cmd->add_option("--folds", o.folds, "Number of leave-persons-out folds");
  cmd->add_option("--fold", o.fold, "Fold index (0-based)");
}

HeraConfig model_config(const ModelOptions& o) {
  HeraConfig c;
  c.epochs = o.epochs;
  c.hidden_size = o.hidden;
  c.batch_size = o.batch;
  c.lr = o.lr;
  c.splits_per_video = o.splits;
  c.seed = o.seed;
  c.cross_level_messages = !o.no_messages;
  c.label_in_downward_msg = !o.no_label_message;
  c.encoder_loss_enabled = !o.no_encoder_loss;
  c.validate();
  return c;
}

AnnotationSet load_data(const DataOptions& o) {
  std::string path = o.data;
  if (path.empty()) {
    const char* env = std::getenv("HERA_DATA_DIR");
    path = env ? env : "data";
    if (o.format == "canonical" && fs::is_directory(path)) path = (fs::path(path) / "annotations.jsonl").string();
  }
  const auto format = o.format == "canonical" ? AnnotationFormat::Canonical : AnnotationFormat::Breakfast;
  AnnotationSet set = load_annotations(path, format);
  std::cerr << "loaded " << set.records.size() << " videos (" << set.coarse_segments() << " coarse, "
            << set.fine_segments() << " fine segments; " << set.rejected.size() << " rejected) from " << path << "\n";
  for (const auto& r : set.rejected) std::cerr << "  rejected " << r.video_id << ": " << r.reason << "\n";
  if (set.records.empty()) throw ContractError("no usable videos in '" + path + "'");
  return set;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigurationError(std::string("bad value '") + item + "' in " + what);
    }
  }
  if (out.empty()) throw ConfigurationError(std::string(what) + " is empty");
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

fs::path sibling(const fs::path& csv, const std::string& suffix) {
  fs::path p = csv;
  p.replace_extension();
  return p.string() + suffix;
}

void print_epoch(std::size_t fold, const EpochRecord& r) {
  std::cerr << "fold " << fold << " epoch " << r.epoch << ": train " << r.train_loss << ", validation "
            << r.validation_loss << "\n";
}

// ---------------------------------------------------------------------------

int run_synth(const std::string& out, std::size_t n, std::uint64_t seed) {
  const SynthResult res = synth_generate(default_grammar(), n, seed);
  std::ostringstream text;
  write_annotations(text, res.records);
  write_file(out, text.str());
  std::cerr << "wrote " << n << " videos to " << out << " (" << res.stats.skipped << "/" << res.stats.skippable
            << " coarse slots skipped, " << res.stats.swaps << " swaps)\n";
  return 0;
}

int run_train(const DataOptions& d, const ModelOptions& m, const FoldOptions& f, const std::string& checkpoint) {
  const AnnotationSet set = load_data(d);
  const HeraConfig cfg = model_config(m);
  const ModelKind kind = parse_model_kind(m.model);
  const auto videos = to_videos(set.records, set.vocab);
  const auto folds = make_cv_splits(set.records, f.folds, m.seed);
  if (f.fold >= folds.size()) throw ConfigurationError("fold index out of range");
  const FoldData data = fold_data(videos, folds[f.fold]);
  Checkpoint ck{kind, cfg, set.vocab, make_model(kind, cfg, set.vocab.coarse.size(), set.vocab.fine.size())};
  const TrainReport report =
      fit(ck.model, data.train, data.validation, [&](const EpochRecord& r) { print_epoch(f.fold, r); });
  save_checkpoint(checkpoint, ck);
  std::cerr << "trained " << model_kind_name(kind) << " on " << data.train.size() << " videos, best epoch "
            << report.best_epoch << ", " << report.steps << " steps; saved " << checkpoint << "\n";
  return 0;
}

int run_evaluate(const DataOptions& d, const ModelOptions& m, const FoldOptions& f, const std::string& checkpoint,
                 const std::string& observe, const std::string& horizons, const std::vector<std::string>& metrics,
                 double k, std::size_t threads, const std::string& out, bool fold_given) {
  const AnnotationSet set = load_data(d);
  ExperimentConfig cfg;
  cfg.kind = parse_model_kind(m.model);
  cfg.model = model_config(m);
  cfg.observe = parse_list(observe, "--observe");
  cfg.horizons = parse_list(horizons, "--horizons");
  cfg.metrics.clear();
  for (const auto& name : metrics) cfg.metrics.push_back(parse_metric(name));
  cfg.folds = f.folds;
  cfg.seed = m.seed;
  cfg.k = k;
  cfg.threads = threads;
  if (fold_given || !checkpoint.empty()) cfg.only_fold = f.fold;
  cfg.validate();
  const auto videos = to_videos(set.records, set.vocab);

  ExperimentResult result;
  if (!checkpoint.empty()) {
    if (!fs::exists(checkpoint)) throw CheckpointError("checkpoint '" + checkpoint + "' not found");
    Checkpoint ck = load_checkpoint(checkpoint);
    if (!(ck.vocab == set.vocab)) throw CheckpointError("checkpoint vocabularies differ from the dataset");
    cfg.kind = ck.kind;
    const auto folds = make_cv_splits(set.records, cfg.folds, cfg.seed);
    evaluate_fold(ck.model, fold_data(videos, folds[f.fold]).test, cfg, f.fold, result);
  } else {
    result = run_experiment(cfg, videos, set.vocab, print_epoch);
  }

  std::ostringstream summary, per_video, pooled;
  write_summary_csv(summary, result.summary);
  write_per_video_csv(per_video, result.per_video);
  write_summary_csv(pooled, result.moc_pooled);
  if (out.empty() || out == "-") {
    std::cout << summary.str();
  } else {
    write_file(out, summary.str());
    write_file(sibling(out, ".videos.csv"), per_video.str());
    write_file(sibling(out, ".moc.csv"), pooled.str());
    std::cerr << "wrote " << out << " (" << result.summary.size() << " cells)\n";
  }
  if (result.truncated_forecasts) {
    std::cerr << result.truncated_forecasts << " forecasts hit the roll-out cap\n";
  }
  return 0;
}

int run_predict(const DataOptions& d, const std::string& checkpoint, const std::string& video, double observe) {
  const AnnotationSet set = load_data(d);
  const Checkpoint ck = load_checkpoint(checkpoint);
  if (!(ck.vocab == set.vocab)) throw CheckpointError("checkpoint vocabularies differ from the dataset");
  const auto videos = to_videos(set.records, set.vocab);
  auto it = std::find_if(videos.begin(), videos.end(), [&](const Video& v) { return v.video_id == video; });
  if (it == videos.end()) throw ContractError("video '" + video + "' not in the dataset");
  const ObservationSplit split = split_at(it->hierarchy, observe);
  const Forecast fc = predict(ck.model, split);
  const auto timeline = absolute_timeline(fc.hierarchy);
  nlohmann::ordered_json j;
  j["video_id"] = video;
  j["observe"] = observe;
  j["truncated"] = fc.truncated;
  for (std::size_t level : {kCoarse, kFine}) {
    const Vocabulary& vocab = level == kCoarse ? set.vocab.coarse : set.vocab.fine;
    auto& arr = j[level_name(level)] = nlohmann::ordered_json::array();
    for (const auto& s : timeline[level]) {
      arr.push_back({{"label", vocab.name(s.label)}, {"start", s.start}, {"end", s.end}, {"future", s.end > observe}});
    }
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_report(const std::string& in, const std::string& metric) {
  std::ifstream f(in);
  if (!f) throw FormatError("cannot open '" + in + "'", 0);
  std::string line;
  std::getline(f, line);
  if (line != "model,fold,observe,horizon,level,metric,value") throw FormatError("not a summary CSV", 1);
  // (model, level, observe) -> horizon -> values
  std::map<std::tuple<std::string, std::string, double>, std::map<double, std::vector<double>>> table;
  std::set<double> horizons;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (cols.size() != 7) throw FormatError("expected 7 columns", line_no);
    if (cols[5] != metric) continue;
    try {
      const double obs = std::stod(cols[2]), hor = std::stod(cols[3]), val = std::stod(cols[6]);
      table[{cols[0], cols[4], obs}][hor].push_back(val);
      horizons.insert(hor);
    } catch (const std::logic_error&) {
      throw FormatError("bad number", line_no);
    }
  }
  std::cout << std::left << std::setw(12) << "model" << std::setw(8) << "level" << std::setw(8) << "observe";
  for (double h : horizons) std::cout << std::right << std::setw(8) << std::fixed << std::setprecision(0) << h * 100;
  std::cout << "\n";
  for (const auto& [key, row] : table) {
    std::cout << std::left << std::setw(12) << std::get<0>(key) << std::setw(8) << std::get<1>(key) << std::setw(8)
              << std::fixed << std::setprecision(0) << std::get<2>(key) * 100;
    for (double h : horizons) {
      auto it = row.find(h);
      if (it == row.end()) {
        std::cout << std::right << std::setw(8) << "-";
        continue;
      }
      double s = 0.0;
      for (double v : it->second) s += v;
      std::cout << std::right << std::setw(8) << std::setprecision(1) << 100.0 * s / static_cast<double>(it->second.size());
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-level activity forecasting"};
  app.require_subcommand(1);

  DataOptions data;
  ModelOptions model;
  FoldOptions fold;
  std::string checkpoint, out, in, video;
  std::string observe = "0.2,0.3", horizons = "0.1,0.2,0.3,0.5,0.7,0.8";
  std::vector<std::string> metrics{"f1k"};
  std::string report_metric = "f1k";
  double k = 0.25, predict_observe = 0.2;
  std::size_t n = 1000, threads = 1;
  std::uint64_t synth_seed = 0;

  auto* synth = app.add_subcommand("synth", "Write a synthetic annotation file");
  synth->add_option("--out", out, "Output JSONL file")->required();
  synth->add_option("--n", n, "Number of videos");
  synth->add_option("--seed", synth_seed, "Generator seed");

  auto* train = app.add_subcommand("train", "Train one fold and save a checkpoint");
  add_data_options(train, data);
  add_model_options(train, model);
  add_fold_options(train, fold);
  train->add_option("--checkpoint", checkpoint, "Checkpoint to write")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Cross-validated evaluation, or one fold from a checkpoint");
  add_data_options(evaluate, data);
  add_model_options(evaluate, model);
  add_fold_options(evaluate, fold);
  evaluate->add_option("--checkpoint", checkpoint, "Evaluate this checkpoint on --fold instead of training");
  evaluate->add_option("--observe", observe, "Observed fractions, comma separated");
  evaluate->add_option("--horizons", horizons, "Forecast horizons as fractions of the video, comma separated");
  evaluate->add_option("--metric", metrics, "Metrics (f1k, moc, mof, edit)")->delimiter(',');
  evaluate->add_option("--k", k, "IoU threshold of F1@k");
  evaluate->add_option("--threads", threads, "Evaluation workers");
  evaluate->add_option("--out", out, "Summary CSV (per-video and pooled-MoC tables are written next to it)");

  auto* pred = app.add_subcommand("predict", "Forecast one video from a checkpoint");
  add_data_options(pred, data);
  pred->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
  pred->add_option("--video", video, "Video id")->required();
  pred->add_option("--observe", predict_observe, "Observed fraction");

  auto* report = app.add_subcommand("report", "Print a summary CSV as a horizon table (percent, mean over folds)");
  report->add_option("--in", in, "Summary CSV")->required();
  report->add_option("--metric", report_metric, "Metric to show");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return run_synth(out, n, synth_seed);
    if (train->parsed()) return run_train(data, model, fold, checkpoint);
    if (evaluate->parsed()) {
      return run_evaluate(data, model, fold, checkpoint, observe, horizons, metrics, k, threads, out,
                          evaluate->count("--fold") > 0);
    }
    if (pred->parsed()) return run_predict(data, checkpoint, video, predict_observe);
    if (report->parsed()) return run_report(in, report_metric);
  } catch (const ConfigurationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const VocabularyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
