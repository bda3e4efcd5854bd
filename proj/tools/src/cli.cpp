// SPDX-License-Identifier: Apache-2.0
#include "dietweight_cli/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>

#include <CLI11.hpp>

#include "dietweight/checkpoint.hpp"
#include "dietweight/error.hpp"
#include "dietweight/evaluation.hpp"
#include "dietweight/ingest.hpp"
#include "dietweight/run_config.hpp"
#include "dietweight/synth.hpp"

namespace dietweight::cli {

namespace fs = std::filesystem;

namespace {

class OutputConflict : public Error {
 public:
  using Error::Error;
};

struct CommonOptions {
  std::string config;
  std::string out;
  bool force = false;
};

void prepare_output_dir(const CommonOptions& opts) {
  const fs::path dir(opts.out);
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw OutputConflict("output path " + opts.out + " is not a directory");
    if (!fs::is_empty(dir) && !opts.force) {
      throw OutputConflict("output directory " + opts.out + " is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(dir);
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  body(out);
  if (!out) throw ConfigError("failed writing " + path.string());
}

void write_resolved(const CommonOptions& opts, const RunConfig& config) {
  write_file(fs::path(opts.out) / "resolved.conf", [&](std::ostream& o) { config.write_resolved(o); });
}

Corpus load_normalized(const RunConfig& config) {
  if (config.diary.empty()) throw ConfigError("config key 'diary' is required for this command");
  Corpus corpus = load_diary(config.diary);
  const CanonicalMap map = config.canonical_map.empty() ? CanonicalMap{} : CanonicalMap::load(config.canonical_map);
  normalize_corpus(corpus, map);
  return corpus;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

int cmd_synth(const CommonOptions& opts, std::ostream& out) {
  const RunConfig config = RunConfig::load(opts.config);
  prepare_output_dir(opts);
  const SynthCorpus synth = generate_corpus(config.synth);
  const fs::path dir(opts.out);
  write_file(dir / "diary.jsonl", [&](std::ostream& o) { write_diary(o, synth.corpus); });
  write_file(dir / "trace.jsonl", [&](std::ostream& o) { write_trace(o, synth.trace); });
  write_resolved(opts, config);
  out << "participants " << synth.corpus.size() << "\n"
      << "records " << record_count(synth.corpus) << "\n"
      << "clamped " << synth.clamped << "\n";
  if (synth.clamped > 0) out << "warning: " << synth.clamped << " weight updates clamped to [20, 300] kg\n";
  try {
    const CausalStrength cs = causal_strength_report(synth.corpus, synth.trace);
    out << "surplus/delta correlation " << cs.correlation << " over " << cs.pairs << " days\n";
  } catch (const DataError&) {
    out << "surplus/delta correlation undefined\n";
  }
  return kOk;
}

int cmd_train(const CommonOptions& opts, std::ostream& out, std::ostream& err) {
  const RunConfig config = RunConfig::load(opts.config);
  prepare_output_dir(opts);
  const PipelineConfig& pc = config.pipeline;
  const ExperimentData data = prepare_experiment(load_normalized(config), pc);
  out << "split " << data.split.train.size() << "/" << data.split.validation.size() << "/"
      << data.split.test.size() << ", windows " << data.train_windows.size() << "/"
      << data.validation_windows.size() << ", vocabulary " << data.vocabulary.size() << "\n";

  auto predictor = build_predictor(pc);
  TrainConfig train_config = pc.train;
  train_config.seed = pc.shuffle_seed();
  const TrainResult result = train(*predictor, data.train_windows, data.validation_windows, pc.loss, train_config,
                                   [&](const EpochRecord& r) {
                                     err << "epoch " << r.epoch << " lr " << r.lr << " train " << r.train_loss
                                         << " val " << r.val_loss << "\n";
                                   });

  const fs::path dir(opts.out);
  write_checkpoint((dir / "checkpoint.jsonl").string(), predictor->manifest(), predictor->const_parameters());
  write_file(dir / "history.jsonl", [&](std::ostream& o) { write_history(o, result.history); });
  const nlohmann::json summary{
      {"best_epoch", result.best_epoch},
      {"best_val_loss", result.best_val_loss},
      {"epochs", result.history.size()},
      {"stopped_early", result.stopped_early},
      {"order_digest", hex(result.order_digest)},
      {"split", {{"train", data.split.train.size()}, {"validation", data.split.validation.size()},
                 {"test", data.split.test.size()}}},
      {"windows", {{"train", data.train_windows.size()}, {"validation", data.validation_windows.size()}}},
      {"vocabulary", data.vocabulary.size()},
  };
  write_file(dir / "metrics.json", [&](std::ostream& o) { o << summary.dump(2) << '\n'; });
  write_resolved(opts, config);
  out << "best epoch " << result.best_epoch << " val loss " << result.best_val_loss << "\n";
  return kOk;
}

int cmd_eval(const CommonOptions& opts, const std::string& checkpoint_path, std::ostream& out) {
  const RunConfig config = RunConfig::load(opts.config);
  if (!fs::is_regular_file(checkpoint_path)) throw ConfigError("checkpoint " + checkpoint_path + " not found");
  const Checkpoint checkpoint = read_checkpoint(checkpoint_path);
  prepare_output_dir(opts);
  const PipelineConfig& pc = config.pipeline;
  const ExperimentData data = prepare_experiment(load_normalized(config), pc);

  auto predictor = build_predictor(pc);
  if (checkpoint.manifest != predictor->manifest()) {
    throw ConfigError("checkpoint manifest " + checkpoint.manifest.dump() + " does not match config " +
                      predictor->manifest().dump());
  }
  assign_parameters(checkpoint.parameters, predictor->parameters());

  ArmResult arm;
  arm.name = "test";
  arm.config = pc;
  arm.rollouts = rollout_test_split(*predictor, data, RolloutConfig{pc.setting, pc.feedback});
  arm.metrics = compute_metrics(arm.rollouts);
  const std::vector<ArmResult> arms{arm};
  const fs::path dir(opts.out);
  write_file(dir / "metrics.json", [&](std::ostream& o) { write_metrics(o, arms); });
  write_file(dir / "predictions.csv", [&](std::ostream& o) { write_predictions(o, arms); });
  write_resolved(opts, config);
  out << "test mse " << arm.metrics.mse << " mae " << arm.metrics.mae << " over " << arm.metrics.days
      << " days\n";
  return kOk;
}

std::vector<FusionArm> fusion_arms(const PipelineConfig& pc) {
  std::vector<FusionArm> arms;
  for (const auto& e : pc.encoders) arms.push_back(FusionArm{e.descriptor(), {e}});
  if (pc.encoders.size() > 1) arms.push_back(FusionArm{"fused", pc.encoders});
  return arms;
}

int cmd_ablate(const CommonOptions& opts, const std::string& mode, std::ostream& out, std::ostream& err) {
  const RunConfig config = RunConfig::load(opts.config);
  if (mode != "meals" && mode != "lambda" && mode != "fusion") {
    throw ConfigError("unknown ablation mode '" + mode + "' (meals|lambda|fusion)");
  }
  prepare_output_dir(opts);
  const PipelineConfig& pc = config.pipeline;
  const ExperimentData data = prepare_experiment(load_normalized(config), pc);

  std::vector<ArmResult> arms;
  if (mode == "meals") {
    arms = ablate_meals(data, pc);
  } else if (mode == "lambda") {
    arms = lambda_sweep(data, pc, config.lambdas);
  } else {
    arms = fusion_eval(data, pc, fusion_arms(pc));
  }
  const fs::path dir(opts.out);
  write_file(dir / "metrics.json", [&](std::ostream& o) { write_metrics(o, arms); });
  write_file(dir / "predictions.csv", [&](std::ostream& o) { write_predictions(o, arms); });
  write_resolved(opts, config);
  for (const auto& arm : arms) {
    out << arm.name << ": mse " << arm.metrics.mse << " mae " << arm.metrics.mae << "\n";
    err << arm.name << ": " << arm.training.history.size() << " epochs, digest " << hex(arm.training.order_digest)
        << "\n";
  }
  return kOk;
}

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "Run configuration (key = value)")->required();
  cmd->add_option("--out", opts.out, "Output directory")->required();
  cmd->add_flag("--force", opts.force, "Overwrite a non-empty output directory");
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diet-aware body weight forecasting", "dietweight"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string checkpoint;
  std::string mode;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic diary corpus and its trace");
  add_common(synth, opts);
  CLI::App* train_cmd = app.add_subcommand("train", "Train a forecaster on the configured diary");
  add_common(train_cmd, opts);
  CLI::App* eval = app.add_subcommand("eval", "Roll out a checkpoint over the test split");
  add_common(eval, opts);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
  CLI::App* ablate = app.add_subcommand("ablate", "Run an ablation harness");
  add_common(ablate, opts);
  ablate->add_option("--mode", mode, "meals | lambda | fusion")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(opts, out);
    if (train_cmd->parsed()) return cmd_train(opts, out, err);
    if (eval->parsed()) return cmd_eval(opts, checkpoint, out);
    return cmd_ablate(opts, mode, out, err);
  } catch (const OutputConflict& e) {
    err << "error: " << e.what() << "\n";
    return kOutputConflict;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kDataInsufficient;
  } catch (const NumericError& e) {
    err << "error: numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kOutputConflict;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> storage{"dietweight"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace dietweight::cli
