// iorlab command-line interface: training, attacks, calibration, adversarial
// temperature search, and the named experiments, all driven by a JSON config.
//
// Exit codes: 0 success, 2 validation error (bad arguments, config, or input
// files), 1 runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "iorlab/advtemp.hpp"
#include "iorlab/attacks.hpp"
#include "iorlab/calibrate.hpp"
#include "iorlab/common.hpp"
#include "iorlab/harness.hpp"
#include "iorlab/model.hpp"
#include "iorlab/text.hpp"
#include "iorlab/toy.hpp"
#include "iorlab/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace iorlab;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = "runs/out";
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string attack_name;
  std::string logits_path;
  std::string experiment_name;
  std::string report_path;
};

ExperimentSpec load_spec(const GlobalArgs& args) {
  ExperimentSpec spec;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw IoError("cannot open config: " + args.config_path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ValidationError("config is not valid JSON");
    spec = spec_from_json(j);
  }
  if (args.seed) spec.seeds = {*args.seed};
  if (!args.out_dir.empty()) spec.out_dir = args.out_dir;
  return spec;
}

void ensure_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Pipeline load_pipeline(const ExperimentSpec& spec, const std::string& checkpoint,
                       std::uint64_t seed) {
  if (checkpoint.empty()) throw ValidationError("a --checkpoint is required");
  Pipeline p;
  p.params = load_checkpoint(checkpoint, &p.vocab);
  if (p.vocab.size() == 0) {
    throw ValidationError("checkpoint has no embedded vocabulary: " + checkpoint);
  }
  p.data = make_toy_splits(spec, seed);
  p.lexicon = make_lexicon(spec);
  return p;
}

int cmd_train(const GlobalArgs& args) {
  const ExperimentSpec spec = load_spec(args);
  ensure_out(spec.out_dir);
  const std::uint64_t seed = spec.seeds.front();

  const ToySplits data = make_toy_splits(spec, seed);
  const Vocab vocab = build_vocab(data.train, 1);
  const SynonymLexicon lexicon = make_lexicon(spec);
  TrainConfig cfg = spec.train;
  cfg.seed = seed;

  const TrainResult res = train_by_mode(spec, cfg, vocab, lexicon, data.train, data.val);
  save_checkpoint(res.params, (fs::path(spec.out_dir) / "model.json").string(), &vocab, seed);
  save_history(res.history, (fs::path(spec.out_dir) / "history.csv").string());

  const double acc = clean_accuracy(res.params, vocab, data.test);
  write_json(json{{"mode", spec.train_mode},
                  {"seed", seed},
                  {"val_accuracy", res.history.back().val_accuracy},
                  {"test_accuracy", acc},
                  {"epochs", static_cast<int>(res.history.size())}},
             fs::path(spec.out_dir) / "train_summary.json");
  std::cout << "trained " << spec.train_mode << " model: test accuracy " << format_double(acc)
            << "\n";
  return 0;
}

int cmd_attack(const GlobalArgs& args) {
  const ExperimentSpec spec = load_spec(args);
  ensure_out(spec.out_dir);
  const Pipeline p = load_pipeline(spec, args.checkpoint, spec.seeds.front());

  std::vector<AttackKind> kinds = spec.attacks;
  if (!args.attack_name.empty()) kinds = {attack_from_name(args.attack_name)};

  json summary;
  for (AttackKind kind : kinds) {
    const AdvEvalReport rep =
        evaluate_attack(kind, p.params, p.vocab, p.lexicon, p.data.test, spec.attack);
    const std::string name = attack_name(kind);
    write_attack_results(rep.results,
                         (fs::path(spec.out_dir) / ("attack_" + name + ".jsonl")).string());
    summary[name] = {{"clean_accuracy", rep.clean_accuracy},
                     {"adversarial_accuracy", rep.adversarial_accuracy},
                     {"mean_queries", rep.mean_queries},
                     {"mean_perturbed_fraction", rep.mean_perturbed_fraction}};
    std::cout << name << ": clean " << format_double(rep.clean_accuracy) << " adversarial "
              << format_double(rep.adversarial_accuracy) << "\n";
  }
  write_json(summary, fs::path(spec.out_dir) / "attack_summary.json");
  return 0;
}

int cmd_calibrate(const GlobalArgs& args) {
  const ExperimentSpec spec = load_spec(args);
  ensure_out(spec.out_dir);

  LogitSet set;
  if (!args.logits_path.empty()) {
    set = load_logit_set(args.logits_path);
  } else {
    const Pipeline p = load_pipeline(spec, args.checkpoint, spec.seeds.front());
    set = collect_logits(p.params, p.vocab, p.data.val, 1.0);
    save_logit_set(set, (fs::path(spec.out_dir) / "val_logits.jsonl").string());
  }

  const CalibrationReport rep = make_calibration_report(set);
  write_json(json{{"fitted_temperature", rep.fitted_temperature},
                  {"nll_before", rep.nll_before},
                  {"nll_after", rep.nll_after},
                  {"ece", rep.ece},
                  {"mce", rep.mce}},
             fs::path(spec.out_dir) / "calibration.json");
  std::cout << "fitted temperature " << format_double(rep.fitted_temperature) << " (NLL "
            << format_double(rep.nll_before) << " -> " << format_double(rep.nll_after)
            << ", ECE " << format_double(rep.ece) << ", MCE " << format_double(rep.mce)
            << ")\n";
  return 0;
}

int cmd_opt_temp(const GlobalArgs& args) {
  const ExperimentSpec spec = load_spec(args);
  ensure_out(spec.out_dir);
  const Pipeline p = load_pipeline(spec, args.checkpoint, spec.seeds.front());

  const AttackKind kind =
      args.attack_name.empty() ? AttackKind::kDeepwordbug : attack_from_name(args.attack_name);
  AdvTempOptions opts;
  opts.subsample = spec.opt_subsample;
  const AdvTempResult res = optimize_adv_temperature(p.params, p.vocab, p.lexicon, p.data.val,
                                                     kind, spec.attack, opts);
  save_qcurve(res.evaluations, (fs::path(spec.out_dir) / "opt_temp_evals.csv").string());
  write_json(json{{"temperature", res.temperature},
                  {"q_value", res.q_value},
                  {"attack_runs", res.attack_runs},
                  {"attack", attack_name(kind)}},
             fs::path(spec.out_dir) / "opt_temp.json");
  std::cout << "adversarial temperature " << format_double(res.temperature) << " with Q = "
            << format_double(res.q_value) << " after " << res.attack_runs << " evaluations\n";
  return 0;
}

int cmd_sweep_temp(const GlobalArgs& args) {
  const ExperimentSpec spec = load_spec(args);
  ensure_out(spec.out_dir);
  const Pipeline p = load_pipeline(spec, args.checkpoint, spec.seeds.front());

  for (AttackKind kind : spec.attacks) {
    QCurve curve;
    curve.attack_tag = attack_name(kind);
    curve.eval_set_size = p.data.test.size();
    for (double t : spec.sweep_temperatures) {
      curve.samples.emplace_back(
          t, q_of_t(p.params, p.vocab, p.lexicon, p.data.test, kind, spec.attack, t));
    }
    const fs::path path = fs::path(spec.out_dir) / ("qcurve_" + curve.attack_tag + ".csv");
    save_qcurve(curve, path.string());
    std::cout << "wrote " << path.string() << "\n";
  }
  return 0;
}

int cmd_experiment(const GlobalArgs& args) {
  ExperimentSpec spec = load_spec(args);
  if (!args.experiment_name.empty()) spec.name = args.experiment_name;
  if (std::find(known_experiments().begin(), known_experiments().end(), spec.name) ==
      known_experiments().end()) {
    throw UnknownExperiment(spec.name);
  }
  ensure_out(spec.out_dir);
  const RunReport rep = run_experiment(spec);
  emit_report(rep, spec.out_dir);
  std::cout << "experiment " << rep.experiment << " (config " << rep.config_hash << ", "
            << rep.seeds.size() << " seeds) written to " << spec.out_dir << "\n";
  for (const auto& [key, value] : rep.mean) {
    std::cout << "  " << key << " = " << format_double(value) << " +- "
              << format_double(rep.stddev.at(key)) << "\n";
  }
  return 0;
}

int cmd_report(const GlobalArgs& args) {
  if (args.report_path.empty()) throw ValidationError("a --report path is required");
  std::ifstream in(args.report_path);
  if (!in) throw IoError("cannot open report: " + args.report_path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ValidationError("report is not valid JSON");

  RunReport rep;
  rep.experiment = j.at("experiment").get<std::string>();
  rep.config_hash = j.at("config_hash").get<std::string>();
  rep.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& m : j.at("per_seed")) rep.per_seed.push_back(m.get<MetricMap>());
  rep.mean = j.at("mean").get<MetricMap>();
  rep.stddev = j.at("std").get<MetricMap>();

  Table summary;
  summary.name = rep.experiment;
  summary.header = {"metric", "mean", "std"};
  for (const auto& [key, value] : rep.mean) {
    summary.rows.push_back({key, format_double(value), format_double(rep.stddev.at(key))});
  }
  rep.tables.push_back(std::move(summary));

  ensure_out(args.out_dir);
  emit_report(rep, args.out_dir);
  std::cout << "regenerated tables for " << rep.experiment << " under " << args.out_dir
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iorlab: a desk-scale laboratory for the illusion of robustness in text "
               "classifiers"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  GlobalArgs args;
  app.add_option("--config", args.config_path, "JSON config file")
      ->envname("IORLAB_CONFIG");
  app.add_option("--seed", args.seed, "override the seed set with a single seed")
      ->envname("IORLAB_SEED");
  app.add_option("--out", args.out_dir, "output directory")->envname("IORLAB_OUT");

  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  CLI::App* attack = app.add_subcommand("attack", "run the attack suite against a checkpoint");
  attack->add_option("--checkpoint", args.checkpoint, "model checkpoint JSON");
  attack->add_option("--attack", args.attack_name, "run a single attack (pwws|tf|dg)");
  CLI::App* calibrate =
      app.add_subcommand("calibrate", "fit a calibration temperature (NLL descent)");
  calibrate->add_option("--checkpoint", args.checkpoint, "model checkpoint JSON");
  calibrate->add_option("--logits", args.logits_path, "recorded logit set JSONL");
  CLI::App* opt =
      app.add_subcommand("opt-temp", "optimize the adversarial temperature with Brent");
  opt->add_option("--checkpoint", args.checkpoint, "model checkpoint JSON");
  opt->add_option("--attack", args.attack_name, "attack to optimize against (default dg)");
  CLI::App* sweep = app.add_subcommand("sweep-temp", "sample Q(T) over the sweep grid");
  sweep->add_option("--checkpoint", args.checkpoint, "model checkpoint JSON");
  CLI::App* experiment = app.add_subcommand("experiment", "run a named experiment");
  experiment->add_option("name", args.experiment_name, "experiment name");
  CLI::App* report = app.add_subcommand("report", "regenerate tables from a report.json");
  report->add_option("--report", args.report_path, "path to report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train(args);
    if (attack->parsed()) return cmd_attack(args);
    if (calibrate->parsed()) return cmd_calibrate(args);
    if (opt->parsed()) return cmd_opt_temp(args);
    if (sweep->parsed()) return cmd_sweep_temp(args);
    if (experiment->parsed()) return cmd_experiment(args);
    if (report->parsed()) return cmd_report(args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
