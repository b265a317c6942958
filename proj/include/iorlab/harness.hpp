#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iorlab/advtemp.hpp"
#include "iorlab/attacks.hpp"
#include "iorlab/calibrate.hpp"
#include "iorlab/common.hpp"
#include "iorlab/model.hpp"
#include "iorlab/text.hpp"
#include "iorlab/toy.hpp"
#include "iorlab/train.hpp"

namespace iorlab {

// ---------------------------------------------------------------------------
// Spearman rank correlation (average ranks for ties, Pearson of the ranks).
// ---------------------------------------------------------------------------

namespace detail {

inline Vec average_ranks(const std::vector<double>& scores) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  Vec ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw LengthMismatch("score lists differ in length");
  if (a.size() < 2) throw LengthMismatch("need at least 2 scores");
  const auto all_equal = [](const std::vector<double>& v) {
    for (double x : v) {
      if (x != v.front()) return false;
    }
    return true;
  };
  if (all_equal(a) || all_equal(b)) {
    throw DegenerateInput("rank correlation undefined for constant scores");
  }

  const Vec ra = detail::average_ranks(a);
  const Vec rb = detail::average_ranks(b);
  const double mean = 0.5 * static_cast<double>(a.size() + 1);  // both rank sets share it
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------
// Per-example rank correlation of token importance between T = 1 and an
// extreme temperature. Examples with fewer than two tokens, or with constant
// scores on either side, are excluded and counted.
// ---------------------------------------------------------------------------

struct ImportanceCorrelation {
  double mean_rho = 0.0;
  double std_rho = 0.0;
  std::size_t included = 0;
  std::size_t skipped_short = 0;
  std::size_t skipped_degenerate = 0;
};

inline ImportanceCorrelation importance_correlation(
    const ModelParams& params, const Vocab& vocab, const Dataset& dataset, double t_extreme,
    ImportanceMethod method = ImportanceMethod::kUnkSaliency) {
  if (dataset.empty()) throw EmptyDataset();
  std::vector<double> rhos;
  ImportanceCorrelation out;
  for (const Example& ex : dataset.examples) {
    const std::vector<std::string> tokens = tokenize(ex.text);
    if (tokens.size() < 2) {
      ++out.skipped_short;
      continue;
    }
    const ImportanceRanking base = token_importance(params, vocab, tokens, 1.0, method);
    const ImportanceRanking extreme =
        token_importance(params, vocab, tokens, t_extreme, method);
    try {
      rhos.push_back(spearman(base.scores, extreme.scores));
    } catch (const DegenerateInput&) {
      ++out.skipped_degenerate;
    }
  }
  out.included = rhos.size();
  if (!rhos.empty()) {
    double sum = 0.0;
    for (double r : rhos) sum += r;
    out.mean_rho = sum / static_cast<double>(rhos.size());
    double ss = 0.0;
    for (double r : rhos) ss += (r - out.mean_rho) * (r - out.mean_rho);
    out.std_rho = std::sqrt(ss / static_cast<double>(rhos.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment specification and report
// ---------------------------------------------------------------------------

// Optional file-backed datasets; when unset the generated toy corpus is used.
struct DataFiles {
  bool enabled = false;
  std::string train;
  std::string val;
  std::string test;
  DatasetFormat format = DatasetFormat::kJsonl;
  int num_classes = 2;
};

struct ExperimentSpec {
  std::string name = "ior-demo";
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string out_dir = "runs/out";

  ToyCorpusConfig corpus;
  int corpus_val_size = 400;
  int corpus_test_size = 500;
  std::uint64_t corpus_seed = 100;
  DataFiles data;
  std::string lexicon_path;  // empty: built-in toy lexicon

  std::string train_mode = "standard";  // standard | pgd | ddi | dg-aug
  TrainConfig train;
  // experiment-level PGD defaults are rescaled to the toy model's embedding
  // magnitudes; the paper-sized radius destabilizes from-scratch training
  PgdConfig pgd{3, 0.005, 0.01, 0.1};
  DDiConfig ddi;
  AttackConfig attack;
  std::vector<AttackKind> attacks = {AttackKind::kPwws, AttackKind::kDeepwordbug};

  double down_temperature = 100.0;
  double up_temperature = 0.01;
  std::vector<double> sweep_temperatures = {0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0, 1000.0};
  std::vector<double> train_temperatures = {1.0, 5.0, 20.0, 50.0};
  double extreme_temperature = 0.01;
  std::size_t opt_subsample = 120;
};

inline const std::vector<std::string>& known_experiments() {
  static const std::vector<std::string> names = {
      "ior-demo", "pierce", "sweep-temp", "high-t-train",
      "transfer", "importance-corr", "logit-range"};
  return names;
}

using MetricMap = std::map<std::string, double>;

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct RunReport {
  std::string experiment;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricMap> per_seed;
  MetricMap mean;
  MetricMap stddev;
  std::vector<Table> tables;
};

// ---------------------------------------------------------------------------
// Spec <-> JSON (the CLI config format). Unknown keys are rejected so typos
// fail loudly.
// ---------------------------------------------------------------------------

namespace detail {

inline GradTransform grad_transform_from_json(const nlohmann::json& j) {
  const std::string mode = j.value("grad_transform", "none");
  const double tau = j.value("clip_threshold", 1.0);
  if (mode == "none") return GradTransform::none();
  if (mode == "clip") return GradTransform::clip(tau);
  if (mode == "normalize") return GradTransform::normalize();
  throw ValidationError("unknown grad_transform: " + mode);
}

inline const char* grad_transform_name(const GradTransform& t) {
  switch (t.mode) {
    case GradTransformMode::kNone: return "none";
    case GradTransformMode::kClip: return "clip";
    case GradTransformMode::kNormalize: return "normalize";
  }
  return "?";
}

inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                       const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown key \"" + key + "\" in " + where);
    }
  }
}

}  // namespace detail

inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"experiment", "seeds", "out", "corpus", "data", "lexicon", "train",
                      "pgd", "ddi", "attack", "attacks", "down_temperature", "up_temperature",
                      "sweep_temperatures", "train_temperatures", "extreme_temperature",
                      "opt_subsample"},
                     "config");
  ExperimentSpec s;
  s.name = j.value("experiment", s.name);
  if (j.contains("seeds")) s.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (s.seeds.empty()) throw ValidationError("seed set must not be empty");
  s.out_dir = j.value("out", s.out_dir);
  s.lexicon_path = j.value("lexicon", s.lexicon_path);

  if (j.contains("data")) {
    const auto& d = j["data"];
    detail::check_keys(d, {"train", "val", "test", "format", "num_classes"}, "data");
    s.data.enabled = true;
    s.data.train = d.value("train", std::string());
    s.data.val = d.value("val", std::string());
    s.data.test = d.value("test", std::string());
    const std::string fmt = d.value("format", "jsonl");
    if (fmt == "jsonl") {
      s.data.format = DatasetFormat::kJsonl;
    } else if (fmt == "csv") {
      s.data.format = DatasetFormat::kCsv;
    } else {
      throw ValidationError("unknown dataset format: " + fmt);
    }
    s.data.num_classes = d.value("num_classes", 2);
    if (s.data.train.empty()) throw ValidationError("data.train path is required");
  }

  if (j.contains("corpus")) {
    const auto& c = j["corpus"];
    detail::check_keys(c,
                       {"train", "val", "test", "min_len", "max_len", "label_noise",
                        "contrast_prob", "strong_prob", "seed"},
                       "corpus");
    s.corpus.size = c.value("train", s.corpus.size);
    s.corpus_val_size = c.value("val", s.corpus_val_size);
    s.corpus_test_size = c.value("test", s.corpus_test_size);
    s.corpus.min_len = c.value("min_len", s.corpus.min_len);
    s.corpus.max_len = c.value("max_len", s.corpus.max_len);
    s.corpus.label_noise = c.value("label_noise", s.corpus.label_noise);
    s.corpus.contrast_prob = c.value("contrast_prob", s.corpus.contrast_prob);
    s.corpus.strong_prob = c.value("strong_prob", s.corpus.strong_prob);
    s.corpus_seed = c.value("seed", s.corpus_seed);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::check_keys(t,
                       {"mode", "lr", "batch_size", "epochs", "temperature", "grad_transform",
                        "clip_threshold", "embed_dim", "hidden_dim"},
                       "train");
    s.train_mode = t.value("mode", s.train_mode);
    if (s.train_mode != "standard" && s.train_mode != "pgd" && s.train_mode != "ddi" &&
        s.train_mode != "dg-aug") {
      throw ValidationError("unknown train mode: " + s.train_mode);
    }
    s.train.lr = t.value("lr", s.train.lr);
    s.train.batch_size = t.value("batch_size", s.train.batch_size);
    s.train.epochs = t.value("epochs", s.train.epochs);
    s.train.temperature = t.value("temperature", s.train.temperature);
    s.train.grad_transform = detail::grad_transform_from_json(t);
    s.train.embed_dim = t.value("embed_dim", s.train.embed_dim);
    s.train.hidden_dim = t.value("hidden_dim", s.train.hidden_dim);
  }
  if (j.contains("pgd")) {
    const auto& p = j["pgd"];
    detail::check_keys(p, {"steps", "lr", "init_magnitude", "max_norm"}, "pgd");
    s.pgd.steps = p.value("steps", s.pgd.steps);
    s.pgd.lr = p.value("lr", s.pgd.lr);
    s.pgd.init_magnitude = p.value("init_magnitude", s.pgd.init_magnitude);
    s.pgd.max_norm = p.value("max_norm", s.pgd.max_norm);
  }
  if (j.contains("ddi")) {
    const auto& d = j["ddi"];
    detail::check_keys(d, {"num_adversaries", "pgd_steps", "simplex_tol"}, "ddi");
    s.ddi.num_adversaries = d.value("num_adversaries", s.ddi.num_adversaries);
    s.ddi.pgd_steps = d.value("pgd_steps", s.ddi.pgd_steps);
    s.ddi.simplex_tol = d.value("simplex_tol", s.ddi.simplex_tol);
  }
  if (j.contains("attack")) {
    const auto& a = j["attack"];
    detail::check_keys(a,
                       {"max_perturb_fraction", "max_candidates_per_position", "query_budget",
                        "temperature", "score_decimals", "tf_min_cosine"},
                       "attack");
    s.attack.max_perturb_fraction = a.value("max_perturb_fraction", s.attack.max_perturb_fraction);
    s.attack.max_candidates_per_position =
        a.value("max_candidates_per_position", s.attack.max_candidates_per_position);
    s.attack.query_budget = a.value("query_budget", s.attack.query_budget);
    s.attack.temperature = a.value("temperature", s.attack.temperature);
    s.attack.score_decimals = a.value("score_decimals", s.attack.score_decimals);
    s.attack.tf_min_cosine = a.value("tf_min_cosine", s.attack.tf_min_cosine);
  }
  if (j.contains("attacks")) {
    s.attacks.clear();
    for (const auto& name : j["attacks"]) {
      s.attacks.push_back(attack_from_name(name.get<std::string>()));
    }
    if (s.attacks.empty()) throw ValidationError("attack list must not be empty");
  }
  s.down_temperature = j.value("down_temperature", s.down_temperature);
  s.up_temperature = j.value("up_temperature", s.up_temperature);
  if (j.contains("sweep_temperatures")) {
    s.sweep_temperatures = j["sweep_temperatures"].get<std::vector<double>>();
  }
  if (j.contains("train_temperatures")) {
    s.train_temperatures = j["train_temperatures"].get<std::vector<double>>();
  }
  s.extreme_temperature = j.value("extreme_temperature", s.extreme_temperature);
  s.opt_subsample = j.value("opt_subsample", s.opt_subsample);

  if (std::find(known_experiments().begin(), known_experiments().end(), s.name) ==
      known_experiments().end()) {
    throw UnknownExperiment(s.name);
  }
  return s;
}

inline nlohmann::json spec_to_json(const ExperimentSpec& s) {
  nlohmann::json j;
  j["experiment"] = s.name;
  j["seeds"] = s.seeds;
  j["out"] = s.out_dir;
  j["corpus"] = {{"train", s.corpus.size},
                 {"val", s.corpus_val_size},
                 {"test", s.corpus_test_size},
                 {"min_len", s.corpus.min_len},
                 {"max_len", s.corpus.max_len},
                 {"label_noise", s.corpus.label_noise},
                 {"contrast_prob", s.corpus.contrast_prob},
                 {"strong_prob", s.corpus.strong_prob},
                 {"seed", s.corpus_seed}};
  if (s.data.enabled) {
    j["data"] = {{"train", s.data.train},
                 {"val", s.data.val},
                 {"test", s.data.test},
                 {"format", s.data.format == DatasetFormat::kJsonl ? "jsonl" : "csv"},
                 {"num_classes", s.data.num_classes}};
  }
  if (!s.lexicon_path.empty()) j["lexicon"] = s.lexicon_path;
  j["train"] = {{"mode", s.train_mode},
                {"lr", s.train.lr},
                {"batch_size", s.train.batch_size},
                {"epochs", s.train.epochs},
                {"temperature", s.train.temperature},
                {"grad_transform", detail::grad_transform_name(s.train.grad_transform)},
                {"clip_threshold", s.train.grad_transform.clip_threshold},
                {"embed_dim", s.train.embed_dim},
                {"hidden_dim", s.train.hidden_dim}};
  j["pgd"] = {{"steps", s.pgd.steps},
              {"lr", s.pgd.lr},
              {"init_magnitude", s.pgd.init_magnitude},
              {"max_norm", s.pgd.max_norm}};
  j["ddi"] = {{"num_adversaries", s.ddi.num_adversaries},
              {"pgd_steps", s.ddi.pgd_steps},
              {"simplex_tol", s.ddi.simplex_tol}};
  j["attack"] = {{"max_perturb_fraction", s.attack.max_perturb_fraction},
                 {"max_candidates_per_position", s.attack.max_candidates_per_position},
                 {"query_budget", s.attack.query_budget},
                 {"temperature", s.attack.temperature},
                 {"score_decimals", s.attack.score_decimals},
                 {"tf_min_cosine", s.attack.tf_min_cosine}};
  nlohmann::json names = nlohmann::json::array();
  for (AttackKind k : s.attacks) names.push_back(attack_name(k));
  j["attacks"] = names;
  j["down_temperature"] = s.down_temperature;
  j["up_temperature"] = s.up_temperature;
  j["sweep_temperatures"] = s.sweep_temperatures;
  j["train_temperatures"] = s.train_temperatures;
  j["extreme_temperature"] = s.extreme_temperature;
  j["opt_subsample"] = s.opt_subsample;
  return j;
}

inline std::string config_hash(const ExperimentSpec& s) {
  const std::string dump = spec_to_json(s).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Per-seed pipeline pieces shared by the experiments
// ---------------------------------------------------------------------------

struct ToySplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

inline ToySplits make_toy_splits(const ExperimentSpec& spec, std::uint64_t seed) {
  if (spec.data.enabled) {
    ToySplits s;
    s.train = load_dataset(spec.data.train, spec.data.format, spec.data.num_classes);
    if (!spec.data.val.empty() && !spec.data.test.empty()) {
      s.val = load_dataset(spec.data.val, spec.data.format, spec.data.num_classes);
      s.test = load_dataset(spec.data.test, spec.data.format, spec.data.num_classes);
    } else {
      const SplitResult parts = split(s.train, SplitRatios{0.8, 0.1, 0.1}, seed);
      s.train = parts.train;
      s.val = parts.val;
      s.test = parts.test;
    }
    return s;
  }
  ToySplits s;
  ToyCorpusConfig cfg = spec.corpus;
  const std::uint64_t base = spec.corpus_seed + seed * 7919;
  s.train = make_toy_corpus(cfg, base, "train");
  cfg.size = spec.corpus_val_size;
  s.val = make_toy_corpus(cfg, base + 1, "val");
  cfg.size = spec.corpus_test_size;
  s.test = make_toy_corpus(cfg, base + 2, "test");
  return s;
}

inline SynonymLexicon make_lexicon(const ExperimentSpec& spec) {
  return spec.lexicon_path.empty() ? toy_lexicon() : load_lexicon(spec.lexicon_path);
}

struct Pipeline {
  Vocab vocab;
  ModelParams params;
  ToySplits data;
  SynonymLexicon lexicon;
};

// Train per spec.train_mode; "dg-aug" trains a standard model, doubles the
// train set with its adversarial examples, then retrains on the union.
inline TrainResult train_by_mode(const ExperimentSpec& spec, const TrainConfig& cfg,
                                 const Vocab& vocab, const SynonymLexicon& lexicon,
                                 const Dataset& train, const Dataset& val) {
  if (spec.train_mode == "standard") return train_standard(cfg, vocab, train, val);
  if (spec.train_mode == "pgd") return train_pgd_at(cfg, spec.pgd, vocab, train, val);
  if (spec.train_mode == "ddi") return train_ddi_at(cfg, spec.ddi, spec.pgd, vocab, train, val);
  if (spec.train_mode == "dg-aug") {
    const TrainResult base = train_standard(cfg, vocab, train, val);
    const Dataset augmented =
        augment_dataset(base.params, vocab, lexicon, train, AttackKind::kDeepwordbug,
                        spec.attack);
    return train_standard(cfg, vocab, augmented, val);
  }
  throw ValidationError("unknown train mode: " + spec.train_mode);
}

inline Pipeline train_toy_baseline(const ExperimentSpec& spec, std::uint64_t seed,
                                   TrainConfig train_cfg) {
  Pipeline p;
  p.data = make_toy_splits(spec, seed);
  p.vocab = build_vocab(p.data.train, 1);
  p.lexicon = make_lexicon(spec);
  train_cfg.seed = seed;
  p.params = train_standard(train_cfg, p.vocab, p.data.train, p.data.val).params;
  return p;
}

// Clean accuracy at T = 1.
inline double clean_accuracy(const ModelParams& params, const Vocab& vocab,
                             const Dataset& ds) {
  long long correct = 0;
  for (const Example& ex : ds.examples) {
    if (predict(params, encode(tokenize(ex.text), vocab), 1.0).predicted == ex.label) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// Fit the adversary's calibration temperature against the served model
// (serve_temperature already folded into the recorded logits).
inline double fit_cal_temperature(const Pipeline& p, double serve_temperature) {
  const LogitSet val_logits =
      collect_logits(p.params, p.vocab, p.data.val, serve_temperature);
  return calibrate_temperature(val_logits);
}

// ---------------------------------------------------------------------------
// Experiments. Each returns the per-seed metrics; run_experiment aggregates
// them into the RunReport and builds the tables.
// ---------------------------------------------------------------------------

namespace experiments {

// Rows {baseline, downconf, upconf} x columns {clean, adv per attack,
// confidence on clean/adv}: the illusion-of-robustness demonstration.
inline MetricMap ior_demo(const ExperimentSpec& spec, std::uint64_t seed) {
  MetricMap m;
  const Pipeline p = train_toy_baseline(spec, seed, spec.train);

  const double clean = clean_accuracy(p.params, p.vocab, p.data.test);
  const struct {
    const char* tag;
    double serve_t;
  } models[] = {{"baseline", 1.0},
                {"downconf", spec.down_temperature},
                {"upconf", spec.up_temperature}};

  for (const auto& model : models) {
    m["clean_" + std::string(model.tag)] = clean;  // scaling never moves the argmax
    AttackConfig cfg = spec.attack;
    cfg.temperature = model.serve_t;
    for (AttackKind kind : spec.attacks) {
      const AdvEvalReport rep =
          evaluate_attack(kind, p.params, p.vocab, p.lexicon, p.data.test, cfg);
      m["adv_" + std::string(attack_name(kind)) + "_" + model.tag] = rep.adversarial_accuracy;
    }
    AttackSetup setup;
    setup.kind = spec.attacks.front();
    setup.lexicon = &p.lexicon;
    setup.config = spec.attack;
    const ConfidenceStats st =
        confidence_stats(p.params, p.vocab, p.data.test, model.serve_t, setup);
    m["conf_clean_" + std::string(model.tag)] = st.clean_mean;
    m["conf_clean_var_" + std::string(model.tag)] = st.clean_variance;
    m["conf_adv_" + std::string(model.tag)] = st.adv_mean;
  }
  return m;
}

// Piercing: cal and opt rows for the explicitly miscalibrated models.
inline MetricMap pierce(const ExperimentSpec& spec, std::uint64_t seed) {
  MetricMap m;
  const Pipeline p = train_toy_baseline(spec, seed, spec.train);
  m["clean"] = clean_accuracy(p.params, p.vocab, p.data.test);

  const auto adv_at = [&](AttackKind kind, double effective_t) {
    AttackConfig cfg = spec.attack;
    cfg.temperature = effective_t;
    return evaluate_attack(kind, p.params, p.vocab, p.lexicon, p.data.test, cfg)
        .adversarial_accuracy;
  };

  for (AttackKind kind : spec.attacks) {
    m["adv_" + std::string(attack_name(kind)) + "_baseline"] = adv_at(kind, 1.0);
  }

  const struct {
    const char* tag;
    double serve_t;
  } scaled[] = {{"downconf", spec.down_temperature}, {"upconf", spec.up_temperature}};

  for (const auto& model : scaled) {
    const double t_cal = fit_cal_temperature(p, model.serve_t);
    m["cal_temperature_" + std::string(model.tag)] = t_cal;

    AdvTempOptions opts;
    opts.subsample = spec.opt_subsample;
    // opt runs DeepWordBug against the served model on the validation set.
    // Logits are linear in W2 and b2, so dividing both by the serving
    // temperature is exactly the served model; the adversary's trial
    // temperature then stacks on top of it.
    ModelParams served = p.params;
    for (double& x : served.W2.a) x /= model.serve_t;
    for (double& x : served.b2) x /= model.serve_t;
    const AdvTempResult opt = optimize_adv_temperature(
        served, p.vocab, p.lexicon, p.data.val, AttackKind::kDeepwordbug, spec.attack, opts);
    m["opt_temperature_" + std::string(model.tag)] = opt.temperature;

    for (AttackKind kind : spec.attacks) {
      const std::string a = attack_name(kind);
      m["adv_" + a + "_" + model.tag] = adv_at(kind, model.serve_t);
      m["adv_" + a + "_" + model.tag + "_cal"] = adv_at(kind, model.serve_t * t_cal);
      m["adv_" + a + "_" + model.tag + "_opt"] = adv_at(kind, model.serve_t * opt.temperature);
    }
  }
  return m;
}

// Q(T) samples over the sweep grid, one metric per (attack, T).
inline MetricMap sweep_temp(const ExperimentSpec& spec, std::uint64_t seed) {
  MetricMap m;
  const Pipeline p = train_toy_baseline(spec, seed, spec.train);
  for (AttackKind kind : spec.attacks) {
    for (double t : spec.sweep_temperatures) {
      const double q =
          q_of_t(p.params, p.vocab, p.lexicon, p.data.test, kind, spec.attack, t);
      m["q_" + std::string(attack_name(kind)) + "_T" + format_double(t)] = q;
    }
  }
  m["clean"] = clean_accuracy(p.params, p.vocab, p.data.test);
  return m;
}

// Training-temperature sweep with gradient normalization; post-calibration
// adversarial accuracy and logit separation per temperature.
inline MetricMap high_t_train(const ExperimentSpec& spec, std::uint64_t seed) {
  MetricMap m;
  for (double train_t : spec.train_temperatures) {
    TrainConfig cfg = spec.train;
    cfg.temperature = train_t;
    cfg.grad_transform = GradTransform::normalize();
    const Pipeline p = train_toy_baseline(spec, seed, cfg);
    const std::string tag = "T" + format_double(train_t);

    m["clean_" + tag] = clean_accuracy(p.params, p.vocab, p.data.test);
    const double t_cal = fit_cal_temperature(p, 1.0);
    m["cal_temperature_" + tag] = t_cal;
    for (AttackKind kind : spec.attacks) {
      AttackConfig acfg = spec.attack;
      acfg.temperature = t_cal;
      const AdvEvalReport rep =
          evaluate_attack(kind, p.params, p.vocab, p.lexicon, p.data.test, acfg);
      m["adv_" + std::string(attack_name(kind)) + "_cal_" + tag] = rep.adversarial_accuracy;
    }
    m["logit_range_" + tag] =
        logit_range_stats(p.params, p.vocab, p.data.test).mean;
  }
  return m;
}

// Transferability: adversarial examples from the baseline, re-scored on a
// DDi-trained model; compared against that model's own attack and its
// calibration-pierced attack.
inline MetricMap transfer(const ExperimentSpec& spec, std::uint64_t seed) {
  MetricMap m;
  const Pipeline base = train_toy_baseline(spec, seed, spec.train);

  // independently-initialized DDi target; small batches drive the
  // normalization-induced overconfidence within desk-scale budgets
  TrainConfig ddi_cfg = spec.train;
  ddi_cfg.grad_transform = GradTransform::normalize();
  ddi_cfg.seed = seed + 1000;
  ddi_cfg.batch_size = 2;
  const ModelParams ddi_params =
      train_ddi_at(ddi_cfg, spec.ddi, spec.pgd, base.vocab, base.data.train, base.data.val)
          .params;

  m["clean_baseline"] = clean_accuracy(base.params, base.vocab, base.data.test);
  m["clean_ddi"] = clean_accuracy(ddi_params, base.vocab, base.data.test);

  Pipeline ddi_pipe;
  ddi_pipe.vocab = base.vocab;
  ddi_pipe.params = ddi_params;
  ddi_pipe.data = base.data;
  ddi_pipe.lexicon = base.lexicon;
  const double t_cal = fit_cal_temperature(ddi_pipe, 1.0);
  m["cal_temperature_ddi"] = t_cal;

  for (AttackKind kind : spec.attacks) {
    const std::string a = attack_name(kind);
    const AdvEvalReport source =
        evaluate_attack(kind, base.params, base.vocab, base.lexicon, base.data.test,
                        spec.attack);
    m["adv_" + a + "_baseline_self"] = source.adversarial_accuracy;

    const AdvEvalReport self = evaluate_attack(kind, ddi_params, base.vocab, base.lexicon,
                                               base.data.test, spec.attack);
    m["adv_" + a + "_ddi_self"] = self.adversarial_accuracy;

    AttackConfig cal_cfg = spec.attack;
    cal_cfg.temperature = t_cal;
    const AdvEvalReport pierced = evaluate_attack(kind, ddi_params, base.vocab, base.lexicon,
                                                  base.data.test, cal_cfg);
    m["adv_" + a + "_ddi_cal"] = pierced.adversarial_accuracy;

    const AdvEvalReport transferred =
        transfer_evaluate(source.results, ddi_params, base.vocab);
    m["adv_" + a + "_transfer"] = transferred.adversarial_accuracy;
  }
  return m;
}

// Rank disruption of token importance at an extreme temperature.
inline MetricMap importance_corr(const ExperimentSpec& spec, std::uint64_t seed) {
  MetricMap m;
  const Pipeline p = train_toy_baseline(spec, seed, spec.train);
  const ImportanceCorrelation at_one =
      importance_correlation(p.params, p.vocab, p.data.test, 1.0);
  m["rho_self_mean"] = at_one.mean_rho;
  const ImportanceCorrelation extreme =
      importance_correlation(p.params, p.vocab, p.data.test, spec.extreme_temperature);
  m["rho_extreme_mean"] = extreme.mean_rho;
  m["rho_extreme_std"] = extreme.std_rho;
  m["included"] = static_cast<double>(extreme.included);
  m["skipped_short"] = static_cast<double>(extreme.skipped_short);
  m["skipped_degenerate"] = static_cast<double>(extreme.skipped_degenerate);
  return m;
}

// Logit range distributions for a T=1-trained vs a high-T-trained model.
inline MetricMap logit_range(const ExperimentSpec& spec, std::uint64_t seed) {
  MetricMap m;
  TrainConfig base_cfg = spec.train;
  base_cfg.grad_transform = GradTransform::normalize();
  const Pipeline base = train_toy_baseline(spec, seed, base_cfg);

  TrainConfig hot_cfg = base_cfg;
  hot_cfg.temperature = spec.train_temperatures.back();
  const Pipeline hot = train_toy_baseline(spec, seed, hot_cfg);

  const LogitRangeStats a = logit_range_stats(base.params, base.vocab, base.data.test);
  const LogitRangeStats b = logit_range_stats(hot.params, hot.vocab, hot.data.test);
  m["range_mean_T1"] = a.mean;
  m["range_std_T1"] = a.stddev;
  m["range_mean_hot"] = b.mean;
  m["range_std_hot"] = b.stddev;
  m["hot_temperature"] = spec.train_temperatures.back();
  return m;
}

}  // namespace experiments

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

inline MetricMap run_experiment_seed(const ExperimentSpec& spec, std::uint64_t seed) {
  if (spec.name == "ior-demo") return experiments::ior_demo(spec, seed);
  if (spec.name == "pierce") return experiments::pierce(spec, seed);
  if (spec.name == "sweep-temp") return experiments::sweep_temp(spec, seed);
  if (spec.name == "high-t-train") return experiments::high_t_train(spec, seed);
  if (spec.name == "transfer") return experiments::transfer(spec, seed);
  if (spec.name == "importance-corr") return experiments::importance_corr(spec, seed);
  if (spec.name == "logit-range") return experiments::logit_range(spec, seed);
  throw UnknownExperiment(spec.name);
}

inline RunReport run_experiment(const ExperimentSpec& spec) {
  RunReport rep;
  rep.experiment = spec.name;
  rep.config_hash = config_hash(spec);
  rep.seeds = spec.seeds;
  for (std::uint64_t seed : spec.seeds) {
    rep.per_seed.push_back(run_experiment_seed(spec, seed));
  }

  for (const auto& [key, value] : rep.per_seed.front()) {
    double sum = 0.0;
    for (const MetricMap& m : rep.per_seed) sum += m.at(key);
    const double mean = sum / static_cast<double>(rep.per_seed.size());
    double ss = 0.0;
    for (const MetricMap& m : rep.per_seed) ss += (m.at(key) - mean) * (m.at(key) - mean);
    rep.mean[key] = mean;
    rep.stddev[key] = std::sqrt(ss / static_cast<double>(rep.per_seed.size()));
  }

  Table summary;
  summary.name = spec.name;
  summary.header = {"metric", "mean", "std"};
  for (const auto& [key, value] : rep.mean) {
    summary.rows.push_back({key, format_double(value), format_double(rep.stddev.at(key))});
  }
  rep.tables.push_back(std::move(summary));

  if (spec.name == "sweep-temp") {
    // plot-ready Q(T) curve per attack
    for (AttackKind kind : spec.attacks) {
      const std::string a = attack_name(kind);
      Table t;
      t.name = "qcurve_" + a;
      t.header = {"T", "Q", "J", "attack"};
      for (double temp : spec.sweep_temperatures) {
        t.rows.push_back({format_double(temp),
                          format_double(rep.mean.at("q_" + a + "_T" + format_double(temp))),
                          std::to_string(spec.corpus_test_size), a});
      }
      rep.tables.push_back(std::move(t));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Report emission: report.json plus tables/*.csv, deterministic bytes.
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const RunReport& rep) {
  nlohmann::json j;
  j["experiment"] = rep.experiment;
  j["config_hash"] = rep.config_hash;
  j["seeds"] = rep.seeds;
  nlohmann::json per_seed = nlohmann::json::array();
  for (const MetricMap& m : rep.per_seed) per_seed.push_back(m);
  j["per_seed"] = per_seed;
  j["mean"] = rep.mean;
  j["std"] = rep.stddev;
  return j;
}

inline void emit_report(const RunReport& rep, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "tables", ec);
  if (ec) throw IoError("cannot create output directory: " + dir);

  {
    std::ofstream out(fs::path(dir) / "report.json", std::ios::binary);
    if (!out) throw IoError("cannot write report.json under " + dir);
    out << report_to_json(rep).dump(2) << '\n';
  }
  for (const Table& t : rep.tables) {
    std::ofstream out(fs::path(dir) / "tables" / (t.name + ".csv"), std::ios::binary);
    if (!out) throw IoError("cannot write table " + t.name);
    for (std::size_t i = 0; i < t.header.size(); ++i) {
      if (i) out << ',';
      out << t.header[i];
    }
    out << '\n';
    for (const auto& row : t.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        out << row[i];
      }
      out << '\n';
    }
  }
}

}  // namespace iorlab
