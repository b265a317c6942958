#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iorlab/attacks.hpp"
#include "iorlab/common.hpp"
#include "iorlab/model.hpp"

namespace iorlab {

// ---------------------------------------------------------------------------
// Post-hoc calibration: single-temperature NLL fitting, diagonal Platt
// scaling, ECE/MCE, and confidence statistics.
// ---------------------------------------------------------------------------

struct LogitEntry {
  int id = 0;
  Vec logits;
  int label = 0;
};

struct LogitSet {
  std::vector<LogitEntry> entries;
  int num_classes = 0;
  std::string source_tag;

  bool empty() const { return entries.empty(); }
};

struct PlattParams {
  Vec scale;  // per-class diagonal scale, init 1
  Vec bias;   // per-class bias, init 0
};

struct ConfidenceStats {
  double clean_mean = 0.0;
  double clean_variance = 0.0;
  double adv_mean = 0.0;
  double adv_variance = 0.0;
  bool has_adversarial = false;
};

struct CalibrationReport {
  double fitted_temperature = 1.0;
  double nll_before = 0.0;  // at T = 1
  double nll_after = 0.0;   // at the fitted temperature
  double ece = 0.0;
  double mce = 0.0;
  ConfidenceStats confidence;
};

// ---------------------------------------------------------------------------

inline LogitSet collect_logits(const ModelParams& params, const Vocab& vocab,
                               const Dataset& dataset, double serve_temperature = 1.0,
                               const std::string& tag = "") {
  LogitSet set;
  set.num_classes = params.dims.classes;
  set.source_tag = tag;
  for (const Example& ex : dataset.examples) {
    std::vector<int> ids = encode(tokenize(ex.text), vocab);
    if (ids.empty()) continue;
    LogitEntry e;
    e.id = ex.id;
    e.label = ex.label;
    e.logits = forward(params, ids).logits;
    if (serve_temperature != 1.0) {
      for (double& l : e.logits) l /= serve_temperature;
    }
    set.entries.push_back(std::move(e));
  }
  return set;
}

inline double nll(const LogitSet& set, double temperature) {
  if (!(temperature > 0.0)) throw NonPositiveTemperature(temperature);
  if (set.empty()) throw EmptyLogitSet();
  double sum = 0.0;
  for (const LogitEntry& e : set.entries) {
    sum += cross_entropy_t(e.logits, e.label, temperature);
  }
  return sum / static_cast<double>(set.entries.size());
}

namespace detail {

// d(mean CE)/dT = mean (l_y - sum_c p_c l_c) / T^2 with p = softmax_t(l, T);
// shift-invariant, so the max-subtracted probabilities are fine.
inline double nll_grad_t(const LogitSet& set, double temperature) {
  double g = 0.0;
  for (const LogitEntry& e : set.entries) {
    const Vec p = softmax_t(e.logits, temperature);
    double expected = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) expected += p[c] * e.logits[c];
    g += (e.logits[static_cast<std::size_t>(e.label)] - expected) /
         (temperature * temperature);
  }
  return g / static_cast<double>(set.entries.size());
}

}  // namespace detail

// Gradient descent on log T (T stays positive without projection), initialized
// at T = 1. Returns the best temperature evaluated, so the result never has a
// higher NLL than the starting point.
inline double calibrate_temperature(const LogitSet& set, double lr = 0.01,
                                    int max_iters = 5000) {
  if (set.empty()) throw EmptyLogitSet();
  constexpr double kMinT = 1e-6;
  constexpr double kMaxT = 1e9;

  double z = 0.0;  // log T
  double best_t = 1.0;
  double best_nll = nll(set, 1.0);
  double prev_nll = best_nll;

  for (int iter = 0; iter < max_iters; ++iter) {
    const double t = std::exp(z);
    const double grad_z = detail::nll_grad_t(set, t) * t;  // chain rule through exp
    z -= lr * grad_z;
    z = std::clamp(z, std::log(kMinT), std::log(kMaxT));
    const double t_new = std::exp(z);
    const double cur = nll(set, t_new);
    if (cur < best_nll) {
      best_nll = cur;
      best_t = t_new;
    }
    if (std::fabs(cur - prev_nll) < 1e-10) break;
    prev_nll = cur;
  }
  return std::clamp(best_t, kMinT, kMaxT);
}

// Diagonal multi-class Platt scaling: logits -> scale .* logits + bias, fitted
// by gradient descent on the NLL with step halving on rejected steps, so the
// NLL never increases across accepted steps.
inline PlattParams platt_scale(const LogitSet& set, double lr = 0.01, int max_iters = 5000) {
  if (set.empty()) throw EmptyLogitSet();
  const int C = static_cast<int>(set.entries.front().logits.size());
  PlattParams p;
  p.scale.assign(C, 1.0);
  p.bias.assign(C, 0.0);

  const auto objective = [&](const PlattParams& q) {
    double sum = 0.0;
    for (const LogitEntry& e : set.entries) {
      Vec l(C);
      for (int c = 0; c < C; ++c) l[c] = q.scale[c] * e.logits[c] + q.bias[c];
      sum += cross_entropy_t(l, e.label, 1.0);
    }
    return sum / static_cast<double>(set.entries.size());
  };

  double cur_obj = objective(p);
  double step = lr;
  for (int iter = 0; iter < max_iters; ++iter) {
    Vec gs(C, 0.0), gb(C, 0.0);
    for (const LogitEntry& e : set.entries) {
      Vec l(C);
      for (int c = 0; c < C; ++c) l[c] = p.scale[c] * e.logits[c] + p.bias[c];
      const Vec probs = softmax_t(l, 1.0);
      for (int c = 0; c < C; ++c) {
        const double d = probs[c] - (c == e.label ? 1.0 : 0.0);
        gs[c] += d * e.logits[c];
        gb[c] += d;
      }
    }
    const double inv_n = 1.0 / static_cast<double>(set.entries.size());
    for (int c = 0; c < C; ++c) {
      gs[c] *= inv_n;
      gb[c] *= inv_n;
    }

    PlattParams trial = p;
    for (int c = 0; c < C; ++c) {
      trial.scale[c] -= step * gs[c];
      trial.bias[c] -= step * gb[c];
    }
    const double trial_obj = objective(trial);
    if (trial_obj <= cur_obj) {
      if (cur_obj - trial_obj < 1e-12) {
        p = trial;
        break;
      }
      p = trial;
      cur_obj = trial_obj;
    } else {
      step *= 0.5;
      if (step < 1e-12) break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// ECE / MCE over equal-width confidence bins.
// ---------------------------------------------------------------------------

inline std::pair<double, double> ece_mce(const std::vector<double>& confidences,
                                         const std::vector<int>& correct, int num_bins) {
  if (confidences.empty()) throw EmptyInput();
  if (confidences.size() != correct.size()) {
    throw LengthMismatch("confidences and correctness flags differ in length");
  }
  if (num_bins < 1) throw ValidationError("num_bins must be >= 1");

  std::vector<double> conf_sum(static_cast<std::size_t>(num_bins), 0.0);
  std::vector<double> acc_sum(static_cast<std::size_t>(num_bins), 0.0);
  std::vector<long long> count(static_cast<std::size_t>(num_bins), 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (c < 0.0 || c > 1.0) throw ValidationError("confidence outside [0, 1]");
    auto bin = static_cast<int>(std::floor(c * num_bins));
    bin = std::min(bin, num_bins - 1);
    conf_sum[static_cast<std::size_t>(bin)] += c;
    acc_sum[static_cast<std::size_t>(bin)] += correct[i] ? 1.0 : 0.0;
    ++count[static_cast<std::size_t>(bin)];
  }

  const auto n = static_cast<double>(confidences.size());
  double ece = 0.0;
  double mce = 0.0;
  for (int b = 0; b < num_bins; ++b) {
    const auto bi = static_cast<std::size_t>(b);
    if (count[bi] == 0) continue;
    const double nb = static_cast<double>(count[bi]);
    const double gap = std::fabs(acc_sum[bi] / nb - conf_sum[bi] / nb);
    ece += (nb / n) * gap;
    mce = std::max(mce, gap);
  }
  return {ece, mce};
}

// ---------------------------------------------------------------------------
// Confidence statistics (population mean/variance of the predicted-class
// confidence). With an attack given, adversarial inputs are generated once at
// the same temperature the statistics are taken at.
// ---------------------------------------------------------------------------

namespace detail {

inline std::pair<double, double> mean_variance(const std::vector<double>& xs) {
  const auto n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, var / n};
}

}  // namespace detail

struct AttackSetup {
  AttackKind kind = AttackKind::kPwws;
  const SynonymLexicon* lexicon = nullptr;
  AttackConfig config;
};

inline ConfidenceStats confidence_stats(const ModelParams& params, const Vocab& vocab,
                                        const Dataset& dataset, double temperature,
                                        const std::optional<AttackSetup>& attack = {}) {
  if (dataset.empty()) throw EmptyDataset();
  std::vector<double> clean;
  for (const Example& ex : dataset.examples) {
    std::vector<int> ids = encode(tokenize(ex.text), vocab);
    if (ids.empty()) continue;
    clean.push_back(predict(params, ids, temperature).confidence);
  }
  if (clean.empty()) throw EmptyDataset();

  ConfidenceStats st;
  std::tie(st.clean_mean, st.clean_variance) = detail::mean_variance(clean);

  if (attack) {
    static const SynonymLexicon kEmpty;
    const SynonymLexicon& lex = attack->lexicon ? *attack->lexicon : kEmpty;
    AttackConfig cfg = attack->config;
    cfg.temperature = temperature;
    std::vector<double> adv;
    for (const Example& ex : dataset.examples) {
      AttackResult r = run_attack(attack->kind, params, vocab, lex, ex, cfg);
      std::vector<int> ids = encode(r.adv_tokens, vocab);
      adv.push_back(predict(params, ids, temperature).confidence);
    }
    std::tie(st.adv_mean, st.adv_variance) = detail::mean_variance(adv);
    st.has_adversarial = true;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Standard report: temperature fit plus ECE/MCE of the uncalibrated set.
// ---------------------------------------------------------------------------

inline CalibrationReport make_calibration_report(const LogitSet& set, int ece_bins = 10,
                                                 double lr = 0.01, int max_iters = 5000) {
  CalibrationReport rep;
  rep.nll_before = nll(set, 1.0);
  rep.fitted_temperature = calibrate_temperature(set, lr, max_iters);
  rep.nll_after = nll(set, rep.fitted_temperature);

  std::vector<double> conf;
  std::vector<int> correct;
  for (const LogitEntry& e : set.entries) {
    const PredictionOutput p = predict_logits(e.logits, 1.0);
    conf.push_back(p.confidence);
    correct.push_back(p.predicted == e.label ? 1 : 0);
  }
  std::tie(rep.ece, rep.mce) = ece_mce(conf, correct, ece_bins);
  return rep;
}

// ---------------------------------------------------------------------------
// LogitSet JSONL: {"id": ..., "logits": [...], "label": ...} per line, so
// calibration can run against recorded outputs of any model.
// ---------------------------------------------------------------------------

inline void save_logit_set(const LogitSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write logit set: " + path);
  for (const LogitEntry& e : set.entries) {
    nlohmann::json j{{"id", e.id}, {"logits", e.logits}, {"label", e.label}};
    out << j.dump() << '\n';
  }
}

inline LogitSet load_logit_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open logit set: " + path);
  LogitSet set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError(lineno, "invalid JSON");
    LogitEntry e;
    e.id = j.at("id").get<int>();
    e.logits = j.at("logits").get<Vec>();
    e.label = j.at("label").get<int>();
    if (e.logits.empty()) throw ParseError(lineno, "empty logits");
    if (e.label < 0 || e.label >= static_cast<int>(e.logits.size())) {
      throw LabelOutOfRange(e.label, static_cast<int>(e.logits.size()));
    }
    set.entries.push_back(std::move(e));
  }
  if (!set.entries.empty()) {
    set.num_classes = static_cast<int>(set.entries.front().logits.size());
  }
  return set;
}

}  // namespace iorlab
