#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "iorlab/attacks.hpp"
#include "iorlab/common.hpp"
#include "iorlab/model.hpp"

namespace iorlab {

// ---------------------------------------------------------------------------
// Adversarial temperature optimization: evaluate the adversarial accuracy
// Q(T) and minimize it with a bracketing Brent search.
// ---------------------------------------------------------------------------

struct QCurve {
  std::vector<std::pair<double, double>> samples;  // (T, Q)
  std::string attack_tag;
  std::size_t eval_set_size = 0;  // J
};

struct BracketSpec {
  double left = 1e-10;
  double mid = 0.5;
  double right = 1.0;
  double probe_factor = 10.0;
};

struct BrentResult {
  double x = 0.0;
  double fx = 0.0;
  int evaluations = 0;
};

// ---------------------------------------------------------------------------
// Q(T): run the attack suite against the T-scaled model, score on the
// unmodified model (evaluate_attack's protocol).
// ---------------------------------------------------------------------------

inline double q_of_t(const ModelParams& params, const Vocab& vocab,
                     const SynonymLexicon& lexicon, const Dataset& valset, AttackKind attack,
                     AttackConfig cfg, double temperature) {
  if (valset.empty()) throw EmptyDataset();
  if (!(temperature > 0.0)) throw NonPositiveTemperature(temperature);
  cfg.temperature = temperature;
  return evaluate_attack(attack, params, vocab, lexicon, valset, cfg).adversarial_accuracy;
}

// ---------------------------------------------------------------------------
// Brent minimizer (parabolic interpolation with golden-section fallback).
//
// `max_evals` bounds the total number of function evaluations, including the
// three bracket points. The returned point is the best of everything that was
// evaluated; on a tie the earliest evaluation wins, and the mid point is
// evaluated first.
// ---------------------------------------------------------------------------

inline BrentResult brent_min(const std::function<double(double)>& f, const BracketSpec& bracket,
                             double tol, int max_evals) {
  if (!(tol > 0.0)) throw ValidationError("brent tolerance must be > 0");
  if (!(bracket.left < bracket.mid && bracket.mid < bracket.right)) {
    throw InvalidBracket("bracket points must satisfy left < mid < right");
  }
  if (max_evals < 3) throw ValidationError("max_evals must allow the three bracket points");

  BrentResult best;
  int evals = 0;
  const auto eval = [&](double x) {
    const double y = f(x);
    ++evals;
    if (evals == 1 || y < best.fx) {
      best.x = x;
      best.fx = y;
    }
    return y;
  };

  const double fmid = eval(bracket.mid);
  const double fleft = eval(bracket.left);
  const double fright = eval(bracket.right);
  if (fmid > std::min(fleft, fright)) {
    throw InvalidBracket("f(mid) must not exceed min(f(left), f(right))");
  }

  constexpr double kGold = 0.3819660112501051;  // golden-section fraction
  constexpr double kZeps = 1e-18;

  double a = bracket.left;
  double b = bracket.right;
  double x = bracket.mid, w = x, v = x;
  double fx = fmid, fw = fx, fv = fx;
  double d = 0.0, e = 0.0;

  while (evals < max_evals) {
    const double xm = 0.5 * (a + b);
    const double tol1 = tol * std::fabs(x) + kZeps;
    const double tol2 = 2.0 * tol1;
    if (std::fabs(x - xm) <= tol2 - 0.5 * (b - a)) break;

    bool use_golden = true;
    if (std::fabs(e) > tol1) {
      // try a parabola through (x, w, v)
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::fabs(q);
      const double etemp = e;
      e = d;
      if (std::fabs(p) < std::fabs(0.5 * q * etemp) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = std::copysign(tol1, xm - x);
        use_golden = false;
      }
    }
    if (use_golden) {
      e = (x >= xm) ? a - x : b - x;
      d = kGold * e;
    }

    const double u = (std::fabs(d) >= tol1) ? x + d : x + std::copysign(tol1, d);
    const double fu = eval(u);
    if (fu <= fx) {
      if (u >= x) a = x; else b = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  best.evaluations = evals;
  return best;
}

// ---------------------------------------------------------------------------
// Temperature optimization, following the probe-then-bracket procedure:
// start at T = 1, probe T = factor; if the probe is lower search (1, 1e6),
// otherwise (1e-10, 1), with the bracket mid at the arithmetic mean of the
// ends. Q evaluations are cached, so re-queried temperatures cost nothing,
// and the returned temperature is the argmin over everything evaluated
// (probes included; ties keep the earliest, so a flat curve returns T = 1).
// ---------------------------------------------------------------------------

struct AdvTempOptions {
  double probe_factor = 10.0;
  double t_min = 1e-10;
  double t_max = 1e6;
  // Total attack-backed Q evaluations are capped at 13 = max_iters(10) + 3:
  // two probes plus a twelve-evaluation Brent budget, of which one bracket
  // point always hits the probe cache.
  int brent_evals = 12;
  double brent_tol = 1e-8;
  std::size_t subsample = 0;  // 0 = full validation set
  std::uint64_t subsample_seed = 17;
};

struct AdvTempResult {
  double temperature = 1.0;
  double q_value = 0.0;
  QCurve evaluations;       // in evaluation order
  long long attack_runs = 0;  // distinct Q evaluations actually executed
};

inline AdvTempResult optimize_adv_temperature(const ModelParams& params, const Vocab& vocab,
                                              const SynonymLexicon& lexicon,
                                              const Dataset& valset, AttackKind attack,
                                              const AttackConfig& cfg,
                                              const AdvTempOptions& opts = {}) {
  if (valset.empty()) throw EmptyDataset();

  Dataset eval_set = valset;
  if (opts.subsample > 0 && opts.subsample < valset.size()) {
    std::vector<std::size_t> idx(valset.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(opts.subsample_seed);
    rng.shuffle(idx);
    idx.resize(opts.subsample);
    std::sort(idx.begin(), idx.end());
    eval_set.examples.clear();
    for (std::size_t i : idx) eval_set.examples.push_back(valset.examples[i]);
  }

  AdvTempResult result;
  result.evaluations.attack_tag = attack_name(attack);
  result.evaluations.eval_set_size = eval_set.size();

  std::map<double, double> cache;
  const auto q = [&](double t) {
    auto it = cache.find(t);
    if (it != cache.end()) return it->second;
    const double val = q_of_t(params, vocab, lexicon, eval_set, attack, cfg, t);
    cache.emplace(t, val);
    result.evaluations.samples.emplace_back(t, val);
    ++result.attack_runs;
    return val;
  };

  const double q_start = q(1.0);
  const double q_probe = q(opts.probe_factor);

  BracketSpec bracket;
  if (q_probe < q_start) {
    bracket.left = 1.0;
    bracket.right = opts.t_max;
  } else {
    bracket.left = opts.t_min;
    bracket.right = 1.0;
  }
  bracket.mid = 0.5 * (bracket.left + bracket.right);
  bracket.probe_factor = opts.probe_factor;

  try {
    brent_min(q, bracket, opts.brent_tol, opts.brent_evals);
  } catch (const InvalidBracket&) {
    // Q(T) is piecewise constant; a failed bracket just means the probe points
    // already tell the story. The argmin below still covers them.
  }

  result.temperature = 1.0;
  result.q_value = q_start;
  for (const auto& [t, val] : result.evaluations.samples) {
    if (val < result.q_value) {
      result.q_value = val;
      result.temperature = t;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// QCurve CSV: columns T,Q,J,attack
// ---------------------------------------------------------------------------

inline void save_qcurve(const QCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write q-curve: " + path);
  out << "T,Q,J,attack\n";
  for (const auto& [t, qv] : curve.samples) {
    out << format_double(t) << ',' << format_double(qv) << ',' << curve.eval_set_size << ','
        << curve.attack_tag << '\n';
  }
}

inline QCurve load_qcurve(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open q-curve: " + path);
  QCurve curve;
  std::string line;
  if (!std::getline(in, line) || line != "T,Q,J,attack") {
    throw ParseError(1, "expected header T,Q,J,attack");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 4) throw ParseError(lineno, "expected 4 fields");
    curve.samples.emplace_back(std::stod(fields[0]), std::stod(fields[1]));
    curve.eval_set_size = static_cast<std::size_t>(std::stoull(fields[2]));
    curve.attack_tag = fields[3];
  }
  return curve;
}

}  // namespace iorlab
