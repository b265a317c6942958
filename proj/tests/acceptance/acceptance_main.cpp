// Acceptance suite: one self-contained check per criterion, one PASS/FAIL
// line each. Exit status is nonzero if any criterion fails.
//
//   acceptance            run everything
//   acceptance --list     list criteria
//   acceptance --criterion N   run a single criterion

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "iorlab/advtemp.hpp"
#include "iorlab/attacks.hpp"
#include "iorlab/calibrate.hpp"
#include "iorlab/harness.hpp"
#include "iorlab/model.hpp"
#include "iorlab/text.hpp"
#include "iorlab/toy.hpp"
#include "iorlab/train.hpp"

using namespace iorlab;
namespace fs = std::filesystem;

namespace {

struct CheckResult {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;
  std::function<CheckResult()> fn;
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double adv_accuracy(const Pipeline& p, AttackKind kind, const AttackConfig& base,
                    double temperature) {
  AttackConfig cfg = base;
  cfg.temperature = temperature;
  return evaluate_attack(kind, p.params, p.vocab, p.lexicon, p.data.test, cfg)
      .adversarial_accuracy;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness: analytic vs central finite differences.
// ---------------------------------------------------------------------------

CheckResult criterion_gradients() {
  Rng rng(90210);
  const double step = 1e-6;
  double worst = 0.0;
  const double temps[] = {0.5, 1.0, 20.0};

  for (int instance = 0; instance < 100; ++instance) {
    const int V = 3 + static_cast<int>(rng.next_index(4));
    const int d = 1 + static_cast<int>(rng.next_index(3));
    const int h = 1 + static_cast<int>(rng.next_index(3));
    const int C = 2 + static_cast<int>(rng.next_index(2));
    ModelParams p = init_params(V, d, h, C, 7000 + instance);
    for (double& x : p.W1.a) x *= 5.0;
    for (double& x : p.W2.a) x *= 5.0;
    for (double& x : p.b1) x = rng.uniform(-0.1, 0.1);
    for (double& x : p.b2) x = rng.uniform(-0.1, 0.1);

    std::vector<int> ids(1 + rng.next_index(5));
    for (int& id : ids) id = static_cast<int>(rng.next_index(V));
    const int label = static_cast<int>(rng.next_index(C));
    const double t = temps[instance % 3];

    const Gradients g = backward(p, forward(p, ids), label, t);
    const auto loss = [&] { return cross_entropy_t(forward(p, ids).logits, label, t); };
    const auto check = [&](Vec& storage, const Vec& grad) {
      for (std::size_t i = 0; i < storage.size(); ++i) {
        const double orig = storage[i];
        storage[i] = orig + step;
        const double lp = loss();
        storage[i] = orig - step;
        const double lm = loss();
        storage[i] = orig;
        const double fd = (lp - lm) / (2.0 * step);
        const double scale = std::max({std::fabs(fd), std::fabs(grad[i]), 1e-8});
        worst = std::max(worst, std::fabs(fd - grad[i]) / scale);
      }
    };
    check(p.E.a, g.E.a);
    check(p.W1.a, g.W1.a);
    check(p.b1, g.b1);
    check(p.W2.a, g.W2.a);
    check(p.b2, g.b2);
  }
  return {worst < 1e-4, "100 instances, max relative error " + fmt(worst, 8)};
}

// ---------------------------------------------------------------------------
// 2. Simplex QP vs a grid oracle.
// ---------------------------------------------------------------------------

CheckResult criterion_simplex() {
  Rng rng(31415);
  double worst_excess = -1.0;
  double worst_feas = 0.0;
  for (int instance = 0; instance < 200; ++instance) {
    const int M = 2 + static_cast<int>(rng.next_index(2));
    const int P = rng.next_index(2) == 0 ? 3 : 6;
    GradientMatrix g(P, M);
    for (double& x : g.a) x = rng.uniform(-2.0, 2.0);

    const Vec alpha = simplex_min_norm(g, 1e-10);
    double sum = 0.0;
    for (double a : alpha) {
      worst_feas = std::max(worst_feas, -a);
      sum += a;
    }
    worst_feas = std::max(worst_feas, std::fabs(sum - 1.0));

    const auto objective = [&](const Vec& a) {
      double obj = 0.0;
      for (int r = 0; r < P; ++r) {
        double y = 0.0;
        for (int m = 0; m < M; ++m) y += g(r, m) * a[static_cast<std::size_t>(m)];
        obj += y * y;
      }
      return obj;
    };
    double grid = objective(Vec(static_cast<std::size_t>(M), 1.0 / M));
    if (M == 2) {
      for (int k = 0; k <= 100; ++k) grid = std::min(grid, objective({k / 100.0, 1 - k / 100.0}));
    } else {
      for (int i = 0; i <= 100; ++i) {
        for (int j = 0; i + j <= 100; ++j) {
          grid = std::min(grid, objective({i / 100.0, j / 100.0, (100 - i - j) / 100.0}));
        }
      }
    }
    worst_excess = std::max(worst_excess, objective(alpha) - grid);
  }
  return {worst_excess <= 1e-6 && worst_feas <= 1e-9,
          "200 instances, worst objective excess " + fmt(worst_excess, 9) +
              ", worst feasibility violation " + fmt(worst_feas, 12)};
}

// ---------------------------------------------------------------------------
// 3. Temperature recovery on synthetic scaled logit sets.
// ---------------------------------------------------------------------------

CheckResult criterion_temperature() {
  std::ostringstream detail;
  bool pass = true;
  for (double s : {0.05, 0.2, 5.0, 20.0}) {
    Rng rng(271828);
    LogitSet set;
    set.num_classes = 3;
    for (int i = 0; i < 2000; ++i) {
      Vec raw(3);
      for (double& l : raw) l = rng.uniform(-3.0, 3.0);
      const Vec probs = softmax_t(raw, 1.0);
      const double u = rng.next_double();
      LogitEntry e;
      e.id = i;
      double cum = 0.0;
      for (int c = 0; c < 3; ++c) {
        cum += probs[static_cast<std::size_t>(c)];
        if (u < cum) {
          e.label = c;
          break;
        }
      }
      e.logits = raw;
      for (double& l : e.logits) l *= s;
      set.entries.push_back(std::move(e));
    }

    const double fitted = calibrate_temperature(set);
    double oracle_t = 1.0;
    double oracle_nll = nll(set, 1.0);
    for (int i = 0; i < 10000; ++i) {
      const double t = std::exp(std::log(1e-4) + (std::log(1e4) - std::log(1e-4)) * i / 9999.0);
      const double v = nll(set, t);
      if (v < oracle_nll) {
        oracle_nll = v;
        oracle_t = t;
      }
    }
    const bool ok = std::fabs(fitted - s) / s < 0.05 &&
                    nll(set, fitted) <= nll(set, 1.0) + 1e-12 &&
                    nll(set, fitted) <= oracle_nll + 1e-6;
    pass = pass && ok;
    detail << "s=" << s << " fitted=" << fmt(fitted, 4) << " oracle=" << fmt(oracle_t, 4)
           << (ok ? "; " : " (MISS); ");
  }
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 4. Brent minimizer.
// ---------------------------------------------------------------------------

CheckResult criterion_brent() {
  const auto parabola = [](double t) { return (t - 3.0) * (t - 3.0); };
  const BrentResult r = brent_min(parabola, {0.0, 1.0, 10.0}, 1e-10, 80);
  const bool parabola_ok = std::fabs(r.x - 3.0) <= 1e-6;

  const auto stepf = [](double t) { return (t >= 2.0 && t <= 4.0) ? 1.0 : 5.0; };
  const BrentResult sr = brent_min(stepf, {0.0, 3.0, 10.0}, 1e-8, 40);
  double grid = stepf(0.0);
  for (int i = 0; i <= 100000; ++i) grid = std::min(grid, stepf(10.0 * i / 100000.0));
  const bool step_ok = sr.fx == grid;

  return {parabola_ok && step_ok, "parabola |T*-3| = " + fmt(std::fabs(r.x - 3.0), 9) +
                                      ", plateau value " + fmt(sr.fx, 4) + " vs grid " +
                                      fmt(grid, 4)};
}

// ---------------------------------------------------------------------------
// 5. ECE sanity.
// ---------------------------------------------------------------------------

CheckResult criterion_ece() {
  Rng rng(161803);
  std::vector<double> conf(10000);
  std::vector<int> correct(10000);
  for (std::size_t i = 0; i < conf.size(); ++i) {
    conf[i] = 0.5 + 0.5 * rng.next_double();
    correct[i] = rng.next_double() < conf[i] ? 1 : 0;
  }
  const auto [ece, mce] = ece_mce(conf, correct, 10);

  bool order_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.next_index(50);
    std::vector<double> c(n);
    std::vector<int> k(n);
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = rng.next_double();
      k[i] = rng.next_double() < 0.5 ? 0 : 1;
    }
    const auto [e, m] = ece_mce(c, k, 1 + static_cast<int>(rng.next_index(20)));
    order_ok = order_ok && e <= m + 1e-12;
  }
  return {ece <= 0.02 && order_ok,
          "calibrated-generator ECE " + fmt(ece, 4) + ", ECE<=MCE held on 1000 instances: " +
              (order_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 6. IOR reproduction on the toy corpus.
// ---------------------------------------------------------------------------

CheckResult criterion_ior() {
  ExperimentSpec spec;
  std::vector<double> gap_pwws, gap_dg, conf_up, conf_down;
  for (std::uint64_t seed : kSeeds) {
    const Pipeline p = train_toy_baseline(spec, seed, spec.train);
    gap_pwws.push_back(adv_accuracy(p, AttackKind::kPwws, spec.attack, spec.up_temperature) -
                       adv_accuracy(p, AttackKind::kPwws, spec.attack, 1.0));
    gap_dg.push_back(
        adv_accuracy(p, AttackKind::kDeepwordbug, spec.attack, spec.up_temperature) -
        adv_accuracy(p, AttackKind::kDeepwordbug, spec.attack, 1.0));
    conf_up.push_back(
        confidence_stats(p.params, p.vocab, p.data.test, spec.up_temperature).clean_mean);
    conf_down.push_back(
        confidence_stats(p.params, p.vocab, p.data.test, spec.down_temperature).clean_mean);
  }
  const double mp = mean_of(gap_pwws), md = mean_of(gap_dg);
  const double cu = mean_of(conf_up), cd = mean_of(conf_down);
  const bool pass = mp >= 0.10 && md >= 0.10 && cu > 0.99 && cd < 0.5 + 0.01;
  return {pass, "upconf gain pwws " + fmt(mp) + ", dg " + fmt(md) +
                    " (need >= 0.10); conf@0.01 " + fmt(cu) + " (> 0.99), conf@100 " +
                    fmt(cd) + " (< 0.51); 3-seed means"};
}

// ---------------------------------------------------------------------------
// 7. Piercing: cal on the overconfident model, opt on the underconfident one.
// ---------------------------------------------------------------------------

CheckResult criterion_piercing() {
  ExperimentSpec spec;
  std::vector<double> cal_gap_pwws, cal_gap_dg, opt_gap_pwws, opt_gap_dg;
  for (std::uint64_t seed : kSeeds) {
    const Pipeline p = train_toy_baseline(spec, seed, spec.train);
    const double base_pwws = adv_accuracy(p, AttackKind::kPwws, spec.attack, 1.0);
    const double base_dg = adv_accuracy(p, AttackKind::kDeepwordbug, spec.attack, 1.0);

    const double t_cal = fit_cal_temperature(p, spec.up_temperature);
    cal_gap_pwws.push_back(
        adv_accuracy(p, AttackKind::kPwws, spec.attack, spec.up_temperature * t_cal) -
        base_pwws);
    cal_gap_dg.push_back(
        adv_accuracy(p, AttackKind::kDeepwordbug, spec.attack, spec.up_temperature * t_cal) -
        base_dg);

    ModelParams served = p.params;
    for (double& x : served.W2.a) x /= spec.down_temperature;
    for (double& x : served.b2) x /= spec.down_temperature;
    AdvTempOptions opts;
    opts.subsample = spec.opt_subsample;
    const AdvTempResult opt = optimize_adv_temperature(
        served, p.vocab, p.lexicon, p.data.val, AttackKind::kDeepwordbug, spec.attack, opts);
    opt_gap_pwws.push_back(adv_accuracy(p, AttackKind::kPwws, spec.attack,
                                        spec.down_temperature * opt.temperature) -
                           base_pwws);
    opt_gap_dg.push_back(adv_accuracy(p, AttackKind::kDeepwordbug, spec.attack,
                                      spec.down_temperature * opt.temperature) -
                         base_dg);
  }
  const double cp = mean_of(cal_gap_pwws), cd = mean_of(cal_gap_dg);
  const double op = mean_of(opt_gap_pwws), od = mean_of(opt_gap_dg);
  const bool pass = std::fabs(cp) <= 0.03 && std::fabs(cd) <= 0.03 && std::fabs(op) <= 0.03 &&
                    std::fabs(od) <= 0.03;
  return {pass, "upconf cal gaps pwws " + fmt(cp) + ", dg " + fmt(cd) +
                    "; downconf opt gaps pwws " + fmt(op) + ", dg " + fmt(od) +
                    " (all within 0.03 of baseline); 3-seed means"};
}

// ---------------------------------------------------------------------------
// 8. Implicit overconfidence from gradient normalization.
// ---------------------------------------------------------------------------

CheckResult criterion_implicit() {
  ExperimentSpec spec;
  spec.train.batch_size = 2;  // small batches make the normalization drift fast

  std::vector<double> conf_none, conf_clip, conf_norm, base_pwws, cal_pwws;
  for (std::uint64_t seed : kSeeds) {
    ToySplits data = make_toy_splits(spec, seed);
    const Vocab vocab = build_vocab(data.train, 1);
    const SynonymLexicon lexicon = toy_lexicon();
    TrainConfig cfg = spec.train;
    cfg.seed = seed;

    const TrainResult none = train_standard(cfg, vocab, data.train, data.val);
    cfg.grad_transform = GradTransform::clip(1.0);
    const TrainResult clip = train_standard(cfg, vocab, data.train, data.val);
    cfg.grad_transform = GradTransform::normalize();
    const TrainResult norm = train_standard(cfg, vocab, data.train, data.val);

    conf_none.push_back(confidence_stats(none.params, vocab, data.test, 1.0).clean_mean);
    conf_clip.push_back(confidence_stats(clip.params, vocab, data.test, 1.0).clean_mean);
    conf_norm.push_back(confidence_stats(norm.params, vocab, data.test, 1.0).clean_mean);

    Pipeline pn;
    pn.vocab = vocab;
    pn.params = norm.params;
    pn.data = data;
    pn.lexicon = lexicon;
    const double t_cal = fit_cal_temperature(pn, 1.0);

    Pipeline pb = pn;
    pb.params = none.params;
    base_pwws.push_back(adv_accuracy(pb, AttackKind::kPwws, spec.attack, 1.0));
    cal_pwws.push_back(adv_accuracy(pn, AttackKind::kPwws, spec.attack, t_cal));
  }
  const double cn = mean_of(conf_none), cc = mean_of(conf_clip), cm = mean_of(conf_norm);
  const double gap = mean_of(cal_pwws) - mean_of(base_pwws);
  const bool conf_ok = cm >= 0.95 && cn <= 0.93 && cc <= 0.93;
  const bool pierce_ok = std::fabs(gap) <= 0.03;
  return {conf_ok && pierce_ok,
          "mean confidence none " + fmt(cn) + " clip " + fmt(cc) + " (<= 0.93), normalize " +
              fmt(cm) + " (>= 0.95); post-cal pwws gap vs baseline " + fmt(gap) +
              " (within 0.03); 3-seed means"};
}

// ---------------------------------------------------------------------------
// 9. High-temperature training for genuine robustness.
// ---------------------------------------------------------------------------

CheckResult criterion_high_t() {
  ExperimentSpec spec;
  const std::vector<double> grid = {1.0, 5.0, 20.0, 50.0};
  std::map<double, std::vector<double>> adv, clean, range;
  for (std::uint64_t seed : kSeeds) {
    for (double t : grid) {
      TrainConfig cfg = spec.train;
      cfg.temperature = t;
      cfg.grad_transform = GradTransform::normalize();
      const Pipeline p = train_toy_baseline(spec, seed, cfg);
      const double t_cal = fit_cal_temperature(p, 1.0);
      adv[t].push_back(adv_accuracy(p, AttackKind::kPwws, spec.attack, t_cal));
      clean[t].push_back(clean_accuracy(p.params, p.vocab, p.data.test));
      range[t].push_back(logit_range_stats(p.params, p.vocab, p.data.test).mean);
    }
  }
  const double adv1 = mean_of(adv[1.0]);
  const double clean1 = mean_of(clean[1.0]);
  const double range1 = mean_of(range[1.0]);
  std::ostringstream detail;
  detail << "T=1: cal-pwws " << fmt(adv1) << " clean " << fmt(clean1) << " range "
         << fmt(range1, 2) << ";";
  bool found = false;
  for (double t : grid) {
    if (t == 1.0) continue;
    const double a = mean_of(adv[t]);
    const double c = mean_of(clean[t]);
    const double r = mean_of(range[t]);
    const bool ok = a >= adv1 + 0.03 && c >= clean1 - 0.02 && r > range1;
    found = found || ok;
    detail << " T=" << t << ": " << fmt(a) << "/" << fmt(c) << "/" << fmt(r, 2)
           << (ok ? " (qualifies)" : "") << ";";
  }
  detail << " 3-seed means";
  return {found, detail.str()};
}

// ---------------------------------------------------------------------------
// 10. Importance-rank disruption at extreme temperature.
// ---------------------------------------------------------------------------

CheckResult criterion_importance() {
  ExperimentSpec spec;
  bool self_exact = true;
  std::vector<double> extremes;
  for (std::uint64_t seed : kSeeds) {
    const Pipeline p = train_toy_baseline(spec, seed, spec.train);
    const ImportanceCorrelation self =
        importance_correlation(p.params, p.vocab, p.data.test, 1.0);
    self_exact = self_exact && self.mean_rho == 1.0;
    const ImportanceCorrelation ext =
        importance_correlation(p.params, p.vocab, p.data.test, spec.extreme_temperature);
    extremes.push_back(ext.mean_rho);
  }
  const double m = mean_of(extremes);
  return {self_exact && m < 0.9, "self-comparison rho exactly 1.0: " +
                                     std::string(self_exact ? "yes" : "no") +
                                     "; mean rho at T=0.01: " + fmt(m) + " (< 0.9)"};
}

// ---------------------------------------------------------------------------
// 11. Transferability ordering against a DDi-trained model.
// ---------------------------------------------------------------------------

CheckResult criterion_transfer() {
  ExperimentSpec spec;
  spec.pgd = PgdConfig{3, 0.005, 0.01, 0.1};  // desk-scale PGD radius

  std::vector<double> self_v, cal_v, transfer_v, base_v;
  for (std::uint64_t seed : kSeeds) {
    const Pipeline base = train_toy_baseline(spec, seed, spec.train);

    TrainConfig cfg = spec.train;
    cfg.seed = seed + 1000;  // independently initialized target
    cfg.batch_size = 2;
    cfg.grad_transform = GradTransform::normalize();
    const ModelParams ddi =
        train_ddi_at(cfg, spec.ddi, spec.pgd, base.vocab, base.data.train, base.data.val)
            .params;

    Pipeline pd = base;
    pd.params = ddi;
    const double t_cal = fit_cal_temperature(pd, 1.0);

    AttackConfig acfg = spec.attack;
    const AdvEvalReport source =
        evaluate_attack(AttackKind::kPwws, base.params, base.vocab, base.lexicon,
                        base.data.test, acfg);
    base_v.push_back(source.adversarial_accuracy);
    self_v.push_back(adv_accuracy(pd, AttackKind::kPwws, spec.attack, 1.0));
    cal_v.push_back(adv_accuracy(pd, AttackKind::kPwws, spec.attack, t_cal));
    transfer_v.push_back(
        transfer_evaluate(source.results, ddi, base.vocab).adversarial_accuracy);
  }
  const double self_m = mean_of(self_v), cal_m = mean_of(cal_v);
  const double transfer_m = mean_of(transfer_v), base_m = mean_of(base_v);
  const bool pass = cal_m < transfer_m && transfer_m < self_m;
  return {pass, "baseline self " + fmt(base_m) + ", ddi self " + fmt(self_m) + ", ddi cal " +
                    fmt(cal_m) + ", transfer " + fmt(transfer_m) +
                    " (need cal < transfer < self); 3-seed means"};
}

// ---------------------------------------------------------------------------
// 12. Determinism: byte-identical outputs on rerun.
// ---------------------------------------------------------------------------

CheckResult criterion_determinism() {
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  };

  bool pass = true;
  std::ostringstream detail;
  for (const char* name : {"ior-demo", "sweep-temp", "importance-corr"}) {
    ExperimentSpec spec;
    spec.name = name;
    spec.seeds = {1, 2};
    spec.corpus.size = 150;
    spec.corpus_val_size = 60;
    spec.corpus_test_size = 60;
    spec.train.epochs = 4;
    spec.sweep_temperatures = {0.01, 1.0, 100.0};
    spec.opt_subsample = 30;

    const fs::path dir1 = fs::temp_directory_path() / ("iorlab_acc_a_" + std::string(name));
    const fs::path dir2 = fs::temp_directory_path() / ("iorlab_acc_b_" + std::string(name));
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    emit_report(run_experiment(spec), dir1.string());
    emit_report(run_experiment(spec), dir2.string());

    bool same = slurp(dir1 / "report.json") == slurp(dir2 / "report.json");
    std::size_t tables = 0;
    for (const auto& entry : fs::directory_iterator(dir1 / "tables")) {
      same = same && slurp(entry.path()) ==
                         slurp(dir2 / "tables" / entry.path().filename());
      ++tables;
    }
    pass = pass && same && tables > 0;
    detail << name << (same ? " identical" : " DIFFERS") << " (" << tables << " tables); ";
  }
  return {pass, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness vs finite differences", 10.0, criterion_gradients},
      {2, "simplex QP matches the grid oracle", 30.0, criterion_simplex},
      {3, "temperature recovery on scaled logit sets", 10.0, criterion_temperature},
      {4, "Brent minimizer correctness", 1.0, criterion_brent},
      {5, "ECE sanity", 5.0, criterion_ece},
      {6, "illusion of robustness at extreme temperatures", 300.0, criterion_ior},
      {7, "piercing via calibration and temperature optimization", 600.0, criterion_piercing},
      {8, "implicit overconfidence from gradient normalization", 600.0, criterion_implicit},
      {9, "high-temperature training for genuine robustness", 1200.0, criterion_high_t},
      {10, "importance-rank disruption", 300.0, criterion_importance},
      {11, "transferability ordering", 600.0, criterion_transfer},
      {12, "byte-identical reruns", 300.0, criterion_determinism},
  };

  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--list") == 0) {
      for (const Criterion& c : criteria) std::printf("%2d  %s\n", c.id, c.name);
      return 0;
    }
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    }
  }

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (only != 0 && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = c.fn();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = elapsed < c.time_limit_s;
    const bool pass = r.pass && in_time;
    if (!pass) ++failures;
    std::printf("[%s] criterion %2d (%s): %s [%.1fs, limit %.0fs]\n", pass ? "PASS" : "FAIL",
                c.id, c.name, r.detail.c_str(), elapsed, c.time_limit_s);
    std::fflush(stdout);
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
