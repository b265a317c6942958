#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "iorlab/calibrate.hpp"
#include "iorlab/model.hpp"

using namespace iorlab;

namespace {

// Well-calibrated base set: labels drawn from softmax of the raw logits, and
// the stored logits scaled by s so the NLL-optimal temperature sits near s.
LogitSet synthetic_set(double scale, int n, int classes, std::uint64_t seed) {
  Rng rng(seed);
  LogitSet set;
  set.num_classes = classes;
  for (int i = 0; i < n; ++i) {
    Vec raw(static_cast<std::size_t>(classes));
    for (double& l : raw) l = rng.uniform(-3.0, 3.0);
    const Vec probs = softmax_t(raw, 1.0);
    const double u = rng.next_double();
    int label = 0;
    double cum = 0.0;
    for (int c = 0; c < classes; ++c) {
      cum += probs[static_cast<std::size_t>(c)];
      if (u < cum) {
        label = c;
        break;
      }
    }
    LogitEntry e;
    e.id = i;
    e.label = label;
    e.logits = raw;
    for (double& l : e.logits) l *= scale;
    set.entries.push_back(std::move(e));
  }
  return set;
}

double grid_oracle(const LogitSet& set, int points = 10000) {
  double best_t = 1.0;
  double best = nll(set, 1.0);
  const double lo = std::log(1e-4);
  const double hi = std::log(1e4);
  for (int i = 0; i < points; ++i) {
    const double t = std::exp(lo + (hi - lo) * i / (points - 1.0));
    const double val = nll(set, t);
    if (val < best) {
      best = val;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace

TEST_CASE("nll values") {
  LogitSet set;
  set.num_classes = 2;
  set.entries = {{0, {100.0, 0.0}, 0}, {1, {0.0, 100.0}, 1}};
  CHECK(nll(set, 1.0) == Catch::Approx(0.0).margin(1e-12));

  LogitSet uniform;
  uniform.num_classes = 2;
  uniform.entries = {{0, {1.0, 1.0}, 0}};
  CHECK(nll(uniform, 1.0) == Catch::Approx(std::log(2.0)).epsilon(1e-12));

  SECTION("two-example hand case") {
    LogitSet two;
    two.num_classes = 2;
    two.entries = {{0, {2.0, 0.0}, 0}, {1, {2.0, 0.0}, 1}};
    const double ce0 = std::log(1.0 + std::exp(-2.0));  // -log p(class 0)
    const double ce1 = std::log(1.0 + std::exp(2.0));   // -log p(class 1)
    CHECK(nll(two, 1.0) == Catch::Approx(0.5 * (ce0 + ce1)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(nll(LogitSet{}, 1.0), EmptyLogitSet);
  LogitSet one;
  one.entries = {{0, {1.0, 0.0}, 0}};
  CHECK_THROWS_AS(nll(one, 0.0), NonPositiveTemperature);
}

TEST_CASE("calibrate_temperature recovers the scale") {
  for (double s : {0.05, 0.2, 1.0, 5.0, 20.0}) {
    const LogitSet set = synthetic_set(s, 2000, 3, 42);
    const double fitted = calibrate_temperature(set);
    const double oracle = grid_oracle(set);
    INFO("scale " << s << " fitted " << fitted << " oracle " << oracle);
    CHECK(std::fabs(fitted - s) / s < 0.05);
    // descent matches the exhaustive grid to within grid resolution
    CHECK(std::fabs(std::log(fitted) - std::log(oracle)) < 0.01);
    CHECK(nll(set, fitted) <= nll(set, 1.0) + 1e-12);
  }
}

TEST_CASE("calibrate_temperature never increases the NLL") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    LogitSet set;
    set.num_classes = 2 + static_cast<int>(rng.next_index(3));
    for (int i = 0; i < 50; ++i) {
      LogitEntry e;
      e.id = i;
      e.label = static_cast<int>(rng.next_index(set.num_classes));
      e.logits.resize(static_cast<std::size_t>(set.num_classes));
      for (double& l : e.logits) l = rng.uniform(-10.0, 10.0);
      set.entries.push_back(std::move(e));
    }
    const double fitted = calibrate_temperature(set);
    CHECK(nll(set, fitted) <= nll(set, 1.0) + 1e-12);
    CHECK(fitted >= 1e-6);
    CHECK(fitted <= 1e9);
  }
}

TEST_CASE("platt_scale") {
  SECTION("calibrated set stays near the identity") {
    const LogitSet set = synthetic_set(1.0, 6000, 2, 9);
    const double before = nll(set, 1.0);
    const PlattParams p = platt_scale(set);
    double after = 0.0;
    for (const LogitEntry& e : set.entries) {
      Vec l(e.logits.size());
      for (std::size_t c = 0; c < l.size(); ++c) l[c] = p.scale[c] * e.logits[c] + p.bias[c];
      after += cross_entropy_t(l, e.label, 1.0);
    }
    after /= static_cast<double>(set.entries.size());
    CHECK(std::fabs(after - before) < 1e-3);  // identity was already optimal
    for (double s : p.scale) CHECK(s == Catch::Approx(1.0).margin(0.15));
    for (double b : p.bias) CHECK(b == Catch::Approx(0.0).margin(0.15));
  }

  SECTION("constant per-class offset is absorbed by the bias") {
    LogitSet set = synthetic_set(1.0, 4000, 2, 11);
    for (LogitEntry& e : set.entries) e.logits[0] += 2.5;  // skew class 0
    const double before = nll(set, 1.0);
    const PlattParams p = platt_scale(set);
    double after = 0.0;
    for (const LogitEntry& e : set.entries) {
      Vec l(e.logits.size());
      for (std::size_t c = 0; c < l.size(); ++c) l[c] = p.scale[c] * e.logits[c] + p.bias[c];
      after += cross_entropy_t(l, e.label, 1.0);
    }
    after /= static_cast<double>(set.entries.size());
    CHECK(after < before - 0.1);
    CHECK(p.bias[0] - p.bias[1] < 0.0);  // counteracts the +2.5 skew
  }

  SECTION("single-example set stays finite under the iteration bound") {
    LogitSet one;
    one.num_classes = 2;
    one.entries = {{0, {1.0, -1.0}, 0}};
    const PlattParams p = platt_scale(one);
    for (double s : p.scale) CHECK(std::isfinite(s));
    for (double b : p.bias) CHECK(std::isfinite(b));
  }

  CHECK_THROWS_AS(platt_scale(LogitSet{}), EmptyLogitSet);
}

TEST_CASE("ece_mce") {
  SECTION("perfect confident predictions") {
    const auto [ece, mce] = ece_mce({1.0, 1.0, 1.0}, {1, 1, 1}, 10);
    CHECK(ece == 0.0);
    CHECK(mce == 0.0);
  }
  SECTION("one-bin hand case") {
    const std::vector<double> conf(5, 0.8);
    const std::vector<int> correct = {1, 1, 1, 0, 0};  // accuracy 0.6
    const auto [ece, mce] = ece_mce(conf, correct, 1);
    CHECK(ece == Catch::Approx(0.2).epsilon(1e-12));
    CHECK(mce == Catch::Approx(0.2).epsilon(1e-12));
  }
  SECTION("ECE <= MCE on random instances") {
    Rng rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t n = 1 + rng.next_index(40);
      std::vector<double> conf(n);
      std::vector<int> correct(n);
      for (std::size_t i = 0; i < n; ++i) {
        conf[i] = rng.next_double();
        correct[i] = rng.next_double() < 0.5 ? 0 : 1;
      }
      const auto [ece, mce] = ece_mce(conf, correct, 1 + static_cast<int>(rng.next_index(20)));
      CHECK(ece <= mce + 1e-12);
    }
  }
  SECTION("perfectly calibrated generator has small ECE") {
    Rng rng(77);
    std::vector<double> conf(10000);
    std::vector<int> correct(10000);
    for (std::size_t i = 0; i < conf.size(); ++i) {
      conf[i] = 0.5 + 0.5 * rng.next_double();
      correct[i] = rng.next_double() < conf[i] ? 1 : 0;
    }
    const auto [ece, mce] = ece_mce(conf, correct, 10);
    CHECK(ece <= 0.02);
  }
  SECTION("errors") {
    CHECK_THROWS_AS(ece_mce({}, {}, 10), EmptyInput);
    CHECK_THROWS_AS(ece_mce({0.5}, {1, 0}, 10), LengthMismatch);
    CHECK_THROWS_AS(ece_mce({1.5}, {1}, 10), ValidationError);
    CHECK_THROWS_AS(ece_mce({0.5}, {1}, 0), ValidationError);
  }
}

TEST_CASE("confidence_stats") {
  Vocab v;
  v.id_to_token = {"<unk>", "<pad>", "a", "b"};
  v.token_to_id = {{"<unk>", 0}, {"<pad>", 1}, {"a", 2}, {"b", 3}};
  Dataset ds;
  ds.num_classes = 2;
  ds.examples = {{"a b", 0, 0}, {"b a", 1, 1}, {"a a", 0, 2}};

  SECTION("huge temperature flattens to chance with zero variance") {
    ModelParams p = init_params(4, 2, 2, 2, 5);
    const ConfidenceStats st = confidence_stats(p, v, ds, 1e9);
    CHECK(st.clean_mean == Catch::Approx(0.5).margin(1e-6));
    CHECK(st.clean_variance == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("constant model has exactly zero variance") {
    ModelParams p = init_params(4, 2, 2, 2, 5);
    p.E.a.assign(p.E.a.size(), 0.0);
    p.W1.a.assign(p.W1.a.size(), 0.0);
    p.W2.a.assign(p.W2.a.size(), 0.0);
    p.b2 = {1.0, 0.0};
    const ConfidenceStats st = confidence_stats(p, v, ds, 1.0);
    CHECK(st.clean_variance == 0.0);
  }
  SECTION("sharp temperature saturates a confident model") {
    ModelParams p = init_params(4, 2, 2, 2, 5);
    p.E.a.assign(p.E.a.size(), 0.0);
    p.W1.a.assign(p.W1.a.size(), 0.0);
    p.W2.a.assign(p.W2.a.size(), 0.0);
    p.b2 = {1.0, 0.0};
    const ConfidenceStats st = confidence_stats(p, v, ds, 0.01);
    CHECK(st.clean_mean > 0.99);
  }
  SECTION("empty dataset") {
    ModelParams p = init_params(4, 2, 2, 2, 5);
    CHECK_THROWS_AS(confidence_stats(p, v, Dataset{}, 1.0), EmptyDataset);
  }
}

TEST_CASE("calibration report invariants") {
  const LogitSet set = synthetic_set(8.0, 800, 2, 19);
  const CalibrationReport rep = make_calibration_report(set);
  CHECK(rep.nll_after <= rep.nll_before + 1e-9);
  CHECK(rep.ece <= rep.mce + 1e-12);
  CHECK(rep.fitted_temperature == Catch::Approx(8.0).epsilon(0.1));
}

TEST_CASE("logit set JSONL round-trip") {
  const LogitSet set = synthetic_set(2.0, 25, 3, 3);
  const auto path = std::filesystem::temp_directory_path() / "iorlab_logits.jsonl";
  save_logit_set(set, path.string());
  const LogitSet back = load_logit_set(path.string());
  REQUIRE(back.entries.size() == set.entries.size());
  CHECK(back.num_classes == 3);
  for (std::size_t i = 0; i < set.entries.size(); ++i) {
    CHECK(back.entries[i].id == set.entries[i].id);
    CHECK(back.entries[i].label == set.entries[i].label);
    CHECK(back.entries[i].logits == set.entries[i].logits);
  }
}
