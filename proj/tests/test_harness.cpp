#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "iorlab/harness.hpp"

using namespace iorlab;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small spec so experiment tests stay fast.
ExperimentSpec tiny_spec(const std::string& name) {
  ExperimentSpec s;
  s.name = name;
  s.seeds = {1, 2};
  s.corpus.size = 150;
  s.corpus_val_size = 60;
  s.corpus_test_size = 60;
  s.train.epochs = 4;
  s.sweep_temperatures = {0.01, 1.0, 100.0};
  s.train_temperatures = {1.0, 20.0};
  s.opt_subsample = 30;
  return s;
}

}  // namespace

TEST_CASE("spearman") {
  CHECK(spearman({1.0, 2.0, 3.0}, {10.0, 20.0, 30.0}) == 1.0);
  CHECK(spearman({1.0, 2.0, 3.0}, {5.0, 1.0, -2.0}) == -1.0);
  CHECK(spearman({1.0, 2.0, 3.0, 4.0}, {1.0, 2.0, 4.0, 3.0}) ==
        Catch::Approx(0.8).epsilon(1e-12));

  SECTION("self correlation is exactly one") {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<double> a(2 + rng.next_index(10));
      for (double& x : a) x = rng.uniform(-5.0, 5.0);
      a[0] = 7.0;  // guarantee non-degenerate
      a[1] = -7.0;
      CHECK(spearman(a, a) == 1.0);
    }
  }

  SECTION("symmetry") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<double> a(3 + rng.next_index(8)), b(a.size());
      for (double& x : a) x = rng.uniform(-5.0, 5.0);
      for (double& x : b) x = rng.uniform(-5.0, 5.0);
      a[0] = 9.0;
      b[0] = 9.0;
      a[1] = -9.0;
      b[1] = -9.0;
      CHECK(spearman(a, b) == spearman(b, a));
    }
  }

  SECTION("ties use average ranks") {
    // a: ranks {1, 2.5, 2.5, 4}; hand Pearson of ranks
    const double rho = spearman({0.0, 1.0, 1.0, 2.0}, {0.0, 1.0, 2.0, 3.0});
    CHECK(rho == Catch::Approx(0.9486832980505138).epsilon(1e-12));
  }

  SECTION("errors") {
    CHECK_THROWS_AS(spearman({1.0}, {1.0}), LengthMismatch);
    CHECK_THROWS_AS(spearman({1.0, 2.0}, {1.0, 2.0, 3.0}), LengthMismatch);
    CHECK_THROWS_AS(spearman({1.0, 1.0}, {1.0, 2.0}), DegenerateInput);
    CHECK_THROWS_AS(spearman({1.0, 2.0}, {3.0, 3.0}), DegenerateInput);
  }
}

TEST_CASE("importance_correlation") {
  ToyCorpusConfig ccfg;
  ccfg.size = 40;
  const Dataset ds = make_toy_corpus(ccfg, 17, "test");
  const Vocab v = build_vocab(ds, 1);

  SECTION("self comparison is exactly one") {
    ModelParams p = init_params(v.size(), 4, 4, 2, 2);
    for (double& x : p.W2.a) x *= 10.0;
    const ImportanceCorrelation c = importance_correlation(p, v, ds, 1.0);
    CHECK(c.included > 0);
    CHECK(c.mean_rho == 1.0);
    CHECK(c.std_rho == 0.0);
  }

  SECTION("constant model excludes every example") {
    ModelParams p = init_params(v.size(), 4, 4, 2, 2);
    p.E.a.assign(p.E.a.size(), 0.0);
    p.W1.a.assign(p.W1.a.size(), 0.0);
    p.W2.a.assign(p.W2.a.size(), 0.0);
    const ImportanceCorrelation c = importance_correlation(p, v, ds, 0.01);
    CHECK(c.included == 0);
    CHECK(c.skipped_degenerate == ds.size());
  }

  SECTION("empty dataset") {
    ModelParams p = init_params(v.size(), 4, 4, 2, 2);
    CHECK_THROWS_AS(importance_correlation(p, v, Dataset{}, 0.01), EmptyDataset);
  }
}

TEST_CASE("experiment spec json round-trip and validation") {
  ExperimentSpec s = tiny_spec("pierce");
  s.attack.score_decimals = 3;
  s.train.grad_transform = GradTransform::clip(0.7);
  const nlohmann::json j = spec_to_json(s);
  const ExperimentSpec back = spec_from_json(j);
  CHECK(config_hash(back) == config_hash(s));
  CHECK(back.name == "pierce");
  CHECK(back.attack.score_decimals == 3);
  CHECK(back.train.grad_transform.mode == GradTransformMode::kClip);
  CHECK(back.train.grad_transform.clip_threshold == 0.7);

  SECTION("unknown keys are rejected") {
    nlohmann::json bad = j;
    bad["unknown_knob"] = 1;
    CHECK_THROWS_AS(spec_from_json(bad), ValidationError);
  }
  SECTION("unknown experiment is rejected") {
    nlohmann::json bad = j;
    bad["experiment"] = "does-not-exist";
    CHECK_THROWS_AS(spec_from_json(bad), UnknownExperiment);
  }
  SECTION("empty seed set is rejected") {
    nlohmann::json bad = j;
    bad["seeds"] = nlohmann::json::array();
    CHECK_THROWS_AS(spec_from_json(bad), ValidationError);
  }
}

TEST_CASE("run_experiment: ior-demo shape and statistics") {
  const ExperimentSpec spec = tiny_spec("ior-demo");
  const RunReport rep = run_experiment(spec);

  REQUIRE(rep.per_seed.size() == 2);
  for (const char* model : {"baseline", "downconf", "upconf"}) {
    CHECK(rep.mean.count("clean_" + std::string(model)) == 1);
    CHECK(rep.mean.count("adv_pwws_" + std::string(model)) == 1);
    CHECK(rep.mean.count("adv_dg_" + std::string(model)) == 1);
    CHECK(rep.mean.count("conf_clean_" + std::string(model)) == 1);
  }

  SECTION("mean and std match recomputation from the per-seed values") {
    for (const auto& [key, mean] : rep.mean) {
      double sum = 0.0;
      for (const MetricMap& m : rep.per_seed) sum += m.at(key);
      const double expect_mean = sum / static_cast<double>(rep.per_seed.size());
      CHECK(mean == expect_mean);
      double ss = 0.0;
      for (const MetricMap& m : rep.per_seed) {
        ss += (m.at(key) - expect_mean) * (m.at(key) - expect_mean);
      }
      CHECK(rep.stddev.at(key) == std::sqrt(ss / static_cast<double>(rep.per_seed.size())));
    }
  }
}

TEST_CASE("emit_report is byte-stable across reruns") {
  namespace fs = std::filesystem;
  const ExperimentSpec spec = tiny_spec("sweep-temp");
  const fs::path dir1 = fs::temp_directory_path() / "iorlab_rep1";
  const fs::path dir2 = fs::temp_directory_path() / "iorlab_rep2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  const RunReport a = run_experiment(spec);
  emit_report(a, dir1.string());
  const RunReport b = run_experiment(spec);
  emit_report(b, dir2.string());

  CHECK(slurp(dir1 / "report.json") == slurp(dir2 / "report.json"));
  for (const auto& entry : fs::directory_iterator(dir1 / "tables")) {
    const fs::path other = dir2 / "tables" / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(slurp(entry.path()) == slurp(other));
  }

  SECTION("sweep table loads back as a QCurve") {
    const QCurve curve = load_qcurve((dir1 / "tables" / "qcurve_pwws.csv").string());
    REQUIRE(curve.samples.size() == spec.sweep_temperatures.size());
    CHECK(curve.attack_tag == "pwws");
    for (std::size_t i = 0; i < curve.samples.size(); ++i) {
      CHECK(curve.samples[i].first == spec.sweep_temperatures[i]);
      CHECK(curve.samples[i].second ==
            a.mean.at("q_pwws_T" + format_double(spec.sweep_temperatures[i])));
    }
  }
}

TEST_CASE("remaining experiments produce their table shapes") {
  SECTION("pierce adds cal and opt rows per miscalibrated model") {
    const RunReport rep = run_experiment(tiny_spec("pierce"));
    for (const char* model : {"downconf", "upconf"}) {
      for (const char* suffix : {"", "_cal", "_opt"}) {
        CHECK(rep.mean.count("adv_pwws_" + std::string(model) + suffix) == 1);
      }
      CHECK(rep.mean.count("cal_temperature_" + std::string(model)) == 1);
      CHECK(rep.mean.count("opt_temperature_" + std::string(model)) == 1);
    }
    CHECK(rep.mean.count("adv_pwws_baseline") == 1);
  }

  SECTION("transfer reports self, pierced, and transferred accuracies") {
    const RunReport rep = run_experiment(tiny_spec("transfer"));
    for (const char* key : {"adv_pwws_baseline_self", "adv_pwws_ddi_self", "adv_pwws_ddi_cal",
                            "adv_pwws_transfer", "clean_baseline", "clean_ddi",
                            "cal_temperature_ddi"}) {
      CHECK(rep.mean.count(key) == 1);
    }
  }

  SECTION("high-t-train reports one column set per training temperature") {
    const RunReport rep = run_experiment(tiny_spec("high-t-train"));
    for (const double t : {1.0, 20.0}) {
      const std::string tag = "T" + format_double(t);
      CHECK(rep.mean.count("clean_" + tag) == 1);
      CHECK(rep.mean.count("cal_temperature_" + tag) == 1);
      CHECK(rep.mean.count("adv_pwws_cal_" + tag) == 1);
      CHECK(rep.mean.count("logit_range_" + tag) == 1);
    }
  }

  SECTION("logit-range compares the cold and hot models") {
    const RunReport rep = run_experiment(tiny_spec("logit-range"));
    for (const char* key :
         {"range_mean_T1", "range_std_T1", "range_mean_hot", "range_std_hot"}) {
      CHECK(rep.mean.count(key) == 1);
    }
  }
}

TEST_CASE("report json carries provenance") {
  const ExperimentSpec spec = tiny_spec("importance-corr");
  const RunReport rep = run_experiment(spec);
  const nlohmann::json j = report_to_json(rep);
  CHECK(j.at("experiment") == "importance-corr");
  CHECK(j.at("config_hash").get<std::string>().size() == 16);
  CHECK(j.at("seeds").size() == 2);
  CHECK(j.at("per_seed").size() == 2);
  CHECK(j.at("mean").contains("rho_extreme_mean"));
  CHECK(rep.mean.at("rho_self_mean") == 1.0);
}
