#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "knocknet/io.hpp"
#include "knocknet/pipeline.hpp"

using namespace knocknet;

namespace {

// Desk-scale config shrunk to seconds for unit testing.
PipelineConfig tiny_config(TraitKind kind) {
  PipelineConfig cfg;
  cfg.trait = kind;
  cfg.n = 240;
  cfg.p = 24;
  cfg.knockoffs = 3;
  cfg.replicates = 1;
  cfg.ensemble_runs = 2;
  cfg.max_epochs = 6;
  cfg.knockoff_window = 5;
  cfg.batch_size = 64;
  cfg.target_fdrs = {0.05, 0.1, 0.2};
  cfg.master_seed = 99;
  cfg.threads = 1;
  return cfg;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string name) : path(std::move(name)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("fdr_power: hand-counted cases") {
  CHECK(fdr_power({1, 2, 5, 9}, {1, 2, 5, 9}) == std::pair{0.0, 1.0});
  CHECK(fdr_power({}, {1, 2}) == std::pair{0.0, 0.0});
  const auto [fdp, power] = fdr_power({1, 2, 3, 9}, {1, 2, 5, 9});
  CHECK(fdp == doctest::Approx(0.25));
  CHECK(power == doctest::Approx(0.75));
  CHECK_THROWS(fdr_power({1}, {}));
}

TEST_CASE("aggregate_curves: means, standard errors, brute-force recompute") {
  ReplicateReport a, b;
  a.replicate = 0;
  a.method = "hidemk";
  a.outcomes = {{0.1, 0.0, 0.5, 2}};
  b.replicate = 1;
  b.method = "hidemk";
  b.outcomes = {{0.1, 0.2, 0.7, 3}};

  const auto single = aggregate_curves({a}, "quantitative");
  REQUIRE(single.size() == 1);
  CHECK(single[0].fdr_mean == 0.0);
  CHECK(single[0].power_mean == 0.5);
  CHECK(single[0].fdr_se == 0.0);
  CHECK(single[0].n_replicates == 1);

  const auto both = aggregate_curves({a, b}, "quantitative");
  REQUIRE(both.size() == 1);
  CHECK(both[0].fdr_mean == doctest::Approx(0.1));
  CHECK(both[0].power_mean == doctest::Approx(0.6));
  // se of {0.0, 0.2}: sd = 0.1414..., se = 0.1
  CHECK(both[0].fdr_se == doctest::Approx(0.1).epsilon(1e-12));

  ReplicateReport failed;
  failed.replicate = 2;
  failed.method = "hidemk";
  failed.failed = true;
  const auto with_failure = aggregate_curves({a, b, failed}, "quantitative");
  CHECK(with_failure[0].n_replicates == 2);  // failures excluded from means
}

TEST_CASE("run_replicate: deterministic and nested across targets") {
  const PipelineConfig cfg = tiny_config(TraitKind::Quantitative);
  const ReplicateReport first = run_replicate(cfg, 0, "marginal");
  const ReplicateReport second = run_replicate(cfg, 0, "marginal");
  REQUIRE_FALSE(first.failed);
  CHECK(first.causal == second.causal);
  CHECK(first.W == second.W);
  for (std::size_t t = 0; t < first.outcomes.size(); ++t) {
    CHECK(first.outcomes[t].fdp == second.outcomes[t].fdp);
    CHECK(first.outcomes[t].power == second.outcomes[t].power);
  }

  // nested selections as alpha grows
  for (std::size_t t = 1; t < first.outcomes.size(); ++t)
    CHECK(first.outcomes[t].selected_count >= first.outcomes[t - 1].selected_count);
}

TEST_CASE("run_replicate: network method end to end") {
  PipelineConfig cfg = tiny_config(TraitKind::Dichotomous);
  const ReplicateReport report = run_replicate(cfg, 1, "hidemk");
  REQUIRE_FALSE(report.failed);
  CHECK(report.features > 0);
  CHECK(report.causal.size() == 4);
  CHECK(report.W.size() == static_cast<std::size_t>(report.features));
  for (const auto& outcome : report.outcomes) {
    CHECK(outcome.fdp >= 0.0);
    CHECK(outcome.fdp <= 1.0);
    CHECK(outcome.power >= 0.0);
    CHECK(outcome.power <= 1.0);
  }

  const ReplicateReport repeat = run_replicate(cfg, 1, "hidemk");
  CHECK(report.W == repeat.W);
}

TEST_CASE("run_pipeline: thread pool matches serial execution") {
  PipelineConfig cfg = tiny_config(TraitKind::Quantitative);
  cfg.replicates = 2;
  cfg.methods = {"marginal", "ridge"};
  cfg.threads = 1;
  const auto serial = run_pipeline(cfg);
  cfg.threads = 2;
  const auto parallel = run_pipeline(cfg);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].method == parallel[i].method);
    CHECK(serial[i].W == parallel[i].W);
  }

  cfg.target_fdrs = {0.2, 0.1};  // must be increasing
  CHECK_THROWS(run_pipeline(cfg));
}

TEST_CASE("config json: round trip, defaults, unknown keys") {
  PipelineConfig cfg = tiny_config(TraitKind::Dichotomous);
  cfg.methods = {"hidemk", "lasso"};
  cfg.signal_multiplier = 2.5;

  TempFile file("pipeline_config_test.json");
  {
    std::ofstream out(file.path);
    out << config_to_json(cfg);
  }
  const PipelineConfig loaded = config_from_json_file(file.path);
  CHECK(loaded.trait == cfg.trait);
  CHECK(loaded.n == cfg.n);
  CHECK(loaded.methods == cfg.methods);
  CHECK(loaded.signal_multiplier == cfg.signal_multiplier);
  CHECK(loaded.target_fdrs == cfg.target_fdrs);

  {
    std::ofstream out(file.path);
    out << "{\"replicates\": 3}";
  }
  const PipelineConfig partial = config_from_json_file(file.path);
  CHECK(partial.replicates == 3);
  CHECK(partial.n == PipelineConfig().n);  // untouched default

  {
    std::ofstream out(file.path);
    out << "{\"replicats\": 3}";
  }
  CHECK_THROWS(config_from_json_file(file.path));
}

TEST_CASE("csv round trips") {
  const GenotypeMatrix G =
      simulate_genotypes(40, 6, 0.4, log_uniform_maf(0.1, 0.5), 7);

  TempFile genotype_file("genotypes_test.csv");
  write_genotype_csv(genotype_file.path, G);
  const GenotypeMatrix G2 = read_genotype_csv(genotype_file.path);
  CHECK(G2.dosages == G.dosages);
  CHECK(G2.variant_ids == G.variant_ids);
  CHECK(G2.mac == G.mac);

  const KnockoffTensor K = scit_generate(G.dosages, 2, 3, 11);
  TempFile knockoff_file("knockoffs_test.csv");
  write_knockoff_csv(knockoff_file.path, K, G.variant_ids);
  const KnockoffTensor K2 = read_knockoff_csv(knockoff_file.path);
  CHECK(K2.M == 2);
  CHECK((K2.values - K.values).cwiseAbs().maxCoeff() < 1e-12);

  ImportanceMatrix T;
  T.T.resize(3, 4);
  T.T << 0.5, 0.25, 0.125, 0.0625, 1.0, 2.0, 3.0, 4.0, 0.0, 0.1, 0.2, 0.3;
  T.feature_ids = {"v1", "v2", "v3"};
  TempFile importance_file("importance_test.csv");
  write_importance_csv(importance_file.path, T);
  const ImportanceMatrix T2 = read_importance_csv(importance_file.path);
  CHECK(T2.T == T.T);
  CHECK(T2.feature_ids == T.feature_ids);

  TraitSpec spec;
  spec.kind = TraitKind::Quantitative;
  spec.causal = {0};
  spec.beta = {0.4};
  const TraitData trait = gen_quantitative(G, spec, 13);
  TempFile trait_file("trait_test.csv");
  write_trait_csv(trait_file.path, trait);
  const TraitData trait2 = read_trait_csv(trait_file.path);
  CHECK((trait2.y - trait.y).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((trait2.covariate - trait.covariate).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("curves csv: re-aggregation reproduces the file bit for bit") {
  PipelineConfig cfg = tiny_config(TraitKind::Quantitative);
  cfg.replicates = 2;
  cfg.methods = {"marginal"};
  const auto reports = run_pipeline(cfg);
  const auto curves = aggregate_curves(reports, to_string(cfg.trait));

  TempFile curve_file("curves_test.csv");
  write_curves_csv(curve_file.path, curves);
  const auto loaded = read_curves_csv(curve_file.path);
  REQUIRE(loaded.size() == curves.size());
  for (std::size_t i = 0; i < curves.size(); ++i) {
    CHECK(loaded[i].method == curves[i].method);
    CHECK(loaded[i].target_fdr == curves[i].target_fdr);
    CHECK(loaded[i].fdr_mean == curves[i].fdr_mean);
    CHECK(loaded[i].power_mean == curves[i].power_mean);
    CHECK(loaded[i].power_se == curves[i].power_se);
  }

  // aggregating the same reports twice is bit-identical
  const auto again = aggregate_curves(reports, to_string(cfg.trait));
  for (std::size_t i = 0; i < curves.size(); ++i) {
    CHECK(again[i].fdr_mean == curves[i].fdr_mean);
    CHECK(again[i].fdr_se == curves[i].fdr_se);
  }
}

TEST_CASE("selection csv layout") {
  KnockoffStats stats;
  stats.M = 5;
  stats.kappa = {0, 2};
  stats.tau = {1.5, 0.4};
  stats.W = {1.5, 0.0};
  stats.q = {0.04, 1.0};

  TempFile file("selection_test.csv");
  write_selection_csv(file.path, {"v1", "v2"}, stats, {0.1, 0.2}, "hidemk");
  std::ifstream in(file.path);
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  CHECK(header == "variant_id,kappa,tau,W,q,selected@0.10,selected@0.20,method");
  CHECK(row1 == "v1,0,1.5,1.5,0.04,1,1,hidemk");
  CHECK(row2 == "v2,2,0.4,0,1,0,0,hidemk");
}

TEST_CASE("resolve_threads favors explicit, then environment") {
  CHECK(resolve_threads(3) == 3);
  CHECK(resolve_threads(0) >= 1);
}
