#include <doctest.h>

#include <cmath>
#include <set>

#include "knocknet/rng.hpp"
#include "knocknet/simulate.hpp"

using namespace knocknet;

TEST_CASE("inverse normal cdf reference points") {
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-10));
  CHECK(inverse_normal_cdf(0.1) == doctest::Approx(-1.2815515655446004).epsilon(1e-10));
  CHECK(inverse_normal_cdf(1e-6) == doctest::Approx(-4.753424308822899).epsilon(1e-9));
  CHECK_THROWS(inverse_normal_cdf(0.0));
  CHECK_THROWS(inverse_normal_cdf(1.0));
}

TEST_CASE("simulate_genotypes: independence, dosage mean, determinism") {
  auto fixed_maf = [](double value) {
    return [value](Rng&) { return value; };
  };

  // rho = 0: adjacent columns essentially uncorrelated
  const GenotypeMatrix G0 =
      simulate_genotypes(10000, 12, 0.0, fixed_maf(0.3), 42);
  for (int j = 0; j + 1 < G0.variants(); ++j) {
    const auto a = G0.dosages.col(j), b = G0.dosages.col(j + 1);
    const double ma = a.mean(), mb = b.mean();
    const double r = ((a.array() - ma) * (b.array() - mb)).sum() /
                     std::sqrt((a.array() - ma).square().sum() *
                               (b.array() - mb).square().sum());
    CHECK(std::fabs(r) < 0.05);
  }

  // maf 0.5: mean dosage near 1
  const GenotypeMatrix Gh =
      simulate_genotypes(10000, 4, 0.0, fixed_maf(0.5), 43);
  for (int j = 0; j < Gh.variants(); ++j)
    CHECK(Gh.dosages.col(j).mean() == doctest::Approx(1.0).epsilon(0.03));

  // vanishing maf: columns all zero with overwhelming probability
  const GenotypeMatrix Gz =
      simulate_genotypes(500, 3, 0.0, fixed_maf(1e-12), 44);
  CHECK(Gz.dosages.cwiseAbs().maxCoeff() == 0.0);

  // MAC / MAF bookkeeping is exact
  const GenotypeMatrix G = simulate_genotypes(500, 8, 0.5, log_uniform_maf(), 45);
  for (int j = 0; j < G.variants(); ++j) {
    CHECK(G.mac[j] == static_cast<long>(G.dosages.col(j).sum()));
    CHECK(G.maf[j] == G.mac[j] / (2.0 * 500));
    CHECK(G.maf[j] <= 0.5);
  }

  const GenotypeMatrix again = simulate_genotypes(500, 8, 0.5, log_uniform_maf(), 45);
  CHECK(G.dosages == again.dosages);

  CHECK_THROWS(simulate_genotypes(10, 2, 1.0, fixed_maf(0.2), 1));
  CHECK_THROWS(simulate_genotypes(10, 2, 0.5, fixed_maf(0.7), 1));
}

TEST_CASE("mac_filter: strict threshold and brute-force agreement") {
  GenotypeMatrix G;
  G.dosages.setZero(20, 3);
  // column 0: MAC exactly 10 (removed), column 1: MAC 11 (kept), column 2: zero
  for (int i = 0; i < 5; ++i) G.dosages(i, 0) = 2.0;
  for (int i = 0; i < 11; ++i) G.dosages(i, 1) = 1.0;
  G.variant_ids = {"a", "b", "c"};
  G.positions = {1, 2, 3};
  G.maf.resize(3);
  G.mac.resize(3);
  for (int j = 0; j < 3; ++j) {
    G.mac[j] = static_cast<long>(G.dosages.col(j).sum());
    G.maf[j] = G.mac[j] / 40.0;
  }

  const GenotypeMatrix kept = mac_filter(G, 10);
  REQUIRE(kept.variants() == 1);
  CHECK(kept.variant_ids[0] == "b");

  CHECK_THROWS(mac_filter(G, 1000));

  Rng rng(5);
  const GenotypeMatrix R = simulate_genotypes(300, 20, 0.4, log_uniform_maf(), 7);
  const GenotypeMatrix F = mac_filter(R, 10);
  int expected = 0;
  for (int j = 0; j < R.variants(); ++j)
    if (R.dosages.col(j).sum() > 10.0) ++expected;
  CHECK(F.variants() == expected);
}

TEST_CASE("ld_cluster: duplicates merge, independent columns stay single") {
  GenotypeMatrix G = simulate_genotypes(4000, 8, 0.0, log_uniform_maf(0.2, 0.5), 11);
  G.dosages.col(7) = G.dosages.col(0);  // exact duplicate
  const ClusterSet clusters = ld_cluster(G, 0.75);
  CHECK(clusters.max_cross_correlation <= 0.75);

  bool found_pair = false;
  for (const auto& cluster : clusters.clusters) {
    if (cluster.size() == 2)
      found_pair = std::find(cluster.begin(), cluster.end(), 0) != cluster.end() &&
                   std::find(cluster.begin(), cluster.end(), 7) != cluster.end();
  }
  CHECK(found_pair);
  CHECK(clusters.clusters.size() == 7);  // six singletons + the pair

  // strongly correlated data still ends below the bound by construction
  const GenotypeMatrix L = simulate_genotypes(3000, 30, 0.9, log_uniform_maf(0.2, 0.5), 13);
  const ClusterSet lc = ld_cluster(L, 0.75);
  CHECK(lc.max_cross_correlation <= 0.75);
  int members = 0;
  for (const auto& cluster : lc.clusters) members += static_cast<int>(cluster.size());
  CHECK(members == 30);  // a partition

  // constant column: correlation undefined, sits in its own cluster
  GenotypeMatrix C = simulate_genotypes(500, 5, 0.9, log_uniform_maf(0.2, 0.5), 15);
  C.dosages.col(2).setZero();
  const ClusterSet cc = ld_cluster(C, 0.75);
  for (const auto& cluster : cc.clusters)
    if (std::find(cluster.begin(), cluster.end(), 2) != cluster.end())
      CHECK(cluster.size() == 1);
}

TEST_CASE("choose_causal: coverage, determinism, separation") {
  const GenotypeMatrix G = simulate_genotypes(3000, 25, 0.8, log_uniform_maf(0.1, 0.5), 17);
  const ClusterSet clusters = ld_cluster(G, 0.75);
  REQUIRE(clusters.clusters.size() >= 4);

  const auto causal = choose_causal(clusters, 4, 23);
  CHECK(causal.size() == 4);
  CHECK(std::is_sorted(causal.begin(), causal.end()));
  CHECK(causal == choose_causal(clusters, 4, 23));

  // one causal per cluster when s equals the cluster count
  const auto all = choose_causal(clusters, static_cast<int>(clusters.clusters.size()), 29);
  std::set<int> seen(all.begin(), all.end());
  CHECK(seen.size() == clusters.clusters.size());

  CHECK_THROWS(choose_causal(clusters, static_cast<int>(clusters.clusters.size()) + 1, 1));

  // no two causal variants share |r| > 0.75
  for (std::size_t a = 0; a < causal.size(); ++a) {
    for (std::size_t b = a + 1; b < causal.size(); ++b) {
      const auto x = G.dosages.col(causal[a]), y = G.dosages.col(causal[b]);
      const double mx = x.mean(), my = y.mean();
      const double r = ((x.array() - mx) * (y.array() - my)).sum() /
                       std::sqrt((x.array() - mx).square().sum() *
                                 (y.array() - my).square().sum());
      CHECK(std::fabs(r) <= 0.75);
    }
  }
}

TEST_CASE("effect_sizes: HWE algebra and exact empirical calibration") {
  // under exact HWE variances every term is a^2, so a = sqrt(v/s)
  const std::vector<double> mafs = {0.1, 0.2, 0.3, 0.4};
  std::vector<double> hwe_vars;
  for (double m : mafs) hwe_vars.push_back(2.0 * m * (1.0 - m));
  {
    auto [a, beta] = effect_sizes(mafs, hwe_vars, 0.2);
    CHECK(a == doctest::Approx(std::sqrt(0.05)).epsilon(1e-12));
    CHECK(beta[0] < 0.0);
    for (std::size_t j = 1; j < beta.size(); ++j) CHECK(beta[j] > 0.0);
  }
  {
    auto [a, beta] = effect_sizes(mafs, hwe_vars, 0.06);
    CHECK(a == doctest::Approx(std::sqrt(0.015)).epsilon(1e-12));
  }
  {
    auto [a, beta] = effect_sizes({0.5}, {0.5}, 0.2);
    CHECK(std::fabs(beta[0]) == doctest::Approx(a * std::numbers::sqrt2).epsilon(1e-12));
  }

  // realized genotypes: sum beta^2 var matches the target to 1e-10
  const GenotypeMatrix G = simulate_genotypes(2000, 6, 0.3, log_uniform_maf(0.05, 0.5), 31);
  const std::vector<int> causal = {0, 2, 4, 5};
  std::vector<double> causal_mafs;
  for (int j : causal) causal_mafs.push_back(G.maf[j]);
  const auto vars = column_variances(G.dosages, causal);
  auto [a, beta] = effect_sizes(causal_mafs, vars, 0.2);
  double total = 0.0;
  for (std::size_t j = 0; j < causal.size(); ++j)
    total += beta[j] * beta[j] * vars[j];
  CHECK(total == doctest::Approx(0.2).epsilon(1e-10));

  CHECK_THROWS(effect_sizes({0.1}, {0.0}, 0.2));
}

TEST_CASE("gen_quantitative: variance budget, plug-in value, even burden") {
  GenotypeMatrix G;
  G.dosages.setZero(10000, 1);
  G.variant_ids = {"v1"};
  G.positions = {1};
  G.maf = {0.25};
  G.mac = {0};

  TraitSpec null_spec;
  null_spec.kind = TraitKind::Quantitative;
  null_spec.causal = {0};
  null_spec.beta = {0.0};
  const TraitData null_trait = gen_quantitative(G, null_spec, 37);
  const double mean = null_trait.y.mean();
  const double var = (null_trait.y.array() - mean).square().sum() / 10000.0;
  CHECK(var == doctest::Approx(3.0).epsilon(0.10));

  // zero noise: y - x1 = C * (beta g)^2 exactly
  GenotypeMatrix G1;
  G1.dosages.setOnes(50, 1);
  G1.variant_ids = {"v1"};
  G1.positions = {1};
  G1.maf = {0.25};
  G1.mac = {50};
  TraitSpec spec;
  spec.kind = TraitKind::Quantitative;
  spec.causal = {0};
  spec.beta = {0.5};
  spec.noise_variance = 0.0;
  const TraitData t = gen_quantitative(G1, spec, 41);
  for (int i = 0; i < 50; ++i)
    CHECK(t.y[i] - t.covariate[i] == doctest::Approx(0.5).epsilon(1e-12));

  // f is even: flipping every effect sign leaves the trait unchanged
  TraitSpec flipped = spec;
  flipped.beta = {-0.5};
  const TraitData t2 = gen_quantitative(G1, flipped, 41);
  CHECK(t.y == t2.y);
}

TEST_CASE("gen_dichotomous: intercept, prevalence, probability range") {
  CHECK(solve_prevalence_intercept(Eigen::VectorXd::Zero(100), 0.1, 1e-6) ==
        doctest::Approx(std::log(0.1 / 0.9)).epsilon(1e-4));

  const GenotypeMatrix G = simulate_genotypes(10000, 10, 0.5, log_uniform_maf(0.05, 0.5), 47);
  TraitSpec spec;
  spec.kind = TraitKind::Dichotomous;
  spec.causal = {1, 3, 5, 7};
  std::vector<double> mafs;
  for (int j : spec.causal) mafs.push_back(G.maf[j]);
  auto [a, beta] = effect_sizes(mafs, column_variances(G.dosages, spec.causal), 0.2);
  spec.beta = beta;
  const TraitData t = gen_dichotomous(G, spec, 53);
  CHECK(t.realized_prevalence == doctest::Approx(0.10).epsilon(0.1));
  CHECK(std::fabs(t.realized_prevalence - 0.10) < 0.01);
  for (int i = 0; i < 20; ++i) CHECK((t.y[i] == 0.0 || t.y[i] == 1.0));

  const TraitData t2 = gen_dichotomous(G, spec, 53);
  CHECK(t.y == t2.y);  // deterministic under the seed
}
