#ifndef KNOCKNET_SIMULATE_HPP
#define KNOCKNET_SIMULATE_HPP

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "knocknet/rng.hpp"

namespace knocknet {

// n x p dosage matrix (0/1/2 copies of the minor allele) with per-variant
// metadata. MAF is computed from the realized counts, so maf = mac / (2n).
struct GenotypeMatrix {
  Eigen::MatrixXd dosages;
  std::vector<std::string> variant_ids;
  std::vector<long> positions;
  std::vector<double> maf;
  std::vector<long> mac;

  int samples() const { return static_cast<int>(dosages.rows()); }
  int variants() const { return static_cast<int>(dosages.cols()); }
};

enum class TraitKind { Quantitative, Dichotomous };

struct TraitSpec {
  TraitKind kind = TraitKind::Quantitative;
  std::vector<int> causal;       // variant indices, beta[0] is the negative one
  std::vector<double> beta;
  double effect_scale_a = 0.0;   // the solved scale behind each beta
  double burden_scale_c = 2.0;   // C in C * f(burden), f(x) = x^2
  double noise_variance = 2.0;   // quantitative only
  double prevalence = 0.10;      // dichotomous only
  double intercept = 0.0;        // solved for dichotomous traits
};

struct TraitData {
  Eigen::VectorXd y;
  Eigen::VectorXd covariate;  // the N(0,1) covariate entering the trait model
  double intercept = 0.0;     // solved beta_0 (dichotomous)
  double realized_prevalence = 0.0;
};

struct ClusterSet {
  std::vector<std::vector<int>> clusters;
  double max_cross_correlation = 0.0;  // max |r| across different clusters
};

using MafSampler = std::function<double(Rng&)>;

// Log-uniform MAF sampler on [lo, hi]; the default range keeps a rare tail.
MafSampler log_uniform_maf(double lo = 0.005, double hi = 0.5);

// Two independent AR(1) latent-Gaussian haplotypes per individual, thresholded
// at the per-variant MAF quantile; dosage = haplotype sum, coded to the minor
// allele. rho controls local LD.
GenotypeMatrix simulate_genotypes(int n, int p, double rho,
                                  const MafSampler& maf_sampler,
                                  std::uint64_t seed, long region_bp = 200000);

// Keeps variants with MAC strictly greater than mac_min.
GenotypeMatrix mac_filter(const GenotypeMatrix& G, long mac_min = 10);

// Average-linkage agglomerative clustering on 1 - |r|, merging until no two
// clusters share a pair with |r| > r_max. Constant columns get their own
// cluster.
ClusterSet ld_cluster(const GenotypeMatrix& G, double r_max = 0.75);

// s distinct clusters chosen uniformly, one uniform member from each;
// returned ascending.
std::vector<int> choose_causal(const ClusterSet& clusters, int s,
                               std::uint64_t seed);

// Solves a in beta_j = a / sqrt(2 m_j (1 - m_j)) so that
// sum_j beta_j^2 * var_j equals variance_target exactly; beta[0] negative.
std::pair<double, std::vector<double>> effect_sizes(
    const std::vector<double>& mafs, const std::vector<double>& variances,
    double variance_target);

// Empirical per-column variance (1/n normalization).
std::vector<double> column_variances(const Eigen::MatrixXd& X,
                                     const std::vector<int>& columns);

// y_i = x_i + C * (burden_i)^2 + eps_i with eps ~ N(0, noise_variance).
TraitData gen_quantitative(const GenotypeMatrix& G, const TraitSpec& spec,
                           std::uint64_t seed);

// logit(mu_i) = beta_0 + x_i + C * (burden_i)^2, beta_0 solved by bisection so
// that mean(mu) hits the target prevalence within 1e-3; y ~ Bernoulli(mu).
TraitData gen_dichotomous(const GenotypeMatrix& G, const TraitSpec& spec,
                          std::uint64_t seed);

// Bisection for beta_0 with mean_i logistic(beta_0 + eta_i) = prevalence.
double solve_prevalence_intercept(const Eigen::VectorXd& eta, double prevalence,
                                  double tol = 1e-3);

// Inverse standard normal CDF (Acklam's rational approximation plus one
// Halley refinement; ~1e-15 relative error).
double inverse_normal_cdf(double u);

}  // namespace knocknet

#endif  // KNOCKNET_SIMULATE_HPP
