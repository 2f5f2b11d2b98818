#include "knocknet/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace knocknet {

double inverse_normal_cdf(double u) {
  if (!(u > 0.0 && u < 1.0))
    throw std::invalid_argument("inverse_normal_cdf: u must be in (0,1)");

  // Acklam's rational approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (u < plow) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - plow) {
    const double q = u - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // One Halley step against the exact CDF.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - u;
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  const double w = e / pdf;
  return x - w / (1.0 + 0.5 * x * w);
}

MafSampler log_uniform_maf(double lo, double hi) {
  if (!(lo > 0.0 && lo <= hi && hi <= 0.5))
    throw std::invalid_argument("log_uniform_maf: need 0 < lo <= hi <= 0.5");
  const double log_lo = std::log(lo), log_hi = std::log(hi);
  return [log_lo, log_hi](Rng& rng) {
    return std::exp(rng.uniform(log_lo, log_hi));
  };
}

GenotypeMatrix simulate_genotypes(int n, int p, double rho,
                                  const MafSampler& maf_sampler,
                                  std::uint64_t seed, long region_bp) {
  if (n < 1 || p < 1) throw std::invalid_argument("simulate_genotypes: n,p >= 1");
  if (!(rho >= 0.0 && rho < 1.0))
    throw std::invalid_argument("simulate_genotypes: rho must be in [0,1)");

  Rng rng(seed);
  std::vector<double> target_maf(p), thresholds(p);
  for (int j = 0; j < p; ++j) {
    const double m = maf_sampler(rng);
    if (!(m > 0.0 && m <= 0.5))
      throw std::invalid_argument("simulate_genotypes: MAF outside (0, 0.5]");
    target_maf[j] = m;
    thresholds[j] = inverse_normal_cdf(m);
  }

  GenotypeMatrix G;
  G.dosages.setZero(n, p);
  const double innovation = std::sqrt(1.0 - rho * rho);
  for (int i = 0; i < n; ++i) {
    for (int hap = 0; hap < 2; ++hap) {
      double z = rng.normal();
      for (int j = 0; j < p; ++j) {
        if (j > 0) z = rho * z + innovation * rng.normal();
        if (z < thresholds[j]) G.dosages(i, j) += 1.0;
      }
    }
  }

  G.variant_ids.resize(p);
  G.positions.resize(p);
  G.maf.resize(p);
  G.mac.resize(p);
  const double spacing = static_cast<double>(region_bp) / p;
  for (int j = 0; j < p; ++j) {
    G.variant_ids[j] = "v" + std::to_string(j + 1);
    G.positions[j] = static_cast<long>(std::llround((j + 1) * spacing));
    long count = static_cast<long>(std::llround(G.dosages.col(j).sum()));
    if (count > n) {  // recorded allele ended up major: recode to minor
      G.dosages.col(j) = 2.0 - G.dosages.col(j).array();
      count = 2L * n - count;
    }
    G.mac[j] = count;
    G.maf[j] = static_cast<double>(count) / (2.0 * n);
  }
  return G;
}

GenotypeMatrix mac_filter(const GenotypeMatrix& G, long mac_min) {
  std::vector<int> keep;
  for (int j = 0; j < G.variants(); ++j)
    if (G.mac[j] > mac_min) keep.push_back(j);
  if (keep.empty())
    throw std::runtime_error("mac_filter: no variants pass MAC > " +
                             std::to_string(mac_min));

  GenotypeMatrix out;
  out.dosages.resize(G.samples(), keep.size());
  out.variant_ids.resize(keep.size());
  out.positions.resize(keep.size());
  out.maf.resize(keep.size());
  out.mac.resize(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.dosages.col(k) = G.dosages.col(keep[k]);
    out.variant_ids[k] = G.variant_ids[keep[k]];
    out.positions[k] = G.positions[keep[k]];
    out.maf[k] = G.maf[keep[k]];
    out.mac[k] = G.mac[keep[k]];
  }
  return out;
}

namespace {

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
  Eigen::VectorXd norms = centered.colwise().norm();
  Eigen::MatrixXd R = centered.transpose() * centered;
  for (int a = 0; a < R.rows(); ++a) {
    for (int b = 0; b < R.cols(); ++b) {
      const double denom = norms[a] * norms[b];
      R(a, b) = denom > 0.0 ? R(a, b) / denom : 0.0;  // constant column: r = 0
    }
  }
  return R;
}

}  // namespace

ClusterSet ld_cluster(const GenotypeMatrix& G, double r_max) {
  const int p = G.variants();
  if (p < 1) throw std::invalid_argument("ld_cluster: empty matrix");
  const Eigen::MatrixXd R = correlation_matrix(G.dosages);

  std::vector<std::vector<int>> clusters(p);
  for (int j = 0; j < p; ++j) clusters[j] = {j};

  auto violates = [&](const std::vector<int>& a, const std::vector<int>& b) {
    for (int va : a)
      for (int vb : b)
        if (std::fabs(R(va, vb)) > r_max) return true;
    return false;
  };
  auto avg_dissimilarity = [&](const std::vector<int>& a,
                               const std::vector<int>& b) {
    double total = 0.0;
    for (int va : a)
      for (int vb : b) total += 1.0 - std::fabs(R(va, vb));
    return total / (static_cast<double>(a.size()) * b.size());
  };

  // Average-linkage order, merging only while some cross-cluster pair is
  // still above r_max.
  for (;;) {
    int best_a = -1, best_b = -1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        if (!violates(clusters[a], clusters[b])) continue;
        const double d = avg_dissimilarity(clusters[a], clusters[b]);
        if (d < best) {
          best = d;
          best_a = static_cast<int>(a);
          best_b = static_cast<int>(b);
        }
      }
    }
    if (best_a < 0) break;
    auto& target = clusters[best_a];
    target.insert(target.end(), clusters[best_b].begin(), clusters[best_b].end());
    std::sort(target.begin(), target.end());
    clusters.erase(clusters.begin() + best_b);
  }

  ClusterSet out;
  out.clusters = std::move(clusters);
  out.max_cross_correlation = 0.0;
  for (std::size_t a = 0; a < out.clusters.size(); ++a)
    for (std::size_t b = a + 1; b < out.clusters.size(); ++b)
      for (int va : out.clusters[a])
        for (int vb : out.clusters[b])
          out.max_cross_correlation =
              std::max(out.max_cross_correlation, std::fabs(R(va, vb)));
  return out;
}

std::vector<int> choose_causal(const ClusterSet& clusters, int s,
                               std::uint64_t seed) {
  const int k = static_cast<int>(clusters.clusters.size());
  if (s < 1) throw std::invalid_argument("choose_causal: s >= 1 required");
  if (k < s)
    throw std::runtime_error("choose_causal: fewer clusters (" +
                             std::to_string(k) + ") than causal variants (" +
                             std::to_string(s) + ")");
  Rng rng(seed);
  std::vector<int> order = rng.permutation(k);
  std::vector<int> causal;
  causal.reserve(s);
  for (int i = 0; i < s; ++i) {
    const auto& members = clusters.clusters[order[i]];
    causal.push_back(members[rng.uniform_int(members.size())]);
  }
  std::sort(causal.begin(), causal.end());
  return causal;
}

std::vector<double> column_variances(const Eigen::MatrixXd& X,
                                     const std::vector<int>& columns) {
  std::vector<double> out;
  out.reserve(columns.size());
  const double n = static_cast<double>(X.rows());
  for (int j : columns) {
    const double mean = X.col(j).mean();
    out.push_back((X.col(j).array() - mean).square().sum() / n);
  }
  return out;
}

std::pair<double, std::vector<double>> effect_sizes(
    const std::vector<double>& mafs, const std::vector<double>& variances,
    double variance_target) {
  if (mafs.empty() || mafs.size() != variances.size())
    throw std::invalid_argument("effect_sizes: input length mismatch");
  if (variance_target <= 0.0)
    throw std::invalid_argument("effect_sizes: variance target must be > 0");

  double denom = 0.0;
  for (std::size_t j = 0; j < mafs.size(); ++j) {
    if (variances[j] <= 0.0)
      throw std::runtime_error("effect_sizes: zero-variance causal variant");
    denom += variances[j] / (2.0 * mafs[j] * (1.0 - mafs[j]));
  }
  const double a = std::sqrt(variance_target / denom);

  std::vector<double> beta(mafs.size());
  for (std::size_t j = 0; j < mafs.size(); ++j) {
    beta[j] = a / std::sqrt(2.0 * mafs[j] * (1.0 - mafs[j]));
    if (j == 0) beta[j] = -beta[j];  // one protective variant
  }
  return {a, beta};
}

namespace {

Eigen::VectorXd genetic_burden(const GenotypeMatrix& G, const TraitSpec& spec) {
  if (spec.causal.size() != spec.beta.size())
    throw std::invalid_argument("trait: causal/beta length mismatch");
  Eigen::VectorXd burden = Eigen::VectorXd::Zero(G.samples());
  for (std::size_t j = 0; j < spec.causal.size(); ++j)
    burden += spec.beta[j] * G.dosages.col(spec.causal[j]);
  return burden;
}

}  // namespace

TraitData gen_quantitative(const GenotypeMatrix& G, const TraitSpec& spec,
                           std::uint64_t seed) {
  const int n = G.samples();
  Rng rng(seed);
  TraitData data;
  data.covariate.resize(n);
  for (int i = 0; i < n; ++i) data.covariate[i] = rng.normal();

  const Eigen::VectorXd burden = genetic_burden(G, spec);
  const double noise_sd = std::sqrt(spec.noise_variance);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.y[i] = data.covariate[i] +
                spec.burden_scale_c * burden[i] * burden[i] +
                rng.normal(0.0, noise_sd);
  }
  return data;
}

double solve_prevalence_intercept(const Eigen::VectorXd& eta, double prevalence,
                                  double tol) {
  const int n = static_cast<int>(eta.size());
  auto mean_mu = [&](double beta0) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += 1.0 / (1.0 + std::exp(-(beta0 + eta[i])));
    return total / n;
  };
  double lo = -40.0, hi = 40.0;
  if (mean_mu(lo) > prevalence || mean_mu(hi) < prevalence)
    throw std::runtime_error(
        "solve_prevalence_intercept: bisection failed to bracket");
  double beta0 = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    beta0 = 0.5 * (lo + hi);
    const double value = mean_mu(beta0);
    if (std::fabs(value - prevalence) <= tol) break;
    if (value < prevalence)
      lo = beta0;
    else
      hi = beta0;
  }
  return beta0;
}

TraitData gen_dichotomous(const GenotypeMatrix& G, const TraitSpec& spec,
                          std::uint64_t seed) {
  const int n = G.samples();
  Rng rng(seed);
  TraitData data;
  data.covariate.resize(n);
  for (int i = 0; i < n; ++i) data.covariate[i] = rng.normal();

  const Eigen::VectorXd burden = genetic_burden(G, spec);
  Eigen::VectorXd eta(n);
  for (int i = 0; i < n; ++i)
    eta[i] = data.covariate[i] + spec.burden_scale_c * burden[i] * burden[i];

  const double beta0 = solve_prevalence_intercept(eta, spec.prevalence);
  data.intercept = beta0;

  data.y.resize(n);
  double cases = 0.0;
  for (int i = 0; i < n; ++i) {
    const double mu = 1.0 / (1.0 + std::exp(-(beta0 + eta[i])));
    data.y[i] = rng.bernoulli(mu) ? 1.0 : 0.0;
    cases += data.y[i];
  }
  data.realized_prevalence = cases / n;
  return data;
}

}  // namespace knocknet
