#include "knocknet/knockoffs.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "knocknet/rng.hpp"

namespace knocknet {

namespace {

constexpr double kRidgeScale = 1e-6;
constexpr double kConstantTol = 1e-12;

double column_variance(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double mean = x.mean();
  return (x.array() - mean).square().sum() / static_cast<double>(x.size());
}

double correlation(const Eigen::Ref<const Eigen::VectorXd>& a,
                   const Eigen::Ref<const Eigen::VectorXd>& b) {
  const double ma = a.mean(), mb = b.mean();
  const Eigen::ArrayXd ca = a.array() - ma, cb = b.array() - mb;
  const double denom = std::sqrt(ca.square().sum() * cb.square().sum());
  return denom > 0.0 ? (ca * cb).sum() / denom : 0.0;
}

}  // namespace

ConditionalFit conditional_fit(const Eigen::MatrixXd& X,
                               const KnockoffTensor& so_far, int j, int window,
                               int processed) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (j < 0 || j >= p) throw std::invalid_argument("conditional_fit: bad index");

  ConditionalFit fit;
  const Eigen::VectorXd xj = X.col(j);
  const double xj_mean = xj.mean();
  fit.intercept = xj_mean;

  if (column_variance(xj) <= kConstantTol) {
    fit.constant_response = true;
    fit.fitted = Eigen::VectorXd::Constant(n, xj_mean);
    fit.residuals = Eigen::VectorXd::Zero(n);
    return fit;
  }

  const int lo = std::max(0, j - window);
  const int hi = std::min(p - 1, j + window);
  std::vector<Eigen::VectorXd> columns;
  for (int k = lo; k <= hi; ++k) {
    if (k == j) continue;
    columns.emplace_back(X.col(k));
  }
  for (int k = lo; k < std::min(j, processed); ++k)
    for (int m = 0; m < so_far.M; ++m) columns.emplace_back(so_far.copy(k, m));

  // Drop conditioners with no variation.
  Eigen::MatrixXd D(n, columns.size());
  int used = 0;
  for (const auto& col : columns) {
    if (column_variance(col) <= kConstantTol) {
      ++fit.dropped_columns;
      continue;
    }
    D.col(used++) = col;
  }

  if (used == 0) {
    fit.fitted = Eigen::VectorXd::Constant(n, xj_mean);
    fit.residuals = xj.array() - xj_mean;
    return fit;
  }
  D.conservativeResize(Eigen::NoChange, used);

  Eigen::MatrixXd Dc = D.rowwise() - D.colwise().mean();
  Eigen::VectorXd yc = xj.array() - xj_mean;

  Eigen::MatrixXd gram(used, used);
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(Dc.transpose());
  const double ridge = kRidgeScale * gram.diagonal().sum() / used;
  gram.diagonal().array() += ridge;

  fit.coefficients =
      gram.selfadjointView<Eigen::Lower>().ldlt().solve(Dc.transpose() * yc);
  fit.fitted = (Dc * fit.coefficients).array() + xj_mean;
  fit.residuals = xj - fit.fitted;
  if (!fit.fitted.allFinite())
    throw std::runtime_error("conditional_fit: non-finite fitted values");
  return fit;
}

KnockoffTensor scit_generate(const Eigen::MatrixXd& X, int M, int window,
                             std::uint64_t seed) {
  if (M < 1) throw std::invalid_argument("scit_generate: M >= 1 required");
  if (window < 1) throw std::invalid_argument("scit_generate: window >= 1 required");
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());

  KnockoffTensor K;
  K.M = M;
  K.window = window;
  K.seed = seed;
  K.values.resize(n, p * M);

  Rng rng(seed);
  for (int j = 0; j < p; ++j) {
    const ConditionalFit fit = conditional_fit(X, K, j, window, j);
    for (int m = 0; m < M; ++m) {
      const std::vector<int> perm = rng.permutation(n);
      auto col = K.values.col(j * M + m);
      for (int i = 0; i < n; ++i) col[i] = fit.fitted[i] + fit.residuals[perm[i]];
    }
  }
  return K;
}

ExchangeabilityReport diagnostics(const Eigen::MatrixXd& X,
                                  const KnockoffTensor& K) {
  const int p = static_cast<int>(X.cols());
  const int M = K.M;
  if (K.features() != p || K.samples() != X.rows())
    throw std::invalid_argument("diagnostics: shape mismatch");

  ExchangeabilityReport rep;
  rep.mean_original.resize(p);
  rep.var_original.resize(p);
  rep.mean_knockoff.resize(p, M);
  rep.var_knockoff.resize(p, M);
  rep.self_correlation.resize(p, M);
  rep.neighbor_gap.setZero(p, M);

  for (int j = 0; j < p; ++j) {
    rep.mean_original[j] = X.col(j).mean();
    rep.var_original[j] = column_variance(X.col(j));
    const double next_corr =
        j + 1 < p ? correlation(X.col(j), X.col(j + 1)) : 0.0;
    for (int m = 0; m < M; ++m) {
      const auto knock = K.copy(j, m);
      rep.mean_knockoff(j, m) = knock.mean();
      rep.var_knockoff(j, m) = column_variance(knock);
      rep.self_correlation(j, m) = correlation(X.col(j), knock);
      if (j + 1 < p)
        rep.neighbor_gap(j, m) =
            std::fabs(correlation(knock, X.col(j + 1)) - next_corr);
    }
  }
  return rep;
}

Eigen::VectorXd ExchangeabilityReport::max_mean_gap() const {
  Eigen::VectorXd out(mean_knockoff.rows());
  for (Eigen::Index j = 0; j < mean_knockoff.rows(); ++j)
    out[j] = (mean_knockoff.row(j).array() - mean_original[j]).abs().maxCoeff();
  return out;
}

Eigen::VectorXd ExchangeabilityReport::max_neighbor_gap() const {
  Eigen::VectorXd out(neighbor_gap.rows());
  for (Eigen::Index j = 0; j < neighbor_gap.rows(); ++j)
    out[j] = neighbor_gap.row(j).maxCoeff();
  return out;
}

Eigen::MatrixXd augmented_input(const Eigen::MatrixXd& X,
                                const KnockoffTensor& K) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (K.features() != p || K.samples() != n)
    throw std::invalid_argument("augmented_input: shape mismatch");
  Eigen::MatrixXd out(n, p * (K.M + 1));
  for (int j = 0; j < p; ++j) {
    out.col(j * (K.M + 1)) = X.col(j);
    for (int m = 0; m < K.M; ++m)
      out.col(j * (K.M + 1) + 1 + m) = K.copy(j, m);
  }
  return out;
}

}  // namespace knocknet
