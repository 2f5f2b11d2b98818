#include "knocknet/baselines.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "knocknet/losses.hpp"

namespace knocknet {

namespace {

double two_sided_p(double z) {
  return std::erfc(std::fabs(z) / std::numbers::sqrt2);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kVarianceTol = 1e-12;

}  // namespace

double GlmFit::importance() const {
  if (z_statistics.size() < 2) return 0.0;
  const double z = std::fabs(z_statistics[1]);
  return std::isfinite(z) ? std::min(z, kWaldCap) : kWaldCap;
}

GlmFit marginal_wald(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     TraitKind kind) {
  const int n = static_cast<int>(x.size());
  if (y.size() != n || n < 3)
    throw std::invalid_argument("marginal_wald: bad input sizes");

  GlmFit fit;
  fit.coefficients.setZero(2);
  fit.standard_errors.setZero(2);
  fit.z_statistics.setZero(2);
  fit.p_values.setOnes(2);

  const double x_mean = x.mean();
  const double sxx = (x.array() - x_mean).square().sum();
  if (sxx <= kVarianceTol) {
    fit.converged = false;  // constant predictor carries no information
    return fit;
  }

  if (kind == TraitKind::Quantitative) {
    const double y_mean = y.mean();
    const double sxy = ((x.array() - x_mean) * (y.array() - y_mean)).sum();
    const double b1 = sxy / sxx;
    const double b0 = y_mean - b1 * x_mean;
    const double rss = (y.array() - b0 - b1 * x.array()).square().sum();
    fit.coefficients << b0, b1;
    fit.converged = true;
    fit.iterations = 1;
    const double sigma2 = rss / std::max(1, n - 2);
    if (sigma2 <= kVarianceTol) {  // perfect fit, z capped
      fit.z_statistics[1] = b1 >= 0 ? kWaldCap : -kWaldCap;
      fit.p_values[1] = two_sided_p(fit.z_statistics[1]);
      return fit;
    }
    const double se1 = std::sqrt(sigma2 / sxx);
    const double se0 = std::sqrt(sigma2 * (1.0 / n + x_mean * x_mean / sxx));
    fit.standard_errors << se0, se1;
    fit.z_statistics << b0 / se0, b1 / se1;
    fit.p_values << two_sided_p(fit.z_statistics[0]), two_sided_p(fit.z_statistics[1]);
    return fit;
  }

  // Logistic Newton iterations on (intercept, slope).
  double b0 = 0.0, b1 = 0.0;
  bool converged = false;
  int iterations = 0;
  double h00 = 0, h01 = 0, h11 = 0;
  for (int it = 0; it < 25; ++it) {
    ++iterations;
    h00 = h01 = h11 = 0.0;
    double g0 = 0.0, g1 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double mu = sigmoid(b0 + b1 * x[i]);
      const double w = mu * (1.0 - mu);
      h00 += w;
      h01 += w * x[i];
      h11 += w * x[i] * x[i];
      g0 += y[i] - mu;
      g1 += (y[i] - mu) * x[i];
    }
    const double det = h00 * h11 - h01 * h01;
    if (!(det > 1e-12) || !std::isfinite(det)) break;
    const double s0 = (h11 * g0 - h01 * g1) / det;
    const double s1 = (h00 * g1 - h01 * g0) / det;
    b0 += s0;
    b1 += s1;
    if (std::max(std::fabs(s0), std::fabs(s1)) < 1e-8) {
      converged = true;
      break;
    }
  }

  fit.coefficients << b0, b1;
  fit.iterations = iterations;
  fit.converged = converged;
  const double det = h00 * h11 - h01 * h01;
  if (!converged || !(det > 1e-12)) {
    // separation or a flat Hessian: keep the ordering meaningful via the cap
    fit.z_statistics << 0.0, b1 >= 0 ? kWaldCap : -kWaldCap;
    fit.p_values[1] = two_sided_p(fit.z_statistics[1]);
    return fit;
  }
  const double se0 = std::sqrt(h11 / det);
  const double se1 = std::sqrt(h00 / det);
  fit.standard_errors << se0, se1;
  fit.z_statistics << b0 / se0, b1 / se1;
  fit.p_values << two_sided_p(fit.z_statistics[0]), two_sided_p(fit.z_statistics[1]);
  return fit;
}

namespace {

struct Standardized {
  Eigen::MatrixXd X;          // centered, unit-variance columns (dead cols zero)
  Eigen::VectorXd mean, scale;
  std::vector<char> dead;     // zero-variance columns
};

Standardized standardize(const Eigen::MatrixXd& X) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  Standardized s;
  s.X.resize(n, p);
  s.mean.resize(p);
  s.scale.resize(p);
  s.dead.assign(p, 0);
  for (int j = 0; j < p; ++j) {
    s.mean[j] = X.col(j).mean();
    const double var = (X.col(j).array() - s.mean[j]).square().sum() / n;
    if (var <= kVarianceTol) {
      s.dead[j] = 1;
      s.scale[j] = 1.0;
      s.X.col(j).setZero();
    } else {
      s.scale[j] = std::sqrt(var);
      s.X.col(j) = (X.col(j).array() - s.mean[j]) / s.scale[j];
    }
  }
  return s;
}

double soft_threshold(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

// Weighted lasso on standardized columns: minimizes
//   (1/2n) sum_i w_i (z_i - b0 - X beta)^2 + lambda * sum_{penalized} |beta_j|
// in place, warm-started from beta/b0. Unit weights give the Gaussian case.
bool coordinate_descent(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& z,
                        const Eigen::VectorXd& w, const std::vector<char>& dead,
                        const std::vector<char>& penalized, double lambda,
                        Eigen::VectorXd& beta, double& b0) {
  const int n = static_cast<int>(Xs.rows());
  const int p = static_cast<int>(Xs.cols());
  const double inv_n = 1.0 / n;
  const double w_sum = w.sum();

  Eigen::VectorXd wx2(p);  // (1/n) sum w x^2 per column
  for (int j = 0; j < p; ++j)
    wx2[j] = dead[j] ? 0.0 : (w.array() * Xs.col(j).array().square()).sum() * inv_n;

  Eigen::VectorXd r = z - Xs * beta;
  r.array() -= b0;

  auto update = [&](int j) {
    if (dead[j] || wx2[j] <= 0.0) return 0.0;
    const double old = beta[j];
    const double rho = (w.array() * Xs.col(j).array() * r.array()).sum() * inv_n +
                       wx2[j] * old;
    const double next = penalized[j] ? soft_threshold(rho, lambda) / wx2[j]
                                     : rho / wx2[j];
    if (next != old) {
      r += Xs.col(j) * (old - next);
      beta[j] = next;
    }
    return std::fabs(next - old);
  };
  auto update_intercept = [&]() {
    const double shift = (w.array() * r.array()).sum() / w_sum;
    b0 += shift;
    r.array() -= shift;
    return std::fabs(shift);
  };

  const double tol = 1e-6;
  const int max_sweeps = 1000;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    // full sweep owns convergence; active-set cycling only accelerates it
    double delta = update_intercept();
    for (int j = 0; j < p; ++j) delta = std::max(delta, update(j));
    if (delta < tol) return true;

    std::vector<int> active;
    for (int j = 0; j < p; ++j)
      if (beta[j] != 0.0 || !penalized[j]) active.push_back(j);
    for (int inner = 0; inner < 30; ++inner) {
      double inner_delta = update_intercept();
      for (int j : active) inner_delta = std::max(inner_delta, update(j));
      if (inner_delta < tol) break;
    }
  }
  return false;
}

std::vector<double> lambda_grid(double lambda_max, int path_length) {
  std::vector<double> grid(path_length);
  if (path_length == 1) {
    grid[0] = lambda_max;
    return grid;
  }
  const double log_max = std::log(lambda_max);
  const double log_min = std::log(lambda_max * 1e-3);
  for (int i = 0; i < path_length; ++i)
    grid[i] = std::exp(log_max + (log_min - log_max) * i / (path_length - 1.0));
  return grid;
}

struct LassoPathResult {
  std::vector<Eigen::VectorXd> betas;  // standardized scale per lambda
  std::vector<double> intercepts;      // on the standardized-X scale
  bool converged = true;
};

// Path fit with warm starts; Gaussian directly, logistic via outer IRLS.
LassoPathResult lasso_path(const Standardized& s, const Eigen::VectorXd& y,
                           TraitKind kind, const std::vector<char>& penalized,
                           const std::vector<double>& grid) {
  const int n = static_cast<int>(s.X.rows());
  const int p = static_cast<int>(s.X.cols());
  LassoPathResult out;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double b0 = kind == TraitKind::Quantitative
                  ? y.mean()
                  : std::log(std::clamp(y.mean(), 1e-6, 1.0 - 1e-6) /
                             (1.0 - std::clamp(y.mean(), 1e-6, 1.0 - 1e-6)));

  const Eigen::VectorXd unit = Eigen::VectorXd::Ones(n);
  for (double lambda : grid) {
    if (kind == TraitKind::Quantitative) {
      if (!coordinate_descent(s.X, y, unit, s.dead, penalized, lambda, beta, b0))
        out.converged = false;
    } else {
      for (int outer = 0; outer < 8; ++outer) {
        const Eigen::VectorXd eta = (s.X * beta).array() + b0;
        Eigen::VectorXd mu(n), w(n), z(n);
        for (int i = 0; i < n; ++i) {
          mu[i] = sigmoid(eta[i]);
          w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-5);
          z[i] = eta[i] + (y[i] - mu[i]) / w[i];
        }
        const Eigen::VectorXd before = beta;
        const double b0_before = b0;
        if (!coordinate_descent(s.X, z, w, s.dead, penalized, lambda, beta, b0))
          out.converged = false;
        const double change = std::max((beta - before).cwiseAbs().maxCoeff(),
                                       std::fabs(b0 - b0_before));
        if (change < 1e-6) break;
      }
    }
    out.betas.push_back(beta);
    out.intercepts.push_back(b0);
  }
  return out;
}

// Smallest lambda with an all-zero penalized solution; the same null-residual
// bound serves the logistic case with mu = mean(y).
double lambda_max_value(const Standardized& s, const Eigen::VectorXd& y,
                        const std::vector<char>& penalized) {
  const int n = static_cast<int>(s.X.rows());
  const double offset = y.mean();
  double best = 0.0;
  for (int j = 0; j < s.X.cols(); ++j) {
    if (s.dead[j] || !penalized[j]) continue;
    const double dot = (s.X.col(j).array() * (y.array() - offset)).sum() / n;
    best = std::max(best, std::fabs(dot));
  }
  return best > 0.0 ? best : 1.0;
}

double held_out_error(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const std::vector<int>& rows, TraitKind kind,
                      const Standardized& strain, const Eigen::VectorXd& beta_std,
                      double b0_std) {
  double total = 0.0;
  for (int i : rows) {
    double eta = b0_std;
    for (int j = 0; j < X.cols(); ++j) {
      if (strain.dead[j] || beta_std[j] == 0.0) continue;
      eta += beta_std[j] * (X(i, j) - strain.mean[j]) / strain.scale[j];
    }
    if (kind == TraitKind::Quantitative) {
      const double diff = y[i] - eta;
      total += diff * diff;
    } else {
      const double mu = std::clamp(sigmoid(eta), kBceClamp, 1.0 - kBceClamp);
      total -= y[i] * std::log(mu) + (1.0 - y[i]) * std::log(1.0 - mu);
    }
  }
  return total / static_cast<double>(rows.size());
}

RegularizedFit finalize_fit(const Eigen::MatrixXd& X, const Standardized& s,
                            const Eigen::VectorXd& beta_std, double b0_std,
                            double lambda) {
  RegularizedFit fit;
  fit.lambda = lambda;
  fit.std_coefficients = beta_std;
  fit.coefficients.setZero(X.cols());
  double intercept = b0_std;
  for (int j = 0; j < X.cols(); ++j) {
    if (s.dead[j]) continue;
    fit.coefficients[j] = beta_std[j] / s.scale[j];
    intercept -= fit.coefficients[j] * s.mean[j];
  }
  fit.intercept = intercept;
  return fit;
}

std::vector<char> penalized_mask(int p, const std::vector<int>& unpenalized) {
  std::vector<char> mask(p, 1);
  for (int j : unpenalized) mask.at(j) = 0;
  return mask;
}

}  // namespace

RegularizedFit lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         TraitKind kind, double lambda,
                         const std::vector<int>& unpenalized) {
  const Standardized s = standardize(X);
  const auto penalized = penalized_mask(static_cast<int>(X.cols()), unpenalized);
  const LassoPathResult path = lasso_path(s, y, kind, penalized, {lambda});
  RegularizedFit fit =
      finalize_fit(X, s, path.betas.back(), path.intercepts.back(), lambda);
  fit.converged = path.converged;
  fit.lambda_path = {lambda};
  return fit;
}

RegularizedFit lasso_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        TraitKind kind, int folds, int path_length,
                        const std::vector<int>& unpenalized) {
  const int n = static_cast<int>(X.rows());
  if (folds < 2 || folds > n) throw std::invalid_argument("lasso_cv: bad folds");
  const auto penalized = penalized_mask(static_cast<int>(X.cols()), unpenalized);

  const Standardized s_full = standardize(X);
  const std::vector<double> grid =
      lambda_grid(lambda_max_value(s_full, y, penalized), path_length);

  std::vector<double> cv_error(grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> held, kept;
    for (int i = 0; i < n; ++i)
      (i % folds == f ? held : kept).push_back(i);

    Eigen::MatrixXd Xt(kept.size(), X.cols());
    Eigen::VectorXd yt(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      Xt.row(i) = X.row(kept[i]);
      yt[i] = y[kept[i]];
    }
    const Standardized st = standardize(Xt);
    const LassoPathResult path = lasso_path(st, yt, kind, penalized, grid);
    for (std::size_t g = 0; g < grid.size(); ++g)
      cv_error[g] +=
          held_out_error(X, y, held, kind, st, path.betas[g], path.intercepts[g]);
  }
  for (double& e : cv_error) e /= folds;

  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (cv_error[g] < cv_error[best]) best = g;

  const LassoPathResult full = lasso_path(s_full, y, kind, penalized, grid);
  RegularizedFit fit =
      finalize_fit(X, s_full, full.betas[best], full.intercepts[best], grid[best]);
  fit.converged = full.converged;
  fit.lambda_path = grid;
  fit.cv_error = cv_error;
  return fit;
}

RegularizedFit ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         TraitKind kind, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("ridge_fit: lambda >= 0");
  const int p = static_cast<int>(X.cols());
  RegularizedFit fit;
  fit.lambda = lambda;

  if (kind == TraitKind::Quantitative) {
    Eigen::MatrixXd gram = X.transpose() * X;
    gram.diagonal().array() += lambda;
    const auto ldlt = gram.ldlt();
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("ridge_fit: singular system");
    fit.coefficients = ldlt.solve(X.transpose() * y);
    fit.std_coefficients = fit.coefficients;
    fit.intercept = 0.0;
    return fit;
  }

  // Penalized Newton with an unpenalized intercept prepended.
  const int n = static_cast<int>(X.rows());
  Eigen::MatrixXd D(n, p + 1);
  D.col(0).setOnes();
  D.rightCols(p) = X;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd eta = D * beta;
    Eigen::VectorXd mu(n), w(n);
    for (int i = 0; i < n; ++i) {
      mu[i] = sigmoid(eta[i]);
      w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-10);
    }
    Eigen::MatrixXd H = D.transpose() * w.asDiagonal() * D;
    for (int j = 1; j <= p; ++j) H(j, j) += lambda;
    Eigen::VectorXd g = D.transpose() * (y - mu);
    g.tail(p) -= lambda * beta.tail(p);
    const Eigen::VectorXd step = H.ldlt().solve(g);
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-8) break;
  }
  fit.intercept = beta[0];
  fit.coefficients = beta.tail(p);
  fit.std_coefficients = fit.coefficients;
  return fit;
}

RegularizedFit ridge_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        TraitKind kind, int folds,
                        const std::vector<int>& unpenalized) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  const auto penalized = penalized_mask(p, unpenalized);
  const std::vector<double> grid = lambda_grid(1e3, 20);  // down to 1

  const Standardized s_full = standardize(X);
  auto solve_at = [&](const Standardized& s, const Eigen::VectorXd& yy,
                      double lambda) -> std::pair<Eigen::VectorXd, double> {
    if (kind == TraitKind::Quantitative) {
      const double offset = yy.mean();
      Eigen::MatrixXd gram = s.X.transpose() * s.X;
      for (int j = 0; j < p; ++j)
        if (penalized[j]) gram(j, j) += lambda;
        else gram(j, j) += s.dead[j] ? 1.0 : 0.0;  // keep dead rows solvable
      const Eigen::VectorXd beta =
          gram.ldlt().solve(s.X.transpose() * (yy.array() - offset).matrix());
      return {beta, offset};
    }
    // logistic: penalized Newton on standardized columns
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    double b0 = 0.0;
    const int rows = static_cast<int>(s.X.rows());
    for (int it = 0; it < 50; ++it) {
      const Eigen::VectorXd eta = (s.X * beta).array() + b0;
      Eigen::VectorXd mu(rows), w(rows);
      for (int i = 0; i < rows; ++i) {
        mu[i] = sigmoid(eta[i]);
        w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-10);
      }
      Eigen::MatrixXd H(p + 1, p + 1);
      H(0, 0) = w.sum();
      H.block(0, 1, 1, p) = (w.asDiagonal() * s.X).colwise().sum();
      H.block(1, 0, p, 1) = H.block(0, 1, 1, p).transpose();
      H.block(1, 1, p, p) = s.X.transpose() * w.asDiagonal() * s.X;
      for (int j = 0; j < p; ++j)
        H(j + 1, j + 1) += penalized[j] ? lambda : (s.dead[j] ? 1.0 : 0.0);
      Eigen::VectorXd g(p + 1);
      g[0] = (yy - mu).sum();
      g.tail(p) = s.X.transpose() * (yy - mu);
      for (int j = 0; j < p; ++j)
        if (penalized[j]) g[j + 1] -= lambda * beta[j];
      const Eigen::VectorXd step = H.ldlt().solve(g);
      b0 += step[0];
      beta += step.tail(p);
      if (step.cwiseAbs().maxCoeff() < 1e-8) break;
    }
    return {beta, b0};
  };

  std::vector<double> cv_error(grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> held, kept;
    for (int i = 0; i < n; ++i)
      (i % folds == f ? held : kept).push_back(i);
    Eigen::MatrixXd Xt(kept.size(), p);
    Eigen::VectorXd yt(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      Xt.row(i) = X.row(kept[i]);
      yt[i] = y[kept[i]];
    }
    const Standardized st = standardize(Xt);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto [beta, b0] = solve_at(st, yt, grid[g]);
      cv_error[g] += held_out_error(X, y, held, kind, st, beta, b0);
    }
  }
  for (double& e : cv_error) e /= folds;

  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (cv_error[g] < cv_error[best]) best = g;

  const auto [beta, b0] = solve_at(s_full, y, grid[best]);
  RegularizedFit fit = finalize_fit(X, s_full, beta, b0, grid[best]);
  fit.lambda_path = grid;
  fit.cv_error = cv_error;
  return fit;
}

BaselineMethod baseline_method_from_string(const std::string& name) {
  if (name == "marginal") return BaselineMethod::Marginal;
  if (name == "lasso") return BaselineMethod::Lasso;
  if (name == "ridge") return BaselineMethod::Ridge;
  throw std::invalid_argument("unknown baseline method: " + name);
}

std::string to_string(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::Marginal: return "marginal";
    case BaselineMethod::Lasso: return "lasso";
    case BaselineMethod::Ridge: return "ridge";
  }
  return "?";
}

BaselineResult baseline_pipeline(const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd& knockoff,
                                 const Eigen::MatrixXd& cov,
                                 const Eigen::VectorXd& y, TraitKind kind,
                                 BaselineMethod method,
                                 const std::vector<double>& alphas) {
  const int p = static_cast<int>(X.cols());
  if (knockoff.cols() != p || knockoff.rows() != X.rows())
    throw std::invalid_argument("baseline_pipeline: knockoff shape mismatch");

  BaselineResult out;
  out.importance_original.resize(p);
  out.importance_knockoff.resize(p);

  if (method == BaselineMethod::Marginal) {
    for (int j = 0; j < p; ++j) {
      out.importance_original[j] = marginal_wald(X.col(j), y, kind).importance();
      out.importance_knockoff[j] =
          marginal_wald(knockoff.col(j), y, kind).importance();
    }
  } else {
    Eigen::MatrixXd joint(X.rows(), 2 * p + cov.cols());
    joint.leftCols(p) = X;
    joint.middleCols(p, p) = knockoff;
    if (cov.cols() > 0) joint.rightCols(cov.cols()) = cov;
    std::vector<int> unpenalized;
    for (int c = 0; c < cov.cols(); ++c) unpenalized.push_back(2 * p + c);

    const RegularizedFit fit =
        method == BaselineMethod::Lasso
            ? lasso_cv(joint, y, kind, 5, 100, unpenalized)
            : ridge_cv(joint, y, kind, 5, unpenalized);
    for (int j = 0; j < p; ++j) {
      out.importance_original[j] = std::fabs(fit.std_coefficients[j]);
      out.importance_knockoff[j] = std::fabs(fit.std_coefficients[p + j]);
    }
  }

  out.W.resize(p);
  for (int j = 0; j < p; ++j)
    out.W[j] = w_single(out.importance_original[j], out.importance_knockoff[j]);
  for (double alpha : alphas) out.selections.push_back(selection_single(out.W, alpha));
  return out;
}

}  // namespace knocknet
