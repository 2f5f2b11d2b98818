#ifndef KNOCKNET_BASELINES_HPP
#define KNOCKNET_BASELINES_HPP

#include <Eigen/Core>
#include <vector>

#include "knocknet/filter.hpp"
#include "knocknet/simulate.hpp"

namespace knocknet {

// |z| larger than this cannot be resolved as a two-sided normal p-value in
// doubles; the cap keeps separated/perfect fits ordered but finite.
inline constexpr double kWaldCap = 37.0;

struct GlmFit {
  Eigen::VectorXd coefficients;    // intercept first
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd z_statistics;
  Eigen::VectorXd p_values;
  bool converged = false;
  int iterations = 0;

  // |z| of the single predictor, capped at kWaldCap.
  double importance() const;
};

struct RegularizedFit {
  Eigen::VectorXd coefficients;      // original scale, zero for dropped columns
  Eigen::VectorXd std_coefficients;  // unit-variance scale, used as importance
  double intercept = 0.0;
  double lambda = 0.0;
  std::vector<double> lambda_path;   // strictly decreasing
  std::vector<double> cv_error;      // mean CV error per path point
  bool converged = true;
};

// Single-predictor (plus intercept) linear or logistic fit. Logistic fits use
// Newton iterations (max 25, tol 1e-8); separation or a perfect linear fit is
// flagged and the z statistic capped.
GlmFit marginal_wald(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                     TraitKind kind);

// Coordinate-descent lasso on internally standardized columns over a
// log-spaced lambda path (3 decades below lambda_max), lambda picked by
// k-fold CV. Columns listed in `unpenalized` skip the L1 penalty.
RegularizedFit lasso_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        TraitKind kind, int folds = 5, int path_length = 100,
                        const std::vector<int>& unpenalized = {});

// Fit at one fixed lambda (no CV), exposed for path/KKT tests.
RegularizedFit lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         TraitKind kind, double lambda,
                         const std::vector<int>& unpenalized = {});

// Quantitative: exact solve of (X'X + lambda I) beta = X'y, no intercept.
// Dichotomous: penalized Newton with an unpenalized intercept.
RegularizedFit ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         TraitKind kind, double lambda);

// Ridge on standardized columns with lambda picked by k-fold CV over a fixed
// log grid; used by the baseline pipeline.
RegularizedFit ridge_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        TraitKind kind, int folds = 5,
                        const std::vector<int>& unpenalized = {});

enum class BaselineMethod { Marginal, Lasso, Ridge };
BaselineMethod baseline_method_from_string(const std::string& name);
std::string to_string(BaselineMethod method);

struct BaselineResult {
  std::vector<double> W;                   // importance(x_j) - importance(knockoff_j)
  std::vector<double> importance_original;
  std::vector<double> importance_knockoff;
  std::vector<SelectionResult> selections;  // one per requested alpha
};

// Single-knockoff selection pipeline: joint [X, knockoffs, covariates] fit for
// lasso/ridge (covariates unpenalized), per-feature-pair fits for the marginal
// test; W = importance difference, thresholded by the single-knockoff filter.
BaselineResult baseline_pipeline(const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd& knockoff,
                                 const Eigen::MatrixXd& cov,
                                 const Eigen::VectorXd& y, TraitKind kind,
                                 BaselineMethod method,
                                 const std::vector<double>& alphas);

}  // namespace knocknet

#endif  // KNOCKNET_BASELINES_HPP
