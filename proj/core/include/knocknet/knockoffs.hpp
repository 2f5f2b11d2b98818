#ifndef KNOCKNET_KNOCKOFFS_HPP
#define KNOCKNET_KNOCKOFFS_HPP

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace knocknet {

// M knockoff copies per feature. Column j*M + m holds copy m of feature j.
struct KnockoffTensor {
  Eigen::MatrixXd values;
  int M = 1;
  int window = 100;
  std::uint64_t seed = 0;

  int samples() const { return static_cast<int>(values.rows()); }
  int features() const { return static_cast<int>(values.cols()) / M; }
  Eigen::MatrixXd::ConstColXpr copy(int j, int m) const {
    return values.col(j * M + m);
  }
};

struct ConditionalFit {
  Eigen::VectorXd coefficients;  // one per retained conditioning column
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  double intercept = 0.0;
  int dropped_columns = 0;        // constant conditioners removed
  bool constant_response = false; // x_j had zero variance
};

// Diagnostics for the exchangeability of (X, knockoffs): marginal moments,
// original<->knockoff correlation, and how well knockoffs reproduce the
// correlation with the next feature.
struct ExchangeabilityReport {
  Eigen::VectorXd mean_original, var_original;
  Eigen::MatrixXd mean_knockoff, var_knockoff;  // p x M
  Eigen::MatrixXd self_correlation;             // p x M, corr(x_j, knockoff m)
  Eigen::MatrixXd neighbor_gap;                 // p x M, last row zero

  Eigen::VectorXd max_mean_gap() const;      // per feature, over copies
  Eigen::VectorXd max_neighbor_gap() const;  // per feature, over copies
};

// Ridge-stabilized least squares of x_j on the originals within `window`
// positions (j excluded) plus every knockoff copy of already-processed
// features in that window. Constant conditioning columns are dropped.
ConditionalFit conditional_fit(const Eigen::MatrixXd& X,
                               const KnockoffTensor& so_far, int j, int window,
                               int processed);

// Sequential conditional generation: per feature in position order, fit the
// conditional mean, then each knockoff copy is fitted values plus an
// independently permuted copy of the residuals.
KnockoffTensor scit_generate(const Eigen::MatrixXd& X, int M, int window,
                             std::uint64_t seed);

ExchangeabilityReport diagnostics(const Eigen::MatrixXd& X,
                                  const KnockoffTensor& K);

// Interleaves original and knockoff copies into the n x p(M+1) network input;
// slot 0 of every feature block is the original column.
Eigen::MatrixXd augmented_input(const Eigen::MatrixXd& X, const KnockoffTensor& K);

}  // namespace knocknet

#endif  // KNOCKNET_KNOCKOFFS_HPP
