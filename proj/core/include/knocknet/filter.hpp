#ifndef KNOCKNET_FILTER_HPP
#define KNOCKNET_FILTER_HPP

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "knocknet/tensor.hpp"

namespace knocknet {

// p x (M+1) matrix of non-negative importance scores; column 0 is the
// original feature, columns 1..M its knockoff copies.
struct ImportanceMatrix {
  Eigen::MatrixXd T;
  std::vector<std::string> feature_ids;

  int features() const { return static_cast<int>(T.rows()); }
  int knockoffs() const { return static_cast<int>(T.cols()) - 1; }
};

// Per-feature multiple-knockoff statistics.
struct KnockoffStats {
  std::vector<int> kappa;      // index of the winning copy, 0 = original
  std::vector<double> tau;     // top score minus median of the rest
  std::vector<double> W;       // tau when the original wins, else 0
  std::vector<double> q;       // knockoff Q-values, 1 when kappa != 0
  int M = 0;
};

struct SelectionResult {
  double target_fdr = 0.0;
  std::optional<double> threshold;  // empty when nothing can be selected
  std::vector<int> selected;        // feature indices, ascending
};

// Collapse an n x p x (M+1) gradient tensor: mean over samples first, then
// absolute value.
ImportanceMatrix importance_matrix(const Tensor& grads,
                                   std::vector<std::string> feature_ids = {});

// kappa/tau for one row of scores (length M+1, all >= 0, M >= 2). Ties in the
// argmax go to the original, then to the lowest knockoff index. tau removes
// the single largest score and takes the median of the remaining M.
std::pair<int, double> kappa_tau(const Eigen::VectorXd& row);

// Multiple-knockoff statistic: (T0 - median of knockoffs) when the original
// ties or beats every knockoff, 0 otherwise.
double w_multiple(const Eigen::VectorXd& row);

// Single-knockoff statistic; may be negative.
double w_single(double t_original, double t_knockoff);

KnockoffStats knockoff_stats(const ImportanceMatrix& T);

// Smallest positive tau threshold whose estimated FDP is <= alpha, or empty.
std::optional<double> threshold_multiple(const std::vector<int>& kappa,
                                         const std::vector<double>& tau,
                                         double alpha, int M);

std::optional<double> threshold_single(const std::vector<double>& W, double alpha);

// Q-values for the multiple-knockoff filter; selecting {q <= alpha} is
// equivalent to selecting by threshold_multiple at alpha.
std::vector<double> q_values(const std::vector<int>& kappa,
                             const std::vector<double>& tau, int M);

// Single-knockoff analogue: smallest alpha at which feature j would be
// selected; 1 for W <= 0.
std::vector<double> q_values_single(const std::vector<double>& W);

std::vector<int> select_multiple(const std::vector<int>& kappa,
                                 const std::vector<double>& tau, double alpha,
                                 int M);
std::vector<int> select_by_q(const std::vector<double>& q, double alpha);
std::vector<int> select_single(const std::vector<double>& W, double alpha);

SelectionResult selection_multiple(const KnockoffStats& stats, double alpha);
SelectionResult selection_single(const std::vector<double>& W, double alpha);

}  // namespace knocknet

#endif  // KNOCKNET_FILTER_HPP
