#include "knocknet/filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace knocknet {

ImportanceMatrix importance_matrix(const Tensor& grads,
                                   std::vector<std::string> feature_ids) {
  if (grads.rank() != 3)
    throw std::invalid_argument("importance_matrix: expected rank-3 tensor");
  grads.require_finite("gradient tensor");
  const std::size_t n = grads.dim(0), p = grads.dim(1), copies = grads.dim(2);

  ImportanceMatrix out;
  out.T.setZero(p, copies);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t m = 0; m < copies; ++m) out.T(j, m) += grads.at3(i, j, m);
  out.T = (out.T / static_cast<double>(n)).cwiseAbs();

  if (feature_ids.empty()) {
    out.feature_ids.resize(p);
    for (std::size_t j = 0; j < p; ++j)
      out.feature_ids[j] = "f" + std::to_string(j);
  } else {
    if (feature_ids.size() != p)
      throw std::invalid_argument("importance_matrix: feature id count mismatch");
    out.feature_ids = std::move(feature_ids);
  }
  return out;
}

namespace {

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 0) throw std::invalid_argument("median of empty set");
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void check_row(const Eigen::VectorXd& row) {
  if (row.size() < 3)
    throw std::invalid_argument("knockoff statistics need M >= 2 copies");
}

}  // namespace

std::pair<int, double> kappa_tau(const Eigen::VectorXd& row) {
  check_row(row);
  int kappa = 0;
  for (int m = 1; m < row.size(); ++m)
    if (row[m] > row[kappa]) kappa = m;  // strict: ties keep the earlier index

  std::vector<double> rest;
  rest.reserve(row.size() - 1);
  for (int m = 0; m < row.size(); ++m)
    if (m != kappa) rest.push_back(row[m]);
  const double tau = row[kappa] - median_of(std::move(rest));
  return {kappa, tau};
}

double w_multiple(const Eigen::VectorXd& row) {
  check_row(row);
  const double t0 = row[0];
  const double max_knockoff = row.tail(row.size() - 1).maxCoeff();
  if (t0 < max_knockoff) return 0.0;
  std::vector<double> knockoffs(row.data() + 1, row.data() + row.size());
  return t0 - median_of(std::move(knockoffs));
}

double w_single(double t_original, double t_knockoff) {
  return t_original - t_knockoff;
}

KnockoffStats knockoff_stats(const ImportanceMatrix& T) {
  const int p = T.features();
  KnockoffStats stats;
  stats.M = T.knockoffs();
  stats.kappa.resize(p);
  stats.tau.resize(p);
  stats.W.resize(p);
  for (int j = 0; j < p; ++j) {
    const Eigen::VectorXd row = T.T.row(j);
    auto [kappa, tau] = kappa_tau(row);
    stats.kappa[j] = kappa;
    stats.tau[j] = tau;
    stats.W[j] = kappa == 0 ? tau : 0.0;
  }
  stats.q = q_values(stats.kappa, stats.tau, stats.M);
  return stats;
}

namespace {

// Estimated FDP of the multiple-knockoff filter at threshold t.
double multiple_ratio(const std::vector<int>& kappa,
                      const std::vector<double>& tau, double t, int M) {
  int null_hits = 0, original_hits = 0;
  for (std::size_t j = 0; j < kappa.size(); ++j) {
    if (tau[j] < t) continue;
    if (kappa[j] >= 1)
      ++null_hits;
    else
      ++original_hits;
  }
  const double numerator = (1.0 + null_hits) / static_cast<double>(M);
  return numerator / std::max(1, original_hits);
}

std::vector<double> positive_sorted_unique(const std::vector<double>& values) {
  std::vector<double> out;
  for (double v : values)
    if (v > 0.0) out.push_back(v);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::optional<double> threshold_multiple(const std::vector<int>& kappa,
                                         const std::vector<double>& tau,
                                         double alpha, int M) {
  if (kappa.empty() || kappa.size() != tau.size())
    throw std::invalid_argument("threshold_multiple: bad input lengths");
  if (M < 2) throw std::invalid_argument("threshold_multiple: M must be >= 2");
  for (double t : positive_sorted_unique(tau))
    if (multiple_ratio(kappa, tau, t, M) <= alpha) return t;
  return std::nullopt;
}

std::optional<double> threshold_single(const std::vector<double>& W,
                                       double alpha) {
  if (W.empty()) throw std::invalid_argument("threshold_single: empty input");
  std::vector<double> magnitudes(W.size());
  for (std::size_t j = 0; j < W.size(); ++j) magnitudes[j] = std::fabs(W[j]);
  for (double t : positive_sorted_unique(magnitudes)) {
    int below = 0, above = 0;
    for (double w : W) {
      if (w <= -t) ++below;
      if (w >= t) ++above;
    }
    if ((1.0 + below) / std::max(1, above) <= alpha) return t;
  }
  return std::nullopt;
}

std::vector<double> q_values(const std::vector<int>& kappa,
                             const std::vector<double>& tau, int M) {
  if (kappa.empty() || kappa.size() != tau.size())
    throw std::invalid_argument("q_values: bad input lengths");
  if (M < 2) throw std::invalid_argument("q_values: M must be >= 2");
  const std::vector<double> candidates = positive_sorted_unique(tau);

  // Running minimum of the ratio over candidate thresholds <= tau_j: the
  // ratio is a step function of t, so prefix minima over the sorted grid
  // give every feature's q in one pass.
  std::vector<double> prefix_min(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double ratio = multiple_ratio(kappa, tau, candidates[i], M);
    prefix_min[i] = i == 0 ? ratio : std::min(prefix_min[i - 1], ratio);
  }

  std::vector<double> q(kappa.size(), 1.0);
  for (std::size_t j = 0; j < kappa.size(); ++j) {
    if (kappa[j] != 0) continue;  // q = 1 when a knockoff wins
    // last candidate threshold <= tau_j
    const auto it = std::upper_bound(candidates.begin(), candidates.end(), tau[j]);
    if (it == candidates.begin()) continue;  // no positive threshold reaches j
    const std::size_t idx = static_cast<std::size_t>(it - candidates.begin()) - 1;
    q[j] = std::min(1.0, prefix_min[idx]);
  }
  return q;
}

std::vector<double> q_values_single(const std::vector<double>& W) {
  if (W.empty()) throw std::invalid_argument("q_values_single: empty input");
  std::vector<double> magnitudes(W.size());
  for (std::size_t j = 0; j < W.size(); ++j) magnitudes[j] = std::fabs(W[j]);
  const std::vector<double> candidates = positive_sorted_unique(magnitudes);

  std::vector<double> prefix_min(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double t = candidates[i];
    int below = 0, above = 0;
    for (double w : W) {
      if (w <= -t) ++below;
      if (w >= t) ++above;
    }
    const double ratio = (1.0 + below) / std::max(1, above);
    prefix_min[i] = i == 0 ? ratio : std::min(prefix_min[i - 1], ratio);
  }

  std::vector<double> q(W.size(), 1.0);
  for (std::size_t j = 0; j < W.size(); ++j) {
    if (W[j] <= 0.0) continue;
    const auto it = std::upper_bound(candidates.begin(), candidates.end(), W[j]);
    if (it == candidates.begin()) continue;
    const std::size_t idx = static_cast<std::size_t>(it - candidates.begin()) - 1;
    q[j] = std::min(1.0, prefix_min[idx]);
  }
  return q;
}

std::vector<int> select_multiple(const std::vector<int>& kappa,
                                 const std::vector<double>& tau, double alpha,
                                 int M) {
  std::vector<int> out;
  const auto threshold = threshold_multiple(kappa, tau, alpha, M);
  if (!threshold) return out;
  for (std::size_t j = 0; j < kappa.size(); ++j)
    if (kappa[j] == 0 && tau[j] >= *threshold) out.push_back(static_cast<int>(j));
  return out;
}

std::vector<int> select_by_q(const std::vector<double>& q, double alpha) {
  std::vector<int> out;
  for (std::size_t j = 0; j < q.size(); ++j)
    if (q[j] <= alpha) out.push_back(static_cast<int>(j));
  return out;
}

std::vector<int> select_single(const std::vector<double>& W, double alpha) {
  std::vector<int> out;
  const auto threshold = threshold_single(W, alpha);
  if (!threshold) return out;
  for (std::size_t j = 0; j < W.size(); ++j)
    if (W[j] >= *threshold) out.push_back(static_cast<int>(j));
  return out;
}

SelectionResult selection_multiple(const KnockoffStats& stats, double alpha) {
  SelectionResult sel;
  sel.target_fdr = alpha;
  auto threshold = threshold_multiple(stats.kappa, stats.tau, alpha, stats.M);
  if (threshold) {
    sel.threshold = threshold;
    sel.selected = select_multiple(stats.kappa, stats.tau, alpha, stats.M);
  }
  return sel;
}

SelectionResult selection_single(const std::vector<double>& W, double alpha) {
  SelectionResult sel;
  sel.target_fdr = alpha;
  auto threshold = threshold_single(W, alpha);
  if (threshold) {
    sel.threshold = threshold;
    sel.selected = select_single(W, alpha);
  }
  return sel;
}

}  // namespace knocknet
