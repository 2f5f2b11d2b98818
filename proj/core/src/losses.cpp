#include "knocknet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace knocknet {

static void check_lengths(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat) {
  if (y.size() != y_hat.size() || y.size() == 0)
    throw std::invalid_argument("loss: y and y_hat length mismatch");
}

double loss_mse(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat) {
  check_lengths(y, y_hat);
  return (y_hat - y).squaredNorm() / static_cast<double>(y.size());
}

double loss_bce(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat) {
  check_lengths(y, y_hat);
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double p = std::clamp(y_hat[i], kBceClamp, 1.0 - kBceClamp);
    total += y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  return -total / static_cast<double>(y.size());
}

double loss_value(LossKind kind, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& y_hat) {
  return kind == LossKind::Mse ? loss_mse(y, y_hat) : loss_bce(y, y_hat);
}

Eigen::VectorXd loss_gradient(LossKind kind, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& y_hat) {
  check_lengths(y, y_hat);
  const double n = static_cast<double>(y.size());
  Eigen::VectorXd g(y.size());
  if (kind == LossKind::Mse) {
    g = 2.0 * (y_hat - y) / n;
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y_hat[i] <= kBceClamp || y_hat[i] >= 1.0 - kBceClamp) {
        g[i] = 0.0;  // clamp active, loss locally constant in y_hat
      } else {
        g[i] = (-y[i] / y_hat[i] + (1.0 - y[i]) / (1.0 - y_hat[i])) / n;
      }
    }
  }
  return g;
}

double auc(const std::vector<double>& positive_scores,
           const std::vector<double>& negative_scores) {
  if (positive_scores.empty() || negative_scores.empty())
    throw std::invalid_argument("auc: both classes must be non-empty");

  struct Scored {
    double value;
    bool positive;
  };
  std::vector<Scored> all;
  all.reserve(positive_scores.size() + negative_scores.size());
  for (double v : positive_scores) all.push_back({v, true});
  for (double v : negative_scores) all.push_back({v, false});
  std::sort(all.begin(), all.end(),
            [](const Scored& a, const Scored& b) { return a.value < b.value; });

  // Rank sum of positives with average ranks over tie blocks.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    // 1-based ranks i+1 .. j averaged
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (all[k].positive) rank_sum_pos += avg_rank;
    i = j;
  }
  const double m = static_cast<double>(positive_scores.size());
  const double n = static_cast<double>(negative_scores.size());
  return (rank_sum_pos - m * (m + 1.0) / 2.0) / (m * n);
}

double auc_from_labels(const Eigen::VectorXd& y, const Eigen::VectorXd& scores) {
  std::vector<double> pos, neg;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] > 0.5)
      pos.push_back(scores[i]);
    else
      neg.push_back(scores[i]);
  }
  return auc(pos, neg);
}

}  // namespace knocknet
