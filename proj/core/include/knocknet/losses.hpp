#ifndef KNOCKNET_LOSSES_HPP
#define KNOCKNET_LOSSES_HPP

#include <Eigen/Core>
#include <vector>

namespace knocknet {

enum class LossKind { Mse, Bce };

// Probabilities are clamped into [kBceClamp, 1-kBceClamp] before taking logs.
inline constexpr double kBceClamp = 1e-12;

double loss_mse(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat);
double loss_bce(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat);
double loss_value(LossKind kind, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& y_hat);

// d loss / d y_hat, including the 1/n factor. Zero where the BCE clamp is
// active, so the gradient matches finite differences of loss_value exactly.
Eigen::VectorXd loss_gradient(LossKind kind, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& y_hat);

// Pairwise ranking AUC; ties count 1/2. Computed via the rank-sum identity,
// which agrees with the O(mn) pairwise count exactly.
double auc(const std::vector<double>& positive_scores,
           const std::vector<double>& negative_scores);

// Convenience overload splitting scores by binary label.
double auc_from_labels(const Eigen::VectorXd& y, const Eigen::VectorXd& scores);

}  // namespace knocknet

#endif  // KNOCKNET_LOSSES_HPP
