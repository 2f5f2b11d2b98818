#ifndef KNOCKNET_MODEL_HPP
#define KNOCKNET_MODEL_HPP

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "knocknet/filter.hpp"
#include "knocknet/network.hpp"
#include "knocknet/rng.hpp"

namespace knocknet {

// Two-level hierarchical architecture: a feature-wise locally connected layer
// grouping each original with its M knockoffs, an optional region-wise locally
// connected layer over sigma adjacent features, dense layers, covariates
// merged linearly right before the head.
struct ArchitectureConfig {
  int features = 0;              // p
  int knockoffs = 5;             // M
  int region_size = 5;           // sigma
  int region_channels = 8;       // theta
  std::vector<int> dense_widths = {50};
  int covariates = 0;
  Activation activation = Activation::Elu;
  Activation head = Activation::Sigmoid;  // sigmoid or linear
  int hierarchy_levels = 2;      // 1 omits the region-wise layer
  bool pad_remainder = false;    // keep the trailing partial region group
};

struct BuildResult {
  std::vector<LayerSpec> layers;
  long param_count = 0;
  long activation_count = 0;
  int region_groups = 0;
  int flatten_width = 0;
};

BuildResult build_architecture(const ArchitectureConfig& arch, double l1 = 0.0);

// Fig-5 style comparison: the two-level build, a one-level variant whose
// region layer is replaced by a dense layer of the same output width, and a
// conventional fully connected net with three hidden layers at the input
// width. All three share the downstream dense stack and head.
struct HierarchyComparison {
  BuildResult two_level;
  BuildResult one_level;
  BuildResult fully_connected;
};
HierarchyComparison hierarchy_comparison(const ArchitectureConfig& arch);

struct RunConfig {
  double learning_rate = 0.001;
  int batch_size = 1024;
  int max_epochs = 50;
  double l1 = 0.0;
  std::uint64_t master_seed = 0;
  int run_index = 0;
  int folds = 5;
  int draws = 25;

  std::uint64_t run_seed() const { return derive_seed(master_seed, run_index); }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;  // AUC for BCE heads, MSE for linear heads
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  ModelState state;
  TrainHistory history;
};

// Mini-batch Adam with a deterministic per-epoch shuffle derived from the run
// seed. With an empty validation set the val fields mirror the train loss.
TrainResult train(const Network& net, const RunConfig& run,
                  const Eigen::MatrixXd& X_aug, const Eigen::MatrixXd& cov,
                  const Eigen::VectorXd& y, const std::vector<int>& val_indices,
                  LossKind loss);

// Smallest epoch maximizing the validation metric among epochs whose +-5
// window keeps validation loss within 1% of the global minimum; falls back to
// the argmin of validation loss when no epoch is stable.
int optimal_epoch(const TrainHistory& history, bool metric_higher_is_better);

struct SearchSpace {
  std::vector<double> l1_grid = {1e-5, 5e-5, 1e-4, 5e-4, 1e-3};
  std::vector<int> epoch_grid = {25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75, 80};
  double learning_rate = 0.001;
  int batch_size = 1024;
};

struct CvResult {
  RunConfig best;
  int optimal_epochs = 0;   // frozen for full-data refits
  double best_score = 0.0;  // mean validation metric of the winning draw
};

// Random hyperparameter search with k-fold CV; deterministic given the master
// seed. Scores each draw at its per-fold optimal epoch.
CvResult cross_validate(const ArchitectureConfig& arch, const SearchSpace& space,
                        int folds, int draws, std::uint64_t master_seed,
                        const Eigen::MatrixXd& X_aug, const Eigen::MatrixXd& cov,
                        const Eigen::VectorXd& y, LossKind loss);

struct EnsembleResult {
  std::vector<ImportanceMatrix> runs;
  ImportanceMatrix median;      // entrywise exact median across runs
  Eigen::MatrixXd w_correlation;  // Pearson correlation of run W vectors
};

// Refits the model R times on the full data (run r seeded from
// (master seed, r)), each for exactly `epochs` epochs, and takes the
// entrywise median of the per-run importance matrices.
EnsembleResult derandomized_importance(const ArchitectureConfig& arch,
                                       const RunConfig& base, int epochs,
                                       const Eigen::MatrixXd& X_aug,
                                       const Eigen::MatrixXd& cov,
                                       const Eigen::VectorXd& y, LossKind loss,
                                       int R,
                                       std::vector<std::string> feature_ids = {});

// Reshape a batch-by-p(M+1) input-gradient matrix into the n x p x (M+1)
// gradient tensor.
Tensor gradient_tensor(const Eigen::MatrixXd& input_grads, int p, int copies);

// Importance of the network on the given data: mean input gradient per
// feature copy, absolute value applied after averaging.
ImportanceMatrix model_importance(const Network& net, const ModelState& state,
                                  const Eigen::MatrixXd& X_aug,
                                  const Eigen::MatrixXd& cov, int p, int copies,
                                  std::vector<std::string> feature_ids = {});

// Entrywise median of importance matrices; even counts average the two
// central order statistics.
ImportanceMatrix median_importance(const std::vector<ImportanceMatrix>& runs);

// W statistics for stability comparisons: multiple-knockoff W for M >= 2, the
// plain difference for M == 1.
std::vector<double> w_vector(const ImportanceMatrix& T);

// Pearson correlation treating zero-variance vectors as uncorrelated.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace knocknet

#endif  // KNOCKNET_MODEL_HPP
