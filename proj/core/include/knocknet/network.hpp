#ifndef KNOCKNET_NETWORK_HPP
#define KNOCKNET_NETWORK_HPP

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "knocknet/activations.hpp"
#include "knocknet/losses.hpp"

namespace knocknet {

enum class LayerKind { LocallyConnected, Dense, Flatten, CovariateMerge, Output };

// One layer of the architecture. Locally connected layers own one weight set
// per (group, channel) pair; no sharing across positions.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int input_width = 0;
  int group = 1;        // LC: inputs per group
  int stride = 1;       // LC: step between group starts
  int channels = 1;     // LC: channels per group; Dense/Output: output width
  int tail_group = 0;   // LC: size of a trailing partial group, 0 = dropped
  int covariates = 0;   // CovariateMerge: appended covariate count
  Activation activation = Activation::Linear;
  double l1 = 0.0;      // L1 coefficient on weights (not biases)

  int full_groups() const;     // LC groups of exactly `group` inputs
  int groups() const;          // incl. the tail group if present
  int output_width() const;
  bool has_params() const;
  long param_count() const;
  long activation_count() const;
};

long total_params(const std::vector<LayerSpec>& layers);
long total_activations(const std::vector<LayerSpec>& layers);

struct LayerParams {
  Eigen::MatrixXd W;  // LC: (groups*channels) x group; Dense: out x in
  Eigen::VectorXd b;
  Eigen::MatrixXd mW, vW;  // Adam moments, same shapes
  Eigen::VectorXd mb, vb;
};

// Parameters plus optimizer state. Single-owner while training; immutable and
// freely shareable across threads afterwards.
struct ModelState {
  std::vector<LayerParams> layers;  // aligned with the spec list
  long step = 0;
  std::uint64_t init_seed = 0;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> gW;
  std::vector<Eigen::VectorXd> gb;
  void set_zero();
};

struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // Z per layer (empty for no-op layers)
  std::vector<Eigen::MatrixXd> post;  // activations entering each layer; post[0] = X
  Eigen::VectorXd output;             // head activations, length = batch
};

class Network {
 public:
  Network() = default;
  explicit Network(std::vector<LayerSpec> layers);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  int input_width() const { return layers_.empty() ? 0 : layers_.front().input_width; }
  int covariate_width() const { return covariate_width_; }
  long param_count() const { return total_params(layers_); }
  Activation head_activation() const;

  // Glorot-uniform weights, zero biases, zero moments.
  ModelState init_state(std::uint64_t seed) const;

  // X: batch x input_width, C: batch x covariate_width (0 cols if none).
  Eigen::VectorXd forward(const ModelState& state, const Eigen::MatrixXd& X,
                          const Eigen::MatrixXd& C) const;
  void forward_cached(const ModelState& state, const Eigen::MatrixXd& X,
                      const Eigen::MatrixXd& C, ForwardCache& cache) const;

  // Parameter gradients of the batch loss, including L1 subgradients on
  // layers with l1 > 0. Returns the loss value.
  double backprop(const ModelState& state, const Eigen::MatrixXd& X,
                  const Eigen::MatrixXd& C, const Eigen::VectorXd& y,
                  LossKind loss, Gradients& grads) const;

  // d f(x_i) / d x_i for the post-activation network output f, one row per
  // sample. Covariate gradients are not returned.
  Eigen::MatrixXd input_gradients(const ModelState& state,
                                  const Eigen::MatrixXd& X,
                                  const Eigen::MatrixXd& C) const;

  Gradients make_gradients() const;

 private:
  void backward(const ModelState& state, const ForwardCache& cache,
                const Eigen::VectorXd& head_seed, Gradients* grads,
                Eigen::MatrixXd* input_grads) const;

  std::vector<LayerSpec> layers_;
  int covariate_width_ = 0;
};

// Bias-corrected Adam update of a single coefficient array; the shared kernel
// behind adam_step. Exposed for oracle tests.
void adam_update(Eigen::Ref<Eigen::MatrixXd> param, Eigen::Ref<Eigen::MatrixXd> m,
                 Eigen::Ref<Eigen::MatrixXd> v, const Eigen::MatrixXd& grad,
                 long step, double lr, double beta1, double beta2, double eps);

void adam_step(ModelState& state, const Gradients& grads, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace knocknet

#endif  // KNOCKNET_NETWORK_HPP
