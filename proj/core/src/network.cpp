#include "knocknet/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "knocknet/rng.hpp"

namespace knocknet {

Activation activation_from_string(const std::string& name) {
  if (name == "elu") return Activation::Elu;
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  if (name == "linear") return Activation::Linear;
  throw std::invalid_argument("unknown activation kind: " + name);
}

std::string to_string(Activation kind) {
  switch (kind) {
    case Activation::Elu: return "elu";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  return "?";
}

int LayerSpec::full_groups() const {
  if (kind != LayerKind::LocallyConnected) return 0;
  if (input_width < group) return 0;
  return 1 + (input_width - group) / stride;
}

int LayerSpec::groups() const {
  return full_groups() + (tail_group > 0 ? 1 : 0);
}

int LayerSpec::output_width() const {
  switch (kind) {
    case LayerKind::LocallyConnected: return groups() * channels;
    case LayerKind::Dense:
    case LayerKind::Output: return channels;
    case LayerKind::Flatten: return input_width;
    case LayerKind::CovariateMerge: return input_width + covariates;
  }
  return 0;
}

bool LayerSpec::has_params() const {
  return kind == LayerKind::LocallyConnected || kind == LayerKind::Dense ||
         kind == LayerKind::Output;
}

long LayerSpec::param_count() const {
  switch (kind) {
    case LayerKind::LocallyConnected: {
      long count = static_cast<long>(full_groups()) * channels * (group + 1);
      if (tail_group > 0) count += static_cast<long>(channels) * (tail_group + 1);
      return count;
    }
    case LayerKind::Dense:
    case LayerKind::Output:
      return static_cast<long>(channels) * (input_width + 1);
    default:
      return 0;
  }
}

long LayerSpec::activation_count() const {
  switch (kind) {
    case LayerKind::LocallyConnected: return static_cast<long>(groups()) * channels;
    case LayerKind::Dense:
    case LayerKind::Output: return channels;
    case LayerKind::CovariateMerge: return covariates;  // linear pass-through
    case LayerKind::Flatten: return 0;
  }
  return 0;
}

long total_params(const std::vector<LayerSpec>& layers) {
  long count = 0;
  for (const auto& layer : layers) count += layer.param_count();
  return count;
}

long total_activations(const std::vector<LayerSpec>& layers) {
  long count = 0;
  for (const auto& layer : layers) count += layer.activation_count();
  return count;
}

void Gradients::set_zero() {
  for (auto& g : gW) g.setZero();
  for (auto& g : gb) g.setZero();
}

Network::Network(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("network: no layers");
  int width = layers_.front().input_width;
  for (const auto& layer : layers_) {
    if (layer.input_width != width)
      throw std::invalid_argument("network: layer input width mismatch");
    if (layer.kind == LayerKind::LocallyConnected) {
      if (layer.group < 1 || layer.stride < 1 || layer.channels < 1)
        throw std::invalid_argument("network: invalid locally connected config");
      if (layer.groups() < 1)
        throw std::invalid_argument("network: locally connected layer has zero groups");
    }
    if ((layer.kind == LayerKind::Dense || layer.kind == LayerKind::Output) &&
        layer.channels < 1)
      throw std::invalid_argument("network: dense layer needs channels >= 1");
    if (layer.kind == LayerKind::CovariateMerge) covariate_width_ += layer.covariates;
    width = layer.output_width();
  }
  if (layers_.back().kind != LayerKind::Output)
    throw std::invalid_argument("network: last layer must be the output head");
}

Activation Network::head_activation() const {
  return layers_.back().activation;
}

ModelState Network::init_state(std::uint64_t seed) const {
  ModelState state;
  state.init_seed = seed;
  state.step = 0;
  state.layers.resize(layers_.size());
  Rng rng(seed);
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const LayerSpec& spec = layers_[k];
    LayerParams& prm = state.layers[k];
    if (!spec.has_params()) continue;

    int rows = 0, cols = 0, fan_in = 0, fan_out = 0;
    if (spec.kind == LayerKind::LocallyConnected) {
      rows = spec.groups() * spec.channels;
      cols = spec.group;
      fan_in = spec.group;
      fan_out = spec.channels;
    } else {
      rows = spec.channels;
      cols = spec.input_width;
      fan_in = spec.input_width;
      fan_out = spec.channels;
    }
    prm.W = Eigen::MatrixXd::Zero(rows, cols);
    prm.b = Eigen::VectorXd::Zero(rows);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (int r = 0; r < rows; ++r) {
      int used = cols;
      if (spec.kind == LayerKind::LocallyConnected && spec.tail_group > 0 &&
          r >= spec.full_groups() * spec.channels)
        used = spec.tail_group;
      for (int c = 0; c < used; ++c) prm.W(r, c) = rng.uniform(-limit, limit);
    }
    prm.mW = Eigen::MatrixXd::Zero(rows, cols);
    prm.vW = Eigen::MatrixXd::Zero(rows, cols);
    prm.mb = Eigen::VectorXd::Zero(rows);
    prm.vb = Eigen::VectorXd::Zero(rows);
  }
  return state;
}

Gradients Network::make_gradients() const {
  Gradients grads;
  grads.gW.resize(layers_.size());
  grads.gb.resize(layers_.size());
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const LayerSpec& spec = layers_[k];
    if (!spec.has_params()) continue;
    int rows, cols;
    if (spec.kind == LayerKind::LocallyConnected) {
      rows = spec.groups() * spec.channels;
      cols = spec.group;
    } else {
      rows = spec.channels;
      cols = spec.input_width;
    }
    grads.gW[k] = Eigen::MatrixXd::Zero(rows, cols);
    grads.gb[k] = Eigen::VectorXd::Zero(rows);
  }
  return grads;
}

namespace {

void apply_activation(Activation kind, const Eigen::MatrixXd& Z,
                      Eigen::MatrixXd& A) {
  A.resize(Z.rows(), Z.cols());
  const double* z = Z.data();
  double* a = A.data();
  const Eigen::Index n = Z.size();
  switch (kind) {
    case Activation::Elu:
      for (Eigen::Index i = 0; i < n; ++i)
        a[i] = z[i] > 0.0 ? z[i] : kEluScale * (std::exp(z[i]) - 1.0);
      break;
    case Activation::Relu:
      for (Eigen::Index i = 0; i < n; ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
      break;
    case Activation::Sigmoid:
      for (Eigen::Index i = 0; i < n; ++i) a[i] = 1.0 / (1.0 + std::exp(-z[i]));
      break;
    case Activation::Tanh:
      for (Eigen::Index i = 0; i < n; ++i) a[i] = std::tanh(z[i]);
      break;
    case Activation::Linear:
      A = Z;
      break;
  }
}

// dZ = dA .* f'(Z), in place on dA
void chain_activation(Activation kind, const Eigen::MatrixXd& Z,
                      Eigen::MatrixXd& dA) {
  const double* z = Z.data();
  double* d = dA.data();
  const Eigen::Index n = Z.size();
  switch (kind) {
    case Activation::Elu:
      for (Eigen::Index i = 0; i < n; ++i)
        d[i] *= z[i] > 0.0 ? 1.0 : kEluScale * std::exp(z[i]);
      break;
    case Activation::Relu:
      for (Eigen::Index i = 0; i < n; ++i)
        if (z[i] <= 0.0) d[i] = 0.0;
      break;
    case Activation::Sigmoid:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double s = 1.0 / (1.0 + std::exp(-z[i]));
        d[i] *= s * (1.0 - s);
      }
      break;
    case Activation::Tanh:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = std::tanh(z[i]);
        d[i] *= 1.0 - t * t;
      }
      break;
    case Activation::Linear:
      break;
  }
}

int group_size_at(const LayerSpec& spec, int g) {
  return (g < spec.full_groups()) ? spec.group : spec.tail_group;
}

}  // namespace

void Network::forward_cached(const ModelState& state, const Eigen::MatrixXd& X,
                             const Eigen::MatrixXd& C, ForwardCache& cache) const {
  if (X.cols() != input_width())
    throw std::invalid_argument("forward: X has width " + std::to_string(X.cols()) +
                                ", expected " + std::to_string(input_width()));
  if (covariate_width_ > 0 && (C.cols() != covariate_width_ || C.rows() != X.rows()))
    throw std::invalid_argument("forward: covariate shape mismatch");

  const std::size_t L = layers_.size();
  cache.pre.assign(L, Eigen::MatrixXd());
  cache.post.assign(L + 1, Eigen::MatrixXd());
  cache.post[0] = X;

  for (std::size_t k = 0; k < L; ++k) {
    const LayerSpec& spec = layers_[k];
    const Eigen::MatrixXd& A = cache.post[k];
    switch (spec.kind) {
      case LayerKind::LocallyConnected: {
        const LayerParams& prm = state.layers[k];
        Eigen::MatrixXd Z(A.rows(), spec.output_width());
        const int theta = spec.channels;
        for (int g = 0; g < spec.groups(); ++g) {
          const int gsz = group_size_at(spec, g);
          Z.middleCols(g * theta, theta).noalias() =
              A.middleCols(g * spec.stride, gsz) *
              prm.W.middleRows(g * theta, theta).leftCols(gsz).transpose();
          Z.middleCols(g * theta, theta).rowwise() +=
              prm.b.segment(g * theta, theta).transpose();
        }
        cache.pre[k] = std::move(Z);
        apply_activation(spec.activation, cache.pre[k], cache.post[k + 1]);
        break;
      }
      case LayerKind::Dense:
      case LayerKind::Output: {
        const LayerParams& prm = state.layers[k];
        Eigen::MatrixXd Z = A * prm.W.transpose();
        Z.rowwise() += prm.b.transpose();
        cache.pre[k] = std::move(Z);
        apply_activation(spec.activation, cache.pre[k], cache.post[k + 1]);
        break;
      }
      case LayerKind::Flatten:
        cache.post[k + 1] = A;
        break;
      case LayerKind::CovariateMerge: {
        Eigen::MatrixXd merged(A.rows(), A.cols() + spec.covariates);
        merged.leftCols(A.cols()) = A;
        if (spec.covariates > 0) merged.rightCols(spec.covariates) = C;
        cache.post[k + 1] = std::move(merged);
        break;
      }
    }
  }
  cache.output = cache.post[L].col(0);
  if (!cache.output.allFinite())
    throw std::runtime_error("forward: non-finite network output");
}

Eigen::VectorXd Network::forward(const ModelState& state, const Eigen::MatrixXd& X,
                                 const Eigen::MatrixXd& C) const {
  ForwardCache cache;
  forward_cached(state, X, C, cache);
  return cache.output;
}

void Network::backward(const ModelState& state, const ForwardCache& cache,
                       const Eigen::VectorXd& head_seed, Gradients* grads,
                       Eigen::MatrixXd* input_grads) const {
  const std::size_t L = layers_.size();
  Eigen::MatrixXd dA = head_seed;  // column vector as batch x 1

  for (std::size_t ki = L; ki-- > 0;) {
    const LayerSpec& spec = layers_[ki];
    const bool need_below = ki > 0 || input_grads != nullptr;
    switch (spec.kind) {
      case LayerKind::LocallyConnected:
      case LayerKind::Dense:
      case LayerKind::Output: {
        chain_activation(spec.activation, cache.pre[ki], dA);  // dA is now dZ
        const LayerParams& prm = state.layers[ki];
        const Eigen::MatrixXd& A_prev = cache.post[ki];
        if (spec.kind == LayerKind::LocallyConnected) {
          const int theta = spec.channels;
          Eigen::MatrixXd dPrev;
          if (need_below) dPrev.setZero(A_prev.rows(), A_prev.cols());
          for (int g = 0; g < spec.groups(); ++g) {
            const int gsz = group_size_at(spec, g);
            const auto dZg = dA.middleCols(g * theta, theta);
            if (grads) {
              grads->gW[ki].middleRows(g * theta, theta).leftCols(gsz).noalias() +=
                  dZg.transpose() * A_prev.middleCols(g * spec.stride, gsz);
              grads->gb[ki].segment(g * theta, theta).noalias() +=
                  dZg.colwise().sum().transpose();
            }
            if (need_below)
              dPrev.middleCols(g * spec.stride, gsz).noalias() +=
                  dZg * prm.W.middleRows(g * theta, theta).leftCols(gsz);
          }
          dA = std::move(dPrev);
        } else {
          if (grads) {
            grads->gW[ki].noalias() += dA.transpose() * A_prev;
            grads->gb[ki].noalias() += dA.colwise().sum().transpose();
          }
          if (need_below) {
            Eigen::MatrixXd dPrev = dA * prm.W;
            dA = std::move(dPrev);
          }
        }
        break;
      }
      case LayerKind::Flatten:
        break;  // identity
      case LayerKind::CovariateMerge: {
        // covariate gradients are dropped
        Eigen::MatrixXd dPrev = dA.leftCols(spec.input_width);
        dA = std::move(dPrev);
        break;
      }
    }
  }
  if (input_grads) *input_grads = std::move(dA);
}

double Network::backprop(const ModelState& state, const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& C, const Eigen::VectorXd& y,
                         LossKind loss, Gradients& grads) const {
  ForwardCache cache;
  forward_cached(state, X, C, cache);
  const double value = loss_value(loss, y, cache.output);
  if (!std::isfinite(value))
    throw std::runtime_error("backprop: non-finite loss");
  grads.set_zero();
  backward(state, cache, loss_gradient(loss, y, cache.output), &grads, nullptr);

  // L1 subgradient on weights only; sign(0) contributes nothing.
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (!layers_[k].has_params() || layers_[k].l1 <= 0.0) continue;
    const double coef = layers_[k].l1;
    const Eigen::MatrixXd& W = state.layers[k].W;
    Eigen::MatrixXd& gW = grads.gW[k];
    for (Eigen::Index i = 0; i < W.size(); ++i) {
      const double w = W.data()[i];
      if (w > 0.0)
        gW.data()[i] += coef;
      else if (w < 0.0)
        gW.data()[i] -= coef;
    }
  }
  return value;
}

Eigen::MatrixXd Network::input_gradients(const ModelState& state,
                                         const Eigen::MatrixXd& X,
                                         const Eigen::MatrixXd& C) const {
  ForwardCache cache;
  forward_cached(state, X, C, cache);
  Eigen::MatrixXd grads;
  backward(state, cache, Eigen::VectorXd::Ones(X.rows()), nullptr, &grads);
  return grads;
}

namespace {

template <typename ParamT, typename GradT>
void adam_update_impl(ParamT&& param, ParamT&& m, ParamT&& v, const GradT& grad,
                      long step, double lr, double beta1, double beta2,
                      double eps) {
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double m_corr = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double v_corr = 1.0 - std::pow(beta2, static_cast<double>(step));
  param.array() -= lr * (m.array() / m_corr) /
                   ((v.array() / v_corr).sqrt() + eps);
}

}  // namespace

void adam_update(Eigen::Ref<Eigen::MatrixXd> param, Eigen::Ref<Eigen::MatrixXd> m,
                 Eigen::Ref<Eigen::MatrixXd> v, const Eigen::MatrixXd& grad,
                 long step, double lr, double beta1, double beta2, double eps) {
  adam_update_impl(param, m, v, grad, step, lr, beta1, beta2, eps);
}

void adam_step(ModelState& state, const Gradients& grads, double lr,
               double beta1, double beta2, double eps) {
  for (std::size_t k = 0; k < state.layers.size(); ++k) {
    if (grads.gW.size() > k && grads.gW[k].size() > 0 &&
        (!grads.gW[k].allFinite() || !grads.gb[k].allFinite()))
      throw std::runtime_error("adam_step: non-finite gradient");
  }
  ++state.step;
  for (std::size_t k = 0; k < state.layers.size(); ++k) {
    if (k >= grads.gW.size() || grads.gW[k].size() == 0) continue;
    LayerParams& prm = state.layers[k];
    adam_update_impl(prm.W, prm.mW, prm.vW, grads.gW[k], state.step, lr, beta1,
                     beta2, eps);
    adam_update_impl(prm.b, prm.mb, prm.vb, grads.gb[k], state.step, lr, beta1,
                     beta2, eps);
  }
}

}  // namespace knocknet
