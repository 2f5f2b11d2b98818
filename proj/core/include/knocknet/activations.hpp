#ifndef KNOCKNET_ACTIVATIONS_HPP
#define KNOCKNET_ACTIVATIONS_HPP

#include <cmath>
#include <stdexcept>
#include <string>

namespace knocknet {

enum class Activation { Elu, Relu, Sigmoid, Tanh, Linear };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation kind);

// ELU negative-branch scale. Kept at 1 everywhere; exposed for tests.
inline constexpr double kEluScale = 1.0;

inline double activate(Activation kind, double z, double elu_scale = kEluScale) {
  switch (kind) {
    case Activation::Elu:
      return z > 0.0 ? z : elu_scale * (std::exp(z) - 1.0);
    case Activation::Relu:
      return z > 0.0 ? z : 0.0;
    case Activation::Sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case Activation::Tanh:
      return std::tanh(z);
    case Activation::Linear:
      return z;
  }
  throw std::invalid_argument("unknown activation kind");
}

inline double activate_derivative(Activation kind, double z,
                                  double elu_scale = kEluScale) {
  switch (kind) {
    case Activation::Elu:
      return z > 0.0 ? 1.0 : elu_scale * std::exp(z);
    case Activation::Relu:
      return z > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 - s);
    }
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Linear:
      return 1.0;
  }
  throw std::invalid_argument("unknown activation kind");
}

}  // namespace knocknet

#endif  // KNOCKNET_ACTIVATIONS_HPP
