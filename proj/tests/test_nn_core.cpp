#include <doctest.h>

#include <cmath>

#include "knocknet/activations.hpp"
#include "knocknet/losses.hpp"
#include "knocknet/network.hpp"
#include "knocknet/rng.hpp"
#include "test_support.hpp"

using namespace knocknet;

TEST_CASE("activation values and derivatives") {
  CHECK(activate(Activation::Elu, 1.5) == 1.5);
  CHECK(activate(Activation::Relu, -2.0) == 0.0);
  CHECK(activate_derivative(Activation::Relu, -2.0) == 0.0);
  CHECK(activate(Activation::Elu, -1.0) ==
        doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-14));
  CHECK(activate_derivative(Activation::Elu, -1.0) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(activate(Activation::Sigmoid, 0.0) == 0.5);
  CHECK(activate(Activation::Tanh, 0.0) == 0.0);
  CHECK(activate(Activation::Linear, 3.25) == 3.25);
  CHECK_THROWS(activation_from_string("swish"));
}

TEST_CASE("elu bounded below, relu non-negative") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double z = rng.normal(0.0, 5.0);
    CHECK(activate(Activation::Elu, z) > -kEluScale);
    CHECK(activate(Activation::Relu, z) >= 0.0);
  }
}

TEST_CASE("forward: zero weights with sigmoid head predict one half") {
  ArchitectureConfig arch;
  arch.features = 6;
  arch.knockoffs = 2;
  arch.region_size = 3;
  arch.region_channels = 2;
  arch.covariates = 0;
  arch.head = Activation::Sigmoid;
  const Network net(build_architecture(arch).layers);
  ModelState state = net.init_state(1);
  for (auto& layer : state.layers) {
    layer.W.setZero();
    layer.b.setZero();
  }
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(5, net.input_width());
  const Eigen::VectorXd pred = net.forward(state, X, Eigen::MatrixXd(5, 0));
  for (int i = 0; i < 5; ++i) CHECK(pred[i] == 0.5);
}

TEST_CASE("forward: scalar identity network") {
  LayerSpec head;
  head.kind = LayerKind::Output;
  head.input_width = 1;
  head.channels = 1;
  head.activation = Activation::Linear;
  const Network net({head});
  ModelState state = net.init_state(3);
  state.layers[0].W(0, 0) = 1.0;
  state.layers[0].b[0] = 0.0;
  Eigen::MatrixXd X(4, 1);
  X << -2.0, 0.5, 3.0, 7.25;
  const Eigen::VectorXd pred = net.forward(state, X, Eigen::MatrixXd(4, 0));
  for (int i = 0; i < 4; ++i) CHECK(pred[i] == X(i, 0));
}

// Second, naive implementation of the forward pass used as an oracle.
static Eigen::VectorXd naive_forward(const Network& net, const ModelState& state,
                                     const Eigen::MatrixXd& X,
                                     const Eigen::MatrixXd& C) {
  const int batch = static_cast<int>(X.rows());
  Eigen::VectorXd out(batch);
  for (int i = 0; i < batch; ++i) {
    std::vector<double> act(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) act[j] = X(i, j);
    for (std::size_t k = 0; k < net.layers().size(); ++k) {
      const LayerSpec& spec = net.layers()[k];
      std::vector<double> next;
      if (spec.kind == LayerKind::LocallyConnected) {
        const auto& prm = state.layers[k];
        for (int g = 0; g < spec.groups(); ++g) {
          const int gsz = g < spec.full_groups() ? spec.group : spec.tail_group;
          for (int c = 0; c < spec.channels; ++c) {
            double z = prm.b[g * spec.channels + c];
            for (int t = 0; t < gsz; ++t)
              z += prm.W(g * spec.channels + c, t) * act[g * spec.stride + t];
            next.push_back(activate(spec.activation, z));
          }
        }
      } else if (spec.kind == LayerKind::Dense || spec.kind == LayerKind::Output) {
        const auto& prm = state.layers[k];
        for (int r = 0; r < spec.channels; ++r) {
          double z = prm.b[r];
          for (int t = 0; t < spec.input_width; ++t) z += prm.W(r, t) * act[t];
          next.push_back(activate(spec.activation, z));
        }
      } else if (spec.kind == LayerKind::Flatten) {
        next = act;
      } else {
        next = act;
        for (int c = 0; c < spec.covariates; ++c) next.push_back(C(i, c));
      }
      act = std::move(next);
    }
    out[i] = act[0];
  }
  return out;
}

TEST_CASE("forward matches an independent naive evaluation") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto prob = testing::random_problem(seed, 10, 2, 5, 3, seed % 2 == 0);
    const Eigen::VectorXd fast = prob.net.forward(prob.state, prob.X, prob.C);
    const Eigen::VectorXd slow = naive_forward(prob.net, prob.state, prob.X, prob.C);
    for (int i = 0; i < fast.size(); ++i)
      CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
  }
}

TEST_CASE("backprop: linear regression head matches the closed form") {
  // one output layer, linear activation, MSE: grad = (2/n) X^T (Xw + b - y)
  LayerSpec head;
  head.kind = LayerKind::Output;
  head.input_width = 3;
  head.channels = 1;
  head.activation = Activation::Linear;
  const Network net({head});
  ModelState state = net.init_state(5);

  Rng rng(17);
  Eigen::MatrixXd X(20, 3);
  Eigen::VectorXd y(20);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  for (int i = 0; i < 20; ++i) y[i] = rng.normal();

  Gradients grads = net.make_gradients();
  net.backprop(state, X, Eigen::MatrixXd(20, 0), y, LossKind::Mse, grads);

  const Eigen::VectorXd resid =
      X * state.layers[0].W.transpose() + Eigen::VectorXd::Constant(20, state.layers[0].b[0]) - y;
  const Eigen::VectorXd expected = 2.0 / 20.0 * (X.transpose() * resid);
  for (int j = 0; j < 3; ++j)
    CHECK(grads.gW[0](0, j) == doctest::Approx(expected[j]).epsilon(1e-12));
  CHECK(grads.gb[0][0] == doctest::Approx(2.0 / 20.0 * resid.sum()).epsilon(1e-12));
}

TEST_CASE("backprop: zero residuals give zero gradients") {
  LayerSpec head;
  head.kind = LayerKind::Output;
  head.input_width = 2;
  head.channels = 1;
  head.activation = Activation::Linear;
  const Network net({head});
  ModelState state = net.init_state(2);
  Eigen::MatrixXd X(6, 2);
  X.setRandom();
  const Eigen::VectorXd y =
      X * state.layers[0].W.transpose() + Eigen::VectorXd::Constant(6, state.layers[0].b[0]);

  Gradients grads = net.make_gradients();
  const double loss = net.backprop(state, X, Eigen::MatrixXd(6, 0), y, LossKind::Mse, grads);
  CHECK(loss == doctest::Approx(0.0));
  CHECK(grads.gW[0].cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(grads.gb[0].cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("backprop matches central finite differences") {
  auto prob = testing::random_problem(21, 10, 2, 5, 2, false);
  CHECK(testing::max_param_gradient_error(prob) < 1e-5);
  auto prob2 = testing::random_problem(22, 8, 2, 4, 2, true);
  CHECK(testing::max_param_gradient_error(prob2) < 1e-5);
}

TEST_CASE("L1 term only touches weights of flagged layers") {
  ArchitectureConfig arch;
  arch.features = 6;
  arch.knockoffs = 2;
  arch.region_size = 3;
  arch.region_channels = 2;
  arch.head = Activation::Linear;
  const Network plain(build_architecture(arch, 0.0).layers);
  const Network penalized(build_architecture(arch, 0.05).layers);

  const ModelState state = plain.init_state(9);
  Eigen::MatrixXd X(5, plain.input_width());
  X.setRandom();
  Eigen::VectorXd y(5);
  y.setRandom();

  Gradients g0 = plain.make_gradients(), g1 = penalized.make_gradients();
  plain.backprop(state, X, Eigen::MatrixXd(5, 0), y, LossKind::Mse, g0);
  penalized.backprop(state, X, Eigen::MatrixXd(5, 0), y, LossKind::Mse, g1);

  // layer 0 weights shift by exactly 0.05 * sign(w); biases identical
  for (Eigen::Index i = 0; i < g0.gW[0].size(); ++i) {
    const double w = state.layers[0].W.data()[i];
    const double expected = w > 0 ? 0.05 : (w < 0 ? -0.05 : 0.0);
    CHECK(g1.gW[0].data()[i] - g0.gW[0].data()[i] ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK((g1.gb[0] - g0.gb[0]).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t k = 1; k < g0.gW.size(); ++k) {
    if (g0.gW[k].size() == 0) continue;
    CHECK((g1.gW[k] - g0.gW[k]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("input gradients: linear net repeats the weight product per sample") {
  // two stacked linear layers; d out / d x = W2 * W1 for every sample
  LayerSpec dense;
  dense.kind = LayerKind::Dense;
  dense.input_width = 4;
  dense.channels = 3;
  dense.activation = Activation::Linear;
  LayerSpec head;
  head.kind = LayerKind::Output;
  head.input_width = 3;
  head.channels = 1;
  head.activation = Activation::Linear;
  const Network net({dense, head});
  const ModelState state = net.init_state(31);

  Eigen::MatrixXd X(6, 4);
  X.setRandom();
  const Eigen::MatrixXd grads = net.input_gradients(state, X, Eigen::MatrixXd(6, 0));
  const Eigen::RowVectorXd expected =
      state.layers[1].W * state.layers[0].W;  // 1x3 times 3x4
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(grads(i, j) == doctest::Approx(expected[j]).epsilon(1e-12));
}

TEST_CASE("input gradients: disconnected feature group has zero gradient") {
  auto prob = testing::random_problem(41, 6, 2, 3, 2, false);
  // zero the first layer weights of feature 2 (group 2)
  prob.state.layers[0].W.row(2).setZero();
  const Eigen::MatrixXd grads =
      prob.net.input_gradients(prob.state, prob.X, prob.C);
  for (int i = 0; i < grads.rows(); ++i)
    for (int c = 0; c < 3; ++c)  // M+1 = 3 copies of feature 2
      CHECK(grads(i, 2 * 3 + c) == 0.0);
}

TEST_CASE("input gradients match central finite differences") {
  auto prob = testing::random_problem(51, 8, 2, 5, 2, false);
  CHECK(testing::max_input_gradient_error(prob) < 1e-5);
  auto prob2 = testing::random_problem(52, 8, 2, 5, 2, true);
  CHECK(testing::max_input_gradient_error(prob2) < 1e-5);
}

TEST_CASE("adam: zero gradient with zero moments is a fixed point") {
  Eigen::MatrixXd param(2, 2), m(2, 2), v(2, 2), grad(2, 2);
  param << 1.0, -2.0, 3.0, 4.0;
  m.setZero();
  v.setZero();
  grad.setZero();
  const Eigen::MatrixXd before = param;
  adam_update(param, m, v, grad, 1, 0.001, 0.9, 0.999, 1e-8);
  CHECK((param - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: first step with unit gradient") {
  Eigen::MatrixXd param(1, 1), m(1, 1), v(1, 1), grad(1, 1);
  param << 0.0;
  m.setZero();
  v.setZero();
  grad << 1.0;
  adam_update(param, m, v, grad, 1, 0.001, 0.9, 0.999, 1e-8);
  CHECK(param(0, 0) == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam: five steps match a scripted reference") {
  // independent recomputation of the bias-corrected recursion
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double gs[5] = {1.0, -0.5, 0.25, 2.0, -1.0};
  double rp = 0.3, rm = 0.0, rv = 0.0;
  Eigen::MatrixXd param(1, 1), m(1, 1), v(1, 1), grad(1, 1);
  param << 0.3;
  m.setZero();
  v.setZero();
  for (int t = 1; t <= 5; ++t) {
    const double g = gs[t - 1];
    rm = b1 * rm + (1 - b1) * g;
    rv = b2 * rv + (1 - b2) * g * g;
    rp -= lr * (rm / (1 - std::pow(b1, t))) / (std::sqrt(rv / (1 - std::pow(b2, t))) + eps);
    grad << g;
    adam_update(param, m, v, grad, t, lr, b1, b2, eps);
    CHECK(param(0, 0) == doctest::Approx(rp).epsilon(1e-12));
  }
}

TEST_CASE("adam_step rejects non-finite gradients") {
  auto prob = testing::random_problem(61, 6, 2, 3, 2, false);
  Gradients grads = prob.net.make_gradients();
  prob.net.backprop(prob.state, prob.X, prob.C, prob.y, prob.loss, grads);
  grads.gW[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(adam_step(prob.state, grads, 0.001));
}

TEST_CASE("losses: fixed points and analytic values") {
  Eigen::VectorXd y(3);
  y << 0.2, -1.0, 4.0;
  CHECK(loss_mse(y, y) == 0.0);

  Eigen::VectorXd ones(1), half(1);
  ones << 1.0;
  half << 0.5;
  CHECK(loss_bce(ones, half) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  Eigen::VectorXd a(2), b(3);
  CHECK_THROWS(loss_mse(a, b));
}

TEST_CASE("losses match brute-force summation") {
  Rng rng(71);
  Eigen::VectorXd y(40), yh(40), labels(40), probs(40);
  for (int i = 0; i < 40; ++i) {
    y[i] = rng.normal();
    yh[i] = rng.normal();
    labels[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    probs[i] = rng.uniform(0.02, 0.98);
  }
  double mse = 0.0, bce = 0.0;
  for (int i = 0; i < 40; ++i) {
    mse += (y[i] - yh[i]) * (y[i] - yh[i]);
    bce -= labels[i] * std::log(probs[i]) + (1 - labels[i]) * std::log(1 - probs[i]);
  }
  CHECK(loss_mse(y, yh) == doctest::Approx(mse / 40).epsilon(1e-13));
  CHECK(loss_bce(labels, probs) == doctest::Approx(bce / 40).epsilon(1e-13));
}

TEST_CASE("auc: trivial rankings and the pairwise oracle") {
  CHECK(auc({3.0, 4.0}, {1.0, 2.0}) == 1.0);
  CHECK(auc({1.0, 2.0}, {3.0, 4.0}) == 0.0);
  CHECK(auc({1.0}, {1.0}) == 0.5);
  CHECK_THROWS(auc({}, {1.0}));

  Rng rng(81);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> pos(7), neg(9);
    for (auto& v : pos) v = std::round(rng.uniform(0, 6));  // force ties
    for (auto& v : neg) v = std::round(rng.uniform(0, 6));
    double count = 0.0;
    for (double a : pos)
      for (double b : neg) count += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    CHECK(auc(pos, neg) == count / (7.0 * 9.0));
  }
}

TEST_CASE("auc invariant under strictly increasing transforms") {
  Rng rng(91);
  std::vector<double> pos(11), neg(13);
  for (auto& v : pos) v = rng.normal();
  for (auto& v : neg) v = rng.normal();
  const double base = auc(pos, neg);
  auto transform = [](std::vector<double> v) {
    for (auto& x : v) x = std::exp(2.0 * x) + 1.0;
    return v;
  };
  CHECK(auc(transform(pos), transform(neg)) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("tensor shape bookkeeping and finiteness") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  t.at3(1, 2, 3) = 5.0;
  CHECK(t[23] == 5.0);
  CHECK(t.all_finite());
  t[0] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS(t.require_finite("test tensor"));
}
