// Copyright 2026 The fedsplit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fedsplit/errors.h"
#include "fedsplit/network.h"
#include "fedsplit/rng.h"
#include "fedsplit/tensor.h"
#include "support.h"

using namespace fedsplit;
using fedsplit::testing::finite_difference;
using fedsplit::testing::max_gradient_error;
using fedsplit::testing::naive_cross_entropy;
using fedsplit::testing::random_matrix;

namespace {

double apply_activation(Activation a, double v) {
  switch (a) {
    case Activation::kIdentity:
      return v;
    case Activation::kRelu:
      return v > 0.0 ? v : 0.0;
    case Activation::kTanh:
      return std::tanh(v);
  }
  return v;
}

// Independent loop forward pass.
Tensor naive_forward(const Network& net, const Tensor& x) {
  std::vector<std::vector<double>> cur(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) cur[r].push_back(x(r, c));
  }
  for (const DenseLayer& layer : net.layers()) {
    std::vector<std::vector<double>> next(cur.size());
    for (std::size_t r = 0; r < cur.size(); ++r) {
      for (std::size_t o = 0; o < layer.out(); ++o) {
        double s = layer.bias[o];
        for (std::size_t i = 0; i < layer.in(); ++i) {
          s += layer.weights(o, i) * cur[r][i];
        }
        next[r].push_back(apply_activation(layer.activation, s));
      }
    }
    cur = std::move(next);
  }
  Tensor out({cur.size(), cur.empty() ? 0 : cur[0].size()});
  for (std::size_t r = 0; r < cur.size(); ++r) {
    for (std::size_t c = 0; c < cur[r].size(); ++c) out(r, c) = cur[r][c];
  }
  return out;
}

Network small_net(Activation hidden, std::uint64_t seed) {
  const std::vector<LayerSpec> specs{{3, 5, hidden}, {5, 4, Activation::kTanh},
                                     {4, 2, Activation::kIdentity}};
  Network net = Network::random(specs, seed);
  // Nonzero biases so every code path carries weight.
  Rng rng(seed + 99);
  for (DenseLayer& l : net.mutable_layers()) {
    for (double& b : l.bias.data()) b = 0.3 * rng.normal();
  }
  return net;
}

// Scalar probe: sum of output * fixed weights.
double weighted_output(const Network& net, const Tensor& x, const Tensor& w) {
  const Tensor y = predict(net, x);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

}  // namespace

TEST_CASE("tensor shape contract") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ConfigError);
  const Tensor m = Tensor::from_rows({{1, 2}, {3, 4}});
  CHECK(m(1, 0) == 3.0);
  const std::vector<std::size_t> idx{1, 1, 0};
  const Tensor g = m.gather_rows(idx);
  CHECK(g.rows() == 3);
  CHECK(g(2, 1) == 2.0);
  Tensor bad = m;
  bad[0] = std::nan("");
  CHECK_FALSE(bad.all_finite());
  CHECK_THROWS_AS(bad.require_finite("test"), NumericsError);
}

TEST_CASE("identity and relu layers") {
  Network id({DenseLayer{Tensor::from_rows({{1, 0}, {0, 1}}),
                         Tensor::vector({0, 0}), Activation::kIdentity}});
  CHECK(predict(id, Tensor::from_rows({{1, 2}})) == Tensor::from_rows({{1, 2}}));

  Network relu({DenseLayer{Tensor::from_rows({{1}, {-1}}), Tensor::vector({0, 0}),
                           Activation::kRelu}});
  CHECK(predict(relu, Tensor::from_rows({{3}})) == Tensor::from_rows({{3, 0}}));
}

TEST_CASE("forward matches loop oracle") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const std::vector<LayerSpec> specs{{6, 7, Activation::kRelu},
                                       {7, 3, Activation::kIdentity}};
    Network net = Network::random(specs, seed);
    for (DenseLayer& l : net.mutable_layers()) {
      for (double& b : l.bias.data()) b = rng.normal();
    }
    const Tensor x = random_matrix(4, 6, rng);
    const Tensor fast = forward(net, x).output;
    const Tensor slow = naive_forward(net, x);
    REQUIRE(fast.shape() == slow.shape());
    for (std::size_t i = 0; i < fast.size(); ++i) {
      CHECK(std::abs(fast[i] - slow[i]) <= 1e-12);
    }
  }
}

TEST_CASE("forward rejects mismatched input") {
  Network net = small_net(Activation::kRelu, 3);
  Rng rng(3);
  CHECK_THROWS_AS(forward(net, random_matrix(2, 4, rng)), ConfigError);
  CHECK_THROWS_AS(Network({DenseLayer{Tensor({2, 3}), Tensor::vector({0, 0}),
                                      Activation::kIdentity},
                           DenseLayer{Tensor({1, 3}), Tensor::vector({0}),
                                      Activation::kIdentity}}),
                  ConfigError);
}

TEST_CASE("backward with zero output gradient") {
  Network net = small_net(Activation::kTanh, 4);
  Rng rng(4);
  const Tensor x = random_matrix(5, 3, rng);
  const ForwardResult fwd = forward(net, x);
  const BackwardResult b = backward(net, fwd.cache, Tensor({5, 2}));
  CHECK(b.param_grads.size() == net.parameter_count());
  CHECK(b.input_grad.shape() == x.shape());
  for (double v : b.param_grads.data()) CHECK(v == 0.0);
  for (double v : b.input_grad.data()) CHECK(v == 0.0);
}

TEST_CASE("backward without cache is a usage error") {
  Network net = small_net(Activation::kRelu, 5);
  CHECK_THROWS_AS(backward(net, ForwardCache{}, Tensor({1, 2})), UsageError);
}

TEST_CASE("backward matches finite differences") {
  for (Activation hidden :
       {Activation::kRelu, Activation::kTanh, Activation::kIdentity}) {
    CAPTURE(to_string(hidden));
    Network net = small_net(hidden, 11);
    Rng rng(11);
    const Tensor x = random_matrix(4, 3, rng);
    const Tensor w = random_matrix(4, 2, rng);
    const ForwardResult fwd = forward(net, x);
    const BackwardResult b = backward(net, fwd.cache, w);

    const Tensor flat = flatten_params(net);
    const auto param_fd = finite_difference(
        [&](const Tensor& p) {
          Network probe = net;
          unflatten_params(probe, p);
          return weighted_output(probe, x, w);
        },
        flat);
    CHECK(max_gradient_error(b.param_grads, param_fd) <= 1e-4);

    const auto input_fd = finite_difference(
        [&](const Tensor& xi) { return weighted_output(net, xi, w); }, x);
    CHECK(max_gradient_error(b.input_grad, input_fd) <= 1e-4);
  }
}

TEST_CASE("softmax cross-entropy") {
  SUBCASE("uniform logits") {
    const std::vector<int> y{0, 1};
    const LossAndGrad lg = softmax_cross_entropy(Tensor({2, 2}), y);
    CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("huge correct margin") {
    const std::vector<int> y{1};
    const LossAndGrad lg =
        softmax_cross_entropy(Tensor::from_rows({{-500, 500, 0}}), y);
    CHECK(lg.loss >= 0.0);
    CHECK(lg.loss < 1e-12);
  }
  SUBCASE("random case against log-sum-exp oracle") {
    Rng rng(21);
    const Tensor logits = random_matrix(6, 5, rng, 3.0);
    std::vector<int> y;
    for (int i = 0; i < 6; ++i) y.push_back(static_cast<int>(rng.below(5)));
    const LossAndGrad lg = softmax_cross_entropy(logits, y);
    CHECK(std::abs(lg.loss - naive_cross_entropy(logits, y)) <= 1e-10);
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) s += lg.grad(r, c);
      CHECK(std::abs(s) <= 1e-15);
    }
    const auto fd = finite_difference(
        [&](const Tensor& l) { return naive_cross_entropy(l, y); }, logits);
    CHECK(max_gradient_error(lg.grad, fd) <= 1e-4);
  }
  SUBCASE("label out of range") {
    const std::vector<int> y{2};
    CHECK_THROWS(softmax_cross_entropy(Tensor({1, 2}), y));
  }
}

TEST_CASE("argmax rows") {
  const auto a = argmax_rows(Tensor::from_rows({{0, 2, 1}, {5, -1, 5}}));
  CHECK(a == std::vector<int>{1, 0});
}

TEST_CASE("flatten and unflatten") {
  CHECK(flatten_params(Network{}).size() == 0);
  const std::vector<LayerSpec> one{{2, 3, Activation::kIdentity}};
  Network single = Network::random(one, 1);
  CHECK(single.parameter_count() == 9);
  CHECK(flatten_params(single).size() == 9);

  Network net = small_net(Activation::kRelu, 8);
  CHECK(net.parameter_count() == (3 * 5 + 5) + (5 * 4 + 4) + (4 * 2 + 2));
  const Tensor flat = flatten_params(net);
  Network copy = Network::random(net.specs(), 1234);
  unflatten_params(copy, flat);
  CHECK(copy == net);
  CHECK(flatten_params(copy) == flat);

  // Documented order: layer 0 weights row-major, then its bias.
  const DenseLayer& l0 = net.layers()[0];
  CHECK(flat[1] == l0.weights(0, 1));
  CHECK(flat[3] == l0.weights(1, 0));
  CHECK(flat[15] == l0.bias[0]);

  CHECK_THROWS_AS(unflatten_params(copy, Tensor::vector({1, 2})), ConfigError);
}

TEST_CASE("random init is seeded and bounded") {
  const std::vector<LayerSpec> specs{{10, 6, Activation::kRelu}};
  const Network a = Network::random(specs, 42);
  const Network b = Network::random(specs, 42);
  const Network c = Network::random(specs, 43);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  const double bound = std::sqrt(6.0 / 16.0);
  for (double w : a.layers()[0].weights.data()) CHECK(std::abs(w) <= bound);
  for (double v : a.layers()[0].bias.data()) CHECK(v == 0.0);
}

TEST_CASE("rng determinism") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  Rng r(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(7) < 7);
  }
}
