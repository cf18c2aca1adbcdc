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

#include "fedsplit/network.h"

#include <algorithm>
#include <cmath>

#include "fedsplit/errors.h"
#include "fedsplit/rng.h"

namespace fedsplit {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
  }
  return "unknown";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "'");
}

std::vector<LayerSpec> chain_specs(std::span<const std::size_t> dims,
                                   Activation hidden, Activation last) {
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    specs.push_back({dims[i], dims[i + 1], i + 2 == dims.size() ? last : hidden});
  }
  return specs;
}

Network::Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weights.rank() != 2 || l.bias.rank() != 1 ||
        l.bias.size() != l.weights.rows()) {
      throw ConfigError("layer " + std::to_string(i) +
                        ": bias does not match weights " +
                        l.weights.shape_string());
    }
    if (i > 0 && layers_[i - 1].out() != l.in()) {
      throw ConfigError("layer " + std::to_string(i) + " expects input dim " +
                        std::to_string(l.in()) + " but previous layer emits " +
                        std::to_string(layers_[i - 1].out()));
    }
  }
}

Network Network::random(std::span<const LayerSpec> specs, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  layers.reserve(specs.size());
  for (const auto& spec : specs) {
    if (spec.in == 0 || spec.out == 0) {
      throw ConfigError("layer dimensions must be positive");
    }
    const double limit =
        std::sqrt(6.0 / static_cast<double>(spec.in + spec.out));
    DenseLayer layer{Tensor({spec.out, spec.in}), Tensor({spec.out}),
                     spec.activation};
    for (double& w : layer.weights.data()) w = rng.uniform(-limit, limit);
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

std::size_t Network::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().in();
}

std::size_t Network::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().out();
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

std::vector<LayerSpec> Network::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back({l.in(), l.out(), l.activation});
  return out;
}

namespace {

double activate(Activation a, double v) {
  switch (a) {
    case Activation::kRelu:
      return v > 0.0 ? v : 0.0;
    case Activation::kTanh:
      return std::tanh(v);
    case Activation::kIdentity:
      break;
  }
  return v;
}

// Derivative expressed through the activated output.
double activation_slope(Activation a, double activated) {
  switch (a) {
    case Activation::kRelu:
      return activated > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh:
      return 1.0 - activated * activated;
    case Activation::kIdentity:
      break;
  }
  return 1.0;
}

Tensor layer_forward(const DenseLayer& layer, const Tensor& x) {
  const std::size_t batch = x.rows();
  const std::size_t in = layer.in();
  const std::size_t out = layer.out();
  Tensor y({batch, out});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto xr = x.row(b);
    for (std::size_t o = 0; o < out; ++o) {
      const auto wr = layer.weights.row(o);
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      y(b, o) = activate(layer.activation, acc);
    }
  }
  return y;
}

void check_input(const Network& net, const Tensor& x) {
  if (net.empty()) throw UsageError("forward on an empty network");
  if (x.rank() != 2 || x.cols() != net.input_dim()) {
    throw ConfigError("network expects input (batch, " +
                      std::to_string(net.input_dim()) + "), got " +
                      x.shape_string());
  }
  x.require_finite("network input");
}

}  // namespace

ForwardResult forward(const Network& net, const Tensor& x) {
  check_input(net, x);
  ForwardResult result;
  result.cache.inputs.reserve(net.layers().size());
  result.cache.outputs.reserve(net.layers().size());
  Tensor current = x;
  for (const auto& layer : net.layers()) {
    Tensor next = layer_forward(layer, current);
    result.cache.inputs.push_back(std::move(current));
    result.cache.outputs.push_back(next);
    current = std::move(next);
  }
  current.require_finite("network output");
  result.output = std::move(current);
  return result;
}

Tensor predict(const Network& net, const Tensor& x) {
  check_input(net, x);
  Tensor current = x;
  for (const auto& layer : net.layers()) current = layer_forward(layer, current);
  current.require_finite("network output");
  return current;
}

Tensor first_layer_output(const Network& net, const Tensor& x) {
  check_input(net, x);
  return layer_forward(net.layers().front(), x);
}

BackwardResult backward(const Network& net, const ForwardCache& cache,
                        const Tensor& loss_grad_at_output) {
  if (cache.empty()) throw UsageError("backward called without forward cache");
  const auto& layers = net.layers();
  if (cache.inputs.size() != layers.size() ||
      cache.outputs.size() != layers.size()) {
    throw UsageError("forward cache does not belong to this network");
  }
  const std::size_t batch = cache.inputs.front().rows();
  if (loss_grad_at_output.rank() != 2 || loss_grad_at_output.rows() != batch ||
      loss_grad_at_output.cols() != net.output_dim()) {
    throw ConfigError("output gradient has shape " +
                      loss_grad_at_output.shape_string());
  }

  BackwardResult result{Tensor({net.parameter_count()}), Tensor()};
  // Parameter offsets in flatten order.
  std::vector<std::size_t> offsets(layers.size());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offsets[l] = offset;
    offset += layers[l].parameter_count();
  }

  Tensor upstream = loss_grad_at_output;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const DenseLayer& layer = layers[li];
    const Tensor& in = cache.inputs[li];
    const Tensor& out = cache.outputs[li];
    const std::size_t n_in = layer.in();
    const std::size_t n_out = layer.out();

    Tensor pre_grad({batch, n_out});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < n_out; ++o) {
        pre_grad(b, o) =
            upstream(b, o) * activation_slope(layer.activation, out(b, o));
      }
    }

    auto grads = result.param_grads.data().subspan(offsets[li],
                                                   layer.parameter_count());
    auto weight_grads = grads.first(n_out * n_in);
    auto bias_grads = grads.subspan(n_out * n_in);
    Tensor down({batch, n_in});
    for (std::size_t b = 0; b < batch; ++b) {
      const auto xr = in.row(b);
      auto dr = down.row(b);
      for (std::size_t o = 0; o < n_out; ++o) {
        const double g = pre_grad(b, o);
        if (g == 0.0) continue;
        bias_grads[o] += g;
        const auto wr = layer.weights.row(o);
        for (std::size_t i = 0; i < n_in; ++i) {
          weight_grads[o * n_in + i] += g * xr[i];
          dr[i] += g * wr[i];
        }
      }
    }
    upstream = std::move(down);
  }
  result.input_grad = std::move(upstream);
  result.param_grads.require_finite("parameter gradient");
  result.input_grad.require_finite("input gradient");
  return result;
}

LossAndGrad softmax_cross_entropy(const Tensor& logits,
                                  std::span<const int> labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw ConfigError("logits " + logits.shape_string() + " vs " +
                      std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  if (batch == 0) throw UsageError("cross-entropy on an empty batch");
  LossAndGrad result{0.0, Tensor({batch, classes})};
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ConfigError("label " + std::to_string(label) + " out of range");
    }
    const auto row = logits.row(b);
    const double peak = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double v : row) denom += std::exp(v - peak);
    const double log_denom = std::log(denom);
    result.loss += (log_denom - (row[label] - peak)) * inv_batch;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(row[c] - peak - log_denom);
      result.grad(b, c) =
          (p - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0)) * inv_batch;
    }
  }
  return result;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    const auto row = logits.row(b);
    out[b] = static_cast<int>(std::max_element(row.begin(), row.end()) -
                              row.begin());
  }
  return out;
}

Tensor flatten_params(const Network& net) {
  std::vector<double> flat;
  flat.reserve(net.parameter_count());
  for (const auto& l : net.layers()) {
    flat.insert(flat.end(), l.weights.values().begin(),
                l.weights.values().end());
    flat.insert(flat.end(), l.bias.values().begin(), l.bias.values().end());
  }
  return Tensor::vector(std::move(flat));
}

void unflatten_params(Network& net, const Tensor& flat) {
  if (flat.size() != net.parameter_count()) {
    throw ConfigError("parameter vector has " + std::to_string(flat.size()) +
                      " values, network needs " +
                      std::to_string(net.parameter_count()));
  }
  std::size_t pos = 0;
  for (auto& l : net.mutable_layers()) {
    for (double& w : l.weights.data()) w = flat[pos++];
    for (double& b : l.bias.data()) b = flat[pos++];
  }
}

}  // namespace fedsplit
