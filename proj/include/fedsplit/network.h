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

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsplit/tensor.h"

namespace fedsplit {

enum class Activation { kIdentity, kRelu, kTanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

/// Fully-connected layer: y = act(x W^T + b), W is (out, in).
struct DenseLayer {
  Tensor weights;
  Tensor bias;
  Activation activation = Activation::kIdentity;

  std::size_t in() const { return weights.cols(); }
  std::size_t out() const { return weights.rows(); }
  std::size_t parameter_count() const { return out() * in() + out(); }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::kIdentity;
};

/// Chains specs into layers with dims[i] -> dims[i+1]; every layer uses
/// `hidden` except the last, which uses `last`.
std::vector<LayerSpec> chain_specs(std::span<const std::size_t> dims,
                                   Activation hidden, Activation last);

/// Ordered stack of dense layers.
class Network {
 public:
  Network() = default;
  /// Throws ConfigError when consecutive layer dims do not chain.
  explicit Network(std::vector<DenseLayer> layers);

  /// Glorot-uniform weights in +-sqrt(6 / (in + out)), zero bias.
  static Network random(std::span<const LayerSpec> specs, std::uint64_t seed);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& mutable_layers() noexcept { return layers_; }
  bool empty() const noexcept { return layers_.empty(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;
  std::vector<LayerSpec> specs() const;

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// Everything backward() needs: per layer, its input and its activated
/// output.
struct ForwardCache {
  std::vector<Tensor> inputs;
  std::vector<Tensor> outputs;

  bool empty() const noexcept { return inputs.empty(); }
};

struct ForwardResult {
  Tensor output;
  ForwardCache cache;
};

struct BackwardResult {
  /// Flat, in flatten_params order; length parameter_count().
  Tensor param_grads;
  /// Same shape as the forward input.
  Tensor input_grad;
};

ForwardResult forward(const Network& net, const Tensor& x);
/// Output only, no cache.
Tensor predict(const Network& net, const Tensor& x);

/// Activation of the first layer only (used as the representation probe for
/// models without a cut layer).
Tensor first_layer_output(const Network& net, const Tensor& x);

/// Throws UsageError if `cache` is empty or does not belong to `net`.
BackwardResult backward(const Network& net, const ForwardCache& cache,
                        const Tensor& loss_grad_at_output);

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. logits.
LossAndGrad softmax_cross_entropy(const Tensor& logits,
                                  std::span<const int> labels);

/// Row-wise argmax.
std::vector<int> argmax_rows(const Tensor& logits);

/// Parameter vector ordering: layer order; within a layer, weights row-major
/// then bias.
Tensor flatten_params(const Network& net);
/// Throws ConfigError on length mismatch.
void unflatten_params(Network& net, const Tensor& flat);

}  // namespace fedsplit
