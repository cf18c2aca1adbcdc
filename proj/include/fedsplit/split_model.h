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

#include "fedsplit/dcor.h"
#include "fedsplit/network.h"
#include "fedsplit/tensor.h"

namespace fedsplit {

/// Architecture shared by every client. The encoder maps raw features to the
/// smashed dimension; the aux head and the global head both map smashed data
/// to class logits. Baselines without a cut layer use the encoder layers
/// followed by the global-head layers as one network.
struct ModelShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> encoder_hidden;
  std::size_t smashed_dim = 0;
  std::vector<std::size_t> head_hidden;
  std::size_t classes = 0;
  Activation hidden_activation = Activation::kRelu;
  Activation cut_activation = Activation::kTanh;

  /// ceil(input_dim / 8).
  static std::size_t default_smashed_dim(std::size_t input_dim);

  std::vector<LayerSpec> encoder_specs() const;
  std::vector<LayerSpec> aux_specs() const;
  std::vector<LayerSpec> head_specs() const;
  std::vector<LayerSpec> full_specs() const;
  /// Throws ConfigError on zero dims or smashed_dim >= input_dim.
  void validate() const;
};

struct LocalModel {
  Network encoder;
  Network aux_head;
};

struct GlobalHead {
  Network net;
  std::size_t replica_version = 0;
};

struct SmashedBatch {
  Tensor z;
  std::size_t source_client = 0;
};

LocalModel make_local_model(const ModelShape& shape, std::uint64_t seed);
GlobalHead make_global_head(const ModelShape& shape, std::uint64_t seed);
Network make_full_model(const ModelShape& shape, std::uint64_t seed);

struct LocalForward {
  SmashedBatch smashed;
  Tensor aux_logits;
};

LocalForward local_forward(const LocalModel& lm, const Tensor& x,
                           std::size_t client = 0);

/// Weighted loss terms; total == l1 + l2 + lg.
struct LossBreakdown {
  double l1 = 0.0;  // alpha1 * ln DCOR(x, z)
  double l2 = 0.0;  // alpha2 * CE(aux head)
  double lg = 0.0;  // lambda * CE(global head)
  double total = 0.0;
};

struct LossWeights {
  double alpha1 = 0.0;
  double alpha2 = 1.0;
  double lambda = 1.0;
  DcorEstimator estimator = DcorEstimator::kStandard;
};

struct TwoStageGradients {
  Tensor encoder;
  Tensor aux;
  /// Unscaled d CE_global / d omega_global; lambda only scales what flows
  /// back across the cut.
  Tensor global;
  LossBreakdown loss;
  bool degenerate = false;
};

/// Forward and backward through encoder, aux head and global head for
/// L = alpha1 ln DCOR(x, z) + alpha2 CE(aux(z)) + lambda CE(global(z)).
TwoStageGradients two_stage_backward(const LocalModel& lm, const GlobalHead& gh,
                                     const Tensor& x,
                                     std::span<const int> labels,
                                     const LossWeights& weights);

enum class EnsembleMode { kGlobalHead, kAuxHeads };

std::string to_string(EnsembleMode m);
EnsembleMode parse_ensemble_mode(const std::string& name);

/// Mean over local models of the logits each produces for `new_x`:
/// global_head(encoder_k(x)) or aux_head_k(encoder_k(x)).
Tensor ensemble_logits(const Tensor& new_x, std::span<const LocalModel> locals,
                       const GlobalHead& gh,
                       EnsembleMode mode = EnsembleMode::kGlobalHead);

/// argmax of ensemble_logits. Throws UsageError for an empty model list.
std::vector<int> ensemble_infer(const Tensor& new_x,
                                std::span<const LocalModel> locals,
                                const GlobalHead& gh,
                                EnsembleMode mode = EnsembleMode::kGlobalHead);

/// Checkpoint blobs. Layout, all little-endian:
///   u32 magic 'FSNT' (0x544E5346), u32 version (1), u32 layer count,
///   per layer: u32 in, u32 out, u32 activation,
///   then parameter_count() f64 values in flatten_params order.
std::vector<std::uint8_t> encode_checkpoint(const Network& net);
/// Parses one blob starting at `offset`, advancing it. Throws IngestionError.
Network decode_checkpoint(std::span<const std::uint8_t> bytes,
                          std::size_t& offset);

/// Writes encoder, aux head and global head blobs back to back.
void save_split_checkpoint(const std::string& path, const LocalModel& lm,
                           const GlobalHead& gh);
void load_split_checkpoint(const std::string& path, LocalModel& lm,
                           GlobalHead& gh);

}  // namespace fedsplit
