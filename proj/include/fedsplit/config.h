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
#include <string>
#include <vector>

#include "fedsplit/dcor.h"
#include "fedsplit/ledger.h"
#include "fedsplit/network.h"
#include "fedsplit/protocol.h"
#include "fedsplit/sign_optimizer.h"
#include "fedsplit/split_model.h"

namespace fedsplit {

enum class DataSource { kBlobs, kIdx };
enum class PartitionScheme { kIid, kShard };

struct DataSpec {
  DataSource source = DataSource::kBlobs;
  // blobs
  int classes = 4;
  std::size_t per_class = 250;
  std::size_t dim = 32;
  double spread = 0.5;
  double test_fraction = 0.2;
  // idx
  std::string images;
  std::string labels;
  std::string test_images;
  std::string test_labels;
  std::size_t limit = 0;       // 0 = all
  std::size_t test_limit = 0;  // 0 = all
  // partition
  PartitionScheme partition = PartitionScheme::kShard;
  std::size_t shards_per_client = 3;
  std::size_t shard_size = 0;  // 0 = n_train / (clients * shards_per_client)
};

struct PrivacySpec {
  std::vector<double> alphas{0.1, 0.3, 0.5, 0.7, 0.9};
  std::size_t seeds = 3;
  std::size_t decoder_width = 0;  // 0 = 4 * smashed_dim
  std::size_t decoder_epochs = 60;
  double decoder_lr = 0.05;
  std::size_t decoder_batch = 32;
  double attack_fraction = 0.5;
  std::size_t grid_images = 8;
  /// Learning rate of the FedAvg comparator in leakage tracking.
  double baseline_learning_rate = 0.05;
};

/// Every knob of a run. Parsed from a sectioned `key = value` file:
///
///   [run]        algorithm*, rounds, seed, repeats, eval_interval,
///                target_accuracy
///   [federation] clients, participation, batch_size, learning_rate,
///                lr_schedule, local_epochs, broadcast_scope, init_mode,
///                require_odd_participants, warmup_rounds
///   [loss]       alpha1, alpha2, lambda, mu, dcor_estimator
///   [model]      smashed_dim, encoder_hidden, head_hidden,
///                hidden_activation, ensemble_mode
///   [data]       source, classes, per_class, dim, spread, test_fraction,
///                images, labels, test_images, test_labels, limit,
///                test_limit, partition, shards_per_client, shard_size
///   [privacy]    alphas, seeds, decoder_width, decoder_epochs, decoder_lr,
///                decoder_batch, attack_fraction, grid_images,
///                baseline_learning_rate
///   [output]     dir, wall_time, probe_dcor, probe_batch
///
/// `#` starts a comment. Lists are comma separated; an empty value is an
/// empty list. `*` marks required keys.
struct FederationConfig {
  Algorithm algorithm = Algorithm::kTwoStage;
  std::size_t rounds = 100;
  std::uint64_t seed = 1;
  std::size_t repeats = 1;
  std::size_t eval_interval = 1;
  double target_accuracy = 0.9;

  std::size_t clients = 10;  // m
  double participation = 1.0;  // C
  std::size_t batch_size = 32;  // B
  double learning_rate = 0.01;  // delta
  LrSchedule lr_schedule = LrSchedule::kConstant;
  std::size_t local_epochs = 1;
  BroadcastScope broadcast_scope = BroadcastScope::kAll;
  InitMode init_mode = InitMode::kInitOnce;
  bool require_odd_participants = false;
  std::size_t warmup_rounds = 0;

  double alpha1 = 0.1;
  double alpha2 = 0.1;
  double lambda = 1.0;
  double mu = 0.01;
  DcorEstimator dcor_estimator = DcorEstimator::kStandard;

  std::size_t smashed_dim = 0;  // 0 = ceil(input_dim / 8)
  std::vector<std::size_t> encoder_hidden;
  std::vector<std::size_t> head_hidden;
  Activation hidden_activation = Activation::kRelu;
  EnsembleMode ensemble_mode = EnsembleMode::kGlobalHead;

  DataSpec data;
  PrivacySpec privacy;

  std::string output_dir = "out";
  bool wall_time = false;
  bool probe_dcor = false;
  std::size_t probe_batch = 256;

  /// Cross-field checks; throws ConfigError naming the offending key.
  void validate() const;
  ProtocolOptions protocol() const;
  /// Architecture for data of the given dimension and class count.
  ModelShape model_shape(std::size_t input_dim, std::size_t classes) const;
};

/// Strict parse: unknown sections or keys, duplicates, malformed or
/// out-of-range values and missing required keys raise ConfigError with the
/// line number and key.
FederationConfig parse_config(const std::string& text);
FederationConfig load_config(const std::string& path);

}  // namespace fedsplit
