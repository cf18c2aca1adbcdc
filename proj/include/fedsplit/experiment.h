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
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedsplit/config.h"
#include "fedsplit/data.h"
#include "fedsplit/ledger.h"
#include "fedsplit/protocol.h"
#include "fedsplit/split_model.h"

namespace fedsplit {

struct PreparedData {
  Dataset train;
  Dataset test;
  PartitionPlan plan;
  std::vector<Dataset> shards;
  /// First probe_batch test rows; never trained on.
  Tensor probe;
  ModelShape shape;
  /// Identifies the learning task; runs are comparable only if equal.
  std::string task;
};

/// Loads or synthesizes the data, splits it and partitions the training set.
/// Throws ConfigError, IoError or IngestionError before any training.
PreparedData prepare_data(const FederationConfig& cfg, std::uint64_t seed);

struct ExperimentResult {
  std::uint64_t seed = 0;
  std::string task;
  Algorithm algorithm = Algorithm::kTwoStage;
  std::size_t shared_params = 0;
  double initial_accuracy = 0.0;
  std::optional<double> initial_dcor;
  std::vector<RoundRecord> records;
  Traffic total;
  double final_accuracy = 0.0;
  /// First evaluated round whose test accuracy reaches the target.
  std::optional<std::size_t> rounds_to_target;
  std::optional<std::uint64_t> bits_to_target;
};

/// Called after each round with the federation in its post-round state.
using RoundObserver =
    std::function<void(const Federation&, const RoundRecord&)>;

struct TrainedRun {
  PreparedData data;
  std::unique_ptr<Federation> federation;
  ExperimentResult result;
};

/// Runs cfg.rounds rounds and keeps the trained federation.
TrainedRun train_federation(const FederationConfig& cfg, std::uint64_t seed,
                            const RoundObserver& observer = {});
ExperimentResult run_experiment(const FederationConfig& cfg,
                                std::uint64_t seed);

struct RepeatedResult {
  std::vector<ExperimentResult> runs;
  double mean_final_accuracy = 0.0;
  /// Sample standard deviation; 0 for a single run.
  double sd_final_accuracy = 0.0;
};

/// cfg.repeats runs at seeds cfg.seed, cfg.seed + 1, ...
RepeatedResult run_repeated(const FederationConfig& cfg);

struct UniversalityResult {
  /// Ensemble inference over every client's encoder (new one included).
  double two_stage_accuracy = 0.0;
  double fedavg_accuracy = 0.0;
  /// The new client's own encoder into the global head.
  double two_stage_own_encoder_accuracy = 0.0;
  /// Ensemble over the aux heads instead of the global head.
  double two_stage_aux_ensemble_accuracy = 0.0;
};

/// Trains two_stage and fedavg federations on `two_stage_cfg.data` blobs for
/// their configured rounds, then adds one client holding fresh samples from
/// the same class centers rotated by `angle_degrees`, continues for
/// `adapt_rounds`, and scores both on the new client's held-out samples.
/// The blob dimension must be a perfect square.
UniversalityResult run_universality(const FederationConfig& two_stage_cfg,
                                    const FederationConfig& fedavg_cfg,
                                    std::size_t adapt_rounds,
                                    double angle_degrees, std::uint64_t seed);

}  // namespace fedsplit
