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
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fedsplit/data.h"
#include "fedsplit/ledger.h"
#include "fedsplit/rng.h"
#include "fedsplit/sign_optimizer.h"
#include "fedsplit/split_model.h"

namespace fedsplit {

struct ProtocolOptions {
  Algorithm algorithm = Algorithm::kTwoStage;
  double participation = 1.0;  // C
  std::size_t batch_size = 32;  // B
  double learning_rate = 0.01;  // delta
  LrSchedule lr_schedule = LrSchedule::kConstant;
  std::size_t local_epochs = 1;
  LossWeights loss;
  double mu = 0.0;  // FedProx proximal weight
  BroadcastScope scope = BroadcastScope::kAll;
  InitMode init_mode = InitMode::kInitOnce;
  bool require_odd_participants = false;
  /// Local-only passes (lambda = 0, no traffic) before round 1.
  std::size_t warmup_rounds = 0;
  EnsembleMode ensemble_mode = EnsembleMode::kGlobalHead;
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> participants;
  /// Mean over the round's local batches of the weighted loss terms.
  LossBreakdown loss;
  Traffic traffic;
  std::uint64_t cumulative_payload_bits = 0;
  /// Filled in by the experiment driver.
  std::optional<double> accuracy;
  std::optional<double> dcor;
  double wall_ms = 0.0;
};

/// Upload as decoded by the server.
struct SignUpload {
  std::size_t client = 0;
  SignVector signs;
};

/// Server side of the vote-based protocol: participant sampling, the
/// majority vote and the reference copy of the shared parameters.
class SignServer {
 public:
  SignServer(std::size_t clients, Tensor initial_params, double participation,
             bool require_odd, std::uint64_t seed);

  std::size_t round() const noexcept { return round_; }
  std::size_t clients() const noexcept { return clients_; }
  const Tensor& params() const noexcept { return params_; }
  /// Starts as all +1 before any gradient exists.
  const SignVector& last_vote() const noexcept { return last_vote_; }
  /// Votes of completed rounds, index r - 1 for round r.
  const std::vector<SignVector>& history() const noexcept { return history_; }

  std::size_t participants_per_round() const;
  /// Uniform without replacement, ascending client ids. Does not advance the
  /// round.
  std::vector<std::size_t> sample_participants();

  /// Validates every upload, sorts by client id, votes, applies the decision
  /// to the reference copy with step `delta` and advances the round. Throws
  /// ProtocolError before mutating anything when an upload has the wrong
  /// length, comes from an unknown or duplicate client, or the set is empty.
  VoteResult close_round(std::vector<SignUpload> uploads, double delta);

  /// Replaces the reference copy (e.g. with its wire-quantized version).
  void reset_params(Tensor params);
  std::size_t add_client();

 private:
  std::size_t clients_;
  Tensor params_;
  double participation_;
  bool require_odd_;
  Rng rng_;
  std::size_t round_ = 0;
  SignVector last_vote_;
  std::vector<SignVector> history_;
};

/// Uniform sample of n of m ids without replacement, ascending.
std::vector<std::size_t> sample_without_replacement(std::size_t m,
                                                    std::size_t n, Rng& rng);

struct ClientState {
  std::size_t id = 0;
  /// Encoder and aux head; empty for schemes without a cut layer.
  LocalModel local;
  /// Replica of the shared parameters (global head, or the full model).
  GlobalHead head;
  Dataset shard;
  Rng rng;
};

/// A simulated federation: m clients plus a server, advanced one round at a
/// time. Deterministic given the options' seed.
class Federation {
 public:
  virtual ~Federation() = default;

  virtual RoundRecord run_round() = 0;
  /// Predicted labels for new data (ensemble inference for two-stage).
  virtual std::vector<int> predict(const Tensor& x) const = 0;
  /// Mean DCOR between x and the representation the protocol exposes: the
  /// smashed data of every client's encoder, or the first dense layer's
  /// activation for models without a cut.
  virtual double probe_dcor(const Tensor& x) const = 0;
  /// Registers a new client holding `shard`; returns its id.
  virtual std::size_t add_client(Dataset shard) = 0;
  /// Size of the communicated parameter vector (G or N).
  virtual std::size_t shared_parameter_count() const = 0;
  virtual std::size_t client_count() const = 0;
  virtual std::size_t round() const = 0;
  /// Local-only training before the first round (two-stage only).
  virtual void warmup(std::size_t passes) { (void)passes; }

  const CommLedger& ledger() const noexcept { return ledger_; }
  double evaluate(const Dataset& test) const;

 protected:
  CommLedger ledger_;
};

/// Two-stage split learning with sign votes on the global head, or plain
/// majority-vote signSGD on a full model (kSignSgdOnly).
class VoteFederation : public Federation {
 public:
  VoteFederation(const ProtocolOptions& options, const ModelShape& shape,
                 std::vector<Dataset> shards);

  RoundRecord run_round() override;
  std::vector<int> predict(const Tensor& x) const override;
  double probe_dcor(const Tensor& x) const override;
  std::size_t add_client(Dataset shard) override;
  std::size_t shared_parameter_count() const override;
  std::size_t client_count() const override { return clients_.size(); }
  std::size_t round() const override { return server_.round(); }
  void warmup(std::size_t passes) override;

  const SignServer& server() const noexcept { return server_; }
  const std::vector<ClientState>& clients() const noexcept { return clients_; }
  std::vector<LocalModel> local_models() const;
  /// Global head rebuilt from the server's reference copy.
  GlobalHead reference_head() const;

  /// One ClientUpdate: a local pass of B-sized batches with per-batch sign
  /// steps on local parameters; returns sign of the accumulated shared
  /// gradient. `loss_sum`/`batches` accumulate the weighted loss terms.
  SignVector client_update(ClientState& client, std::size_t round,
                           LossBreakdown& loss_sum, std::size_t& batches);

 private:
  void send_model_init(std::size_t round, std::size_t client);
  void deliver_vote(ClientState& client, const SignVector& vote,
                    std::size_t vote_round, std::size_t ledger_round);
  bool two_stage() const {
    return options_.algorithm == Algorithm::kTwoStage;
  }

  ProtocolOptions options_;
  ModelShape shape_;
  std::vector<ClientState> clients_;
  SignServer server_;
  /// Quantized round-0 parameters; late joiners start here and replay votes.
  Tensor initial_params_;
  std::vector<bool> initialized_;
};

/// FedAvg and FedProx: full-precision parameter exchange with participants.
class AveragingFederation : public Federation {
 public:
  AveragingFederation(const ProtocolOptions& options, const ModelShape& shape,
                      std::vector<Dataset> shards);

  RoundRecord run_round() override;
  std::vector<int> predict(const Tensor& x) const override;
  double probe_dcor(const Tensor& x) const override;
  std::size_t add_client(Dataset shard) override;
  std::size_t shared_parameter_count() const override;
  std::size_t client_count() const override { return shards_.size(); }
  std::size_t round() const override { return round_; }

  const Network& global_model() const noexcept { return model_; }

 private:
  ProtocolOptions options_;
  Network model_;
  std::vector<Dataset> shards_;
  std::vector<Rng> client_rngs_;
  Rng sampler_;
  std::size_t round_ = 0;
};

std::unique_ptr<Federation> make_federation(const ProtocolOptions& options,
                                            const ModelShape& shape,
                                            std::vector<Dataset> shards);

/// Minibatch index lists over a shuffled order; a trailing batch of one
/// sample is merged into the previous batch.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n,
                                                   std::size_t batch_size,
                                                   Rng& rng);

}  // namespace fedsplit
