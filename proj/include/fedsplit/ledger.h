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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedsplit/sign_optimizer.h"
#include "fedsplit/tensor.h"

namespace fedsplit {

enum class Algorithm { kTwoStage, kFedAvg, kFedProx, kSignSgdOnly };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

/// kInitOnce: model parameters go down once, before the first round.
/// kTable2Literal: they go down to every client every round, so totals follow
/// rounds * (m * N * 32 + 2 * m * G).
enum class InitMode { kInitOnce, kTable2Literal };

std::string to_string(InitMode m);
InitMode parse_init_mode(const std::string& name);

/// Which clients receive and apply the round's vote.
enum class BroadcastScope { kAll, kParticipants };

std::string to_string(BroadcastScope s);
BroadcastScope parse_broadcast_scope(const std::string& name);

enum class MessageKind { kModelInit, kSignUp, kVoteDown, kParamsUp, kParamsDown };

std::string to_string(MessageKind k);
bool is_uplink(MessageKind k);

/// Fixed per-message header, ledgered apart from payload.
inline constexpr std::uint64_t kHeaderBits = 64;
/// Parameters travel as 32-bit floats.
inline constexpr std::uint64_t kParamBits = 32;

struct Message {
  MessageKind kind = MessageKind::kSignUp;
  std::size_t round = 0;
  std::size_t client = 0;
  /// 1 bit per sign coordinate, 32 per parameter; excludes the header.
  std::uint64_t payload_bits = 0;
  std::vector<std::uint8_t> wire;
};

Message make_sign_message(MessageKind kind, std::size_t round,
                          std::size_t client, const SignVector& signs);

/// Wire: u32 little-endian count, then count little-endian f32 values.
Message make_params_message(MessageKind kind, std::size_t round,
                            std::size_t client, const Tensor& params);
/// Returns the de-quantized parameter vector. Throws IngestionError.
Tensor decode_params_wire(std::span<const std::uint8_t> wire);

struct Traffic {
  std::uint64_t uplink = 0;    // payload bits
  std::uint64_t downlink = 0;  // payload bits
  std::uint64_t header = 0;

  std::uint64_t payload() const { return uplink + downlink; }
};

class CommLedger {
 public:
  void record(const Message& msg);

  Traffic round_traffic(std::size_t round) const;
  Traffic device_traffic(std::size_t client) const;
  Traffic total() const { return total_; }
  std::uint64_t message_count() const { return messages_; }
  /// Rounds with at least one message, ascending.
  std::vector<std::size_t> rounds() const;

 private:
  std::map<std::size_t, Traffic> per_round_;
  std::vector<Traffic> per_device_;
  Traffic total_;
  std::uint64_t messages_ = 0;
};

/// n = max(floor(C * m), 1); with require_odd an even n is reduced by one.
std::size_t participant_count(std::size_t clients, double participation,
                              bool require_odd);

struct CostQuery {
  Algorithm algorithm = Algorithm::kTwoStage;
  std::size_t clients = 0;  // m
  std::size_t rounds = 0;
  /// Communicated parameter count: G (= N1) for the vote-based schemes,
  /// N2 for FedAvg/FedProx.
  std::size_t params = 0;
  double participation = 1.0;
  InitMode init = InitMode::kInitOnce;
  BroadcastScope scope = BroadcastScope::kAll;
  bool require_odd = false;
  bool include_init = true;
};

/// Analytic payload bits for a run (headers excluded).
///   vote-based: init + rounds * (n * G + b * G), b = m (all) or n;
///               init = m * G * 32 once (kInitOnce) or every round
///               (kTable2Literal).
///   FedAvg/FedProx: rounds * n * 2 * N * 32.
/// Exact for scope kAll; under kParticipants with C < 1 catch-up votes are
/// sampling dependent and not included, nor is the vote replay sent to a
/// client that joins mid-run.
std::uint64_t predict_total_bits(const CostQuery& q);

}  // namespace fedsplit
