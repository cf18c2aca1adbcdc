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

#include "fedsplit/ledger.h"

#include <algorithm>
#include <cmath>

#include "fedsplit/bytes.h"
#include "fedsplit/errors.h"

namespace fedsplit {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kTwoStage:
      return "two_stage";
    case Algorithm::kFedAvg:
      return "fedavg";
    case Algorithm::kFedProx:
      return "fedprox";
    case Algorithm::kSignSgdOnly:
      return "signsgd_only";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "two_stage") return Algorithm::kTwoStage;
  if (name == "fedavg") return Algorithm::kFedAvg;
  if (name == "fedprox") return Algorithm::kFedProx;
  if (name == "signsgd_only") return Algorithm::kSignSgdOnly;
  throw ConfigError("unknown algorithm '" + name + "'");
}

std::string to_string(InitMode m) {
  return m == InitMode::kTable2Literal ? "table2_literal" : "init_once";
}

InitMode parse_init_mode(const std::string& name) {
  if (name == "init_once") return InitMode::kInitOnce;
  if (name == "table2_literal") return InitMode::kTable2Literal;
  throw ConfigError("unknown init mode '" + name + "'");
}

std::string to_string(BroadcastScope s) {
  return s == BroadcastScope::kParticipants ? "participants" : "all";
}

BroadcastScope parse_broadcast_scope(const std::string& name) {
  if (name == "all") return BroadcastScope::kAll;
  if (name == "participants") return BroadcastScope::kParticipants;
  throw ConfigError("unknown broadcast scope '" + name + "'");
}

std::string to_string(MessageKind k) {
  switch (k) {
    case MessageKind::kModelInit:
      return "ModelInit";
    case MessageKind::kSignUp:
      return "SignUp";
    case MessageKind::kVoteDown:
      return "VoteDown";
    case MessageKind::kParamsUp:
      return "ParamsUp";
    case MessageKind::kParamsDown:
      return "ParamsDown";
  }
  return "unknown";
}

bool is_uplink(MessageKind k) {
  return k == MessageKind::kSignUp || k == MessageKind::kParamsUp;
}

Message make_sign_message(MessageKind kind, std::size_t round,
                          std::size_t client, const SignVector& signs) {
  return {kind, round, client, signs.payload_bits(), signs.encode_wire()};
}

Message make_params_message(MessageKind kind, std::size_t round,
                            std::size_t client, const Tensor& params) {
  ByteWriter w;
  w.u32_le(static_cast<std::uint32_t>(params.size()));
  for (double v : params.data()) w.f32_le(static_cast<float>(v));
  return {kind, round, client, params.size() * kParamBits, w.take()};
}

Tensor decode_params_wire(std::span<const std::uint8_t> wire) {
  ByteReader r(wire);
  const std::uint32_t count = r.u32_le("parameter count");
  std::vector<double> values(count);
  for (double& v : values) v = static_cast<double>(r.f32_le("parameters"));
  if (r.remaining() != 0) {
    throw IngestionError("trailing bytes after parameters", r.offset());
  }
  return Tensor::vector(std::move(values));
}

void CommLedger::record(const Message& msg) {
  Traffic& round = per_round_[msg.round];
  if (per_device_.size() <= msg.client) per_device_.resize(msg.client + 1);
  Traffic& device = per_device_[msg.client];
  for (Traffic* t : {&round, &device, &total_}) {
    (is_uplink(msg.kind) ? t->uplink : t->downlink) += msg.payload_bits;
    t->header += kHeaderBits;
  }
  ++messages_;
}

Traffic CommLedger::round_traffic(std::size_t round) const {
  const auto it = per_round_.find(round);
  return it == per_round_.end() ? Traffic{} : it->second;
}

Traffic CommLedger::device_traffic(std::size_t client) const {
  return client < per_device_.size() ? per_device_[client] : Traffic{};
}

std::vector<std::size_t> CommLedger::rounds() const {
  std::vector<std::size_t> out;
  for (const auto& [r, _] : per_round_) out.push_back(r);
  return out;
}

std::size_t participant_count(std::size_t clients, double participation,
                              bool require_odd) {
  // The epsilon absorbs representation error, e.g. 0.1 * 30.
  auto n = static_cast<std::size_t>(
      std::floor(participation * static_cast<double>(clients) + 1e-9));
  n = std::clamp<std::size_t>(n, 1, std::max<std::size_t>(clients, 1));
  if (require_odd && n % 2 == 0) --n;
  return n;
}

std::uint64_t predict_total_bits(const CostQuery& q) {
  const std::uint64_t m = q.clients;
  const std::uint64_t n = participant_count(q.clients, q.participation,
                                            q.require_odd);
  const std::uint64_t rounds = q.rounds;
  const std::uint64_t params = q.params;
  switch (q.algorithm) {
    case Algorithm::kFedAvg:
    case Algorithm::kFedProx:
      return rounds * n * 2 * params * kParamBits;
    case Algorithm::kTwoStage:
    case Algorithm::kSignSgdOnly: {
      const std::uint64_t receivers = q.scope == BroadcastScope::kAll ? m : n;
      const std::uint64_t steady = rounds * (n + receivers) * params;
      std::uint64_t init = 0;
      if (q.include_init && rounds > 0) {
        const std::uint64_t once = m * params * kParamBits;
        init = q.init == InitMode::kTable2Literal ? rounds * once : once;
      }
      return init + steady;
    }
  }
  return 0;
}

}  // namespace fedsplit
