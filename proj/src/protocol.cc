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

#include "fedsplit/protocol.h"

#include <algorithm>
#include <numeric>
#include <set>

#include "fedsplit/dcor.h"
#include "fedsplit/errors.h"

namespace fedsplit {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kSharedInitStream = 7;
constexpr std::uint64_t kSamplerStream = 5;
constexpr std::uint64_t kLocalModelStream = 100;
constexpr std::uint64_t kClientRngStream = 10000;

// Round trip through the 32-bit wire representation.
Tensor quantize(const Tensor& params) {
  return decode_params_wire(
      make_params_message(MessageKind::kModelInit, 0, 0, params).wire);
}

void sign_step(Network& net, const Tensor& grad, double lr) {
  Tensor params = flatten_params(net);
  apply_vote_inplace(params, sign_compress(grad), lr);
  unflatten_params(net, params);
}

void accumulate(LossBreakdown& sum, const LossBreakdown& term) {
  sum.l1 += term.l1;
  sum.l2 += term.l2;
  sum.lg += term.lg;
  sum.total += term.total;
}

LossBreakdown mean_loss(LossBreakdown sum, std::size_t batches) {
  if (batches == 0) return sum;
  const double inv = 1.0 / static_cast<double>(batches);
  return {sum.l1 * inv, sum.l2 * inv, sum.lg * inv, sum.total * inv};
}

Network with_params(const Network& shape_source, const Tensor& params) {
  Network net = shape_source;
  unflatten_params(net, params);
  return net;
}

void check_shards(const std::vector<Dataset>& shards, const ModelShape& shape) {
  if (shards.empty()) throw ConfigError("federation needs at least one client");
  for (std::size_t k = 0; k < shards.size(); ++k) {
    if (shards[k].size() < 2) {
      throw ConfigError("client " + std::to_string(k) +
                        " holds fewer than 2 samples");
    }
    if (shards[k].dim() != shape.input_dim) {
      throw ConfigError("client " + std::to_string(k) + " data has dim " +
                        std::to_string(shards[k].dim()) + ", model expects " +
                        std::to_string(shape.input_dim));
    }
  }
}

}  // namespace

void ProtocolOptions::validate() const {
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ConfigError("participation C must be in (0, 1]");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
  if (loss.alpha1 < 0.0 || loss.alpha2 < 0.0 || loss.lambda < 0.0) {
    throw ConfigError("alpha1, alpha2 and lambda must be >= 0");
  }
  if (mu < 0.0) throw ConfigError("mu must be >= 0");
}

std::vector<std::size_t> sample_without_replacement(std::size_t m,
                                                    std::size_t n, Rng& rng) {
  if (n > m) throw UsageError("cannot sample more clients than exist");
  std::vector<std::size_t> ids(m);
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates over the first n slots.
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(ids[i], ids[i + rng.below(m - i)]);
  }
  ids.resize(n);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n,
                                                   std::size_t batch_size,
                                                   Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

// ---------------------------------------------------------------------------
// SignServer

SignServer::SignServer(std::size_t clients, Tensor initial_params,
                       double participation, bool require_odd,
                       std::uint64_t seed)
    : clients_(clients),
      params_(std::move(initial_params)),
      participation_(participation),
      require_odd_(require_odd),
      rng_(seed),
      last_vote_(params_.size(), true) {}

std::size_t SignServer::participants_per_round() const {
  return participant_count(clients_, participation_, require_odd_);
}

std::vector<std::size_t> SignServer::sample_participants() {
  return sample_without_replacement(clients_, participants_per_round(), rng_);
}

VoteResult SignServer::close_round(std::vector<SignUpload> uploads,
                                   double delta) {
  if (uploads.empty()) throw ProtocolError("round closed with no uploads");
  std::set<std::size_t> seen;
  for (const auto& u : uploads) {
    if (u.client >= clients_) {
      throw ProtocolError("upload from unknown client " +
                          std::to_string(u.client));
    }
    if (!seen.insert(u.client).second) {
      throw ProtocolError("duplicate upload from client " +
                          std::to_string(u.client));
    }
    if (u.signs.length() != params_.size()) {
      throw ProtocolError("client " + std::to_string(u.client) + " sent " +
                          std::to_string(u.signs.length()) +
                          " signs, expected " +
                          std::to_string(params_.size()));
    }
  }
  // Arrival order must not matter.
  std::sort(uploads.begin(), uploads.end(),
            [](const SignUpload& a, const SignUpload& b) {
              return a.client < b.client;
            });
  std::vector<SignVector> signs;
  signs.reserve(uploads.size());
  for (auto& u : uploads) signs.push_back(std::move(u.signs));
  VoteResult vote = majority_vote(signs);
  apply_vote_inplace(params_, vote.decision, delta);
  last_vote_ = vote.decision;
  history_.push_back(vote.decision);
  ++round_;
  return vote;
}

void SignServer::reset_params(Tensor params) {
  if (params.size() != params_.size()) {
    throw ConfigError("reset_params changes the parameter count");
  }
  params_ = std::move(params);
}

std::size_t SignServer::add_client() { return clients_++; }

// ---------------------------------------------------------------------------
// Federation

double Federation::evaluate(const Dataset& test) const {
  const auto predicted = predict(test.features);
  return accuracy(predicted, test.labels);
}

// ---------------------------------------------------------------------------
// VoteFederation

namespace {

Network initial_shared_model(const ProtocolOptions& o, const ModelShape& s) {
  const std::uint64_t seed = derive_seed(o.seed, kSharedInitStream);
  return o.algorithm == Algorithm::kTwoStage ? make_global_head(s, seed).net
                                             : make_full_model(s, seed);
}

}  // namespace

VoteFederation::VoteFederation(const ProtocolOptions& options,
                               const ModelShape& shape,
                               std::vector<Dataset> shards)
    : options_(options),
      shape_(shape),
      server_(0,
              quantize(flatten_params(initial_shared_model(options, shape))),
              options.participation, options.require_odd_participants,
              derive_seed(options.seed, kSamplerStream)),
      initial_params_(server_.params()) {
  options_.validate();
  shape_.validate();
  if (options_.algorithm != Algorithm::kTwoStage &&
      options_.algorithm != Algorithm::kSignSgdOnly) {
    throw ConfigError("VoteFederation runs two_stage or signsgd_only");
  }
  check_shards(shards, shape_);
  for (auto& shard : shards) add_client(std::move(shard));
}

std::size_t VoteFederation::add_client(Dataset shard) {
  const std::size_t id = clients_.size();
  if (shard.size() < 2 || shard.dim() != shape_.input_dim) {
    throw ConfigError("new client data does not fit the model");
  }
  ClientState c;
  c.id = id;
  if (two_stage()) {
    c.local = make_local_model(shape_,
                               derive_seed(options_.seed, kLocalModelStream + id));
  }
  // Structure only; values arrive with ModelInit.
  c.head.net = initial_shared_model(options_, shape_);
  c.head.replica_version = 0;
  c.shard = std::move(shard);
  c.rng = Rng(derive_seed(options_.seed, kClientRngStream + id));
  clients_.push_back(std::move(c));
  initialized_.push_back(false);
  server_.add_client();
  return id;
}

std::size_t VoteFederation::shared_parameter_count() const {
  return server_.params().size();
}

GlobalHead VoteFederation::reference_head() const {
  return {with_params(clients_.front().head.net, server_.params()),
          server_.round()};
}

std::vector<LocalModel> VoteFederation::local_models() const {
  std::vector<LocalModel> out;
  out.reserve(clients_.size());
  for (const auto& c : clients_) out.push_back(c.local);
  return out;
}

void VoteFederation::send_model_init(std::size_t round, std::size_t k) {
  ClientState& c = clients_[k];
  initialized_[k] = true;
  if (options_.init_mode == InitMode::kTable2Literal) {
    const Message msg = make_params_message(MessageKind::kModelInit, round, k,
                                            server_.params());
    ledger_.record(msg);
    unflatten_params(c.head.net, decode_params_wire(msg.wire));
    c.head.replica_version = server_.round();
    return;
  }
  // The reference copy drifts off the f32 grid once votes apply, so a late
  // joiner gets the initial parameters and replays every vote since.
  const Message msg =
      make_params_message(MessageKind::kModelInit, round, k, initial_params_);
  ledger_.record(msg);
  unflatten_params(c.head.net, decode_params_wire(msg.wire));
  c.head.replica_version = 0;
  for (std::size_t v = 1; v <= server_.round(); ++v) {
    deliver_vote(c, server_.history()[v - 1], v, round);
  }
}

void VoteFederation::deliver_vote(ClientState& c, const SignVector& vote,
                                  std::size_t vote_round,
                                  std::size_t ledger_round) {
  const Message msg =
      make_sign_message(MessageKind::kVoteDown, ledger_round, c.id, vote);
  ledger_.record(msg);
  const SignVector received = SignVector::decode_wire(msg.wire);
  Tensor params = flatten_params(c.head.net);
  apply_vote_inplace(params, received,
                     learning_rate(options_.lr_schedule,
                                   options_.learning_rate, vote_round));
  unflatten_params(c.head.net, params);
  c.head.replica_version = vote_round;
}

SignVector VoteFederation::client_update(ClientState& c, std::size_t round,
                                         LossBreakdown& loss_sum,
                                         std::size_t& batches) {
  const double lr =
      learning_rate(options_.lr_schedule, options_.learning_rate, round);
  Tensor accum({server_.params().size()});
  for (std::size_t e = 0; e < options_.local_epochs; ++e) {
    for (const auto& batch :
         make_batches(c.shard.size(), options_.batch_size, c.rng)) {
      const Tensor xb = c.shard.features.gather_rows(batch);
      std::vector<int> yb;
      yb.reserve(batch.size());
      for (std::size_t i : batch) yb.push_back(c.shard.labels[i]);

      if (two_stage()) {
        const TwoStageGradients g =
            two_stage_backward(c.local, c.head, xb, yb, options_.loss);
        sign_step(c.local.encoder, g.encoder, lr);
        sign_step(c.local.aux_head, g.aux, lr);
        for (std::size_t i = 0; i < accum.size(); ++i) accum[i] += g.global[i];
        accumulate(loss_sum, g.loss);
      } else {
        const ForwardResult fwd = forward(c.head.net, xb);
        const LossAndGrad ce = softmax_cross_entropy(fwd.output, yb);
        const BackwardResult back = backward(c.head.net, fwd.cache, ce.grad);
        for (std::size_t i = 0; i < accum.size(); ++i) {
          accum[i] += back.param_grads[i];
        }
        accumulate(loss_sum, {0.0, 0.0, ce.loss, ce.loss});
      }
      ++batches;
    }
  }
  return sign_compress(accum);
}

void VoteFederation::warmup(std::size_t passes) {
  if (!two_stage() || passes == 0) return;
  LossWeights local_only = options_.loss;
  local_only.lambda = 0.0;
  for (std::size_t p = 0; p < passes; ++p) {
    for (auto& c : clients_) {
      for (const auto& batch :
           make_batches(c.shard.size(), options_.batch_size, c.rng)) {
        const Tensor xb = c.shard.features.gather_rows(batch);
        std::vector<int> yb;
        for (std::size_t i : batch) yb.push_back(c.shard.labels[i]);
        const TwoStageGradients g =
            two_stage_backward(c.local, c.head, xb, yb, local_only);
        sign_step(c.local.encoder, g.encoder, options_.learning_rate);
        sign_step(c.local.aux_head, g.aux, options_.learning_rate);
      }
    }
  }
}

RoundRecord VoteFederation::run_round() {
  const std::size_t t = server_.round() + 1;
  RoundRecord rec;
  rec.round = t;
  rec.participants = server_.sample_participants();

  if (options_.init_mode == InitMode::kTable2Literal) {
    // Everyone, every round, gets the quantized reference copy.
    server_.reset_params(quantize(server_.params()));
    for (std::size_t k = 0; k < clients_.size(); ++k) send_model_init(t, k);
  } else {
    for (std::size_t k = 0; k < clients_.size(); ++k) {
      if (!initialized_[k]) send_model_init(t, k);
    }
  }

  // Participants that missed broadcasts replay the votes they lack.
  for (std::size_t k : rec.participants) {
    ClientState& c = clients_[k];
    for (std::size_t v = c.head.replica_version + 1; v < t; ++v) {
      deliver_vote(c, server_.history()[v - 1], v, t);
    }
  }

  LossBreakdown loss_sum;
  std::size_t batches = 0;
  std::vector<SignUpload> uploads;
  uploads.reserve(rec.participants.size());
  for (std::size_t k : rec.participants) {
    const SignVector signs = client_update(clients_[k], t, loss_sum, batches);
    const Message msg = make_sign_message(MessageKind::kSignUp, t, k, signs);
    ledger_.record(msg);
    uploads.push_back({k, SignVector::decode_wire(msg.wire)});
  }

  const double lr =
      learning_rate(options_.lr_schedule, options_.learning_rate, t);
  const VoteResult vote = server_.close_round(std::move(uploads), lr);

  if (options_.scope == BroadcastScope::kAll) {
    for (auto& c : clients_) deliver_vote(c, vote.decision, t, t);
  } else {
    for (std::size_t k : rec.participants) {
      deliver_vote(clients_[k], vote.decision, t, t);
    }
  }

  rec.loss = mean_loss(loss_sum, batches);
  rec.traffic = ledger_.round_traffic(t);
  rec.cumulative_payload_bits = ledger_.total().payload();
  return rec;
}

std::vector<int> VoteFederation::predict(const Tensor& x) const {
  if (two_stage()) {
    const auto locals = local_models();
    return ensemble_infer(x, locals, reference_head(), options_.ensemble_mode);
  }
  return argmax_rows(fedsplit::predict(reference_head().net, x));
}

double VoteFederation::probe_dcor(const Tensor& x) const {
  if (!two_stage()) {
    return distance_correlation(x, first_layer_output(reference_head().net, x))
        .dcor;
  }
  double sum = 0.0;
  for (const auto& c : clients_) {
    sum += distance_correlation(x, fedsplit::predict(c.local.encoder, x)).dcor;
  }
  return sum / static_cast<double>(clients_.size());
}

// ---------------------------------------------------------------------------
// AveragingFederation

AveragingFederation::AveragingFederation(const ProtocolOptions& options,
                                         const ModelShape& shape,
                                         std::vector<Dataset> shards)
    : options_(options),
      model_(make_full_model(shape,
                             derive_seed(options.seed, kSharedInitStream))),
      sampler_(derive_seed(options.seed, kSamplerStream)) {
  options_.validate();
  shape.validate();
  if (options_.algorithm != Algorithm::kFedAvg &&
      options_.algorithm != Algorithm::kFedProx) {
    throw ConfigError("AveragingFederation runs fedavg or fedprox");
  }
  check_shards(shards, shape);
  for (auto& s : shards) add_client(std::move(s));
}

std::size_t AveragingFederation::add_client(Dataset shard) {
  if (shard.size() < 1 || shard.dim() != model_.input_dim()) {
    throw ConfigError("new client data does not fit the model");
  }
  const std::size_t id = shards_.size();
  shards_.push_back(std::move(shard));
  client_rngs_.emplace_back(derive_seed(options_.seed, kClientRngStream + id));
  return id;
}

std::size_t AveragingFederation::shared_parameter_count() const {
  return model_.parameter_count();
}

RoundRecord AveragingFederation::run_round() {
  const std::size_t t = round_ + 1;
  RoundRecord rec;
  rec.round = t;
  rec.participants = sample_without_replacement(
      shards_.size(),
      participant_count(shards_.size(), options_.participation,
                        options_.require_odd_participants),
      sampler_);
  const double lr =
      learning_rate(options_.lr_schedule, options_.learning_rate, t);
  const double mu = options_.algorithm == Algorithm::kFedProx ? options_.mu : 0.0;
  const Tensor global = flatten_params(model_);

  LossBreakdown loss_sum;
  std::size_t batches = 0;
  std::vector<ClientParams> uploads;
  for (std::size_t k : rec.participants) {
    const Message down =
        make_params_message(MessageKind::kParamsDown, t, k, global);
    ledger_.record(down);
    const Tensor start = decode_params_wire(down.wire);
    Network local = with_params(model_, start);
    Tensor params = start;
    const Dataset& shard = shards_[k];
    for (std::size_t e = 0; e < options_.local_epochs; ++e) {
      for (const auto& batch :
           make_batches(shard.size(), options_.batch_size, client_rngs_[k])) {
        const Tensor xb = shard.features.gather_rows(batch);
        std::vector<int> yb;
        for (std::size_t i : batch) yb.push_back(shard.labels[i]);
        const ForwardResult fwd = forward(local, xb);
        const LossAndGrad ce = softmax_cross_entropy(fwd.output, yb);
        const BackwardResult back = backward(local, fwd.cache, ce.grad);
        const Tensor g =
            mu > 0.0 ? fedprox_local_grad(back.param_grads, params, start, mu)
                     : back.param_grads;
        sgd_step(params, g, lr);
        unflatten_params(local, params);
        accumulate(loss_sum, {0.0, 0.0, ce.loss, ce.loss});
        ++batches;
      }
    }
    const Message up = make_params_message(MessageKind::kParamsUp, t, k, params);
    ledger_.record(up);
    uploads.push_back({decode_params_wire(up.wire), shard.size()});
  }
  unflatten_params(model_, fedavg_aggregate(uploads));
  round_ = t;

  rec.loss = mean_loss(loss_sum, batches);
  rec.traffic = ledger_.round_traffic(t);
  rec.cumulative_payload_bits = ledger_.total().payload();
  return rec;
}

std::vector<int> AveragingFederation::predict(const Tensor& x) const {
  return argmax_rows(fedsplit::predict(model_, x));
}

double AveragingFederation::probe_dcor(const Tensor& x) const {
  return distance_correlation(x, first_layer_output(model_, x)).dcor;
}

std::unique_ptr<Federation> make_federation(const ProtocolOptions& options,
                                            const ModelShape& shape,
                                            std::vector<Dataset> shards) {
  switch (options.algorithm) {
    case Algorithm::kTwoStage:
    case Algorithm::kSignSgdOnly:
      return std::make_unique<VoteFederation>(options, shape, std::move(shards));
    case Algorithm::kFedAvg:
    case Algorithm::kFedProx:
      return std::make_unique<AveragingFederation>(options, shape,
                                                   std::move(shards));
  }
  throw ConfigError("unknown algorithm");
}

}  // namespace fedsplit
