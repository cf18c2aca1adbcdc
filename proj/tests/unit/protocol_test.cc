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

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "fedsplit/data.h"
#include "fedsplit/errors.h"
#include "fedsplit/ledger.h"
#include "fedsplit/protocol.h"

using namespace fedsplit;

namespace {

ModelShape blob_shape(int classes) {
  ModelShape s;
  s.input_dim = 8;
  s.smashed_dim = 2;
  s.classes = static_cast<std::size_t>(classes);
  return s;
}

std::vector<Dataset> blob_shards(std::size_t clients, int classes,
                                 std::uint64_t seed) {
  const Dataset d = synth_blobs(classes, 40, 8, 0.3, seed);
  return partition_iid(d.size(), clients, seed + 1).apply(d);
}

ProtocolOptions options(Algorithm a, double c = 1.0) {
  ProtocolOptions o;
  o.algorithm = a;
  o.participation = c;
  o.batch_size = 8;
  o.learning_rate = 0.01;
  o.loss = LossWeights{0.1, 0.5, 1.0, DcorEstimator::kStandard};
  o.mu = 0.01;
  o.seed = 17;
  return o;
}

SignVector signs(std::vector<int> v) { return SignVector::from_signs(v); }

bool replicas_match_reference(const VoteFederation& fed,
                              const std::vector<std::size_t>& which) {
  const GlobalHead ref = fed.reference_head();
  for (std::size_t k : which) {
    if (!(fed.clients()[k].head.net == ref.net)) return false;
  }
  return true;
}

std::vector<std::size_t> all_ids(std::size_t m) {
  std::vector<std::size_t> ids(m);
  for (std::size_t i = 0; i < m; ++i) ids[i] = i;
  return ids;
}

}  // namespace

TEST_CASE("participant count") {
  CHECK(participant_count(100, 0.1, false) == 10);
  CHECK(participant_count(30, 0.1, false) == 3);
  CHECK(participant_count(10, 0.01, false) == 1);
  CHECK(participant_count(10, 1.0, true) == 9);
  CHECK(participant_count(7, 1.0, true) == 7);
}

TEST_CASE("server samples n = max(C m, 1) distinct clients") {
  SignServer server(100, Tensor({3}), 0.1, false, 1);
  CHECK(server.participants_per_round() == 10);
  for (int r = 0; r < 200; ++r) {
    const auto p = server.sample_participants();
    REQUIRE(p.size() == 10);
    CHECK(std::is_sorted(p.begin(), p.end()));
    CHECK(std::set<std::size_t>(p.begin(), p.end()).size() == 10);
    CHECK(p.back() < 100);
  }
}

TEST_CASE("participation frequency") {
  SignServer server(50, Tensor({1}), 0.2, false, 2);
  std::vector<std::size_t> hits(50, 0);
  const int rounds = 10000;
  for (int r = 0; r < rounds; ++r) {
    for (std::size_t k : server.sample_participants()) ++hits[k];
  }
  for (std::size_t h : hits) {
    CHECK(std::abs(static_cast<double>(h) / rounds - 0.2) <= 0.02);
  }
}

TEST_CASE("server vote, hand case with three clients") {
  SignServer server(3, Tensor({4}), 1.0, false, 3);
  CHECK(server.last_vote().decode() == std::vector<int>{1, 1, 1, 1});
  std::vector<SignUpload> uploads{{2, signs({-1, -1, 1, 1})},
                                  {0, signs({1, 1, -1, -1})},
                                  {1, signs({1, -1, 1, -1})}};
  const VoteResult r = server.close_round(uploads, 0.5);
  CHECK(r.decision.decode() == std::vector<int>{1, -1, 1, -1});
  CHECK(r.tally == std::vector<int>{1, -1, 1, -1});
  CHECK(server.round() == 1);
  CHECK(server.params() == Tensor::vector({-0.5, 0.5, -0.5, 0.5}));
  CHECK(server.history().size() == 1);
  CHECK(server.last_vote() == r.decision);
}

TEST_CASE("bad uploads abort the round without side effects") {
  SignServer server(3, Tensor::vector({1, 2}), 1.0, false, 4);
  const Tensor before = server.params();
  auto expect_abort = [&](std::vector<SignUpload> uploads) {
    CHECK_THROWS_AS(server.close_round(std::move(uploads), 0.1), ProtocolError);
    CHECK(server.round() == 0);
    CHECK(server.params() == before);
    CHECK(server.history().empty());
  };
  expect_abort({{0, signs({1, 1})}, {1, signs({1, 1, 1})}});
  expect_abort({{0, signs({1, 1})}, {0, signs({1, -1})}});
  expect_abort({{5, signs({1, 1})}});
  expect_abort({});
}

TEST_CASE("single client reduces to signSGD") {
  auto fed = VoteFederation(options(Algorithm::kTwoStage), blob_shape(2),
                            blob_shards(1, 2, 5));
  fed.run_round();
  ClientState copy = fed.clients()[0];
  LossBreakdown loss;
  std::size_t batches = 0;
  const SignVector own = fed.client_update(copy, 2, loss, batches);
  fed.run_round();
  CHECK(fed.server().history()[1] == own);
  CHECK(fed.clients()[0].local.encoder == copy.local.encoder);
}

TEST_CASE("replicas stay bit-identical under full broadcast") {
  for (Algorithm a : {Algorithm::kTwoStage, Algorithm::kSignSgdOnly}) {
    VoteFederation fed(options(a, 0.5), blob_shape(3), blob_shards(6, 3, 6));
    for (int r = 1; r <= 15; ++r) {
      const RoundRecord rec = fed.run_round();
      CHECK(rec.round == static_cast<std::size_t>(r));
      CHECK(rec.participants.size() == 3);
      CHECK(replicas_match_reference(fed, all_ids(6)));
      for (const auto& c : fed.clients()) {
        CHECK(c.head.replica_version == static_cast<std::size_t>(r));
      }
    }
  }
}

TEST_CASE("participants scope catches up by replaying votes") {
  auto o = options(Algorithm::kTwoStage, 0.5);
  o.scope = BroadcastScope::kParticipants;
  VoteFederation fed(o, blob_shape(2), blob_shards(4, 2, 7));
  bool someone_lagged = false;
  for (int r = 1; r <= 12; ++r) {
    const RoundRecord rec = fed.run_round();
    CHECK(replicas_match_reference(fed, rec.participants));
    for (const auto& c : fed.clients()) {
      someone_lagged = someone_lagged || c.head.replica_version < rec.round;
    }
  }
  CHECK(someone_lagged);
}

TEST_CASE("ledger matches the analytic predictor") {
  struct Case {
    Algorithm algorithm;
    double participation;
    InitMode init;
    BroadcastScope scope;
  };
  const std::vector<Case> cases{
      {Algorithm::kTwoStage, 1.0, InitMode::kInitOnce, BroadcastScope::kAll},
      {Algorithm::kTwoStage, 0.4, InitMode::kInitOnce, BroadcastScope::kAll},
      {Algorithm::kTwoStage, 1.0, InitMode::kTable2Literal, BroadcastScope::kAll},
      {Algorithm::kTwoStage, 0.6, InitMode::kTable2Literal, BroadcastScope::kAll},
      {Algorithm::kTwoStage, 1.0, InitMode::kInitOnce, BroadcastScope::kParticipants},
      {Algorithm::kSignSgdOnly, 0.8, InitMode::kInitOnce, BroadcastScope::kAll},
      {Algorithm::kFedAvg, 1.0, InitMode::kInitOnce, BroadcastScope::kAll},
      {Algorithm::kFedAvg, 0.4, InitMode::kInitOnce, BroadcastScope::kAll},
      {Algorithm::kFedProx, 0.6, InitMode::kInitOnce, BroadcastScope::kAll},
  };
  for (const Case& c : cases) {
    CAPTURE(to_string(c.algorithm));
    CAPTURE(c.participation);
    CAPTURE(to_string(c.init));
    auto o = options(c.algorithm, c.participation);
    o.init_mode = c.init;
    o.scope = c.scope;
    auto fed = make_federation(o, blob_shape(3), blob_shards(5, 3, 8));
    const std::size_t rounds = 7;
    std::uint64_t previous = 0;
    for (std::size_t r = 0; r < rounds; ++r) {
      const RoundRecord rec = fed->run_round();
      CHECK(rec.cumulative_payload_bits >= previous);
      CHECK(rec.cumulative_payload_bits - previous == rec.traffic.payload());
      previous = rec.cumulative_payload_bits;
    }
    CostQuery q;
    q.algorithm = c.algorithm;
    q.clients = 5;
    q.rounds = rounds;
    q.params = fed->shared_parameter_count();
    q.participation = c.participation;
    q.init = c.init;
    q.scope = c.scope;
    CHECK(fed->ledger().total().payload() == predict_total_bits(q));
    CHECK(fed->ledger().total().header ==
          fed->ledger().message_count() * kHeaderBits);
  }
}

TEST_CASE("table 2 per-device and per-round costs") {
  const std::size_t m = 4;
  const std::size_t rounds = 5;
  auto o = options(Algorithm::kTwoStage);
  VoteFederation once(o, blob_shape(2), blob_shards(m, 2, 9));
  o.init_mode = InitMode::kTable2Literal;
  VoteFederation literal(o, blob_shape(2), blob_shards(m, 2, 9));
  for (std::size_t r = 0; r < rounds; ++r) {
    once.run_round();
    literal.run_round();
  }
  const std::uint64_t g = once.shared_parameter_count();
  for (std::size_t k = 0; k < m; ++k) {
    const Traffic t = once.ledger().device_traffic(k);
    CHECK(t.payload() == 32 * g + rounds * 2 * g);
  }
  for (std::size_t r = 2; r <= rounds; ++r) {
    const Traffic t = once.ledger().round_traffic(r);
    CHECK(t.uplink == m * g);
    CHECK(t.downlink == m * g);
  }
  // n1 (m N1 + 2 m G) with N1 = G and parameters at 32 bits.
  CHECK(literal.ledger().total().payload() == rounds * (m * g * 32 + 2 * m * g));
}

TEST_CASE("predictor arithmetic") {
  CostQuery fedavg{Algorithm::kFedAvg, 10, 1, 1000};
  CHECK(predict_total_bits(fedavg) == 640000);
  CostQuery steady{Algorithm::kTwoStage, 10, 1, 1000};
  steady.include_init = false;
  CHECK(predict_total_bits(steady) == 20000);
  CostQuery none{Algorithm::kTwoStage, 10, 0, 1000};
  CHECK(predict_total_bits(none) == 0);
}

TEST_CASE("parameter messages are 32-bit on the wire") {
  const Tensor p = Tensor::vector({0.1, -2.5, 3.0});
  const Message m = make_params_message(MessageKind::kParamsUp, 1, 0, p);
  CHECK(m.payload_bits == 96);
  CHECK(m.wire.size() == 4 + 12);
  const Tensor back = decode_params_wire(m.wire);
  CHECK(back[0] == static_cast<double>(0.1f));
  CHECK(back[1] == -2.5);
  auto cut = m.wire;
  cut.pop_back();
  CHECK_THROWS_AS(decode_params_wire(cut), IngestionError);
  CHECK(is_uplink(MessageKind::kSignUp));
  CHECK_FALSE(is_uplink(MessageKind::kVoteDown));
}

TEST_CASE("runs are deterministic under the seed") {
  for (Algorithm a : {Algorithm::kTwoStage, Algorithm::kFedAvg}) {
    auto fa = make_federation(options(a, 0.6), blob_shape(3), blob_shards(5, 3, 10));
    auto fb = make_federation(options(a, 0.6), blob_shape(3), blob_shards(5, 3, 10));
    auto other_opts = options(a, 0.6);
    other_opts.seed = 18;
    auto fc = make_federation(other_opts, blob_shape(3), blob_shards(5, 3, 10));
    bool differs = false;
    for (int r = 0; r < 5; ++r) {
      const RoundRecord x = fa->run_round();
      const RoundRecord y = fb->run_round();
      const RoundRecord z = fc->run_round();
      CHECK(x.participants == y.participants);
      CHECK(x.loss.total == y.loss.total);
      CHECK(x.loss.l1 == y.loss.l1);
      differs = differs || x.loss.total != z.loss.total;
    }
    const Dataset probe = synth_blobs(3, 10, 8, 0.3, 10, 7);
    CHECK(fa->predict(probe.features) == fb->predict(probe.features));
    CHECK(fa->probe_dcor(probe.features) == fb->probe_dcor(probe.features));
    CHECK(differs);
  }
}

TEST_CASE("fedavg separates two linear blobs") {
  auto o = options(Algorithm::kFedAvg);
  o.learning_rate = 0.1;
  const Dataset d = synth_blobs(2, 60, 8, 0.1, 11);
  auto fed = make_federation(o, blob_shape(2), partition_iid(d.size(), 4, 12).apply(d));
  for (int r = 0; r < 30; ++r) fed->run_round();
  CHECK(fed->evaluate(d) == 1.0);
}

TEST_CASE("invalid options are rejected up front") {
  auto o = options(Algorithm::kTwoStage, 1.5);
  CHECK_THROWS_AS(make_federation(o, blob_shape(2), blob_shards(2, 2, 13)),
                  ConfigError);
  o = options(Algorithm::kTwoStage);
  o.learning_rate = 0.0;
  CHECK_THROWS_AS(make_federation(o, blob_shape(2), blob_shards(2, 2, 13)),
                  ConfigError);
}

TEST_CASE("a client can join mid-run") {
  VoteFederation fed(options(Algorithm::kTwoStage), blob_shape(2),
                     blob_shards(3, 2, 14));
  for (int r = 0; r < 3; ++r) fed.run_round();
  const std::size_t id = fed.add_client(blob_shards(1, 2, 15)[0]);
  CHECK(id == 3);
  fed.run_round();
  CHECK(fed.client_count() == 4);
  CHECK(replicas_match_reference(fed, all_ids(4)));
}
