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

#include <cmath>
#include <vector>

#include "fedsplit/errors.h"
#include "fedsplit/rng.h"
#include "fedsplit/sign_optimizer.h"
#include "support.h"

using namespace fedsplit;
using fedsplit::testing::naive_vote;

namespace {

std::vector<int> random_signs(std::size_t n, Rng& rng) {
  std::vector<int> s(n);
  for (int& v : s) v = rng.below(2) ? 1 : -1;
  return s;
}

}  // namespace

TEST_CASE("sign compression") {
  const SignVector s = sign_compress(Tensor::vector({0.3, -2.0, 0.0}));
  CHECK(s.decode() == std::vector<int>{1, -1, -1});
  CHECK(sign_compress(Tensor::vector({-0.0})).sign(0) == -1);
  CHECK_THROWS_AS(sign_compress(Tensor::vector({1.0, std::nan("")})),
                  NumericsError);
}

TEST_CASE("sign vector codec") {
  Rng rng(1);
  for (std::size_t n = 1; n <= 1000; ++n) {
    const auto signs = random_signs(n, rng);
    const SignVector v = SignVector::from_signs(signs);
    CHECK(v.decode() == signs);
    const auto wire = v.encode_wire();
    CHECK(wire.size() == 4 + (n + 7) / 8);
    CHECK(SignVector::decode_wire(wire) == v);
  }
  const SignVector big = SignVector::from_signs(random_signs(1000, rng));
  CHECK(big.payload_bits() == 1000);
  CHECK(big.packed().size() == 125);
  CHECK(big.encode_wire().size() == 125 + 4);

  // Bit layout: +1 is a set bit, first coordinate in the high bit.
  const std::vector<int> pattern{1, -1, -1, -1, -1, -1, -1, 1, 1};
  const auto wire = SignVector::from_signs(pattern).encode_wire();
  CHECK(wire == std::vector<std::uint8_t>{9, 0, 0, 0, 0x81, 0x80});

  auto truncated = wire;
  truncated.pop_back();
  CHECK_THROWS_AS(SignVector::decode_wire(truncated), IngestionError);
  auto trailing = wire;
  trailing.push_back(0);
  CHECK_THROWS_AS(SignVector::decode_wire(trailing), IngestionError);
  const std::vector<int> zero{1, 0};
  CHECK_THROWS_AS(SignVector::from_signs(zero), UsageError);
}

TEST_CASE("majority vote examples") {
  const std::vector<SignVector> three{SignVector(1, true), SignVector(1, true),
                                      SignVector(1, false)};
  CHECK(majority_vote(three).decision.sign(0) == 1);
  CHECK(majority_vote(three).tally == std::vector<int>{1});

  Rng rng(2);
  const SignVector only = SignVector::from_signs(random_signs(40, rng));
  const std::vector<SignVector> one{only};
  CHECK(majority_vote(one).decision == only);

  const std::vector<SignVector> tie{SignVector(2, true), SignVector(2, false)};
  CHECK(majority_vote(tie).decision.decode() == std::vector<int>{1, 1});

  CHECK_THROWS_AS(majority_vote(std::vector<SignVector>{}), UsageError);
  const std::vector<SignVector> ragged{SignVector(3, true), SignVector(4, true)};
  CHECK_THROWS_AS(majority_vote(ragged), ProtocolError);
}

TEST_CASE("majority vote exhaustive for small m and G") {
  std::size_t cases = 0;
  for (std::size_t m = 1; m <= 4; ++m) {
    for (std::size_t g = 1; g <= 3; ++g) {
      const std::size_t bits = m * g;
      for (std::uint32_t mask = 0; mask < (1U << bits); ++mask) {
        std::vector<std::vector<int>> raw(m, std::vector<int>(g));
        std::vector<SignVector> packed;
        for (std::size_t k = 0; k < m; ++k) {
          for (std::size_t i = 0; i < g; ++i) {
            raw[k][i] = (mask >> (k * g + i)) & 1U ? 1 : -1;
          }
          packed.push_back(SignVector::from_signs(raw[k]));
        }
        const VoteResult r = majority_vote(packed);
        CHECK(r.decision.decode() == naive_vote(raw));
        ++cases;
      }
    }
  }
  CHECK(cases == 2 + 4 + 8 + 4 + 16 + 64 + 8 + 64 + 512 + 16 + 256 + 4096);
}

TEST_CASE("majority vote random at G = 10^4") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.below(9);
    std::vector<std::vector<int>> raw;
    std::vector<SignVector> packed;
    for (std::size_t k = 0; k < m; ++k) {
      raw.push_back(random_signs(10000, rng));
      packed.push_back(SignVector::from_signs(raw.back()));
    }
    REQUIRE(majority_vote(packed).decision.decode() == naive_vote(raw));
  }
}

TEST_CASE("vote ignores positive per-client scaling") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<SignVector> plain, scaled;
    for (int k = 0; k < 5; ++k) {
      Tensor g({50});
      for (double& v : g.data()) v = rng.normal();
      Tensor h = g;
      const double s = std::exp(6.0 * rng.normal());
      for (double& v : h.data()) v *= s;
      plain.push_back(sign_compress(g));
      scaled.push_back(sign_compress(h));
    }
    CHECK(majority_vote(plain).decision == majority_vote(scaled).decision);
  }
}

TEST_CASE("apply vote") {
  const SignVector vote = SignVector::from_signs(std::vector<int>{1, -1});
  const Tensor moved = apply_vote(Tensor::vector({0, 0}), vote, 0.1);
  CHECK(moved == Tensor::vector({-0.1, 0.1}));

  // Dyadic values keep the arithmetic exact.
  Rng rng(5);
  Tensor omega({64});
  for (double& v : omega.data()) v = static_cast<double>(rng.below(2048)) / 256.0 - 4.0;
  const auto signs = random_signs(64, rng);
  std::vector<int> flipped;
  for (int s : signs) flipped.push_back(-s);
  const SignVector up = SignVector::from_signs(signs);
  const SignVector down = SignVector::from_signs(flipped);
  const Tensor once = apply_vote(omega, up, 0.125);
  CHECK(apply_vote(once, down, 0.125) == omega);
  Tensor twice = once;
  apply_vote_inplace(twice, up, 0.125);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(std::abs(once[i] - omega[i]) == 0.125);
    CHECK(twice[i] - omega[i] == 2.0 * (once[i] - omega[i]));
  }

  for (double& v : omega.data()) v = rng.normal();
  const Tensor general = apply_vote(omega, up, 0.01);
  double worst = 0.0;
  for (std::size_t i = 0; i < 64; ++i) {
    worst = std::max(worst, std::abs(std::abs(general[i] - omega[i]) - 0.01));
  }
  CHECK(worst <= 1e-15);

  CHECK_THROWS_AS(apply_vote(Tensor::vector({0}), vote, 0.1), ConfigError);
  CHECK_THROWS_AS(apply_vote(Tensor::vector({0, 0}), vote, 0.0), ConfigError);
}

TEST_CASE("fedavg aggregation") {
  const Tensor p = Tensor::vector({1.5, -2.0, 3.0});
  const std::vector<ClientParams> same{{p, 4}, {p, 9}};
  const Tensor agg = fedavg_aggregate(same);
  for (std::size_t i = 0; i < 3; ++i) CHECK(agg[i] == doctest::Approx(p[i]).epsilon(1e-15));

  const std::vector<ClientParams> pair{{Tensor::vector({0}), 1},
                                       {Tensor::vector({1}), 3}};
  CHECK(fedavg_aggregate(pair)[0] == doctest::Approx(0.75).epsilon(1e-15));

  Rng rng(6);
  std::vector<ClientParams> many;
  for (int k = 0; k < 7; ++k) {
    Tensor t({20});
    for (double& v : t.data()) v = rng.normal();
    many.push_back({t, 1 + rng.below(100)});
  }
  const Tensor got = fedavg_aggregate(many);
  double total = 0.0;
  for (const auto& c : many) total += static_cast<double>(c.sample_count);
  for (std::size_t i = 0; i < 20; ++i) {
    double s = 0.0;
    for (const auto& c : many) s += static_cast<double>(c.sample_count) * c.params[i];
    CHECK(std::abs(got[i] - s / total) <= 1e-12);
  }

  const std::vector<ClientParams> ragged{{Tensor::vector({0}), 1},
                                         {Tensor::vector({1, 2}), 1}};
  CHECK_THROWS_AS(fedavg_aggregate(ragged), ConfigError);
  const std::vector<ClientParams> empty_count{{Tensor::vector({0}), 0}};
  CHECK_THROWS_AS(fedavg_aggregate(empty_count), ConfigError);
}

TEST_CASE("fedprox local gradient") {
  const Tensor g = Tensor::vector({0.5, -1.0});
  const Tensor a = Tensor::vector({1.0, 2.0});
  const Tensor b = Tensor::vector({-3.0, 4.0});
  CHECK(fedprox_local_grad(g, a, b, 0.0) == g);
  CHECK(fedprox_local_grad(g, a, a, 7.0) == g);
  CHECK(fedprox_local_grad(Tensor::vector({1}), Tensor::vector({2}),
                           Tensor::vector({0}), 0.5) == Tensor::vector({2}));
  CHECK_THROWS_AS(fedprox_local_grad(g, a, Tensor::vector({1}), 0.1), ConfigError);
  CHECK_THROWS_AS(fedprox_local_grad(g, a, b, -0.1), ConfigError);
}

TEST_CASE("learning rate schedules") {
  CHECK(learning_rate(LrSchedule::kConstant, 0.01, 50) == 0.01);
  CHECK(learning_rate(LrSchedule::kInverseSqrt, 0.1, 4) == doctest::Approx(0.05));
  CHECK(parse_lr_schedule("inv_sqrt") == LrSchedule::kInverseSqrt);
  CHECK_THROWS_AS(parse_lr_schedule("cosine"), ConfigError);
}

TEST_CASE("signSGD converges on a quadratic") {
  Rng rng(7);
  const double delta0 = 0.05;
  Tensor target({30});
  Tensor omega({30});
  for (double& v : target.data()) v = rng.uniform(-1.0, 1.0);
  const auto steps = static_cast<std::size_t>(1.0 / (delta0 * delta0));
  for (std::size_t t = 1; t <= steps; ++t) {
    Tensor grad = omega;
    for (std::size_t i = 0; i < 30; ++i) grad[i] = 2.0 * (omega[i] - target[i]);
    const std::vector<SignVector> one{sign_compress(grad)};
    apply_vote_inplace(omega, majority_vote(one).decision,
                       learning_rate(LrSchedule::kInverseSqrt, delta0, t));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < 30; ++i) {
    worst = std::max(worst, std::abs(omega[i] - target[i]));
  }
  CHECK(worst <= 2.0 * delta0);
}
