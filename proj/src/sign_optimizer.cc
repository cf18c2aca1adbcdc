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

#include "fedsplit/sign_optimizer.h"

#include <cmath>

#include "fedsplit/bytes.h"
#include "fedsplit/errors.h"

namespace fedsplit {

SignVector::SignVector(std::size_t length, bool positive)
    : length_(length), bits_((length + 7) / 8, 0) {
  if (positive) {
    for (std::size_t i = 0; i < length; ++i) set(i, true);
  }
}

SignVector SignVector::from_signs(std::span<const int> signs) {
  SignVector v(signs.size());
  for (std::size_t i = 0; i < signs.size(); ++i) {
    if (signs[i] != 1 && signs[i] != -1) {
      throw UsageError("sign vectors hold only +1 and -1");
    }
    v.set(i, signs[i] == 1);
  }
  return v;
}

void SignVector::set(std::size_t i, bool positive) {
  const std::uint8_t mask = static_cast<std::uint8_t>(0x80U >> (i & 7));
  if (positive) {
    bits_[i >> 3] |= mask;
  } else {
    bits_[i >> 3] &= static_cast<std::uint8_t>(~mask);
  }
}

std::vector<int> SignVector::decode() const {
  std::vector<int> out(length_);
  for (std::size_t i = 0; i < length_; ++i) out[i] = sign(i);
  return out;
}

std::vector<std::uint8_t> SignVector::encode_wire() const {
  ByteWriter w;
  w.u32_le(static_cast<std::uint32_t>(length_));
  w.append(bits_);
  return w.take();
}

SignVector SignVector::decode_wire(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  SignVector v;
  v.length_ = r.u32_le("sign vector length");
  const auto payload = r.take((v.length_ + 7) / 8, "sign vector payload");
  if (r.remaining() != 0) {
    throw IngestionError("trailing bytes after sign vector", r.offset());
  }
  v.bits_.assign(payload.begin(), payload.end());
  // Padding bits carry no coordinates; keep equality well defined.
  if (v.length_ % 8 != 0) {
    v.bits_.back() &= static_cast<std::uint8_t>(0xFF00U >> (v.length_ % 8));
  }
  return v;
}

SignVector sign_compress(const Tensor& g) {
  SignVector v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::isnan(g[i])) {
      throw NumericsError("NaN gradient coordinate " + std::to_string(i));
    }
    v.set(i, g[i] > 0.0);
  }
  return v;
}

VoteResult majority_vote(std::span<const SignVector> signs) {
  if (signs.empty()) throw UsageError("majority vote over zero clients");
  const std::size_t length = signs.front().length();
  for (const auto& s : signs) {
    if (s.length() != length) {
      throw ProtocolError("sign vector of length " + std::to_string(s.length()) +
                          " in a vote over length " + std::to_string(length));
    }
  }
  VoteResult result{SignVector(length), std::vector<int>(length, 0)};
  for (const auto& s : signs) {
    for (std::size_t i = 0; i < length; ++i) result.tally[i] += s.sign(i);
  }
  for (std::size_t i = 0; i < length; ++i) {
    result.decision.set(i, result.tally[i] >= 0);
  }
  return result;
}

void apply_vote_inplace(Tensor& omega, const SignVector& vote, double delta) {
  if (omega.size() != vote.length()) {
    throw ConfigError("vote length " + std::to_string(vote.length()) +
                      " does not match " + std::to_string(omega.size()) +
                      " parameters");
  }
  if (!(delta > 0.0)) throw ConfigError("learning rate must be positive");
  for (std::size_t i = 0; i < omega.size(); ++i) {
    omega[i] -= vote.positive(i) ? delta : -delta;
  }
}

Tensor apply_vote(const Tensor& omega, const SignVector& vote, double delta) {
  Tensor out = omega;
  apply_vote_inplace(out, vote, delta);
  return out;
}

void sgd_step(Tensor& omega, const Tensor& grad, double lr) {
  if (omega.size() != grad.size()) {
    throw ConfigError("gradient length does not match parameters");
  }
  for (std::size_t i = 0; i < omega.size(); ++i) omega[i] -= lr * grad[i];
}

Tensor fedavg_aggregate(std::span<const ClientParams> clients) {
  if (clients.empty()) throw UsageError("fedavg over zero clients");
  const std::size_t length = clients.front().params.size();
  double total = 0.0;
  for (const auto& c : clients) {
    if (c.params.size() != length) {
      throw ConfigError("client parameter vectors differ in length");
    }
    if (c.sample_count == 0) throw ConfigError("client with zero samples");
    total += static_cast<double>(c.sample_count);
  }
  Tensor out({length});
  for (const auto& c : clients) {
    const double w = static_cast<double>(c.sample_count) / total;
    for (std::size_t i = 0; i < length; ++i) out[i] += w * c.params[i];
  }
  return out;
}

Tensor fedprox_local_grad(const Tensor& g, const Tensor& omega_local,
                          const Tensor& omega_global, double mu) {
  if (g.size() != omega_local.size() || g.size() != omega_global.size()) {
    throw ConfigError("fedprox operands differ in length");
  }
  if (mu < 0.0) throw ConfigError("mu must be non-negative");
  Tensor out = g;
  for (std::size_t i = 0; i < g.size(); ++i) {
    out[i] += mu * (omega_local[i] - omega_global[i]);
  }
  return out;
}

std::string to_string(LrSchedule s) {
  return s == LrSchedule::kInverseSqrt ? "inv_sqrt" : "constant";
}

LrSchedule parse_lr_schedule(const std::string& name) {
  if (name == "constant") return LrSchedule::kConstant;
  if (name == "inv_sqrt") return LrSchedule::kInverseSqrt;
  throw ConfigError("unknown lr schedule '" + name + "'");
}

double learning_rate(LrSchedule schedule, double delta, std::size_t step) {
  if (schedule == LrSchedule::kConstant || step == 0) return delta;
  return delta / std::sqrt(static_cast<double>(step));
}

}  // namespace fedsplit
