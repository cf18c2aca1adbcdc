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

#include "fedsplit/tensor.h"

namespace fedsplit {

/// One bit per coordinate, +1 -> 1 and -1 -> 0, packed most significant bit
/// first within each byte. Padding bits in the last byte are zero.
class SignVector {
 public:
  SignVector() = default;
  /// All coordinates set to `positive ? +1 : -1`.
  explicit SignVector(std::size_t length, bool positive = false);

  /// Throws UsageError for any value other than +1 or -1.
  static SignVector from_signs(std::span<const int> signs);

  std::size_t length() const noexcept { return length_; }
  bool positive(std::size_t i) const {
    return (bits_[i >> 3] >> (7 - (i & 7))) & 1U;
  }
  int sign(std::size_t i) const { return positive(i) ? 1 : -1; }
  void set(std::size_t i, bool positive);

  std::vector<int> decode() const;
  const std::vector<std::uint8_t>& packed() const noexcept { return bits_; }

  /// Payload size of the message in bits (== length()).
  std::uint64_t payload_bits() const noexcept { return length_; }

  /// Wire format: u32 little-endian coordinate count, then ceil(count / 8)
  /// payload bytes.
  std::vector<std::uint8_t> encode_wire() const;
  /// Throws IngestionError on truncation or trailing bytes.
  static SignVector decode_wire(std::span<const std::uint8_t> bytes);

  friend bool operator==(const SignVector&, const SignVector&) = default;

 private:
  std::size_t length_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// +1 for g > 0, -1 for g < 0 and for g == 0. Throws NumericsError on NaN.
SignVector sign_compress(const Tensor& g);

struct VoteResult {
  SignVector decision;
  /// Per-coordinate sum of client signs (server side only).
  std::vector<int> tally;
};

/// decision[i] = sign(sum_k signs[k][i]) with a zero sum resolved to +1.
/// Throws UsageError on an empty input and ProtocolError on length mismatch.
VoteResult majority_vote(std::span<const SignVector> signs);

/// omega - delta * decode(vote). Throws ConfigError on length mismatch or
/// non-positive delta.
Tensor apply_vote(const Tensor& omega, const SignVector& vote, double delta);
void apply_vote_inplace(Tensor& omega, const SignVector& vote, double delta);

/// omega - lr * grad.
void sgd_step(Tensor& omega, const Tensor& grad, double lr);

struct ClientParams {
  Tensor params;
  std::size_t sample_count = 0;
};

/// Sample-count weighted mean of client parameter vectors.
Tensor fedavg_aggregate(std::span<const ClientParams> clients);

/// g + mu * (omega_local - omega_global).
Tensor fedprox_local_grad(const Tensor& g, const Tensor& omega_local,
                          const Tensor& omega_global, double mu);

enum class LrSchedule { kConstant, kInverseSqrt };

std::string to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& name);

/// delta, or delta / sqrt(step) for step >= 1.
double learning_rate(LrSchedule schedule, double delta, std::size_t step);

}  // namespace fedsplit
