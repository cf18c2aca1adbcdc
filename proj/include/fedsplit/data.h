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

struct Dataset {
  Tensor features;  // (n, d)
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.empty() ? 0 : features.cols(); }

  Dataset subset(std::span<const std::size_t> indices) const;
  /// Throws ConfigError when labels are out of range or counts disagree.
  void validate() const;
};

struct TrainTest {
  Dataset train;
  Dataset test;
};

/// Seeded shuffle, then the last round(n * test_fraction) samples form the
/// test split.
TrainTest train_test_split(const Dataset& data, double test_fraction,
                           std::uint64_t seed);

struct PartitionPlan {
  std::vector<std::vector<std::size_t>> assignment;  // client -> indices
  std::string scheme;

  std::size_t clients() const { return assignment.size(); }
  std::vector<Dataset> apply(const Dataset& data) const;
};

/// Shuffles all indices and deals floor(n / m) to each client; the tail is
/// dropped. Throws UsageError when m > n or m == 0.
PartitionPlan partition_iid(std::size_t n, std::size_t clients,
                            std::uint64_t seed);

/// Stable-sorts indices by label, cuts the first shard_count * shard_size
/// into consecutive shards and deals shards_per_client shards to each of
/// shard_count / shards_per_client clients, uniformly without replacement.
PartitionPlan partition_shard_noniid(std::span<const int> labels,
                                     std::size_t shard_count,
                                     std::size_t shard_size,
                                     std::size_t shards_per_client,
                                     std::uint64_t seed);

/// Audit export: header "client_id,sample_index", one row per assignment.
void write_partition_csv(const PartitionPlan& plan, const std::string& path);

/// IDX image/label pair (magics 0x00000803 / 0x00000801, big-endian dims).
/// Pixels are scaled to [0, 1]. Throws IngestionError with a byte offset on
/// bad magic, truncation or count mismatch, and IoError if unreadable.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t limit = 0);
Dataset parse_idx(std::span<const std::uint8_t> images,
                  std::span<const std::uint8_t> labels, std::size_t limit = 0);

/// Gaussian clusters: class centers uniform in [-1, 1]^dim, samples at
/// center + spread * N(0, I). Samples are ordered by class. Centers depend
/// only on `seed`; `noise_stream` selects an independent noise draw around
/// the same centers.
Dataset synth_blobs(int classes, std::size_t per_class, std::size_t dim,
                    double spread, std::uint64_t seed,
                    std::uint64_t noise_stream = 1);

/// Rotates every sample, read as an s x s row-major image, counter-clockwise
/// about the image center with nearest-neighbor resampling; pixels mapped
/// from outside the grid become 0. Multiples of 90 degrees are exact
/// permutations. Throws UsageError unless dim is a perfect square.
Dataset rotate_images(const Dataset& data, double angle_degrees);

/// Side length s with s * s == dim, or 0.
std::size_t square_side(std::size_t dim);

double accuracy(std::span<const int> predicted, std::span<const int> labels);

}  // namespace fedsplit
