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

#include "fedsplit/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "fedsplit/bytes.h"
#include "fedsplit/errors.h"
#include "fedsplit/rng.h"

namespace fedsplit {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = features.gather_rows(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels[i]);
  out.class_count = class_count;
  return out;
}

void Dataset::validate() const {
  if (labels.empty()) throw ConfigError("dataset is empty");
  if (features.rank() != 2 || features.rows() != labels.size()) {
    throw ConfigError("dataset features " + features.shape_string() +
                      " do not match " + std::to_string(labels.size()) +
                      " labels");
  }
  for (int l : labels) {
    if (l < 0 || l >= class_count) {
      throw ConfigError("label " + std::to_string(l) + " outside [0, " +
                        std::to_string(class_count) + ")");
    }
  }
}

TrainTest train_test_split(const Dataset& data, double test_fraction,
                           std::uint64_t seed) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw ConfigError("test_fraction must be in (0, 1)");
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  const auto n_test = static_cast<std::size_t>(
      std::llround(static_cast<double>(data.size()) * test_fraction));
  if (n_test == 0 || n_test >= data.size()) {
    throw ConfigError("test split would leave an empty side");
  }
  const std::size_t n_train = data.size() - n_test;
  const std::span<const std::size_t> all(idx);
  return {data.subset(all.first(n_train)), data.subset(all.subspan(n_train))};
}

std::vector<Dataset> PartitionPlan::apply(const Dataset& data) const {
  std::vector<Dataset> out;
  out.reserve(assignment.size());
  for (const auto& idx : assignment) out.push_back(data.subset(idx));
  return out;
}

PartitionPlan partition_iid(std::size_t n, std::size_t clients,
                            std::uint64_t seed) {
  if (clients == 0) throw UsageError("partition into zero clients");
  if (clients > n) {
    throw UsageError("cannot split " + std::to_string(n) + " samples across " +
                     std::to_string(clients) + " clients");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  const std::size_t per = n / clients;
  PartitionPlan plan;
  plan.scheme = "iid";
  for (std::size_t k = 0; k < clients; ++k) {
    plan.assignment.emplace_back(idx.begin() + k * per,
                                 idx.begin() + (k + 1) * per);
  }
  return plan;
}

PartitionPlan partition_shard_noniid(std::span<const int> labels,
                                     std::size_t shard_count,
                                     std::size_t shard_size,
                                     std::size_t shards_per_client,
                                     std::uint64_t seed) {
  if (shard_count == 0 || shard_size == 0 || shards_per_client == 0) {
    throw UsageError("shard parameters must be positive");
  }
  if (shard_count * shard_size > labels.size()) {
    throw UsageError("need " + std::to_string(shard_count * shard_size) +
                     " samples for the shard grid, have " +
                     std::to_string(labels.size()));
  }
  if (shard_count % shards_per_client != 0) {
    throw UsageError("shard_count must be a multiple of shards_per_client");
  }
  std::vector<std::size_t> sorted(labels.size());
  std::iota(sorted.begin(), sorted.end(), 0);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [&](std::size_t a, std::size_t b) {
                     return labels[a] < labels[b];
                   });
  std::vector<std::size_t> shard_ids(shard_count);
  std::iota(shard_ids.begin(), shard_ids.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(shard_ids));

  PartitionPlan plan;
  plan.scheme = "shard";
  const std::size_t clients = shard_count / shards_per_client;
  for (std::size_t k = 0; k < clients; ++k) {
    std::vector<std::size_t> mine;
    mine.reserve(shards_per_client * shard_size);
    for (std::size_t s = 0; s < shards_per_client; ++s) {
      const std::size_t shard = shard_ids[k * shards_per_client + s];
      const auto begin = sorted.begin() + shard * shard_size;
      mine.insert(mine.end(), begin, begin + shard_size);
    }
    plan.assignment.push_back(std::move(mine));
  }
  return plan;
}

void write_partition_csv(const PartitionPlan& plan, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "client_id,sample_index\n";
  for (std::size_t k = 0; k < plan.assignment.size(); ++k) {
    for (std::size_t i : plan.assignment[k]) out << k << ',' << i << '\n';
  }
  if (!out) throw IoError("short write to '" + path + "'");
}

Dataset parse_idx(std::span<const std::uint8_t> images,
                  std::span<const std::uint8_t> labels, std::size_t limit) {
  ByteReader ri(images);
  if (ri.u32_be("image magic") != 0x00000803) {
    throw IngestionError("bad IDX image magic", 0);
  }
  const std::uint32_t n_images = ri.u32_be("image count");
  const std::uint32_t rows = ri.u32_be("image rows");
  const std::uint32_t cols = ri.u32_be("image cols");

  ByteReader rl(labels);
  if (rl.u32_be("label magic") != 0x00000801) {
    throw IngestionError("bad IDX label magic", 0);
  }
  const std::size_t count_at = rl.offset();
  const std::uint32_t n_labels = rl.u32_be("label count");
  if (n_labels != n_images) {
    throw IngestionError("label count " + std::to_string(n_labels) +
                             " does not match image count " +
                             std::to_string(n_images),
                         count_at);
  }
  const std::size_t dim = std::size_t{rows} * cols;
  const std::size_t n =
      limit == 0 ? n_images : std::min<std::size_t>(limit, n_images);

  // Validate both payload sizes before building anything.
  if (ri.remaining() < std::size_t{n_images} * dim) {
    throw IngestionError("truncated IDX image payload",
                         ri.offset() + ri.remaining());
  }
  if (rl.remaining() < n_images) {
    throw IngestionError("truncated IDX label payload",
                         rl.offset() + rl.remaining());
  }
  const auto pixels = ri.take(n * dim, "image payload");
  const auto raw_labels = rl.take(n, "label payload");

  Dataset d;
  d.features = Tensor({n, dim});
  for (std::size_t i = 0; i < n * dim; ++i) {
    d.features[i] = static_cast<double>(pixels[i]) / 255.0;
  }
  d.labels.assign(raw_labels.begin(), raw_labels.end());
  d.class_count = 0;
  for (int l : d.labels) d.class_count = std::max(d.class_count, l + 1);
  d.class_count = std::max(d.class_count, 10);
  return d;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t limit) {
  const auto images = read_file_bytes(images_path);
  const auto labels = read_file_bytes(labels_path);
  return parse_idx(images, labels, limit);
}

Dataset synth_blobs(int classes, std::size_t per_class, std::size_t dim,
                    double spread, std::uint64_t seed,
                    std::uint64_t noise_stream) {
  if (classes < 1 || per_class == 0 || dim == 0) {
    throw ConfigError("blobs need classes, per_class and dim > 0");
  }
  if (spread < 0.0) throw ConfigError("spread must be non-negative");
  Rng center_rng(derive_seed(seed, 0));
  Rng noise_rng(derive_seed(seed, noise_stream));
  Tensor centers({static_cast<std::size_t>(classes), dim});
  for (double& c : centers.data()) c = center_rng.uniform(-1.0, 1.0);

  Dataset d;
  d.class_count = classes;
  d.features = Tensor({static_cast<std::size_t>(classes) * per_class, dim});
  std::size_t row = 0;
  for (int c = 0; c < classes; ++c) {
    const auto center = centers.row(static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      auto out = d.features.row(row);
      for (std::size_t k = 0; k < dim; ++k) {
        out[k] = center[k] + (spread > 0.0 ? spread * noise_rng.normal() : 0.0);
      }
      d.labels.push_back(c);
    }
  }
  return d;
}

std::size_t square_side(std::size_t dim) {
  auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
  return s * s == dim ? s : 0;
}

Dataset rotate_images(const Dataset& data, double angle_degrees) {
  const std::size_t s = square_side(data.dim());
  if (s == 0) {
    throw UsageError("rotation needs square images, dim " +
                     std::to_string(data.dim()) + " is not a square");
  }
  double turn = std::fmod(angle_degrees, 360.0);
  if (turn < 0.0) turn += 360.0;
  double cos_t = 0.0;
  double sin_t = 0.0;
  if (std::fmod(turn, 90.0) == 0.0) {
    // Exact quarter turns.
    static constexpr double kCos[] = {1.0, 0.0, -1.0, 0.0};
    static constexpr double kSin[] = {0.0, 1.0, 0.0, -1.0};
    const auto k = static_cast<std::size_t>(turn / 90.0);
    cos_t = kCos[k];
    sin_t = kSin[k];
  } else {
    const double rad = turn * std::numbers::pi / 180.0;
    cos_t = std::cos(rad);
    sin_t = std::sin(rad);
  }

  // Source pixel for every destination pixel.
  const double center = (static_cast<double>(s) - 1.0) / 2.0;
  std::vector<std::ptrdiff_t> source(s * s, -1);
  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t c = 0; c < s; ++c) {
      const double x = static_cast<double>(c) - center;
      const double y = center - static_cast<double>(r);
      const double xs = x * cos_t + y * sin_t;
      const double ys = -x * sin_t + y * cos_t;
      const double cs = std::round(xs + center);
      const double rs = std::round(center - ys);
      if (cs >= 0 && rs >= 0 && cs < static_cast<double>(s) &&
          rs < static_cast<double>(s)) {
        source[r * s + c] = static_cast<std::ptrdiff_t>(rs) *
                                static_cast<std::ptrdiff_t>(s) +
                            static_cast<std::ptrdiff_t>(cs);
      }
    }
  }

  Dataset out = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto in = data.features.row(i);
    auto dst = out.features.row(i);
    for (std::size_t p = 0; p < s * s; ++p) {
      dst[p] = source[p] < 0 ? 0.0 : in[static_cast<std::size_t>(source[p])];
    }
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size() || labels.empty()) {
    throw UsageError("accuracy needs equal, non-empty prediction and labels");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace fedsplit
