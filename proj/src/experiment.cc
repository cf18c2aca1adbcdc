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

#include "fedsplit/experiment.h"

#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>

#include "fedsplit/errors.h"

namespace fedsplit {

namespace {

constexpr std::uint64_t kDataStream = 1000;
constexpr std::uint64_t kSplitStream = 1001;
constexpr std::uint64_t kPartitionStream = 1002;
constexpr std::uint64_t kNewClientNoiseStream = 2;

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string blob_task(const DataSpec& d) {
  return "blobs classes=" + std::to_string(d.classes) +
         " dim=" + std::to_string(d.dim) +
         " per_class=" + std::to_string(d.per_class) +
         " spread=" + shortest(d.spread) +
         " test_fraction=" + shortest(d.test_fraction);
}

PartitionPlan make_plan(const FederationConfig& cfg, const Dataset& train,
                        std::uint64_t seed) {
  const std::uint64_t pseed = derive_seed(seed, kPartitionStream);
  if (cfg.data.partition == PartitionScheme::kIid) {
    return partition_iid(train.size(), cfg.clients, pseed);
  }
  const std::size_t shard_count = cfg.clients * cfg.data.shards_per_client;
  const std::size_t shard_size = cfg.data.shard_size != 0
                                     ? cfg.data.shard_size
                                     : train.size() / shard_count;
  if (shard_size == 0 || shard_count * shard_size > train.size()) {
    throw ConfigError("data.shard_size: " + std::to_string(shard_count) +
                      " shards of " + std::to_string(shard_size) +
                      " samples exceed the " + std::to_string(train.size()) +
                      " training samples");
  }
  return partition_shard_noniid(train.labels, shard_count, shard_size,
                                cfg.data.shards_per_client, pseed);
}

Dataset limited(Dataset d, std::size_t limit) {
  if (limit == 0 || limit >= d.size()) return d;
  std::vector<std::size_t> idx(limit);
  std::iota(idx.begin(), idx.end(), 0);
  return d.subset(idx);
}

double sample_sd(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

PreparedData prepare_data(const FederationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PreparedData p;
  const DataSpec& d = cfg.data;
  if (d.source == DataSource::kBlobs) {
    const Dataset all = synth_blobs(d.classes, d.per_class, d.dim, d.spread,
                                    derive_seed(seed, kDataStream));
    TrainTest split =
        train_test_split(all, d.test_fraction, derive_seed(seed, kSplitStream));
    p.train = std::move(split.train);
    p.test = std::move(split.test);
    p.task = blob_task(d);
  } else {
    Dataset all = load_idx(d.images, d.labels, d.limit);
    if (!d.test_images.empty()) {
      if (d.test_labels.empty()) {
        throw ConfigError("data.test_labels is required with data.test_images");
      }
      p.train = std::move(all);
      p.test = load_idx(d.test_images, d.test_labels, d.test_limit);
    } else {
      TrainTest split = train_test_split(all, d.test_fraction,
                                         derive_seed(seed, kSplitStream));
      p.train = std::move(split.train);
      p.test = limited(std::move(split.test), d.test_limit);
    }
    p.task = "idx images=" + d.images + " limit=" + std::to_string(d.limit);
  }
  if (p.test.size() < 2) throw ConfigError("test split holds fewer than 2 samples");
  p.plan = make_plan(cfg, p.train, seed);
  p.shards = p.plan.apply(p.train);
  p.shape = cfg.model_shape(p.train.dim(),
                            static_cast<std::size_t>(p.train.class_count));
  const std::size_t probe_rows = std::min(cfg.probe_batch, p.test.size());
  std::vector<std::size_t> idx(probe_rows);
  std::iota(idx.begin(), idx.end(), 0);
  p.probe = p.test.features.gather_rows(idx);
  return p;
}

TrainedRun train_federation(const FederationConfig& cfg, std::uint64_t seed,
                            const RoundObserver& observer) {
  TrainedRun run;
  run.data = prepare_data(cfg, seed);
  ProtocolOptions opts = cfg.protocol();
  opts.seed = seed;
  run.federation = make_federation(opts, run.data.shape, run.data.shards);
  Federation& fed = *run.federation;
  if (cfg.warmup_rounds > 0) fed.warmup(cfg.warmup_rounds);

  ExperimentResult& res = run.result;
  res.seed = seed;
  res.task = run.data.task;
  res.algorithm = cfg.algorithm;
  res.shared_params = fed.shared_parameter_count();
  res.initial_accuracy = fed.evaluate(run.data.test);
  res.final_accuracy = res.initial_accuracy;
  if (cfg.probe_dcor) res.initial_dcor = fed.probe_dcor(run.data.probe);

  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    const auto start = std::chrono::steady_clock::now();
    RoundRecord rec = fed.run_round();
    if (cfg.wall_time) {
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    }
    if (r % cfg.eval_interval == 0 || r == cfg.rounds) {
      rec.accuracy = fed.evaluate(run.data.test);
      res.final_accuracy = *rec.accuracy;
      if (!res.rounds_to_target && *rec.accuracy >= cfg.target_accuracy) {
        res.rounds_to_target = r;
        res.bits_to_target = rec.cumulative_payload_bits;
      }
    }
    if (cfg.probe_dcor) rec.dcor = fed.probe_dcor(run.data.probe);
    if (observer) observer(fed, rec);
    res.records.push_back(std::move(rec));
  }
  res.total = fed.ledger().total();
  return run;
}

ExperimentResult run_experiment(const FederationConfig& cfg,
                                std::uint64_t seed) {
  return std::move(train_federation(cfg, seed).result);
}

RepeatedResult run_repeated(const FederationConfig& cfg) {
  RepeatedResult out;
  std::vector<double> finals;
  for (std::size_t i = 0; i < cfg.repeats; ++i) {
    out.runs.push_back(run_experiment(cfg, cfg.seed + i));
    finals.push_back(out.runs.back().final_accuracy);
  }
  out.mean_final_accuracy =
      std::accumulate(finals.begin(), finals.end(), 0.0) /
      static_cast<double>(finals.size());
  out.sd_final_accuracy = sample_sd(finals, out.mean_final_accuracy);
  return out;
}

UniversalityResult run_universality(const FederationConfig& two_stage_cfg,
                                    const FederationConfig& fedavg_cfg,
                                    std::size_t adapt_rounds,
                                    double angle_degrees, std::uint64_t seed) {
  const DataSpec& d = two_stage_cfg.data;
  if (d.source != DataSource::kBlobs || square_side(d.dim) == 0) {
    throw ConfigError("universality needs blob data with a square dim");
  }
  // The new client holds about twice a regular client's share.
  const std::size_t per_class =
      std::max<std::size_t>(2, 2 * d.per_class / two_stage_cfg.clients);
  const Dataset fresh =
      synth_blobs(d.classes, per_class, d.dim, d.spread,
                  derive_seed(seed, kDataStream), kNewClientNoiseStream);
  const TrainTest split =
      train_test_split(rotate_images(fresh, angle_degrees), d.test_fraction,
                       derive_seed(seed, kSplitStream + 1));

  const auto adapted = [&](const FederationConfig& cfg) {
    TrainedRun run = train_federation(cfg, seed);
    run.federation->add_client(split.train);
    for (std::size_t r = 0; r < adapt_rounds; ++r) run.federation->run_round();
    return run;
  };
  UniversalityResult out;
  {
    const TrainedRun run = adapted(two_stage_cfg);
    const auto& fed = dynamic_cast<const VoteFederation&>(*run.federation);
    out.two_stage_accuracy = fed.evaluate(split.test);
    const GlobalHead head = fed.reference_head();
    const auto locals = fed.local_models();
    out.two_stage_own_encoder_accuracy = accuracy(
        ensemble_infer(split.test.features, std::span(locals).last(1), head,
                       EnsembleMode::kGlobalHead),
        split.test.labels);
    out.two_stage_aux_ensemble_accuracy =
        accuracy(ensemble_infer(split.test.features, locals, head,
                                EnsembleMode::kAuxHeads),
                 split.test.labels);
  }
  out.fedavg_accuracy = adapted(fedavg_cfg).federation->evaluate(split.test);
  return out;
}

}  // namespace fedsplit
