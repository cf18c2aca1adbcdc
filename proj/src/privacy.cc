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

#include "fedsplit/privacy.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fedsplit/errors.h"
#include "fedsplit/experiment.h"
#include "fedsplit/network.h"
#include "fedsplit/protocol.h"
#include "fedsplit/rng.h"

namespace fedsplit {

namespace {

constexpr std::uint64_t kAttackSplitStream = 2000;
constexpr std::uint64_t kDecoderStream = 2001;

double mean_squared_error(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

LeakageTrace track_leakage(const FederationConfig& cfg,
                           std::span<const Algorithm> algorithms,
                           std::uint64_t seed) {
  LeakageTrace trace;
  trace.seed = seed;
  for (Algorithm algo : algorithms) {
    FederationConfig c = cfg;
    c.algorithm = algo;
    c.probe_dcor = true;
    if (algo == Algorithm::kFedAvg || algo == Algorithm::kFedProx) {
      c.learning_rate = cfg.privacy.baseline_learning_rate;
    }
    const ExperimentResult r = run_experiment(c, seed);
    LeakageSeries s;
    s.algorithm = algo;
    s.dcor.push_back(*r.initial_dcor);
    for (const auto& rec : r.records) s.dcor.push_back(*rec.dcor);
    trace.series.push_back(std::move(s));
    trace.batch_size = std::min(c.probe_batch, prepare_data(c, seed).probe.rows());
  }
  return trace;
}

std::string format_leakage_csv(const LeakageTrace& trace) {
  std::string out = "round,algorithm,dcor\n";
  char buf[96];
  for (const auto& s : trace.series) {
    for (std::size_t r = 0; r < s.dcor.size(); ++r) {
      std::snprintf(buf, sizeof(buf), "%zu,%s,%.6f\n", r,
                    to_string(s.algorithm).c_str(), s.dcor[r]);
      out += buf;
    }
  }
  return out;
}

ReconstructionReport reconstruction_attack(const EncoderFn& encoder,
                                           const Tensor& attack_train,
                                           const Tensor& attack_test,
                                           const DecoderConfig& config,
                                           std::size_t grid_rows) {
  if (attack_train.rows() < 1 || attack_test.rows() < 1) {
    throw UsageError("reconstruction attack needs non-empty splits");
  }
  const Tensor z_train = encoder(attack_train);
  const Tensor z_test = encoder(attack_test);
  const std::size_t q = z_train.cols();
  const std::size_t d = attack_train.cols();
  const std::size_t width = config.width == 0 ? 4 * q : config.width;
  const std::vector<LayerSpec> specs{{q, width, Activation::kTanh},
                                     {width, d, Activation::kIdentity}};
  Network decoder = Network::random(specs, config.seed);

  ReconstructionReport report;
  Rng rng(derive_seed(config.seed, 1));
  Tensor params = flatten_params(decoder);
  for (std::size_t epoch = 0; epoch < config.epochs && !report.failed;
       ++epoch) {
    for (const auto& batch :
         make_batches(z_train.rows(), config.batch_size, rng)) {
      const Tensor zb = z_train.gather_rows(batch);
      const Tensor xb = attack_train.gather_rows(batch);
      const ForwardResult fwd = forward(decoder, zb);
      // Squared error summed over features, averaged over the batch.
      Tensor grad(fwd.output.shape());
      double loss = 0.0;
      const double scale = 2.0 / static_cast<double>(batch.size());
      for (std::size_t i = 0; i < grad.size(); ++i) {
        const double diff = fwd.output[i] - xb[i];
        loss += diff * diff;
        grad[i] = scale * diff;
      }
      if (!std::isfinite(loss)) {
        report.failed = true;
        break;
      }
      const BackwardResult back = backward(decoder, fwd.cache, grad);
      sgd_step(params, back.param_grads, config.learning_rate);
      unflatten_params(decoder, params);
    }
  }

  const Tensor recon = predict(decoder, z_test);
  report.mse = mean_squared_error(recon, attack_test);
  if (!std::isfinite(report.mse)) report.failed = true;
  const std::size_t rows = std::min(grid_rows, attack_test.rows());
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), 0);
  report.originals = attack_test.gather_rows(idx);
  report.reconstructions = recon.gather_rows(idx);
  return report;
}

void write_pgm(const std::string& path, std::span<const double> pixels,
               std::size_t width, std::size_t height, double lo, double hi) {
  if (pixels.size() != width * height) {
    throw UsageError("pgm pixel count does not match " +
                     std::to_string(width) + "x" + std::to_string(height));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (double p : pixels) {
    const double t = std::clamp((p - lo) / span, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

void export_reconstructions(const ReconstructionReport& report,
                            const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "'");
  const Tensor& orig = report.originals;
  if (orig.empty()) return;
  const std::size_t d = orig.cols();
  const std::size_t side = square_side(d);
  const std::size_t w = side != 0 ? side : d;
  const std::size_t h = side != 0 ? side : 1;
  const auto [lo_it, hi_it] =
      std::minmax_element(orig.data().begin(), orig.data().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::string index = "row,kind,file\n";
  for (std::size_t r = 0; r < orig.rows(); ++r) {
    for (const auto& [kind, t] :
         {std::pair<const char*, const Tensor*>{"original", &orig},
          {"reconstruction", &report.reconstructions}}) {
      const std::string file = std::string(kind) + "_" + std::to_string(r) + ".pgm";
      write_pgm((fs::path(dir) / file).string(), t->row(r), w, h, lo, hi);
      index += std::to_string(r) + "," + kind + "," + file + "\n";
    }
  }
  std::ofstream out(fs::path(dir) / "index.csv", std::ios::trunc);
  if (!out || !(out << index)) throw IoError("cannot write index in '" + dir + "'");
}

double spearman_rank_correlation(std::span<const double> a,
                                 std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("spearman: length mismatch");
  if (a.size() < 2) throw UsageError("spearman needs at least two points");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

SweepResult reconstruction_sweep(const FederationConfig& cfg) {
  SweepResult out;
  std::vector<double> alphas;
  std::vector<double> means;
  for (double alpha : cfg.privacy.alphas) {
    double sum = 0.0;
    for (std::size_t s = 0; s < cfg.privacy.seeds; ++s) {
      const std::uint64_t seed = cfg.seed + s;
      FederationConfig c = cfg;
      c.algorithm = Algorithm::kTwoStage;
      c.alpha1 = alpha;
      TrainedRun run = train_federation(c, seed);
      const auto& fed = dynamic_cast<const VoteFederation&>(*run.federation);
      const Network encoder = fed.clients().front().local.encoder;

      const Dataset& pool = run.data.test;
      std::vector<std::size_t> order(pool.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng(derive_seed(seed, kAttackSplitStream));
      rng.shuffle(std::span<std::size_t>(order));
      const auto cut = static_cast<std::size_t>(std::llround(
          cfg.privacy.attack_fraction * static_cast<double>(order.size())));
      if (cut < 1 || cut >= order.size()) {
        throw ConfigError("privacy.attack_fraction leaves an empty split");
      }
      const std::vector<std::size_t> train_idx(order.begin(), order.begin() + cut);
      const std::vector<std::size_t> test_idx(order.begin() + cut, order.end());

      DecoderConfig dc;
      dc.width = cfg.privacy.decoder_width;
      dc.epochs = cfg.privacy.decoder_epochs;
      dc.learning_rate = cfg.privacy.decoder_lr;
      dc.batch_size = cfg.privacy.decoder_batch;
      dc.seed = derive_seed(seed, kDecoderStream);
      SweepPoint p;
      p.alpha1 = alpha;
      p.seed = seed;
      p.report = reconstruction_attack(
          [&encoder](const Tensor& x) { return predict(encoder, x); },
          pool.features.gather_rows(train_idx),
          pool.features.gather_rows(test_idx), dc, cfg.privacy.grid_images);
      p.report.alpha1 = alpha;
      sum += p.report.mse;
      out.points.push_back(std::move(p));
    }
    alphas.push_back(alpha);
    means.push_back(sum / static_cast<double>(cfg.privacy.seeds));
  }
  if (alphas.size() >= 2) out.spearman = spearman_rank_correlation(alphas, means);
  return out;
}

}  // namespace fedsplit
