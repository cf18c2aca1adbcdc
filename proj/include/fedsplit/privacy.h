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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedsplit/config.h"
#include "fedsplit/data.h"
#include "fedsplit/ledger.h"
#include "fedsplit/tensor.h"

namespace fedsplit {

struct LeakageSeries {
  Algorithm algorithm = Algorithm::kTwoStage;
  /// dcor[r] after round r; dcor[0] is the untrained model.
  std::vector<double> dcor;
};

struct LeakageTrace {
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  std::vector<LeakageSeries> series;
};

/// Trains each algorithm on the configured task and records DCOR between
/// the held-out probe batch and the exposed representation after every
/// round. Averaging baselines use privacy.baseline_learning_rate.
LeakageTrace track_leakage(const FederationConfig& cfg,
                           std::span<const Algorithm> algorithms,
                           std::uint64_t seed);

/// Columns: round, algorithm, dcor.
std::string format_leakage_csv(const LeakageTrace& trace);

/// Black-box view of a frozen encoder: raw rows in, smashed rows out.
using EncoderFn = std::function<Tensor(const Tensor&)>;

struct DecoderConfig {
  std::size_t width = 0;  // 0 = 4 * smashed dim
  std::size_t epochs = 60;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct ReconstructionReport {
  double alpha1 = 0.0;
  /// Held-out mean squared error per feature.
  double mse = 0.0;
  /// Set when decoder training diverged; mse is then meaningless.
  bool failed = false;
  Tensor originals;        // first grid rows of the attack-test split
  Tensor reconstructions;  // decoder outputs for the same rows
};

/// Fits a dense decoder (q -> width tanh -> d identity) on (encoder(x), x)
/// pairs from `attack_train` by minibatch SGD on squared error and reports
/// its error on `attack_test`.
ReconstructionReport reconstruction_attack(const EncoderFn& encoder,
                                           const Tensor& attack_train,
                                           const Tensor& attack_test,
                                           const DecoderConfig& decoder,
                                           std::size_t grid_rows = 8);

/// Binary PGM (P5), values mapped linearly from [lo, hi] to 0..255.
void write_pgm(const std::string& path, std::span<const double> pixels,
               std::size_t width, std::size_t height, double lo, double hi);

/// One PGM per original and reconstruction plus index.csv
/// (row,kind,file) under `dir`.
void export_reconstructions(const ReconstructionReport& report,
                            const std::string& dir);

/// Spearman's rho with average ranks for ties. Throws UsageError on length
/// mismatch or fewer than two points; 0 when either side is constant.
double spearman_rank_correlation(std::span<const double> a,
                                 std::span<const double> b);

struct SweepPoint {
  double alpha1 = 0.0;
  std::uint64_t seed = 0;
  ReconstructionReport report;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  /// Rank correlation between alpha1 and the per-alpha1 mean MSE.
  double spearman = 0.0;
};

/// For every privacy.alphas value and privacy.seeds seeds: trains a
/// two-stage federation with that alpha1 and attacks client 0's encoder
/// with held-out test samples split by privacy.attack_fraction.
SweepResult reconstruction_sweep(const FederationConfig& cfg);

}  // namespace fedsplit
