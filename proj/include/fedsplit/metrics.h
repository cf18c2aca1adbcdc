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
#include <optional>
#include <string>

#include "fedsplit/config.h"
#include "fedsplit/experiment.h"

namespace fedsplit {

/// Creates `dir` if needed and proves it writable. Throws IoError.
void preflight_output(const std::string& dir);

inline constexpr const char* kMetricsHeader =
    "round,acc,l1,l2,lg,loss,up_bits,down_bits,cum_bits,dcor,ms";

/// One row per round; `acc` and `dcor` are blank when not measured and `ms`
/// is 0 unless wall_time is set, so the bytes depend only on config + seed.
std::string format_metrics_csv(const ExperimentResult& result, bool wall_time);

struct RunSummary {
  std::string task;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::size_t repeats = 1;
  std::size_t rounds = 0;
  std::size_t shared_params = 0;
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;  // mean over repeats
  double final_accuracy_sd = 0.0;
  double target_accuracy = 0.0;
  /// Means over repeats; absent unless every repeat reached the target.
  std::optional<double> rounds_to_target;
  std::optional<double> bits_to_target;
  double total_payload_bits = 0.0;
  double total_header_bits = 0.0;
};

RunSummary summarize(const FederationConfig& cfg, const RepeatedResult& runs);
/// Flat `key = value` lines; absent values are written as `none`.
std::string format_summary(const RunSummary& s);
/// Throws ConfigError naming the line on malformed or missing keys.
RunSummary parse_summary(const std::string& text);
RunSummary read_summary(const std::string& path);

struct Comparison {
  double accuracy_delta = 0.0;  // a - b
  std::optional<double> payload_ratio;  // a / b
  std::optional<double> bits_to_target_ratio;
  std::optional<double> rounds_to_target_ratio;
};

/// Throws UsageError when the runs are on different tasks.
Comparison compare_runs(const RunSummary& a, const RunSummary& b);
std::string format_comparison(const RunSummary& a, const RunSummary& b,
                              const Comparison& c);

/// Writes metrics.csv (metrics_seed<k>.csv per repeat when repeats > 1) and
/// summary.txt under `dir`.
void write_run_outputs(const std::string& dir, const FederationConfig& cfg,
                       const RepeatedResult& runs);

}  // namespace fedsplit
