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

// Command-line entry point: run, compare and probe.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fedsplit/config.h"
#include "fedsplit/errors.h"
#include "fedsplit/experiment.h"
#include "fedsplit/metrics.h"
#include "fedsplit/privacy.h"

namespace {

using namespace fedsplit;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

FederationConfig load_with(const std::string& path, const Overrides& o) {
  FederationConfig cfg = load_config(path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw IoError("cannot write '" + path.string() + "'");
}

int cmd_run(const std::string& config_path, const Overrides& o) {
  const FederationConfig cfg = load_with(config_path, o);
  preflight_output(cfg.output_dir);
  prepare_data(cfg, cfg.seed);
  const RepeatedResult runs = run_repeated(cfg);
  write_run_outputs(cfg.output_dir, cfg, runs);
  std::cout << format_summary(summarize(cfg, runs));
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b) {
  const RunSummary sa = read_summary(a);
  const RunSummary sb = read_summary(b);
  std::cout << format_comparison(sa, sb, compare_runs(sa, sb));
  return 0;
}

int cmd_probe(const std::string& config_path, const Overrides& o) {
  const FederationConfig cfg = load_with(config_path, o);
  preflight_output(cfg.output_dir);
  prepare_data(cfg, cfg.seed);
  const fs::path dir(cfg.output_dir);

  const SweepResult sweep = reconstruction_sweep(cfg);
  std::string csv = "alpha1,seed,mse,failed\n";
  char buf[128];
  for (const SweepPoint& p : sweep.points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%llu,%.9g,%d\n", p.alpha1,
                  static_cast<unsigned long long>(p.seed), p.report.mse,
                  p.report.failed ? 1 : 0);
    csv += buf;
    if (p.seed == cfg.seed) {
      std::snprintf(buf, sizeof(buf), "recon_alpha%.2f", p.alpha1);
      export_reconstructions(p.report, (dir / buf).string());
    }
  }
  write_file(dir / "reconstruction.csv", csv);

  const Algorithm algorithms[] = {Algorithm::kTwoStage, Algorithm::kFedAvg};
  const LeakageTrace trace = track_leakage(cfg, algorithms, cfg.seed);
  write_file(dir / "leakage.csv", format_leakage_csv(trace));

  std::snprintf(buf, sizeof(buf), "spearman_alpha1_mse = %.17g\n",
                sweep.spearman);
  std::string summary = buf;
  summary += "probe_batch = " + std::to_string(trace.batch_size) + "\n";
  for (const LeakageSeries& s : trace.series) {
    std::snprintf(buf, sizeof(buf), "final_dcor_%s = %.17g\n",
                  to_string(s.algorithm).c_str(), s.dcor.back());
    summary += buf;
  }
  write_file(dir / "probe_summary.txt", summary);
  std::cout << summary;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated two-stage learning with sign-based voting"};
  app.require_subcommand(1);
  Overrides overrides;
  std::uint64_t seed = 0;
  std::string out;
  std::string config_path;
  std::string summary_a;
  std::string summary_b;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "Configuration file")->required();
    sub->add_option("--seed", seed, "Override run.seed");
    sub->add_option("--out", out, "Override output.dir");
  };
  CLI::App* run = app.add_subcommand("run", "Train and write metrics");
  add_common(run);
  CLI::App* probe = app.add_subcommand("probe", "Privacy sweep and leakage trace");
  add_common(probe);
  CLI::App* compare = app.add_subcommand("compare", "Compare two run summaries");
  compare->add_option("summary_a", summary_a)->required();
  compare->add_option("summary_b", summary_b)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  for (CLI::App* sub : {run, probe}) {
    if (sub->count("--seed") > 0) overrides.seed = seed;
    if (sub->count("--out") > 0) overrides.out = out;
  }

  try {
    if (*run) return cmd_run(config_path, overrides);
    if (*probe) return cmd_probe(config_path, overrides);
    return cmd_compare(summary_a, summary_b);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericsError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
