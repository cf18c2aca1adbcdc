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

#include "fedsplit/metrics.h"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fedsplit/errors.h"

namespace fedsplit {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// Shortest text that reads back to the same double.
std::string exact(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> ratio(double a, double b) {
  if (b == 0.0) return std::nullopt;
  return a / b;
}

std::string opt(const std::optional<double>& v) {
  return v ? exact(*v) : std::string("none");
}

}  // namespace

void preflight_output(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir + "'");
  }
  const std::string probe = (fs::path(dir) / ".preflight").string();
  {
    std::ofstream out(probe);
    if (!out || !(out << "ok")) {
      throw IoError("output directory '" + dir + "' is not writable");
    }
  }
  fs::remove(probe, ec);
}

std::string format_metrics_csv(const ExperimentResult& result,
                               bool wall_time) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const RoundRecord& r : result.records) {
    out += std::to_string(r.round);
    out += ',';
    if (r.accuracy) out += fmt("%.6f", *r.accuracy);
    out += ',' + fmt("%.9g", r.loss.l1);
    out += ',' + fmt("%.9g", r.loss.l2);
    out += ',' + fmt("%.9g", r.loss.lg);
    out += ',' + fmt("%.9g", r.loss.total);
    out += ',' + std::to_string(r.traffic.uplink);
    out += ',' + std::to_string(r.traffic.downlink);
    out += ',' + std::to_string(r.cumulative_payload_bits);
    out += ',';
    if (r.dcor) out += fmt("%.6f", *r.dcor);
    out += ',' + fmt("%.3f", wall_time ? r.wall_ms : 0.0);
    out += '\n';
  }
  return out;
}

RunSummary summarize(const FederationConfig& cfg, const RepeatedResult& runs) {
  if (runs.runs.empty()) throw UsageError("no runs to summarize");
  const ExperimentResult& first = runs.runs.front();
  RunSummary s;
  s.task = first.task;
  s.algorithm = to_string(cfg.algorithm);
  s.seed = cfg.seed;
  s.repeats = runs.runs.size();
  s.rounds = cfg.rounds;
  s.shared_params = first.shared_params;
  s.target_accuracy = cfg.target_accuracy;
  s.final_accuracy = runs.mean_final_accuracy;
  s.final_accuracy_sd = runs.sd_final_accuracy;
  const double k = static_cast<double>(runs.runs.size());
  double rounds = 0.0;
  double bits = 0.0;
  bool all_reached = true;
  for (const auto& r : runs.runs) {
    s.initial_accuracy += r.initial_accuracy / k;
    s.total_payload_bits += static_cast<double>(r.total.payload()) / k;
    s.total_header_bits += static_cast<double>(r.total.header) / k;
    if (r.rounds_to_target) {
      rounds += static_cast<double>(*r.rounds_to_target) / k;
      bits += static_cast<double>(*r.bits_to_target) / k;
    } else {
      all_reached = false;
    }
  }
  if (all_reached) {
    s.rounds_to_target = rounds;
    s.bits_to_target = bits;
  }
  return s;
}

std::string format_summary(const RunSummary& s) {
  std::ostringstream o;
  o << "task = " << s.task << '\n'
    << "algorithm = " << s.algorithm << '\n'
    << "seed = " << s.seed << '\n'
    << "repeats = " << s.repeats << '\n'
    << "rounds = " << s.rounds << '\n'
    << "shared_params = " << s.shared_params << '\n'
    << "initial_accuracy = " << exact(s.initial_accuracy) << '\n'
    << "final_accuracy = " << exact(s.final_accuracy) << '\n'
    << "final_accuracy_sd = " << exact(s.final_accuracy_sd) << '\n'
    << "target_accuracy = " << exact(s.target_accuracy) << '\n'
    << "rounds_to_target = " << opt(s.rounds_to_target) << '\n'
    << "bits_to_target = " << opt(s.bits_to_target) << '\n'
    << "total_payload_bits = " << exact(s.total_payload_bits) << '\n'
    << "total_header_bits = " << exact(s.total_header_bits) << '\n';
  return o.str();
}

RunSummary parse_summary(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("summary line " + std::to_string(n) +
                        ": expected 'key = value'");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  const auto get = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("summary is missing '" + key + "'");
    return it->second;
  };
  const auto num = [&](const std::string& key) {
    const std::string& v = get(key);
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
      throw ConfigError("summary key '" + key + "' is not a number: " + v);
    }
    return d;
  };
  const auto opt_num = [&](const std::string& key) -> std::optional<double> {
    if (get(key) == "none") return std::nullopt;
    return num(key);
  };
  RunSummary s;
  s.task = get("task");
  s.algorithm = get("algorithm");
  s.seed = static_cast<std::uint64_t>(num("seed"));
  s.repeats = static_cast<std::size_t>(num("repeats"));
  s.rounds = static_cast<std::size_t>(num("rounds"));
  s.shared_params = static_cast<std::size_t>(num("shared_params"));
  s.initial_accuracy = num("initial_accuracy");
  s.final_accuracy = num("final_accuracy");
  s.final_accuracy_sd = num("final_accuracy_sd");
  s.target_accuracy = num("target_accuracy");
  s.rounds_to_target = opt_num("rounds_to_target");
  s.bits_to_target = opt_num("bits_to_target");
  s.total_payload_bits = num("total_payload_bits");
  s.total_header_bits = num("total_header_bits");
  return s;
}

RunSummary read_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open summary '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_summary(ss.str());
}

Comparison compare_runs(const RunSummary& a, const RunSummary& b) {
  if (a.task != b.task) {
    throw UsageError("cannot compare runs on different tasks: '" + a.task +
                     "' vs '" + b.task + "'");
  }
  Comparison c;
  c.accuracy_delta = a.final_accuracy - b.final_accuracy;
  c.payload_ratio = ratio(a.total_payload_bits, b.total_payload_bits);
  if (a.bits_to_target && b.bits_to_target) {
    c.bits_to_target_ratio = ratio(*a.bits_to_target, *b.bits_to_target);
  }
  if (a.rounds_to_target && b.rounds_to_target) {
    c.rounds_to_target_ratio = ratio(*a.rounds_to_target, *b.rounds_to_target);
  }
  return c;
}

std::string format_comparison(const RunSummary& a, const RunSummary& b,
                              const Comparison& c) {
  std::ostringstream o;
  o << "task = " << a.task << '\n'
    << "algorithm_a = " << a.algorithm << '\n'
    << "algorithm_b = " << b.algorithm << '\n'
    << "accuracy_delta = " << exact(c.accuracy_delta) << '\n'
    << "payload_ratio = " << opt(c.payload_ratio) << '\n'
    << "bits_to_target_ratio = " << opt(c.bits_to_target_ratio) << '\n'
    << "rounds_to_target_ratio = " << opt(c.rounds_to_target_ratio) << '\n'
    << "target_accuracy = " << exact(a.target_accuracy) << '\n'
    << "rounds_to_target_rule = first evaluated round with test accuracy >= "
       "target\n";
  return o.str();
}

void write_run_outputs(const std::string& dir, const FederationConfig& cfg,
                       const RepeatedResult& runs) {
  namespace fs = std::filesystem;
  preflight_output(dir);
  if (runs.runs.size() == 1) {
    write_text((fs::path(dir) / "metrics.csv").string(),
               format_metrics_csv(runs.runs.front(), cfg.wall_time));
  } else {
    for (const auto& r : runs.runs) {
      write_text(
          (fs::path(dir) / ("metrics_seed" + std::to_string(r.seed) + ".csv"))
              .string(),
          format_metrics_csv(r, cfg.wall_time));
    }
  }
  write_text((fs::path(dir) / "summary.txt").string(),
             format_summary(summarize(cfg, runs)));
}

}  // namespace fedsplit
