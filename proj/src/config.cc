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

#include "fedsplit/config.h"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "fedsplit/errors.h"

namespace fedsplit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Carries the location for error messages.
struct Field {
  std::string key;  // section.key
  std::string value;
  int line = 0;

  [[noreturn]] void fail(const std::string& reason) const {
    throw ConfigError("line " + std::to_string(line) + ": " + key + ": " +
                      reason);
  }

  std::uint64_t as_uint() const {
    std::uint64_t v = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || ptr != end || value.empty()) {
      fail("expected a non-negative integer, got '" + value + "'");
    }
    return v;
  }

  std::size_t as_size(std::size_t min = 0) const {
    const auto v = static_cast<std::size_t>(as_uint());
    if (v < min) {
      fail("must be >= " + std::to_string(min) + ", got " + value);
    }
    return v;
  }

  double as_double() const {
    if (value.empty()) fail("expected a number");
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end != value.c_str() + value.size() || !std::isfinite(v)) {
      fail("expected a finite number, got '" + value + "'");
    }
    return v;
  }

  double as_nonnegative() const {
    const double v = as_double();
    if (v < 0.0) fail("must be >= 0, got " + value);
    return v;
  }

  double as_positive() const {
    const double v = as_double();
    if (!(v > 0.0)) fail("must be > 0, got " + value);
    return v;
  }

  double as_unit_interval() const {
    const double v = as_double();
    if (!(v > 0.0 && v <= 1.0)) fail("must be in (0, 1], got " + value);
    return v;
  }

  bool as_bool() const {
    if (value == "true") return true;
    if (value == "false") return false;
    fail("expected true or false, got '" + value + "'");
  }

  std::vector<std::string> as_list() const {
    std::vector<std::string> out;
    if (value.empty()) return out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
  }

  std::vector<std::size_t> as_size_list() const {
    std::vector<std::size_t> out;
    for (const auto& item : as_list()) {
      out.push_back(Field{key, item, line}.as_size(1));
    }
    return out;
  }

  std::vector<double> as_double_list() const {
    std::vector<double> out;
    for (const auto& item : as_list()) {
      out.push_back(Field{key, item, line}.as_nonnegative());
    }
    return out;
  }

  template <typename Parse>
  auto as_enum(Parse parse) const {
    try {
      return parse(value);
    } catch (const ConfigError& e) {
      fail(e.what());
    }
  }
};

using Setter = std::function<void(FederationConfig&, const Field&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      // [run]
      {"run.algorithm",
       [](auto& c, const Field& f) { c.algorithm = f.as_enum(parse_algorithm); }},
      {"run.rounds", [](auto& c, const Field& f) { c.rounds = f.as_size(); }},
      {"run.seed", [](auto& c, const Field& f) { c.seed = f.as_uint(); }},
      {"run.repeats", [](auto& c, const Field& f) { c.repeats = f.as_size(1); }},
      {"run.eval_interval",
       [](auto& c, const Field& f) { c.eval_interval = f.as_size(1); }},
      {"run.target_accuracy",
       [](auto& c, const Field& f) { c.target_accuracy = f.as_unit_interval(); }},
      // [federation]
      {"federation.clients",
       [](auto& c, const Field& f) { c.clients = f.as_size(1); }},
      {"federation.participation",
       [](auto& c, const Field& f) { c.participation = f.as_unit_interval(); }},
      {"federation.batch_size",
       [](auto& c, const Field& f) { c.batch_size = f.as_size(1); }},
      {"federation.learning_rate",
       [](auto& c, const Field& f) { c.learning_rate = f.as_positive(); }},
      {"federation.lr_schedule",
       [](auto& c, const Field& f) {
         c.lr_schedule = f.as_enum(parse_lr_schedule);
       }},
      {"federation.local_epochs",
       [](auto& c, const Field& f) { c.local_epochs = f.as_size(1); }},
      {"federation.broadcast_scope",
       [](auto& c, const Field& f) {
         c.broadcast_scope = f.as_enum(parse_broadcast_scope);
       }},
      {"federation.init_mode",
       [](auto& c, const Field& f) { c.init_mode = f.as_enum(parse_init_mode); }},
      {"federation.require_odd_participants",
       [](auto& c, const Field& f) { c.require_odd_participants = f.as_bool(); }},
      {"federation.warmup_rounds",
       [](auto& c, const Field& f) { c.warmup_rounds = f.as_size(); }},
      // [loss]
      {"loss.alpha1",
       [](auto& c, const Field& f) { c.alpha1 = f.as_nonnegative(); }},
      {"loss.alpha2",
       [](auto& c, const Field& f) { c.alpha2 = f.as_nonnegative(); }},
      {"loss.lambda",
       [](auto& c, const Field& f) { c.lambda = f.as_nonnegative(); }},
      {"loss.mu", [](auto& c, const Field& f) { c.mu = f.as_nonnegative(); }},
      {"loss.dcor_estimator",
       [](auto& c, const Field& f) {
         c.dcor_estimator = f.as_enum(parse_dcor_estimator);
       }},
      // [model]
      {"model.smashed_dim",
       [](auto& c, const Field& f) { c.smashed_dim = f.as_size(); }},
      {"model.encoder_hidden",
       [](auto& c, const Field& f) { c.encoder_hidden = f.as_size_list(); }},
      {"model.head_hidden",
       [](auto& c, const Field& f) { c.head_hidden = f.as_size_list(); }},
      {"model.hidden_activation",
       [](auto& c, const Field& f) {
         c.hidden_activation = f.as_enum(parse_activation);
       }},
      {"model.ensemble_mode",
       [](auto& c, const Field& f) {
         c.ensemble_mode = f.as_enum(parse_ensemble_mode);
       }},
      // [data]
      {"data.source",
       [](auto& c, const Field& f) {
         if (f.value == "blobs") {
           c.data.source = DataSource::kBlobs;
         } else if (f.value == "idx") {
           c.data.source = DataSource::kIdx;
         } else {
           f.fail("expected blobs or idx, got '" + f.value + "'");
         }
       }},
      {"data.classes",
       [](auto& c, const Field& f) {
         c.data.classes = static_cast<int>(f.as_size(2));
       }},
      {"data.per_class",
       [](auto& c, const Field& f) { c.data.per_class = f.as_size(1); }},
      {"data.dim", [](auto& c, const Field& f) { c.data.dim = f.as_size(1); }},
      {"data.spread",
       [](auto& c, const Field& f) { c.data.spread = f.as_nonnegative(); }},
      {"data.test_fraction",
       [](auto& c, const Field& f) {
         const double v = f.as_double();
         if (!(v > 0.0 && v < 1.0)) f.fail("must be in (0, 1), got " + f.value);
         c.data.test_fraction = v;
       }},
      {"data.images", [](auto& c, const Field& f) { c.data.images = f.value; }},
      {"data.labels", [](auto& c, const Field& f) { c.data.labels = f.value; }},
      {"data.test_images",
       [](auto& c, const Field& f) { c.data.test_images = f.value; }},
      {"data.test_labels",
       [](auto& c, const Field& f) { c.data.test_labels = f.value; }},
      {"data.limit", [](auto& c, const Field& f) { c.data.limit = f.as_size(); }},
      {"data.test_limit",
       [](auto& c, const Field& f) { c.data.test_limit = f.as_size(); }},
      {"data.partition",
       [](auto& c, const Field& f) {
         if (f.value == "iid") {
           c.data.partition = PartitionScheme::kIid;
         } else if (f.value == "shard") {
           c.data.partition = PartitionScheme::kShard;
         } else {
           f.fail("expected iid or shard, got '" + f.value + "'");
         }
       }},
      {"data.shards_per_client",
       [](auto& c, const Field& f) { c.data.shards_per_client = f.as_size(1); }},
      {"data.shard_size",
       [](auto& c, const Field& f) { c.data.shard_size = f.as_size(); }},
      // [privacy]
      {"privacy.alphas",
       [](auto& c, const Field& f) {
         c.privacy.alphas = f.as_double_list();
         if (c.privacy.alphas.empty()) f.fail("needs at least one value");
       }},
      {"privacy.seeds",
       [](auto& c, const Field& f) { c.privacy.seeds = f.as_size(1); }},
      {"privacy.decoder_width",
       [](auto& c, const Field& f) { c.privacy.decoder_width = f.as_size(); }},
      {"privacy.decoder_epochs",
       [](auto& c, const Field& f) { c.privacy.decoder_epochs = f.as_size(1); }},
      {"privacy.decoder_lr",
       [](auto& c, const Field& f) { c.privacy.decoder_lr = f.as_positive(); }},
      {"privacy.decoder_batch",
       [](auto& c, const Field& f) { c.privacy.decoder_batch = f.as_size(1); }},
      {"privacy.attack_fraction",
       [](auto& c, const Field& f) {
         const double v = f.as_double();
         if (!(v > 0.0 && v < 1.0)) f.fail("must be in (0, 1), got " + f.value);
         c.privacy.attack_fraction = v;
       }},
      {"privacy.grid_images",
       [](auto& c, const Field& f) { c.privacy.grid_images = f.as_size(); }},
      {"privacy.baseline_learning_rate",
       [](auto& c, const Field& f) {
         c.privacy.baseline_learning_rate = f.as_positive();
       }},
      // [output]
      {"output.dir",
       [](auto& c, const Field& f) {
         if (f.value.empty()) f.fail("must not be empty");
         c.output_dir = f.value;
       }},
      {"output.wall_time",
       [](auto& c, const Field& f) { c.wall_time = f.as_bool(); }},
      {"output.probe_dcor",
       [](auto& c, const Field& f) { c.probe_dcor = f.as_bool(); }},
      {"output.probe_batch",
       [](auto& c, const Field& f) { c.probe_batch = f.as_size(2); }},
  };
  return table;
}

const std::set<std::string>& required_keys() {
  static const std::set<std::string> keys = {"run.algorithm"};
  return keys;
}

}  // namespace

void FederationConfig::validate() const {
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ConfigError("federation.participation: must be in (0, 1]");
  }
  if (batch_size < 1) throw ConfigError("federation.batch_size: must be >= 1");
  if (!(learning_rate > 0.0)) {
    throw ConfigError("federation.learning_rate: must be > 0");
  }
  if (alpha1 < 0.0 || alpha2 < 0.0 || lambda < 0.0 || mu < 0.0) {
    throw ConfigError("loss: alpha1, alpha2, lambda and mu must be >= 0");
  }
  if (clients < 1) throw ConfigError("federation.clients: must be >= 1");
  if (data.source == DataSource::kIdx &&
      (data.images.empty() || data.labels.empty())) {
    throw ConfigError("data.images and data.labels are required for idx data");
  }
  if (data.source == DataSource::kBlobs && data.dim < 2) {
    throw ConfigError("data.dim: must be >= 2");
  }
}

ProtocolOptions FederationConfig::protocol() const {
  ProtocolOptions o;
  o.algorithm = algorithm;
  o.participation = participation;
  o.batch_size = batch_size;
  o.learning_rate = learning_rate;
  o.lr_schedule = lr_schedule;
  o.local_epochs = local_epochs;
  o.loss = {alpha1, alpha2, lambda, dcor_estimator};
  o.mu = mu;
  o.scope = broadcast_scope;
  o.init_mode = init_mode;
  o.require_odd_participants = require_odd_participants;
  o.warmup_rounds = warmup_rounds;
  o.ensemble_mode = ensemble_mode;
  o.seed = seed;
  return o;
}

ModelShape FederationConfig::model_shape(std::size_t input_dim,
                                         std::size_t classes) const {
  ModelShape s;
  s.input_dim = input_dim;
  s.encoder_hidden = encoder_hidden;
  s.smashed_dim = smashed_dim == 0 ? ModelShape::default_smashed_dim(input_dim)
                                   : smashed_dim;
  s.head_hidden = head_hidden;
  s.classes = classes;
  s.hidden_activation = hidden_activation;
  s.validate();
  return s;
}

FederationConfig parse_config(const std::string& text) {
  FederationConfig cfg;
  std::map<std::string, int> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw
                                                            : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      static const std::set<std::string> kSections = {
          "run", "federation", "loss", "model", "data", "privacy", "output"};
      if (!kSections.contains(section)) {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + "expected 'key = value'");
    }
    if (section.empty()) {
      throw ConfigError(where + "key outside of any [section]");
    }
    const std::string key = section + "." + trim(line.substr(0, eq));
    const Field field{key, trim(line.substr(eq + 1)), line_no};
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key " + key);
    if (const auto prev = seen.find(key); prev != seen.end()) {
      throw ConfigError(where + "duplicate key " + key + " (first set on line " +
                        std::to_string(prev->second) + ")");
    }
    seen[key] = line_no;
    it->second(cfg, field);
  }
  for (const auto& key : required_keys()) {
    if (!seen.contains(key)) throw ConfigError("missing required key " + key);
  }
  cfg.validate();
  return cfg;
}

FederationConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace fedsplit
