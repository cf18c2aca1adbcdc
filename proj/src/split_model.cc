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

#include "fedsplit/split_model.h"

#include "fedsplit/bytes.h"
#include "fedsplit/errors.h"
#include "fedsplit/rng.h"

namespace fedsplit {

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x544E5346;  // "FSNT"
constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::size_t> concat_dims(std::size_t first,
                                     const std::vector<std::size_t>& middle,
                                     std::size_t last) {
  std::vector<std::size_t> dims{first};
  dims.insert(dims.end(), middle.begin(), middle.end());
  dims.push_back(last);
  return dims;
}

void add_scaled(Tensor& acc, const Tensor& term, double scale) {
  auto a = acc.data();
  auto t = term.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * t[i];
}

}  // namespace

std::size_t ModelShape::default_smashed_dim(std::size_t input_dim) {
  return (input_dim + 7) / 8;
}

std::vector<LayerSpec> ModelShape::encoder_specs() const {
  const auto dims = concat_dims(input_dim, encoder_hidden, smashed_dim);
  return chain_specs(dims, hidden_activation, cut_activation);
}

std::vector<LayerSpec> ModelShape::aux_specs() const {
  const std::vector<std::size_t> dims{smashed_dim, classes};
  return chain_specs(dims, hidden_activation, Activation::kIdentity);
}

std::vector<LayerSpec> ModelShape::head_specs() const {
  const auto dims = concat_dims(smashed_dim, head_hidden, classes);
  return chain_specs(dims, hidden_activation, Activation::kIdentity);
}

std::vector<LayerSpec> ModelShape::full_specs() const {
  auto specs = encoder_specs();
  const auto head = head_specs();
  specs.insert(specs.end(), head.begin(), head.end());
  return specs;
}

void ModelShape::validate() const {
  if (input_dim == 0 || smashed_dim == 0 || classes < 2) {
    throw ConfigError("model needs positive input/smashed dims and >= 2 classes");
  }
  if (smashed_dim >= input_dim) {
    throw ConfigError("smashed_dim (" + std::to_string(smashed_dim) +
                      ") must be smaller than the input dim (" +
                      std::to_string(input_dim) + ")");
  }
  for (std::size_t h : encoder_hidden) {
    if (h == 0) throw ConfigError("encoder hidden width must be positive");
  }
  for (std::size_t h : head_hidden) {
    if (h == 0) throw ConfigError("head hidden width must be positive");
  }
}

LocalModel make_local_model(const ModelShape& shape, std::uint64_t seed) {
  const auto enc = shape.encoder_specs();
  const auto aux = shape.aux_specs();
  return {Network::random(enc, derive_seed(seed, 1)),
          Network::random(aux, derive_seed(seed, 2))};
}

GlobalHead make_global_head(const ModelShape& shape, std::uint64_t seed) {
  const auto specs = shape.head_specs();
  return {Network::random(specs, derive_seed(seed, 3)), 0};
}

Network make_full_model(const ModelShape& shape, std::uint64_t seed) {
  const auto specs = shape.full_specs();
  return Network::random(specs, derive_seed(seed, 4));
}

LocalForward local_forward(const LocalModel& lm, const Tensor& x,
                           std::size_t client) {
  Tensor z = predict(lm.encoder, x);
  Tensor aux = predict(lm.aux_head, z);
  return {{std::move(z), client}, std::move(aux)};
}

TwoStageGradients two_stage_backward(const LocalModel& lm, const GlobalHead& gh,
                                     const Tensor& x,
                                     std::span<const int> labels,
                                     const LossWeights& w) {
  if (w.alpha1 < 0.0 || w.alpha2 < 0.0 || w.lambda < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  const ForwardResult enc = forward(lm.encoder, x);
  const Tensor& z = enc.output;
  const ForwardResult aux = forward(lm.aux_head, z);
  const ForwardResult glob = forward(gh.net, z);

  const LocalLoss local =
      local_loss(x, z, aux.output, labels, w.alpha1, w.alpha2, w.estimator);
  const LossAndGrad global_ce = softmax_cross_entropy(glob.output, labels);

  BackwardResult aux_back = backward(lm.aux_head, aux.cache,
                                     local.grad_aux_logits);
  BackwardResult global_back = backward(gh.net, glob.cache, global_ce.grad);

  Tensor grad_z = local.grad_z;
  add_scaled(grad_z, aux_back.input_grad, 1.0);
  add_scaled(grad_z, global_back.input_grad, w.lambda);
  BackwardResult enc_back = backward(lm.encoder, enc.cache, grad_z);

  TwoStageGradients out;
  out.encoder = std::move(enc_back.param_grads);
  out.aux = std::move(aux_back.param_grads);
  out.global = std::move(global_back.param_grads);
  out.loss.l1 = w.alpha1 * local.privacy;
  out.loss.l2 = w.alpha2 * local.aux_ce;
  out.loss.lg = w.lambda * global_ce.loss;
  out.loss.total = out.loss.l1 + out.loss.l2 + out.loss.lg;
  out.degenerate = local.degenerate;
  return out;
}

std::string to_string(EnsembleMode m) {
  return m == EnsembleMode::kAuxHeads ? "aux_heads" : "global_head";
}

EnsembleMode parse_ensemble_mode(const std::string& name) {
  if (name == "global_head") return EnsembleMode::kGlobalHead;
  if (name == "aux_heads") return EnsembleMode::kAuxHeads;
  throw ConfigError("unknown ensemble mode '" + name + "'");
}

Tensor ensemble_logits(const Tensor& new_x, std::span<const LocalModel> locals,
                       const GlobalHead& gh, EnsembleMode mode) {
  if (locals.empty()) throw UsageError("ensemble needs at least one model");
  Tensor mean;
  for (const auto& lm : locals) {
    const Tensor z = predict(lm.encoder, new_x);
    const Tensor logits = mode == EnsembleMode::kAuxHeads
                              ? predict(lm.aux_head, z)
                              : predict(gh.net, z);
    if (mean.empty()) {
      mean = Tensor(logits.shape());
    }
    add_scaled(mean, logits, 1.0);
  }
  const double inv = 1.0 / static_cast<double>(locals.size());
  for (double& v : mean.data()) v *= inv;
  return mean;
}

std::vector<int> ensemble_infer(const Tensor& new_x,
                                std::span<const LocalModel> locals,
                                const GlobalHead& gh, EnsembleMode mode) {
  return argmax_rows(ensemble_logits(new_x, locals, gh, mode));
}

std::vector<std::uint8_t> encode_checkpoint(const Network& net) {
  ByteWriter w;
  w.u32_le(kCheckpointMagic);
  w.u32_le(kCheckpointVersion);
  w.u32_le(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    w.u32_le(static_cast<std::uint32_t>(l.in()));
    w.u32_le(static_cast<std::uint32_t>(l.out()));
    w.u32_le(static_cast<std::uint32_t>(l.activation));
  }
  const Tensor flat = flatten_params(net);
  for (double v : flat.data()) w.f64_le(v);
  return w.take();
}

Network decode_checkpoint(std::span<const std::uint8_t> bytes,
                          std::size_t& offset) {
  ByteReader r(bytes, offset);
  const std::size_t magic_at = r.offset();
  if (r.u32_le("checkpoint magic") != kCheckpointMagic) {
    throw IngestionError("bad checkpoint magic", magic_at);
  }
  const std::size_t version_at = r.offset();
  if (r.u32_le("checkpoint version") != kCheckpointVersion) {
    throw IngestionError("unsupported checkpoint version", version_at);
  }
  const std::uint32_t layer_count = r.u32_le("layer count");
  std::vector<LayerSpec> specs;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec s;
    s.in = r.u32_le("layer in");
    s.out = r.u32_le("layer out");
    const std::size_t act_at = r.offset();
    const std::uint32_t act = r.u32_le("layer activation");
    if (act > static_cast<std::uint32_t>(Activation::kTanh)) {
      throw IngestionError("bad activation code", act_at);
    }
    s.activation = static_cast<Activation>(act);
    specs.push_back(s);
  }
  Network net;
  try {
    net = Network::random(specs, 0);
  } catch (const ConfigError& e) {
    throw IngestionError(std::string("bad layer dims: ") + e.what(),
                         r.offset());
  }
  std::vector<double> flat(net.parameter_count());
  for (double& v : flat) v = r.f64_le("parameters");
  unflatten_params(net, Tensor::vector(std::move(flat)));
  offset = r.offset();
  return net;
}

void save_split_checkpoint(const std::string& path, const LocalModel& lm,
                           const GlobalHead& gh) {
  ByteWriter w;
  w.append(encode_checkpoint(lm.encoder));
  w.append(encode_checkpoint(lm.aux_head));
  w.append(encode_checkpoint(gh.net));
  write_file_bytes(path, w.bytes());
}

void load_split_checkpoint(const std::string& path, LocalModel& lm,
                           GlobalHead& gh) {
  const auto bytes = read_file_bytes(path);
  std::size_t offset = 0;
  LocalModel loaded;
  loaded.encoder = decode_checkpoint(bytes, offset);
  loaded.aux_head = decode_checkpoint(bytes, offset);
  Network head = decode_checkpoint(bytes, offset);
  if (offset != bytes.size()) {
    throw IngestionError("trailing bytes after checkpoint", offset);
  }
  lm = std::move(loaded);
  gh.net = std::move(head);
}

}  // namespace fedsplit
