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

#include <span>
#include <string>

#include "fedsplit/tensor.h"

namespace fedsplit {

/// Which dependence statistic backs the privacy loss.
///  - kStandard: doubly-centered pairwise-distance V-statistic.
///  - kTrace: Gram-matrix surrogate Tr(Xc Xc^T Zc Zc^T) / n^2 on
///    column-centered samples, normalized the same way.
enum class DcorEstimator { kStandard, kTrace };

std::string to_string(DcorEstimator e);
DcorEstimator parse_dcor_estimator(const std::string& name);

/// Floor inside the logarithm of the privacy loss.
inline constexpr double kLogDcorFloor = 1e-12;

struct DcorEstimate {
  double dcov2_xz = 0.0;
  double dcov2_xx = 0.0;
  double dcov2_zz = 0.0;
  /// sqrt(dcov2_xz / sqrt(dcov2_xx * dcov2_zz)); 0 when a self term is 0.
  double dcor = 0.0;
  /// Set when x or z is constant across samples.
  bool degenerate = false;
};

/// Biased (V-statistic) distance covariance and correlation between paired
/// samples x (n, p) and z (n, q). Throws UsageError for n < 2 and
/// ConfigError when row counts differ.
DcorEstimate distance_correlation(const Tensor& x, const Tensor& z);

/// Centers the columns of x and z, then returns Tr(Xc Xc^T Zc Zc^T) / n^2,
/// i.e. the squared Frobenius norm of Xc^T Zc over n^2.
double trace_dcov_surrogate(const Tensor& x, const Tensor& z);

/// The trace surrogate normalized like DcorEstimate (an RV-style
/// coefficient in [0, 1]).
DcorEstimate trace_correlation(const Tensor& x, const Tensor& z);

DcorEstimate estimate_dcor(const Tensor& x, const Tensor& z,
                           DcorEstimator estimator);

struct DcorLoss {
  /// ln(max(dcor, kLogDcorFloor)).
  double loss = 0.0;
  /// d loss / d z, shape of z. Coincident sample pairs contribute zero.
  Tensor grad_z;
  DcorEstimate estimate;
};

DcorLoss log_dcor_loss(const Tensor& x, const Tensor& z,
                       DcorEstimator estimator = DcorEstimator::kStandard);

/// alpha1 * ln DCOR(x, z) + alpha2 * CE(aux_logits, labels).
struct LocalLoss {
  double total = 0.0;
  /// Unweighted ln DCOR term.
  double privacy = 0.0;
  /// Unweighted auxiliary cross-entropy term.
  double aux_ce = 0.0;
  /// alpha1 * d privacy / d z.
  Tensor grad_z;
  /// alpha2 * d aux_ce / d aux_logits; backpropagate through the aux head for
  /// its parameter gradients and its contribution to d/dz.
  Tensor grad_aux_logits;
  bool degenerate = false;
};

/// Throws ConfigError for negative weights.
LocalLoss local_loss(const Tensor& x, const Tensor& z, const Tensor& aux_logits,
                     std::span<const int> labels, double alpha1, double alpha2,
                     DcorEstimator estimator = DcorEstimator::kStandard);

}  // namespace fedsplit
