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

#include "fedsplit/dcor.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedsplit/errors.h"
#include "fedsplit/network.h"

namespace fedsplit {

std::string to_string(DcorEstimator e) {
  return e == DcorEstimator::kTrace ? "trace" : "standard";
}

DcorEstimator parse_dcor_estimator(const std::string& name) {
  if (name == "standard") return DcorEstimator::kStandard;
  if (name == "trace") return DcorEstimator::kTrace;
  throw ConfigError("unknown dcor estimator '" + name + "'");
}

namespace {

void check_pair(const Tensor& x, const Tensor& z) {
  if (x.rank() != 2 || z.rank() != 2) {
    throw ConfigError("dcor expects sample matrices, got " + x.shape_string() +
                      " and " + z.shape_string());
  }
  if (x.rows() != z.rows()) {
    throw ConfigError("dcor samples are not paired: " +
                      std::to_string(x.rows()) + " vs " +
                      std::to_string(z.rows()) + " rows");
  }
  if (x.rows() < 2) throw UsageError("dcor needs at least 2 samples");
}

// Row-major n x n matrix.
struct Square {
  std::size_t n = 0;
  std::vector<double> v;

  double& at(std::size_t i, std::size_t j) { return v[i * n + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * n + j]; }
};

Square pairwise_distances(const Tensor& s) {
  const std::size_t n = s.rows();
  Square d{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto ri = s.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto rj = s.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < ri.size(); ++k) {
        const double diff = ri[k] - rj[k];
        acc += diff * diff;
      }
      d.at(i, j) = d.at(j, i) = std::sqrt(acc);
    }
  }
  return d;
}

// a_ij - rowmean_i - colmean_j + grandmean; distance matrices are symmetric
// so row and column means coincide.
Square double_center(const Square& d) {
  const std::size_t n = d.n;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += d.at(i, j);
    mean[i] = acc * inv_n;
    grand += acc;
  }
  grand *= inv_n * inv_n;
  Square c{n, std::vector<double>(n * n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c.at(i, j) = d.at(i, j) - mean[i] - mean[j] + grand;
    }
  }
  return c;
}

double mean_product(const Square& a, const Square& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) acc += a.v[i] * b.v[i];
  return acc / static_cast<double>(a.v.size());
}

bool all_zero(const Square& s) {
  return std::all_of(s.v.begin(), s.v.end(), [](double v) { return v == 0.0; });
}

void normalize(DcorEstimate& e) {
  e.dcov2_xz = std::max(e.dcov2_xz, 0.0);
  if (e.degenerate || e.dcov2_xx <= 0.0 || e.dcov2_zz <= 0.0) {
    e.dcor = 0.0;
    e.degenerate = true;
    return;
  }
  e.dcor = std::min(
      1.0, std::sqrt(e.dcov2_xz / std::sqrt(e.dcov2_xx * e.dcov2_zz)));
}

Tensor center_columns(const Tensor& s) {
  Tensor c = s;
  const std::size_t n = s.rows();
  const std::size_t p = s.cols();
  for (std::size_t k = 0; k < p; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += s(i, k);
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) c(i, k) -= mean;
  }
  return c;
}

// a^T b for column-centered samples, (p, q).
Tensor cross_products(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows();
  const std::size_t p = a.cols();
  const std::size_t q = b.cols();
  Tensor m({p, q});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < p; ++r) {
      const double ar = a(i, r);
      for (std::size_t c = 0; c < q; ++c) m(r, c) += ar * b(i, c);
    }
  }
  return m;
}

double squared_norm(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += v * v;
  return acc;
}

bool constant_rows(const Tensor& s) {
  for (std::size_t i = 1; i < s.rows(); ++i) {
    if (!std::equal(s.row(i).begin(), s.row(i).end(), s.row(0).begin())) {
      return false;
    }
  }
  return true;
}

DcorLoss floor_loss(const Tensor& z, DcorEstimate estimate) {
  return {std::log(kLogDcorFloor), Tensor(z.shape()), estimate};
}

DcorLoss standard_log_dcor(const Tensor& x, const Tensor& z) {
  const std::size_t n = x.rows();
  const Square a = double_center(pairwise_distances(x));
  const Square bdist = pairwise_distances(z);
  const Square b = double_center(bdist);

  DcorEstimate e;
  e.dcov2_xz = mean_product(a, b);
  e.dcov2_xx = mean_product(a, a);
  e.dcov2_zz = mean_product(b, b);
  e.degenerate = all_zero(a) || all_zero(bdist);
  normalize(e);
  if (e.degenerate || e.dcor < kLogDcorFloor) return floor_loss(z, e);

  // loss = 0.5 ln dcov2_xz - 0.25 ln dcov2_xx - 0.25 ln dcov2_zz. With the
  // centering projector H, sum(A o HbH) = sum(A o b), so the partials w.r.t.
  // the raw distance b_ij are A_ij / n^2 and 2 B_ij / n^2.
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  const double wx = 0.5 / (n2 * e.dcov2_xz);
  const double wz = 0.5 / (n2 * e.dcov2_zz);
  const std::size_t q = z.cols();
  Tensor grad(z.shape());
  for (std::size_t i = 0; i < n; ++i) {
    auto gi = grad.row(i);
    const auto zi = z.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double dist = bdist.at(i, j);
      if (i == j || dist == 0.0) continue;
      const double g = wx * a.at(i, j) - wz * b.at(i, j);
      // b_ij and b_ji both depend on z_i.
      const double scale = 2.0 * g / dist;
      const auto zj = z.row(j);
      for (std::size_t k = 0; k < q; ++k) gi[k] += scale * (zi[k] - zj[k]);
    }
  }
  return {std::log(e.dcor), std::move(grad), e};
}

DcorLoss trace_log_dcor(const Tensor& x, const Tensor& z) {
  const double n2 =
      static_cast<double>(x.rows()) * static_cast<double>(x.rows());
  const Tensor xc = center_columns(x);
  const Tensor zc = center_columns(z);
  const Tensor xz = cross_products(xc, zc);
  const Tensor zz = cross_products(zc, zc);

  DcorEstimate e;
  e.dcov2_xz = squared_norm(xz) / n2;
  e.dcov2_xx = squared_norm(cross_products(xc, xc)) / n2;
  e.dcov2_zz = squared_norm(zz) / n2;
  e.degenerate = constant_rows(x) || constant_rows(z);
  normalize(e);
  if (e.degenerate || e.dcor < kLogDcorFloor) return floor_loss(z, e);

  // d/dZc of ||Xc^T Zc||^2 is 2 Xc (Xc^T Zc); of ||Zc^T Zc||^2 is
  // 4 Zc (Zc^T Zc). Both are already column-centered, so the centering
  // projector passes them through unchanged.
  const std::size_t n = z.rows();
  const std::size_t p = x.cols();
  const std::size_t q = z.cols();
  const double cx = 1.0 / (n2 * e.dcov2_xz);
  const double cz = 1.0 / (n2 * e.dcov2_zz);
  Tensor grad(z.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < q; ++c) {
      double from_x = 0.0;
      for (std::size_t r = 0; r < p; ++r) from_x += xc(i, r) * xz(r, c);
      double from_z = 0.0;
      for (std::size_t r = 0; r < q; ++r) from_z += zc(i, r) * zz(r, c);
      grad(i, c) = cx * from_x - cz * from_z;
    }
  }
  return {std::log(e.dcor), std::move(grad), e};
}

}  // namespace

DcorEstimate distance_correlation(const Tensor& x, const Tensor& z) {
  check_pair(x, z);
  const Square a = double_center(pairwise_distances(x));
  const Square bdist = pairwise_distances(z);
  const Square b = double_center(bdist);
  DcorEstimate e;
  e.dcov2_xz = mean_product(a, b);
  e.dcov2_xx = mean_product(a, a);
  e.dcov2_zz = mean_product(b, b);
  e.degenerate = all_zero(a) || all_zero(bdist);
  normalize(e);
  return e;
}

double trace_dcov_surrogate(const Tensor& x, const Tensor& z) {
  check_pair(x, z);
  const double n = static_cast<double>(x.rows());
  return squared_norm(cross_products(center_columns(x), center_columns(z))) /
         (n * n);
}

DcorEstimate trace_correlation(const Tensor& x, const Tensor& z) {
  check_pair(x, z);
  const double n2 =
      static_cast<double>(x.rows()) * static_cast<double>(x.rows());
  const Tensor xc = center_columns(x);
  const Tensor zc = center_columns(z);
  DcorEstimate e;
  e.dcov2_xz = squared_norm(cross_products(xc, zc)) / n2;
  e.dcov2_xx = squared_norm(cross_products(xc, xc)) / n2;
  e.dcov2_zz = squared_norm(cross_products(zc, zc)) / n2;
  e.degenerate = constant_rows(x) || constant_rows(z);
  normalize(e);
  return e;
}

DcorEstimate estimate_dcor(const Tensor& x, const Tensor& z,
                           DcorEstimator estimator) {
  return estimator == DcorEstimator::kTrace ? trace_correlation(x, z)
                                            : distance_correlation(x, z);
}

DcorLoss log_dcor_loss(const Tensor& x, const Tensor& z,
                       DcorEstimator estimator) {
  check_pair(x, z);
  DcorLoss result = estimator == DcorEstimator::kTrace ? trace_log_dcor(x, z)
                                                       : standard_log_dcor(x, z);
  result.grad_z.require_finite("log-dcor gradient");
  return result;
}

LocalLoss local_loss(const Tensor& x, const Tensor& z, const Tensor& aux_logits,
                     std::span<const int> labels, double alpha1, double alpha2,
                     DcorEstimator estimator) {
  if (alpha1 < 0.0 || alpha2 < 0.0) {
    throw ConfigError("local loss weights must be non-negative");
  }
  const DcorLoss privacy = log_dcor_loss(x, z, estimator);
  LossAndGrad ce = softmax_cross_entropy(aux_logits, labels);

  LocalLoss out;
  out.privacy = privacy.loss;
  out.aux_ce = ce.loss;
  out.total = alpha1 * privacy.loss + alpha2 * ce.loss;
  out.degenerate = privacy.estimate.degenerate;
  out.grad_z = privacy.grad_z;
  for (double& g : out.grad_z.data()) g *= alpha1;
  out.grad_aux_logits = std::move(ce.grad);
  for (double& g : out.grad_aux_logits.data()) g *= alpha2;
  return out;
}

}  // namespace fedsplit
