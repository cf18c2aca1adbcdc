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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedsplit/dcor.h"
#include "fedsplit/network.h"
#include "fedsplit/rng.h"
#include "fedsplit/split_model.h"
#include "fedsplit/tensor.h"

namespace fedsplit::testing {

inline Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng,
                            double scale = 1.0) {
  Tensor t({rows, cols});
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

/// Central difference of f at every coordinate of `at` (modified in place
/// and restored).
inline std::vector<double> finite_difference(
    const std::function<double(const Tensor&)>& f, Tensor at,
    double h = 1e-5) {
  std::vector<double> out(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double keep = at[i];
    at[i] = keep + h;
    const double up = f(at);
    at[i] = keep - h;
    const double down = f(at);
    at[i] = keep;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

/// Relative error, falling back to absolute error for tiny references.
inline double gradient_error(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  if (std::abs(numeric) < 1e-8) return diff;
  return diff / std::max(std::abs(numeric), std::abs(analytic));
}

inline double max_gradient_error(const Tensor& analytic,
                                 const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    worst = std::max(worst, gradient_error(analytic[i], numeric[i]));
  }
  return worst;
}

/// Per-coordinate count of +1 against -1 votes; ties go to +1.
inline std::vector<int> naive_vote(const std::vector<std::vector<int>>& signs) {
  std::vector<int> out(signs.front().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    int plus = 0;
    int minus = 0;
    for (const auto& s : signs) (s[i] > 0 ? plus : minus) += 1;
    out[i] = plus >= minus ? 1 : -1;
  }
  return out;
}

/// Mean softmax cross-entropy by a direct log-sum-exp per row.
inline double naive_cross_entropy(const Tensor& logits,
                                  const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double m = logits(r, 0);
    for (std::size_t c = 1; c < logits.cols(); ++c) m = std::max(m, logits(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      s += std::exp(logits(r, c) - m);
    }
    total += m + std::log(s) - logits(r, static_cast<std::size_t>(y[r]));
  }
  return total / static_cast<double>(logits.rows());
}

/// Distance correlation by explicit double loops over pairwise distances,
/// written independently of the library.
struct NaiveDcor {
  double dcov2_xz = 0.0;
  double dcov2_xx = 0.0;
  double dcov2_zz = 0.0;
  double dcor = 0.0;
};

inline NaiveDcor naive_distance_correlation(const Tensor& x, const Tensor& z) {
  const std::size_t n = x.rows();
  auto distances = [n](const Tensor& m) {
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) {
          const double t = m(i, c) - m(j, c);
          s += t * t;
        }
        d[i][j] = std::sqrt(s);
      }
    }
    std::vector<double> row(n, 0.0), col(n, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        row[i] += d[i][j] / n;
        col[j] += d[i][j] / n;
        grand += d[i][j] / (n * n);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        d[i][j] = d[i][j] - row[i] - col[j] + grand;
      }
    }
    return d;
  };
  const auto a = distances(x);
  const auto b = distances(z);
  NaiveDcor out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.dcov2_xz += a[i][j] * b[i][j];
      out.dcov2_xx += a[i][j] * a[i][j];
      out.dcov2_zz += b[i][j] * b[i][j];
    }
  }
  const double nn = static_cast<double>(n * n);
  out.dcov2_xz /= nn;
  out.dcov2_xx /= nn;
  out.dcov2_zz /= nn;
  if (out.dcov2_xx > 0.0 && out.dcov2_zz > 0.0) {
    out.dcor = std::sqrt(std::max(out.dcov2_xz, 0.0) /
                         std::sqrt(out.dcov2_xx * out.dcov2_zz));
  }
  return out;
}

/// alpha1 ln dcor + alpha2 CE(aux) + lambda CE(global), evaluated with the
/// oracles above and plain forward passes.
inline double composite_loss(const LocalModel& lm, const GlobalHead& gh,
                             const Tensor& x, const std::vector<int>& y,
                             const LossWeights& w) {
  const Tensor z = predict(lm.encoder, x);
  const double dcor = naive_distance_correlation(x, z).dcor;
  return w.alpha1 * std::log(std::max(dcor, kLogDcorFloor)) +
         w.alpha2 * naive_cross_entropy(predict(lm.aux_head, z), y) +
         w.lambda * naive_cross_entropy(predict(gh.net, z), y);
}

inline std::string temp_path(const std::string& name) {
  return std::string(FEDSPLIT_TEST_TMP) + "/" + name;
}

}  // namespace fedsplit::testing
