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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "fedsplit/config.h"
#include "fedsplit/data.h"
#include "fedsplit/errors.h"
#include "fedsplit/privacy.h"
#include "support.h"

using namespace fedsplit;
using fedsplit::testing::temp_path;

namespace {

double mean_feature_variance(const Tensor& x) {
  double total = 0.0;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) mean += x(r, c);
    mean /= static_cast<double>(x.rows());
    double var = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      var += (x(r, c) - mean) * (x(r, c) - mean);
    }
    total += var / static_cast<double>(x.rows());
  }
  return total / static_cast<double>(x.cols());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

FederationConfig small_privacy_config() {
  FederationConfig cfg;
  cfg.clients = 4;
  cfg.rounds = 4;
  cfg.smashed_dim = 2;
  cfg.alpha1 = 0.9;
  cfg.data.classes = 3;
  cfg.data.per_class = 60;
  cfg.data.dim = 8;
  cfg.data.partition = PartitionScheme::kIid;
  cfg.probe_batch = 30;
  cfg.privacy.alphas = {0.1, 0.9};
  cfg.privacy.seeds = 1;
  cfg.privacy.decoder_epochs = 5;
  return cfg;
}

}  // namespace

TEST_CASE("identity encoder is fully invertible") {
  const TrainTest tt = train_test_split(synth_blobs(4, 250, 8, 0.5, 3), 0.3, 4);
  DecoderConfig c;
  c.epochs = 200;
  c.learning_rate = 0.1;
  c.seed = 1;
  const ReconstructionReport r = reconstruction_attack(
      [](const Tensor& x) { return x; }, tt.train.features, tt.test.features, c);
  CHECK_FALSE(r.failed);
  CHECK(r.mse >= 0.0);
  CHECK(r.mse <= 1e-3);
  CHECK(r.originals.rows() == 8);
  CHECK(r.reconstructions.shape() == r.originals.shape());
}

TEST_CASE("constant encoder leaves only the mean") {
  const TrainTest tt = train_test_split(synth_blobs(4, 250, 8, 0.5, 5), 0.3, 6);
  DecoderConfig c;
  c.epochs = 60;
  c.seed = 2;
  const ReconstructionReport r = reconstruction_attack(
      [](const Tensor& x) { return Tensor({x.rows(), 2}); }, tt.train.features,
      tt.test.features, c);
  const double variance = mean_feature_variance(tt.test.features);
  CHECK(std::abs(r.mse - variance) <= 0.1 * variance);
}

TEST_CASE("divergent decoder is flagged, not thrown") {
  const TrainTest tt = train_test_split(synth_blobs(2, 50, 4, 0.5, 7), 0.3, 8);
  DecoderConfig c;
  c.epochs = 50;
  c.learning_rate = 1e6;
  ReconstructionReport r;
  CHECK_NOTHROW(r = reconstruction_attack([](const Tensor& x) { return x; },
                                          tt.train.features, tt.test.features, c));
  CHECK(r.failed);
}

TEST_CASE("spearman rank correlation") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> up{2, 4, 8, 16, 32};
  const std::vector<double> down{5, 3, 2, 0, -7};
  CHECK(spearman_rank_correlation(a, up) == doctest::Approx(1.0));
  CHECK(spearman_rank_correlation(a, down) == doctest::Approx(-1.0));
  // Reference values from scipy.stats.spearmanr.
  const std::vector<double> x6{1, 2, 3, 4, 5, 6};
  const std::vector<double> y6{5, 6, 7, 8, 7, 1};
  CHECK(spearman_rank_correlation(x6, y6) ==
        doctest::Approx(0.028988551782622423).epsilon(1e-12));
  const std::vector<double> alphas{0.1, 0.3, 0.5, 0.7, 0.9};
  const std::vector<double> mse{2.0, 1.9, 2.5, 2.6, 3.1};
  CHECK(spearman_rank_correlation(alphas, mse) == doctest::Approx(0.9).epsilon(1e-12));
  const std::vector<double> flat{1, 1, 1, 1, 1};
  CHECK(spearman_rank_correlation(a, flat) == 0.0);
  CHECK_THROWS_AS(spearman_rank_correlation(a, x6), UsageError);
  const std::vector<double> single{1};
  CHECK_THROWS_AS(spearman_rank_correlation(single, single), UsageError);
}

TEST_CASE("portable graymap export") {
  const std::string path = temp_path("tiny.pgm");
  const std::vector<double> px{-1.0, 0.0, 1.0, 5.0, -3.0, 0.5};
  write_pgm(path, px, 3, 2, -1.0, 1.0);
  const std::string bytes = slurp(path);
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  CHECK(bytes.substr(0, header.size()) == header);
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + header.size());
  CHECK(data[0] == 0);
  CHECK(data[1] == 128);
  CHECK(data[2] == 255);
  CHECK(data[3] == 255);
  CHECK(data[4] == 0);
  CHECK(data[5] == 191);
  CHECK_THROWS_AS(write_pgm(path, px, 4, 2, 0, 1), UsageError);
  CHECK_THROWS_AS(write_pgm("/proc/nope/x.pgm", px, 3, 2, 0, 1), IoError);

  ReconstructionReport r;
  r.originals = Tensor({3, 16});
  r.reconstructions = Tensor({3, 16});
  const std::string dir = temp_path("recon_export");
  std::filesystem::remove_all(dir);
  export_reconstructions(r, dir);
  std::ifstream index(dir + "/index.csv");
  std::string line;
  std::getline(index, line);
  CHECK(line == "row,kind,file");
  std::size_t rows = 0;
  while (std::getline(index, line)) {
    ++rows;
    const std::string file = line.substr(line.rfind(',') + 1);
    CHECK(std::filesystem::exists(dir + "/" + file));
    CHECK(slurp(dir + "/" + file).substr(0, 9) == "P5\n4 4\n25");
  }
  CHECK(rows == 6);
}

TEST_CASE("leakage traces stay in range and repeat under the seed") {
  const FederationConfig cfg = small_privacy_config();
  const std::vector<Algorithm> algos{Algorithm::kTwoStage, Algorithm::kFedAvg};
  const LeakageTrace a = track_leakage(cfg, algos, 3);
  const LeakageTrace b = track_leakage(cfg, algos, 3);
  CHECK(a.batch_size == 30);
  CHECK(a.seed == 3);
  REQUIRE(a.series.size() == 2);
  for (const LeakageSeries& s : a.series) {
    CHECK(s.dcor.size() == cfg.rounds + 1);
    for (double d : s.dcor) {
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
    }
  }
  const std::string csv = format_leakage_csv(a);
  CHECK(csv == format_leakage_csv(b));
  CHECK(csv.rfind("round,algorithm,dcor\n", 0) == 0);
  CHECK(csv.find("\n0,two_stage,") != std::string::npos);
  CHECK(csv.find("\n4,fedavg,") != std::string::npos);
}

TEST_CASE("reconstruction sweep shape") {
  const FederationConfig cfg = small_privacy_config();
  const SweepResult r = reconstruction_sweep(cfg);
  REQUIRE(r.points.size() == 2);
  CHECK(r.points[0].alpha1 == 0.1);
  CHECK(r.points[1].alpha1 == 0.9);
  for (const SweepPoint& p : r.points) {
    CHECK(p.report.mse >= 0.0);
    CHECK(p.report.alpha1 == p.alpha1);
  }
  CHECK(std::abs(r.spearman) <= 1.0);
  const SweepResult again = reconstruction_sweep(cfg);
  CHECK(again.points[1].report.mse == r.points[1].report.mse);
}
