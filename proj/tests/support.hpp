// SPDX-License-Identifier: Apache-2.0
//
// Helpers shared by the unit tests and the acceptance runner.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tade/data.hpp"
#include "tade/model.hpp"
#include "tade/numkit.hpp"
#include "tade/rng.hpp"
#include "tade/ttaggr.hpp"

namespace tade::testing {

// Agreement of an analytic and a finite-difference gradient: each coordinate
// must satisfy |a - n| <= max(rel * max(|a|, |n|), floor). Reports the worst
// ratio of error to allowance, so <= 1 passes.
inline double grad_mismatch(std::span<const double> analytic, std::span<const double> numeric,
                            double rel = 1e-6, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double allow = std::max(rel * std::max(std::abs(a), std::abs(n)), floor);
    worst = std::max(worst, std::abs(a - n) / allow);
  }
  return analytic.size() == numeric.size() ? worst : INFINITY;
}

inline num::Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  num::Matrix m(r, c);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.below(classes));
  return y;
}

// Every parameter, biases included, drawn from N(0, scale^2).
inline void randomize_params(model::ExpertModel& m, Rng& rng, double scale = 0.5) {
  for (auto block : m.params.blocks())
    for (double& v : block) v = scale * rng.normal();
}

// Prior from random positive counts.
inline data::ClassPrior random_prior(std::size_t classes, Rng& rng) {
  std::vector<std::size_t> counts(classes);
  for (auto& c : counts) c = 1 + rng.below(500);
  return data::ClassPrior::from_counts(counts);
}

inline data::ClassPrior uniform_prior(std::size_t classes) {
  return data::ClassPrior::from_counts(std::vector<std::size_t>(classes, 7));
}

// Three linear experts over well separated classes. Experts 0 and 1 are
// nearest-mean classifiers; expert 2 reads only the coordinates that carry no
// class signal, with large random weights, so its predictions are driven by
// view noise. Stability is highest with expert 2 switched off.
struct NoiseExpertScenario {
  model::ExpertModel model;
  num::Matrix features;
  aggr::AdaptConfig adapt;
};

inline NoiseExpertScenario make_noise_expert_scenario(std::uint64_t seed) {
  constexpr std::size_t kClasses = 4, kDim = 8;
  constexpr double kSeparation = 5.0;
  Rng rng(seed);
  NoiseExpertScenario s;
  s.model.arch = {kDim, {}, {}, 3, kClasses};
  auto init = rng.split(1);
  s.model = model::init_model(s.model.arch, init);

  const auto means = data::class_means(kClasses, kDim, kSeparation);
  for (std::size_t k = 0; k < 2; ++k) {
    auto& layer = s.model.params.heads[k].front();
    for (std::size_t c = 0; c < kClasses; ++c) {
      double sq = 0.0;
      for (std::size_t d = 0; d < kDim; ++d) {
        layer.weight(d, c) = means(c, d);
        sq += means(c, d) * means(c, d);
      }
      layer.bias[c] = -0.5 * sq;
    }
  }
  auto& noisy = s.model.params.heads[2].front();
  auto wrng = rng.split(2);
  for (std::size_t d = 0; d < kDim; ++d)
    for (std::size_t c = 0; c < kClasses; ++c)
      noisy.weight(d, c) = d < 2 ? 0.0 : 6.0 * wrng.normal();

  auto drng = rng.split(3);
  const auto profile = data::make_profile(kClasses, 100, 1.0, data::Direction::kUniform);
  s.features = data::gen_gaussian_mixture(profile, kDim, kSeparation, drng).features;

  s.adapt.epochs = 10;
  s.adapt.lr = 0.5;
  s.adapt.views = {1.0, 0.0, 0.0};
  return s;
}

// Directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng r(static_cast<std::uint64_t>(std::hash<std::string>{}(tag)) ^
          static_cast<std::uint64_t>(std::filesystem::file_time_type::clock::now()
                                         .time_since_epoch()
                                         .count()));
    path_ = std::filesystem::temp_directory_path() /
            ("tade_" + tag + "_" + std::to_string(r.next_u64() % 1000000007ull));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace tade::testing
