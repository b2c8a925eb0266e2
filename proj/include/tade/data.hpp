// SPDX-License-Identifier: Apache-2.0
//
// Synthetic long-tailed data: class-count profiles, Gaussian-mixture
// generation, test splits with a chosen label shift, class priors and the
// stochastic two-view perturbation used at test time.
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tade/numkit.hpp"
#include "tade/rng.hpp"

namespace tade::data {

enum class Direction { kForward, kUniform, kBackward };

std::string to_string(Direction d);
/// Parses "forward" / "uniform" / "backward"; throws SchemaError otherwise.
Direction parse_direction(const std::string& s);

struct LongTailProfile {
  Direction direction = Direction::kUniform;
  double rho = 1.0;
  std::size_t max_count = 0;
  std::vector<std::size_t> counts;

  std::size_t class_count() const { return counts.size(); }
  std::size_t total() const;
  bool operator==(const LongTailProfile&) const = default;
};

/// Class j (0-based) of a forward profile holds round(N * rho^(-j/(C-1)))
/// samples, so class 0 is the head and n_0 / n_{C-1} = rho before rounding.
/// Backward flips the class order; uniform (or rho == 1) gives N everywhere.
/// Rounding is half-up and every count is clamped to at least 1.
LongTailProfile make_profile(std::size_t classes, std::size_t max_count, double rho,
                             Direction direction);

/// Labels are 0-based class indices.
struct Dataset {
  num::Matrix features;
  std::vector<int> labels;
  LongTailProfile profile;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  std::size_t class_count() const { return profile.class_count(); }
  bool operator==(const Dataset&) const = default;
};

/// Class means sit on a circle of radius `separation` in the first two
/// coordinates: mean_k = separation * (cos(2 pi k / C), sin(2 pi k / C), 0, ...).
num::Matrix class_means(std::size_t classes, std::size_t dim, double separation);

/// Unit-covariance Gaussian around each class mean, exactly profile.counts[k]
/// samples of class k, grouped by class in ascending order.
Dataset gen_gaussian_mixture(const LongTailProfile& profile, std::size_t dim, double separation,
                             Rng& rng);

/// Subsamples a balanced pool (N per class) without replacement down to
/// make_profile(C, N, rho, direction). Uniform returns the pool unchanged.
Dataset make_test_split(const Dataset& pool, double rho, Direction direction, Rng& rng);

struct ClassPrior {
  std::vector<double> pi;
  std::vector<double> pi_bar;

  static ClassPrior from_counts(const std::vector<std::size_t>& counts);
  bool operator==(const ClassPrior&) const = default;
};

/// pi_k = n_k / n and pi_bar = pi with the class order reversed.
ClassPrior empirical_prior(const Dataset& train);

struct ViewConfig {
  double noise_sigma = 0.0;
  double mask_prob = 0.0;
  double scale_jitter = 0.0;

  void validate() const;
  bool operator==(const ViewConfig&) const = default;
};

/// One stochastic view: x * (1 + u) + N(0, sigma^2) per coordinate, with
/// u ~ U(-scale_jitter, scale_jitter), then each coordinate zeroed with
/// probability mask_prob.
std::vector<double> gen_view(std::span<const double> x, const ViewConfig& cfg, Rng& rng);
std::pair<std::vector<double>, std::vector<double>> gen_views(std::span<const double> x,
                                                              const ViewConfig& cfg, Rng& rng);
/// Row-wise views of a batch; view 1 and view 2 of each row are drawn back to
/// back from the same stream.
std::pair<num::Matrix, num::Matrix> gen_views(const num::Matrix& x, const ViewConfig& cfg,
                                              Rng& rng);

struct ClassGroups {
  std::vector<std::size_t> many;
  std::vector<std::size_t> medium;
  std::vector<std::size_t> few;
};

/// many = {k : n_k > many_thresh}, few = {k : n_k < few_thresh}, rest medium.
ClassGroups class_groups(const LongTailProfile& profile, double many_thresh, double few_thresh);

/// Linear-interpolated percentile (q in [0, 100]) of the class counts.
double count_percentile(const LongTailProfile& profile, double q);

/// Thresholds at the 60th / 20th count percentiles, for profiles too small
/// for absolute image-count bounds.
ClassGroups percentile_groups(const LongTailProfile& profile);

}  // namespace tade::data
