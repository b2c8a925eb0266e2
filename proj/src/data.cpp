// SPDX-License-Identifier: Apache-2.0
#include "tade/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tade/error.hpp"

namespace tade::data {

std::string to_string(Direction d) {
  switch (d) {
    case Direction::kForward:
      return "forward";
    case Direction::kUniform:
      return "uniform";
    case Direction::kBackward:
      return "backward";
  }
  return "uniform";
}

Direction parse_direction(const std::string& s) {
  if (s == "forward") return Direction::kForward;
  if (s == "uniform") return Direction::kUniform;
  if (s == "backward") return Direction::kBackward;
  throw SchemaError("unknown direction '" + s + "'");
}

std::size_t LongTailProfile::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

LongTailProfile make_profile(std::size_t classes, std::size_t max_count, double rho,
                             Direction direction) {
  if (classes < 2) throw DomainError("make_profile: need at least 2 classes");
  if (max_count < 1) throw DomainError("make_profile: max_count must be >= 1");
  if (!(rho >= 1.0) || !std::isfinite(rho)) throw DomainError("make_profile: rho must be >= 1");

  LongTailProfile p;
  p.direction = direction;
  p.rho = rho;
  p.max_count = max_count;
  p.counts.assign(classes, max_count);
  if (direction == Direction::kUniform || rho == 1.0) return p;

  const double n = static_cast<double>(max_count);
  const double span = static_cast<double>(classes - 1);
  for (std::size_t j = 0; j < classes; ++j) {
    const double exact = n * std::pow(rho, -static_cast<double>(j) / span);
    const auto rounded = static_cast<std::size_t>(std::floor(exact + 0.5));
    p.counts[j] = std::max<std::size_t>(rounded, 1);
  }
  if (direction == Direction::kBackward) std::reverse(p.counts.begin(), p.counts.end());
  return p;
}

num::Matrix class_means(std::size_t classes, std::size_t dim, double separation) {
  num::Matrix means(classes, dim);
  for (std::size_t k = 0; k < classes; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(classes);
    means(k, 0) = separation * std::cos(angle);
    if (dim > 1) means(k, 1) = separation * std::sin(angle);
  }
  return means;
}

Dataset gen_gaussian_mixture(const LongTailProfile& profile, std::size_t dim, double separation,
                             Rng& rng) {
  if (dim < 2) throw DomainError("gen_gaussian_mixture: dim must be >= 2");
  if (!(separation >= 0.0)) throw DomainError("gen_gaussian_mixture: separation must be >= 0");

  const auto means = class_means(profile.class_count(), dim, separation);
  Dataset ds;
  ds.profile = profile;
  ds.features = num::Matrix(profile.total(), dim);
  ds.labels.reserve(profile.total());
  std::size_t row = 0;
  for (std::size_t k = 0; k < profile.class_count(); ++k) {
    for (std::size_t i = 0; i < profile.counts[k]; ++i, ++row) {
      auto out = ds.features.row(row);
      for (std::size_t d = 0; d < dim; ++d) out[d] = means(k, d) + rng.normal();
      ds.labels.push_back(static_cast<int>(k));
    }
  }
  return ds;
}

Dataset make_test_split(const Dataset& pool, double rho, Direction direction, Rng& rng) {
  const std::size_t classes = pool.class_count();
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < pool.size(); ++i)
    by_class.at(static_cast<std::size_t>(pool.labels[i])).push_back(i);

  const std::size_t per_class = by_class.empty() ? 0 : by_class.front().size();
  for (const auto& members : by_class) {
    if (members.size() != per_class)
      throw ContractError("make_test_split: pool must hold equal per-class counts");
  }
  if (direction == Direction::kUniform || rho == 1.0) {
    Dataset copy = pool;
    copy.profile = make_profile(classes, per_class, 1.0, Direction::kUniform);
    return copy;
  }

  const auto profile = make_profile(classes, per_class, rho, direction);
  std::vector<std::size_t> chosen;
  for (std::size_t k = 0; k < classes; ++k) {
    if (profile.counts[k] > by_class[k].size()) {
      std::ostringstream msg;
      msg << "make_test_split: class " << k << " needs " << profile.counts[k] << " samples, pool has "
          << by_class[k].size();
      throw CapacityError(msg.str());
    }
    auto members = by_class[k];
    rng.shuffle(members);
    members.resize(profile.counts[k]);
    std::sort(members.begin(), members.end());
    chosen.insert(chosen.end(), members.begin(), members.end());
  }

  Dataset out;
  out.profile = profile;
  out.features = num::Matrix(chosen.size(), pool.dim());
  out.labels.reserve(chosen.size());
  for (std::size_t r = 0; r < chosen.size(); ++r) {
    auto src = pool.features.row(chosen[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.labels.push_back(pool.labels[chosen[r]]);
  }
  return out;
}

ClassPrior ClassPrior::from_counts(const std::vector<std::size_t>& counts) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  ClassPrior prior;
  prior.pi.reserve(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) {
      std::ostringstream msg;
      msg << "empirical_prior: class " << k << " has no samples";
      throw DomainError(msg.str());
    }
    prior.pi.push_back(static_cast<double>(counts[k]) / static_cast<double>(total));
  }
  prior.pi_bar.assign(prior.pi.rbegin(), prior.pi.rend());
  return prior;
}

ClassPrior empirical_prior(const Dataset& train) {
  std::vector<std::size_t> counts(train.class_count(), 0);
  for (int y : train.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= counts.size())
      throw IndexError("empirical_prior: label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  return ClassPrior::from_counts(counts);
}

void ViewConfig::validate() const {
  if (!(noise_sigma >= 0.0)) throw DomainError("view config: noise_sigma must be >= 0");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0))
    throw DomainError("view config: mask_prob must lie in [0, 1]");
  if (!(scale_jitter >= 0.0)) throw DomainError("view config: scale_jitter must be >= 0");
}

std::vector<double> gen_view(std::span<const double> x, const ViewConfig& cfg, Rng& rng) {
  std::vector<double> view(x.begin(), x.end());
  const double scale = cfg.scale_jitter > 0.0 ? 1.0 + rng.uniform(-cfg.scale_jitter, cfg.scale_jitter)
                                              : 1.0;
  for (double& v : view) {
    v *= scale;
    if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * rng.normal();
    if (cfg.mask_prob > 0.0 && rng.bernoulli(cfg.mask_prob)) v = 0.0;
  }
  return view;
}

std::pair<std::vector<double>, std::vector<double>> gen_views(std::span<const double> x,
                                                              const ViewConfig& cfg, Rng& rng) {
  auto first = gen_view(x, cfg, rng);
  auto second = gen_view(x, cfg, rng);
  return {std::move(first), std::move(second)};
}

std::pair<num::Matrix, num::Matrix> gen_views(const num::Matrix& x, const ViewConfig& cfg,
                                              Rng& rng) {
  num::Matrix a(x.rows(), x.cols());
  num::Matrix b(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto [v1, v2] = gen_views(x.row(r), cfg, rng);
    std::copy(v1.begin(), v1.end(), a.row(r).begin());
    std::copy(v2.begin(), v2.end(), b.row(r).begin());
  }
  return {std::move(a), std::move(b)};
}

ClassGroups class_groups(const LongTailProfile& profile, double many_thresh, double few_thresh) {
  if (!(many_thresh > few_thresh))
    throw ContractError("class_groups: many threshold must exceed few threshold");
  ClassGroups g;
  for (std::size_t k = 0; k < profile.class_count(); ++k) {
    const auto n = static_cast<double>(profile.counts[k]);
    if (n > many_thresh)
      g.many.push_back(k);
    else if (n < few_thresh)
      g.few.push_back(k);
    else
      g.medium.push_back(k);
  }
  return g;
}

double count_percentile(const LongTailProfile& profile, double q) {
  if (profile.counts.empty()) throw DomainError("count_percentile: empty profile");
  std::vector<double> sorted(profile.counts.begin(), profile.counts.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ClassGroups percentile_groups(const LongTailProfile& profile) {
  const double many = count_percentile(profile, 60.0);
  const double few = count_percentile(profile, 20.0);
  if (!(many > few)) {
    // Flat profile: everything is medium.
    ClassGroups g;
    for (std::size_t k = 0; k < profile.class_count(); ++k) g.medium.push_back(k);
    return g;
  }
  return class_groups(profile, many, few);
}

}  // namespace tade::data
