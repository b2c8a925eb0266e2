// SPDX-License-Identifier: Apache-2.0
#include "tade/ttaggr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tade/error.hpp"

namespace tade::aggr {

AggregationState AggregationState::uniform(std::size_t experts, double stop_threshold) {
  AggregationState s;
  s.stop_threshold = stop_threshold;
  s.set_raw(std::vector<double>(experts, 0.0));
  return s;
}

void AggregationState::set_raw(std::vector<double> r) {
  raw = std::move(r);
  w = num::softmax(raw);
}

ViewLogits view_logits(const model::ExpertModel& m, const num::Matrix& batch,
                       const data::ViewConfig& views, Rng& rng) {
  auto [first, second] = data::gen_views(batch, views, rng);
  return {model::expert_logits(m, first), model::expert_logits(m, second)};
}

namespace {

// Ensemble probabilities for one row of one view.
std::vector<double> row_probs(const std::vector<num::Matrix>& logits, std::span<const double> w,
                              std::size_t row) {
  const std::size_t c = logits.front().cols();
  std::vector<double> z(c, 0.0);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    auto v = logits[k].row(row);
    for (std::size_t j = 0; j < c; ++j) z[j] += w[k] * v[j];
  }
  return num::softmax(z);
}

void check_experts(const ViewLogits& vl, std::size_t k) {
  if (vl.first.size() != k || vl.second.size() != k)
    throw ShapeError("stability: weight length differs from expert count");
}

}  // namespace

double stability_of(const ViewLogits& vl, std::span<const double> w) {
  check_experts(vl, w.size());
  const std::size_t n = vl.rows();
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    sum += num::dot(row_probs(vl.first, w, i), row_probs(vl.second, w, i));
  return sum / static_cast<double>(n);
}

std::vector<double> stability_grad_weights(const ViewLogits& vl, std::span<const double> w) {
  check_experts(vl, w.size());
  const std::size_t n = vl.rows();
  const std::size_t experts = w.size();
  std::vector<double> grad(experts, 0.0);
  if (n == 0) return grad;
  const std::size_t c = vl.first.front().cols();
  std::vector<double> dz1(c), dz2(c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p1 = row_probs(vl.first, w, i);
    const auto p2 = row_probs(vl.second, w, i);
    const double s = num::dot(p1, p2);
    // d(p1.p2)/dz1 = (diag(p1) - p1 p1^T) p2, symmetric for z2.
    for (std::size_t j = 0; j < c; ++j) {
      dz1[j] = p1[j] * (p2[j] - s);
      dz2[j] = p2[j] * (p1[j] - s);
    }
    for (std::size_t k = 0; k < experts; ++k)
      grad[k] += num::dot(dz1, vl.first[k].row(i)) + num::dot(dz2, vl.second[k].row(i));
  }
  for (double& g : grad) g /= static_cast<double>(n);
  return grad;
}

std::vector<double> stability_grad_raw(const ViewLogits& vl, std::span<const double> raw) {
  const auto w = num::softmax(raw);
  const auto gw = stability_grad_weights(vl, w);
  const double mean = num::dot(w, gw);
  std::vector<double> g(raw.size());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = w[j] * (gw[j] - mean);
  return g;
}

StabilityReport stability(const model::ExpertModel& m, const num::Matrix& batch,
                          const AggregationState& state, const data::ViewConfig& views, Rng& rng,
                          std::size_t chunk) {
  StabilityReport rep;
  const std::size_t n = batch.rows();
  if (n == 0) return rep;
  if (chunk == 0) chunk = n;
  double total = 0.0;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(begin + chunk, n);
    num::Matrix part(end - begin, batch.cols());
    std::copy(batch.data().begin() + static_cast<std::ptrdiff_t>(begin * batch.cols()),
              batch.data().begin() + static_cast<std::ptrdiff_t>(end * batch.cols()),
              part.data().begin());
    const auto vl = view_logits(m, part, views, rng);
    const double s = stability_of(vl, state.w);
    rep.per_batch.push_back(s);
    total += s * static_cast<double>(end - begin);
  }
  rep.S = total / static_cast<double>(n);
  return rep;
}

std::vector<double> stability_grad_w(const model::ExpertModel& m, const num::Matrix& batch,
                                     const AggregationState& state,
                                     const data::ViewConfig& views, Rng& rng) {
  const auto vl = view_logits(m, batch, views, rng);
  return stability_grad_raw(vl, state.raw);
}

void AdaptConfig::validate() const {
  if (batch_size == 0) throw ContractError("adapt: batch_size must be positive");
  if (!(lr >= 0.0)) throw ContractError("adapt: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("adapt: momentum must be in [0, 1)");
  if (!(stop_threshold >= 0.0 && stop_threshold < 1.0))
    throw ContractError("adapt: stop_threshold must be in [0, 1)");
  views.validate();
}

nlohmann::json AdaptEpoch::to_json() const {
  return {{"epoch", epoch}, {"S", S}, {"w", w}, {"stopped", stopped}};
}

AdaptResult adapt(const model::ExpertModel& m, const num::Matrix& test_features,
                  const AdaptConfig& cfg, Rng& rng) {
  cfg.validate();
  AdaptResult res;
  res.state = AggregationState::uniform(m.experts(), cfg.stop_threshold);
  const std::size_t n = test_features.rows();
  if (cfg.epochs == 0 || n == 0) return res;

  const train::SgdConfig sgd{cfg.momentum, cfg.nesterov, 0.0};
  std::vector<double> velocity(m.experts(), 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double s_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, n);
      num::Matrix x(end - begin, test_features.cols());
      for (std::size_t r = begin; r < end; ++r) {
        auto src = test_features.row(order[r]);
        std::copy(src.begin(), src.end(), x.row(r - begin).begin());
      }
      const auto vl = view_logits(m, x, cfg.views, rng);
      const double s = stability_of(vl, res.state.w);
      if (std::isnan(s)) {
        std::ostringstream msg;
        msg << "adaptation diverged: stability is NaN at epoch " << epoch;
        throw DivergenceError(msg.str());
      }
      s_sum += s * static_cast<double>(end - begin);

      // Ascent on S is descent on -S.
      auto g = stability_grad_raw(vl, res.state.raw);
      for (double& v : g) v = -v;
      auto raw = res.state.raw;
      const std::span<double> p[] = {raw};
      const std::span<const double> gs[] = {g};
      const std::span<double> vs[] = {velocity};
      train::sgd_step(p, gs, vs, cfg.lr, sgd);
      res.state.set_raw(std::move(raw));
    }

    res.state.epoch = epoch + 1;
    const double min_w = *std::min_element(res.state.w.begin(), res.state.w.end());
    res.state.stopped = min_w <= cfg.stop_threshold;
    res.trace.push_back({epoch, s_sum / static_cast<double>(n), res.state.w, res.state.stopped});
    if (res.state.stopped) break;
  }
  return res;
}

}  // namespace tade::aggr
