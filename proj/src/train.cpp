// SPDX-License-Identifier: Apache-2.0
#include "tade/train.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tade/error.hpp"

namespace tade::train {

std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::kLinear:
      return "linear";
    case Schedule::kCosine:
      return "cosine";
    case Schedule::kConstant:
      return "constant";
  }
  return "linear";
}

Schedule parse_schedule(const std::string& s) {
  if (s == "linear") return Schedule::kLinear;
  if (s == "cosine") return Schedule::kCosine;
  if (s == "constant") return Schedule::kConstant;
  throw SchemaError("unknown lr schedule '" + s + "'");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ContractError("train: batch_size must be positive");
  if (!(lr0 >= 0.0)) throw ContractError("train: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("train: momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ContractError("train: weight_decay must be >= 0");
  if (!(lambda >= 0.0)) throw ContractError("train: lambda must be >= 0");
}

double lr_at(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.epochs == 0) return cfg.lr0;
  const double frac = static_cast<double>(epoch) / static_cast<double>(cfg.epochs);
  switch (cfg.schedule) {
    case Schedule::kLinear:
      return cfg.lr0 * (1.0 - frac);
    case Schedule::kCosine:
      return cfg.lr0 * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
    case Schedule::kConstant:
      return cfg.lr0;
  }
  return cfg.lr0;
}

void sgd_step(std::span<const std::span<double>> params,
              std::span<const std::span<const double>> grads,
              std::span<const std::span<double>> velocity, double lr, const SgdConfig& cfg) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw ShapeError("sgd_step: block count mismatch");
  const double mu = cfg.momentum;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto theta = params[b];
    auto g = grads[b];
    auto v = velocity[b];
    if (theta.size() != g.size() || theta.size() != v.size())
      throw ShapeError("sgd_step: block size mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double d = g[i] + cfg.weight_decay * theta[i];
      v[i] = mu * v[i] + d;
      theta[i] -= cfg.nesterov ? lr * (d + mu * v[i]) : lr * v[i];
    }
  }
}

void sgd_step(model::ExpertModel& m, const model::ParamGrads& grads, OptState& opt, double lr,
              const SgdConfig& cfg) {
  const auto p = m.params.blocks();
  const auto g = grads.blocks();
  const auto v = opt.velocity.blocks();
  sgd_step(p, g, v, lr, cfg);
}

nlohmann::json EpochStats::to_json() const {
  nlohmann::json j = {{"epoch", epoch}, {"lr", lr}, {"losses", expert_losses}, {"total", total_loss}};
  if (expert_losses.size() == 3) {
    j["loss_ce"] = expert_losses[0];
    j["loss_bal"] = expert_losses[1];
    j["loss_inv"] = expert_losses[2];
  }
  j["wall_ms"] = wall_ms;
  return j;
}

EpochStats train_epoch(model::ExpertModel& m, const data::Dataset& train,
                       const data::ClassPrior& prior, const TrainConfig& cfg, OptState& opt,
                       std::size_t epoch, Rng& rng) {
  cfg.validate();
  if (cfg.batch_size > train.size())
    throw ContractError("train: batch_size exceeds the training set size");
  const auto start = std::chrono::steady_clock::now();

  const std::size_t experts = m.experts();
  const auto adjustments = loss::expert_adjustments(experts, cfg.lambda);
  std::vector<std::vector<double>> offsets;
  for (const auto& adj : adjustments) offsets.push_back(loss::logit_offset(prior, adj));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  EpochStats stats;
  stats.epoch = epoch;
  stats.lr = lr_at(cfg, epoch);
  stats.expert_losses.assign(experts, 0.0);

  const std::size_t dim = train.dim();
  std::size_t batch_index = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
    const std::size_t end = std::min(begin + cfg.batch_size, order.size());
    num::Matrix x(end - begin, dim);
    std::vector<int> y;
    y.reserve(end - begin);
    for (std::size_t r = begin; r < end; ++r) {
      auto src = train.features.row(order[r]);
      std::copy(src.begin(), src.end(), x.row(r - begin).begin());
      y.push_back(train.labels[order[r]]);
    }

    auto fwd = model::forward(m, x);
    std::vector<num::Matrix> grad_logits;
    grad_logits.reserve(experts);
    for (std::size_t k = 0; k < experts; ++k) {
      auto lv = loss::adjusted_ce(fwd.logits[k], y, offsets[k]);
      if (!std::isfinite(lv.value)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss for expert " << k << " at epoch " << epoch
            << ", batch " << batch_index;
        throw DivergenceError(msg.str());
      }
      stats.expert_losses[k] += lv.value * static_cast<double>(end - begin);
      grad_logits.push_back(std::move(lv.grad_logits));
    }
    const auto grads = model::backward(m, std::move(fwd.trace), grad_logits);
    sgd_step(m, grads, opt, stats.lr, cfg.sgd());
  }

  for (double& l : stats.expert_losses) l /= static_cast<double>(train.size());
  stats.total_loss = std::accumulate(stats.expert_losses.begin(), stats.expert_losses.end(), 0.0);
  stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                      .count();
  return stats;
}

std::vector<EpochStats> train(model::ExpertModel& m, const data::Dataset& train_set,
                              const TrainConfig& cfg, OptState& opt, const Rng& stage_rng,
                              std::size_t start_epoch, std::size_t stop_epoch,
                              const EpochCallback& on_epoch) {
  const auto prior = data::empirical_prior(train_set);
  std::vector<EpochStats> history;
  for (std::size_t e = start_epoch; e < std::min(stop_epoch, cfg.epochs); ++e) {
    auto rng = stage_rng.split(e);
    history.push_back(train_epoch(m, train_set, prior, cfg, opt, e, rng));
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

}  // namespace tade::train
