// SPDX-License-Identifier: Apache-2.0
//
// Joint training of all experts: each expert gets its own logit-adjusted
// loss, the losses are summed and one SGD step updates backbone and heads.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tade/data.hpp"
#include "tade/losses.hpp"
#include "tade/model.hpp"
#include "tade/rng.hpp"

namespace tade::train {

enum class Schedule { kLinear, kCosine, kConstant };

std::string to_string(Schedule s);
Schedule parse_schedule(const std::string& s);

struct SgdConfig {
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 0.0;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double lr0 = 0.1;
  Schedule schedule = Schedule::kLinear;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 5e-4;
  double lambda = loss::kDefaultLambda;
  std::uint64_t seed = 0;

  SgdConfig sgd() const { return {momentum, nesterov, weight_decay}; }
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// linear: lr0 (1 - e/E); cosine: lr0 (1 + cos(pi e/E)) / 2; constant: lr0.
double lr_at(const TrainConfig& cfg, std::size_t epoch);

/// Velocity buffers, one per parameter tensor, zero-initialised.
struct OptState {
  model::ParamSet velocity;

  static OptState for_model(const model::ExpertModel& m) { return {m.params.zeros_like()}; }
  bool operator==(const OptState&) const = default;
};

/// One SGD step over matching parameter / gradient / velocity blocks:
///   d = g + wd * theta
///   v <- mu v + d
///   theta <- theta - lr (d + mu v)   (Nesterov)
///   theta <- theta - lr v            (classical)
void sgd_step(std::span<const std::span<double>> params,
              std::span<const std::span<const double>> grads,
              std::span<const std::span<double>> velocity, double lr, const SgdConfig& cfg);

void sgd_step(model::ExpertModel& m, const model::ParamGrads& grads, OptState& opt, double lr,
              const SgdConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  std::vector<double> expert_losses;  // batch-size-weighted mean per expert
  double total_loss = 0.0;
  double wall_ms = 0.0;

  /// JSON-lines record. For K = 3 the per-expert losses are also emitted as
  /// loss_ce / loss_bal / loss_inv.
  nlohmann::json to_json() const;
};

/// One pass over a fresh shuffle of `train`. The last short batch is kept.
/// Throws DivergenceError naming the epoch and batch if a loss is not finite.
EpochStats train_epoch(model::ExpertModel& m, const data::Dataset& train,
                       const data::ClassPrior& prior, const TrainConfig& cfg, OptState& opt,
                       std::size_t epoch, Rng& rng);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Runs epochs [start_epoch, stop_epoch) with the shuffle for epoch e drawn
/// from stage_rng.split(e), so a run resumed from a checkpoint at epoch e
/// matches an uninterrupted one bit for bit.
std::vector<EpochStats> train(model::ExpertModel& m, const data::Dataset& train_set,
                              const TrainConfig& cfg, OptState& opt, const Rng& stage_rng,
                              std::size_t start_epoch, std::size_t stop_epoch,
                              const EpochCallback& on_epoch = {});

}  // namespace tade::train
