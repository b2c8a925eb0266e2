// SPDX-License-Identifier: Apache-2.0
//
// RunConfig: every tunable of the pipeline in one JSON-serializable record.
// Parsing is strict; an unknown key at any level is a SchemaError. Keys that
// are absent keep their defaults, so a config file may be partial.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "tade/data.hpp"
#include "tade/model.hpp"
#include "tade/rng.hpp"
#include "tade/train.hpp"
#include "tade/ttaggr.hpp"

namespace tade::cli {

struct DataConfig {
  std::size_t classes = 10;
  std::size_t dim = 16;
  double separation = 4.0;
  std::size_t train_max_count = 2000;
  double train_rho = 100.0;
  std::size_t test_per_class = 100;
  std::vector<double> test_rhos = {2.0, 5.0, 10.0, 25.0, 50.0};

  bool operator==(const DataConfig&) const = default;
};

struct ModelConfig {
  std::vector<std::size_t> backbone_widths = {64, 64};
  std::vector<std::size_t> head_widths = {32};
  std::size_t experts = 3;

  bool operator==(const ModelConfig&) const = default;
};

struct AdaptSettings {
  std::size_t epochs = 5;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  bool nesterov = true;
  double stop_threshold = aggr::kDefaultStopThreshold;

  bool operator==(const AdaptSettings&) const = default;
};

struct EvalConfig {
  std::size_t threads = 0;  // 0 = hardware concurrency
  std::size_t stability_chunk = 128;

  bool operator==(const EvalConfig&) const = default;
};

struct PathConfig {
  std::string data_dir = "data";
  std::string run_dir = "run";

  bool operator==(const PathConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  ModelConfig model;
  train::TrainConfig train;
  data::ViewConfig views{1.0, 0.0, 0.0};
  AdaptSettings adapt;
  EvalConfig eval;
  PathConfig paths;

  model::Architecture architecture() const;
  aggr::AdaptConfig adapt_config() const;
  /// Throws ContractError on out-of-range values.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& c);
/// Overlays `j` onto `base`; rejects unknown keys and wrong types.
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});

RunConfig load_config(const std::string& path);

/// Applies "a.b.c=<json value>" (a bare word is taken as a string).
void apply_override(RunConfig& c, const std::string& assignment);

/// Reads TADE_SEED if set; SchemaError if it is not an unsigned integer.
void apply_env(RunConfig& c);

// Independent randomness per pipeline stage, all derived from c.seed.
enum class Stage : std::uint64_t { kData = 1, kTrain = 2, kAdapt = 3, kEval = 4 };
Rng stage_rng(const RunConfig& c, Stage s);

/// Stable 64-bit FNV-1a; used to derive per-split streams from split names so
/// results do not depend on invocation order.
std::uint64_t name_stream(const std::string& name);

}  // namespace tade::cli
