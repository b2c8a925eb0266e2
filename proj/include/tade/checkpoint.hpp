// SPDX-License-Identifier: Apache-2.0
//
// Model checkpoint:
//   bytes 0..7   magic "TADECKPT"
//   u64          header length in bytes
//   header       UTF-8 JSON (architecture, seed, per-tensor names and shapes
//                in blob order, training class counts, resume state)
//   blob         f64 parameters in ParamSet::blocks() order, followed by the
//                optimizer velocity in the same order when
//                header.has_optimizer_state is true
// Everything little-endian.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tade/model.hpp"
#include "tade/train.hpp"

namespace tade::model {

struct Checkpoint {
  ExpertModel model;
  std::vector<std::size_t> train_counts;
  std::size_t epochs_completed = 0;
  std::optional<train::OptState> opt;

  bool operator==(const Checkpoint&) const = default;
};

nlohmann::json architecture_to_json(const Architecture& a);
Architecture architecture_from_json(const nlohmann::json& j);

std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tade::model
