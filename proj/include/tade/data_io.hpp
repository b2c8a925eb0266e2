// SPDX-License-Identifier: Apache-2.0
//
// Dataset container:
//   bytes 0..3   magic "TADE"
//   u32          format version (1)
//   u32 n, u32 d, u32 C
//   n x u32      labels (0-based class index)
//   n*d x f64    features, row-major
// All integers and floats little-endian. A JSON sidecar next to the binary
// (same stem, ".json") carries the LongTailProfile.
#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "tade/data.hpp"

namespace tade::data {

inline constexpr std::uint32_t kDatasetVersion = 1;

std::string encode_dataset(const Dataset& ds);
/// Throws SchemaError on a bad magic, version or truncated payload.
Dataset decode_dataset(std::string_view bytes, const LongTailProfile& profile);

nlohmann::json profile_to_json(const LongTailProfile& p);
LongTailProfile profile_from_json(const nlohmann::json& j);

std::filesystem::path sidecar_path(const std::filesystem::path& bin);

void save_dataset(const Dataset& ds, const std::filesystem::path& bin);
Dataset load_dataset(const std::filesystem::path& bin);

}  // namespace tade::data
