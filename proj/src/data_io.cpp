// SPDX-License-Identifier: Apache-2.0
#include "tade/data_io.hpp"

#include <sstream>

#include "tade/byteio.hpp"
#include "tade/error.hpp"

namespace tade::data {

namespace {
constexpr std::string_view kMagic = "TADE";
}

std::string encode_dataset(const Dataset& ds) {
  std::string out;
  out.reserve(20 + ds.size() * 4 + ds.features.size() * 8);
  out.append(kMagic);
  io::put_u32(out, kDatasetVersion);
  io::put_u32(out, static_cast<std::uint32_t>(ds.size()));
  io::put_u32(out, static_cast<std::uint32_t>(ds.dim()));
  io::put_u32(out, static_cast<std::uint32_t>(ds.class_count()));
  for (int y : ds.labels) io::put_u32(out, static_cast<std::uint32_t>(y));
  for (double v : ds.features.data()) io::put_f64(out, v);
  return out;
}

Dataset decode_dataset(std::string_view bytes, const LongTailProfile& profile) {
  io::Reader r(bytes);
  if (r.take(4) != kMagic) throw SchemaError("dataset: bad magic");
  if (const auto v = r.u32(); v != kDatasetVersion) {
    throw SchemaError("dataset: unsupported version " + std::to_string(v));
  }
  const std::size_t n = r.u32();
  const std::size_t d = r.u32();
  const std::size_t c = r.u32();
  if (c != profile.class_count()) throw SchemaError("dataset: class count disagrees with sidecar");
  if (r.remaining() != n * 4 + n * d * 8) throw SchemaError("dataset: payload size mismatch");

  Dataset ds;
  ds.profile = profile;
  ds.labels.resize(n);
  for (auto& y : ds.labels) {
    const auto v = r.u32();
    if (v >= c) throw SchemaError("dataset: label out of range");
    y = static_cast<int>(v);
  }
  ds.features = num::Matrix(n, d);
  for (auto& v : ds.features.data()) v = r.f64();
  return ds;
}

nlohmann::json profile_to_json(const LongTailProfile& p) {
  return {{"class_count", p.class_count()},
          {"counts", p.counts},
          {"rho", p.rho},
          {"direction", to_string(p.direction)},
          {"max_count", p.max_count}};
}

LongTailProfile profile_from_json(const nlohmann::json& j) {
  try {
    LongTailProfile p;
    p.counts = j.at("counts").get<std::vector<std::size_t>>();
    p.rho = j.at("rho").get<double>();
    p.direction = parse_direction(j.at("direction").get<std::string>());
    p.max_count = j.at("max_count").get<std::size_t>();
    if (j.at("class_count").get<std::size_t>() != p.counts.size())
      throw SchemaError("profile: class_count disagrees with counts");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("profile: ") + e.what());
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& bin) {
  auto p = bin;
  p.replace_extension(".json");
  return p;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& bin) {
  io::write_file(bin, encode_dataset(ds));
  nlohmann::json side = {{"format", "tade-dataset"},
                         {"version", kDatasetVersion},
                         {"n", ds.size()},
                         {"dim", ds.dim()},
                         {"profile", profile_to_json(ds.profile)}};
  io::write_file(sidecar_path(bin), side.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& bin) {
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(io::read_file(sidecar_path(bin)));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("dataset sidecar: " + std::string(e.what()));
  }
  if (!side.contains("profile")) throw SchemaError("dataset sidecar: missing profile");
  auto ds = decode_dataset(io::read_file(bin), profile_from_json(side["profile"]));
  if (ds.size() != ds.profile.total())
    throw SchemaError("dataset: sample count disagrees with profile");
  return ds;
}

}  // namespace tade::data
