// SPDX-License-Identifier: Apache-2.0
#include "tade/checkpoint.hpp"

#include "tade/byteio.hpp"
#include "tade/error.hpp"

namespace tade::model {

namespace {

constexpr std::string_view kMagic = "TADECKPT";
constexpr int kVersion = 1;

nlohmann::json tensor_table(const ParamSet& p) {
  auto names = p.block_names();
  nlohmann::json layers = nlohmann::json::array();
  std::size_t i = 0;
  auto add = [&](const DenseLayer& l) {
    layers.push_back({{"name", names[i++]}, {"shape", {l.weight.rows(), l.weight.cols()}}});
    layers.push_back({{"name", names[i++]}, {"shape", {l.bias.size()}}});
  };
  for (const auto& l : p.backbone) add(l);
  for (const auto& h : p.heads)
    for (const auto& l : h) add(l);
  return layers;
}

}  // namespace

nlohmann::json architecture_to_json(const Architecture& a) {
  return {{"input_dim", a.input_dim},
          {"backbone_widths", a.backbone_widths},
          {"head_widths", a.head_widths},
          {"experts", a.experts},
          {"classes", a.classes}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture a;
  a.input_dim = j.at("input_dim").get<std::size_t>();
  a.backbone_widths = j.at("backbone_widths").get<std::vector<std::size_t>>();
  a.head_widths = j.at("head_widths").get<std::vector<std::size_t>>();
  a.experts = j.at("experts").get<std::size_t>();
  a.classes = j.at("classes").get<std::size_t>();
  return a;
}

std::string encode_checkpoint(const Checkpoint& ck) {
  const auto& p = ck.model.params;
  nlohmann::json header = {
      {"format", "tade-checkpoint"},
      {"version", kVersion},
      {"architecture", architecture_to_json(ck.model.arch)},
      {"seed", ck.model.seed},
      {"param_count", p.count()},
      {"layer_order",
       "backbone layers in depth order, then each expert head in index order; "
       "weight (in x out, row-major) before bias within a layer"},
      {"tensors", tensor_table(p)},
      {"train_counts", ck.train_counts},
      {"epochs_completed", ck.epochs_completed},
      {"has_optimizer_state", ck.opt.has_value()},
  };
  const std::string head = header.dump();

  std::string out;
  out.append(kMagic);
  io::put_u64(out, head.size());
  out.append(head);
  for (auto b : p.blocks())
    for (double v : b) io::put_f64(out, v);
  if (ck.opt) {
    for (auto b : ck.opt->velocity.blocks())
      for (double v : b) io::put_f64(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw SchemaError("checkpoint: bad magic");
  const auto header_len = r.u64();
  if (header_len > r.remaining()) throw SchemaError("checkpoint: truncated header");
  nlohmann::json header;
  Checkpoint ck;
  bool has_opt = false;
  try {
    header = nlohmann::json::parse(r.take(header_len));
    if (header.at("version").get<int>() != kVersion) throw SchemaError("checkpoint: bad version");
    ck.model.arch = architecture_from_json(header.at("architecture"));
    ck.model.seed = header.at("seed").get<std::uint64_t>();
    ck.train_counts = header.at("train_counts").get<std::vector<std::size_t>>();
    ck.epochs_completed = header.at("epochs_completed").get<std::size_t>();
    has_opt = header.at("has_optimizer_state").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint header: ") + e.what());
  }

  // Rebuild shapes from the architecture, then fill from the blob.
  Rng shape_only(0);
  ck.model.params = init_model(ck.model.arch, shape_only).params;
  const std::size_t n = ck.model.params.count();
  if (header.at("param_count").get<std::size_t>() != n)
    throw SchemaError("checkpoint: param_count disagrees with architecture");
  if (r.remaining() != n * 8 * (has_opt ? 2 : 1)) throw SchemaError("checkpoint: blob size mismatch");

  std::vector<double> flat(n);
  for (auto& v : flat) v = r.f64();
  ck.model.params.assign(flat);
  if (has_opt) {
    train::OptState opt{ck.model.params.zeros_like()};
    for (auto& v : flat) v = r.f64();
    opt.velocity.assign(flat);
    ck.opt = std::move(opt);
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace tade::model
