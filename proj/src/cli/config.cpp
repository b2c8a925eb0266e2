// SPDX-License-Identifier: Apache-2.0
#include "tade/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <functional>
#include <map>

#include "tade/byteio.hpp"
#include "tade/error.hpp"

namespace tade::cli {

using nlohmann::json;

model::Architecture RunConfig::architecture() const {
  return {data.dim, model.backbone_widths, model.head_widths, model.experts, data.classes};
}

aggr::AdaptConfig RunConfig::adapt_config() const {
  aggr::AdaptConfig a;
  a.epochs = adapt.epochs;
  a.batch_size = adapt.batch_size;
  a.lr = adapt.lr;
  a.momentum = adapt.momentum;
  a.nesterov = adapt.nesterov;
  a.views = views;
  a.stop_threshold = adapt.stop_threshold;
  return a;
}

void RunConfig::validate() const {
  if (data.classes < 2) throw ContractError("config: data.classes must be >= 2");
  if (data.dim < 2) throw ContractError("config: data.dim must be >= 2");
  if (!(data.separation > 0.0)) throw ContractError("config: data.separation must be > 0");
  if (data.train_max_count == 0) throw ContractError("config: data.train_max_count must be > 0");
  if (!(data.train_rho >= 1.0)) throw ContractError("config: data.train_rho must be >= 1");
  if (data.test_per_class == 0) throw ContractError("config: data.test_per_class must be > 0");
  for (double r : data.test_rhos)
    if (!(r >= 1.0)) throw ContractError("config: data.test_rhos entries must be >= 1");
  if (model.experts < 2) throw ContractError("config: model.experts must be >= 2");
  for (auto w : model.backbone_widths)
    if (w == 0) throw ContractError("config: model.backbone_widths entries must be > 0");
  for (auto w : model.head_widths)
    if (w == 0) throw ContractError("config: model.head_widths entries must be > 0");
  train.validate();
  adapt_config().validate();
  if (eval.stability_chunk == 0) throw ContractError("config: eval.stability_chunk must be > 0");
}

// ---------------------------------------------------------------------------
// Serialization

json to_json(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"data",
       {{"classes", c.data.classes},
        {"dim", c.data.dim},
        {"separation", c.data.separation},
        {"train_max_count", c.data.train_max_count},
        {"train_rho", c.data.train_rho},
        {"test_per_class", c.data.test_per_class},
        {"test_rhos", c.data.test_rhos}}},
      {"model",
       {{"backbone_widths", c.model.backbone_widths},
        {"head_widths", c.model.head_widths},
        {"experts", c.model.experts}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr0},
        {"schedule", train::to_string(c.train.schedule)},
        {"momentum", c.train.momentum},
        {"nesterov", c.train.nesterov},
        {"weight_decay", c.train.weight_decay},
        {"lambda", c.train.lambda}}},
      {"views",
       {{"noise_sigma", c.views.noise_sigma},
        {"mask_prob", c.views.mask_prob},
        {"scale_jitter", c.views.scale_jitter}}},
      {"adapt",
       {{"epochs", c.adapt.epochs},
        {"batch_size", c.adapt.batch_size},
        {"lr", c.adapt.lr},
        {"momentum", c.adapt.momentum},
        {"nesterov", c.adapt.nesterov},
        {"stop_threshold", c.adapt.stop_threshold}}},
      {"eval", {{"threads", c.eval.threads}, {"stability_chunk", c.eval.stability_chunk}}},
      {"paths", {{"data_dir", c.paths.data_dir}, {"run_dir", c.paths.run_dir}}},
  };
}

namespace {

using Setter = std::function<void(const json&)>;
using Table = std::map<std::string, Setter>;

template <typename T>
Setter bind(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

void apply_table(const json& j, const Table& table, const std::string& where) {
  if (!j.is_object()) throw SchemaError("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    auto it = table.find(key);
    const std::string path = where.empty() ? key : where + "." + key;
    if (it == table.end()) throw SchemaError("config: unknown key '" + path + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw SchemaError("config: bad value for '" + path + "': " + e.what());
    } catch (const SchemaError& e) {
      const std::string what = e.what();
      if (what.rfind("config:", 0) == 0) throw;
      throw SchemaError("config: bad value for '" + path + "': " + what);
    }
  }
}

// Rejects negatives and fractions before they wrap into size_t.
// Programmatic JSON stores small literals as signed; accept those when >= 0.
bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

Setter bind_count(std::size_t& field) {
  return [&field](const json& v) {
    if (!is_count(v)) throw SchemaError("expected a non-negative integer");
    field = v.get<std::size_t>();
  };
}

Setter bind_counts(std::vector<std::size_t>& field) {
  return [&field](const json& v) {
    if (!v.is_array()) throw SchemaError("expected an array");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!is_count(e)) throw SchemaError("expected non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
    field = std::move(out);
  };
}

Setter bind_real(double& field) {
  return [&field](const json& v) {
    if (!v.is_number()) throw SchemaError("expected a number");
    field = v.get<double>();
  };
}

Setter bind_bool(bool& field) {
  return [&field](const json& v) {
    if (!v.is_boolean()) throw SchemaError("expected a boolean");
    field = v.get<bool>();
  };
}

void overlay(RunConfig& c, const json& j) {
  Table data_t = {
      {"classes", bind_count(c.data.classes)},
      {"dim", bind_count(c.data.dim)},
      {"separation", bind_real(c.data.separation)},
      {"train_max_count", bind_count(c.data.train_max_count)},
      {"train_rho", bind_real(c.data.train_rho)},
      {"test_per_class", bind_count(c.data.test_per_class)},
      {"test_rhos",
       [&](const json& v) {
         if (!v.is_array()) throw SchemaError("expected an array");
         std::vector<double> out;
         for (const auto& e : v) {
           if (!e.is_number()) throw SchemaError("expected numbers");
           out.push_back(e.get<double>());
         }
         c.data.test_rhos = std::move(out);
       }},
  };
  Table model_t = {
      {"backbone_widths", bind_counts(c.model.backbone_widths)},
      {"head_widths", bind_counts(c.model.head_widths)},
      {"experts", bind_count(c.model.experts)},
  };
  Table train_t = {
      {"epochs", bind_count(c.train.epochs)},
      {"batch_size", bind_count(c.train.batch_size)},
      {"lr", bind_real(c.train.lr0)},
      {"schedule", [&](const json& v) { c.train.schedule = train::parse_schedule(v.get<std::string>()); }},
      {"momentum", bind_real(c.train.momentum)},
      {"nesterov", bind_bool(c.train.nesterov)},
      {"weight_decay", bind_real(c.train.weight_decay)},
      {"lambda", bind_real(c.train.lambda)},
  };
  Table views_t = {
      {"noise_sigma", bind_real(c.views.noise_sigma)},
      {"mask_prob", bind_real(c.views.mask_prob)},
      {"scale_jitter", bind_real(c.views.scale_jitter)},
  };
  Table adapt_t = {
      {"epochs", bind_count(c.adapt.epochs)},
      {"batch_size", bind_count(c.adapt.batch_size)},
      {"lr", bind_real(c.adapt.lr)},
      {"momentum", bind_real(c.adapt.momentum)},
      {"nesterov", bind_bool(c.adapt.nesterov)},
      {"stop_threshold", bind_real(c.adapt.stop_threshold)},
  };
  Table eval_t = {
      {"threads", bind_count(c.eval.threads)},
      {"stability_chunk", bind_count(c.eval.stability_chunk)},
  };
  Table paths_t = {
      {"data_dir", bind<std::string>(c.paths.data_dir)},
      {"run_dir", bind<std::string>(c.paths.run_dir)},
  };
  auto section = [](const Table& t, const char* name) -> Setter {
    return [&t, name](const json& v) { apply_table(v, t, name); };
  };
  Table root = {
      {"seed", [&](const json& v) {
         if (!is_count(v)) throw SchemaError("expected a non-negative integer");
         c.seed = v.get<std::uint64_t>();
       }},
      {"data", section(data_t, "data")},
      {"model", section(model_t, "model")},
      {"train", section(train_t, "train")},
      {"views", section(views_t, "views")},
      {"adapt", section(adapt_t, "adapt")},
      {"eval", section(eval_t, "eval")},
      {"paths", section(paths_t, "paths")},
  };
  apply_table(j, root, "");
}

}  // namespace

RunConfig from_json(const json& j, RunConfig base) {
  overlay(base, j);
  base.train.seed = base.seed;
  return base;
}

RunConfig load_config(const std::string& path) {
  const std::string text = io::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("config " + path + ": " + e.what());
  }
  return from_json(j);
}

void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw SchemaError("override '" + assignment + "' is not of the form key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  // Build {"a": {"b": value}} from "a.b" and overlay it.
  json patch = value;
  std::size_t end = key.size();
  while (true) {
    const auto dot = key.rfind('.', end - 1);
    const std::size_t begin = dot == std::string::npos ? 0 : dot + 1;
    patch = json{{key.substr(begin, end - begin), patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  c = from_json(patch, c);
}

void apply_env(RunConfig& c) {
  const char* env = std::getenv("TADE_SEED");
  if (env == nullptr) return;
  const std::string s(env);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw SchemaError("TADE_SEED must be an unsigned integer, got '" + s + "'");
  errno = 0;
  const auto v = std::strtoull(s.c_str(), nullptr, 10);
  if (errno == ERANGE) throw SchemaError("TADE_SEED out of range");
  c.seed = v;
  c.train.seed = v;
}

Rng stage_rng(const RunConfig& c, Stage s) {
  return Rng(c.seed).split(static_cast<std::uint64_t>(s));
}

std::uint64_t name_stream(const std::string& name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace tade::cli
