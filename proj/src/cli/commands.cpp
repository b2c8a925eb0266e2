// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "tade/byteio.hpp"
#include "tade/checkpoint.hpp"
#include "tade/cli.hpp"
#include "tade/config.hpp"
#include "tade/data_io.hpp"
#include "tade/error.hpp"
#include "tade/eval.hpp"
#include "tade/train.hpp"
#include "tade/ttaggr.hpp"

namespace tade::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream reserved for parameter initialisation; training epochs use split(e).
constexpr std::uint64_t kInitStream = ~std::uint64_t{0};
constexpr std::uint64_t kTrainSetStream = 1;
constexpr std::uint64_t kPoolStream = 2;

// Progress and summaries; silenced by --quiet. Errors always reach stderr.
class Log {
 public:
  void set_quiet(bool q) { quiet_ = q; }
  std::ostream& out() { return quiet_ ? null_ : std::cout; }
  std::ostream& err() { return quiet_ ? null_ : std::cerr; }

 private:
  bool quiet_ = false;
  std::ostream null_{nullptr};
};

struct Common {
  std::string config_path;
  bool quiet = false;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  // file < TADE_SEED < flags
  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    apply_env(c);
    for (const auto& o : overrides) apply_override(c, o);
    if (seed) {
      c.seed = *seed;
      c.train.seed = *seed;
    }
    c.validate();
    return c;
  }
};

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("-c,--config", common.config_path, "JSON run config");
  sub->add_option("--set", common.overrides, "Override a config key, e.g. train.epochs=10")
      ->take_all();
  sub->add_option("--seed", common.seed, "Top-level seed (overrides config and TADE_SEED)");
  sub->add_flag("-q,--quiet", common.quiet, "Suppress progress output");
}

Log g_log;

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& p, const std::string& text) {
  ensure_parent(p);
  io::write_file(p, text);
}

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

// A bare split name resolves inside the data directory.
fs::path resolve_split(const std::string& arg, const RunConfig& c) {
  if (arg.find('/') != std::string::npos || fs::path(arg).extension() == ".bin") return arg;
  return fs::path(c.paths.data_dir) / (arg + ".bin");
}

std::string split_label(const fs::path& p) { return p.stem().string(); }

std::vector<std::string> manifest_splits(const RunConfig& c) {
  const auto text = io::read_file(fs::path(c.paths.data_dir) / "manifest.json");
  std::vector<std::string> out;
  try {
    const auto manifest = json::parse(text);
    for (const auto& s : manifest.at("splits")) out.push_back(s.at("name").get<std::string>());
  } catch (const json::exception& e) {
    throw SchemaError(std::string("manifest: ") + e.what());
  }
  return out;
}

std::vector<double> read_weights(const fs::path& p) {
  const auto text = io::read_file(p);
  try {
    const auto j = json::parse(text);
    const auto& w = j.is_object() ? j.at("w") : j;
    return w.get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw SchemaError("weights " + p.string() + ": " + e.what());
  }
}

data::LongTailProfile train_profile(const model::Checkpoint& ck) {
  data::LongTailProfile p;
  p.counts = ck.train_counts;
  return p;
}

void check_split_shape(const model::ExpertModel& m, const data::Dataset& ds, const fs::path& p) {
  if (ds.dim() != m.arch.input_dim || ds.class_count() != m.classes())
    throw ShapeError("split " + p.string() + " has dim " + std::to_string(ds.dim()) + " and " +
                     std::to_string(ds.class_count()) + " classes; the model expects " +
                     std::to_string(m.arch.input_dim) + " and " + std::to_string(m.classes()));
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& c, const std::string& out_arg) {
  const fs::path dir = out_arg.empty() ? fs::path(c.paths.data_dir) : fs::path(out_arg);
  fs::create_directories(dir);
  const Rng stage = stage_rng(c, Stage::kData);
  const auto& d = c.data;

  auto train_rng = stage.split(kTrainSetStream);
  const auto train_profile =
      data::make_profile(d.classes, d.train_max_count, d.train_rho, data::Direction::kForward);
  const auto train_set = data::gen_gaussian_mixture(train_profile, d.dim, d.separation, train_rng);
  data::save_dataset(train_set, dir / "train.bin");

  auto pool_rng = stage.split(kPoolStream);
  const auto pool_profile =
      data::make_profile(d.classes, d.test_per_class, 1.0, data::Direction::kUniform);
  const auto pool = data::gen_gaussian_mixture(pool_profile, d.dim, d.separation, pool_rng);
  data::save_dataset(pool, dir / "pool.bin");

  std::vector<std::pair<data::Direction, double>> grid = {{data::Direction::kUniform, 1.0}};
  for (double rho : d.test_rhos) {
    if (rho == 1.0) continue;
    grid.emplace_back(data::Direction::kForward, rho);
    grid.emplace_back(data::Direction::kBackward, rho);
  }
  json splits = json::array();
  std::vector<std::string> seen;
  for (const auto& [dir_kind, rho] : grid) {
    const auto name = split_name(dir_kind, rho);
    if (std::find(seen.begin(), seen.end(), name) != seen.end()) continue;
    seen.push_back(name);
    auto rng = stage.split(name_stream(name));
    const auto split = data::make_test_split(pool, rho, dir_kind, rng);
    data::save_dataset(split, dir / (name + ".bin"));
    splits.push_back({{"name", name},
                      {"direction", data::to_string(dir_kind)},
                      {"rho", rho},
                      {"file", name + ".bin"},
                      {"samples", split.size()}});
  }
  // Paths are left out so relocated data stays byte-identical.
  json recorded = to_json(c);
  recorded.erase("paths");
  const json manifest = {{"format", "tade-manifest"},
                         {"config", recorded},
                         {"train", {{"file", "train.bin"}, {"samples", train_set.size()}}},
                         {"pool", {{"file", "pool.bin"}, {"samples", pool.size()}}},
                         {"splits", splits}};
  write_text(dir / "manifest.json", pretty(manifest));
  g_log.out() << "wrote " << train_set.size() << " training samples and " << splits.size()
            << " test splits to " << dir.string() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data_dir;
  std::string out;
  std::string stats;
  std::string resume;
  std::optional<std::size_t> stop_after;
};

int cmd_train(const RunConfig& c, const TrainArgs& a) {
  const fs::path data_dir = a.data_dir.empty() ? fs::path(c.paths.data_dir) : fs::path(a.data_dir);
  const fs::path out = a.out.empty() ? fs::path(c.paths.run_dir) / "model.ckpt" : fs::path(a.out);
  const fs::path stats =
      a.stats.empty() ? fs::path(c.paths.run_dir) / "train_stats.jsonl" : fs::path(a.stats);

  const auto train_set = data::load_dataset(data_dir / "train.bin");
  if (train_set.size() == 0) throw SchemaError("training set is empty");
  auto arch = c.architecture();
  arch.input_dim = train_set.dim();
  arch.classes = train_set.class_count();

  const Rng stage = stage_rng(c, Stage::kTrain);
  model::Checkpoint ck;
  std::size_t start = 0;
  if (!a.resume.empty()) {
    ck = model::load_checkpoint(a.resume);
    if (!(ck.model.arch == arch))
      throw ContractError("resume: checkpoint architecture differs from the configured one");
    if (ck.train_counts != train_set.profile.counts)
      throw ContractError("resume: checkpoint was trained on a different training set");
    if (!ck.opt) throw ContractError("resume: checkpoint carries no optimizer state");
    start = ck.epochs_completed;
  } else {
    auto init = stage.split(kInitStream);
    ck.model = model::init_model(arch, init);
    ck.model.seed = c.seed;
    ck.train_counts = train_set.profile.counts;
    ck.opt = train::OptState::for_model(ck.model);
  }
  const std::size_t stop = std::min(c.train.epochs, a.stop_after.value_or(c.train.epochs));
  if (start > stop) throw ContractError("resume: checkpoint is already past the requested epoch");

  ensure_parent(stats);
  if (start == 0) io::write_file(stats, "");
  train::train(ck.model, train_set, c.train, *ck.opt, stage, start, stop,
               [&](const train::EpochStats& s) {
                 io::append_file(stats, s.to_json().dump() + "\n");
                 g_log.err() << "epoch " << s.epoch + 1 << "/" << c.train.epochs
                           << " loss " << s.total_loss << "\n";
               });
  ck.epochs_completed = stop;
  ensure_parent(out);
  model::save_checkpoint(ck, out);
  g_log.out() << "checkpoint " << out.string() << " at epoch " << stop << "\n";
  return kExitOk;
}

struct AdaptArgs {
  std::string checkpoint;
  std::string split;
  std::string out;
  std::string trace;
};

int cmd_adapt(const RunConfig& c, const AdaptArgs& a) {
  const fs::path ckpt =
      a.checkpoint.empty() ? fs::path(c.paths.run_dir) / "model.ckpt" : fs::path(a.checkpoint);
  const fs::path split_path = resolve_split(a.split, c);
  const std::string name = split_label(split_path);
  const fs::path out =
      a.out.empty() ? fs::path(c.paths.run_dir) / ("weights_" + name + ".json") : fs::path(a.out);

  const auto ck = model::load_checkpoint(ckpt);
  const auto split = data::load_dataset(split_path);
  check_split_shape(ck.model, split, split_path);

  auto rng = stage_rng(c, Stage::kAdapt).split(name_stream(name));
  const auto res = aggr::adapt(ck.model, split.features, c.adapt_config(), rng);

  json trace = json::array();
  std::string lines;
  for (const auto& e : res.trace) {
    trace.push_back(e.to_json());
    lines += e.to_json().dump() + "\n";
  }
  const json doc = {{"format", "tade-weights"},
                    {"split", name},
                    {"w", res.state.w},
                    {"raw", res.state.raw},
                    {"stopped", res.state.stopped},
                    {"epochs_run", res.state.epoch},
                    {"stop_threshold", res.state.stop_threshold},
                    {"trace", trace}};
  write_text(out, pretty(doc));
  if (!a.trace.empty()) write_text(a.trace, lines);

  g_log.out() << name << ": w =";
  for (double w : res.state.w) g_log.out() << ' ' << w;
  g_log.out() << (res.state.stopped ? " (stopped)" : "") << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::vector<std::string> splits;
  std::vector<std::string> weights;
  std::string weights_dir;
  std::string variant;
  std::string out;
  std::string csv;
  std::optional<std::size_t> threads;
};

int cmd_eval(const RunConfig& c, const EvalArgs& a) {
  const fs::path ckpt =
      a.checkpoint.empty() ? fs::path(c.paths.run_dir) / "model.ckpt" : fs::path(a.checkpoint);
  std::vector<std::string> split_args = a.splits;
  if (split_args.empty() || (split_args.size() == 1 && split_args[0] == "all"))
    split_args = manifest_splits(c);
  if (split_args.empty()) throw SchemaError("eval: no test splits");
  if (a.weights.size() > 1 && a.weights.size() != split_args.size())
    throw SchemaError("eval: give one --weights file, or one per --split");
  if (!a.weights.empty() && !a.weights_dir.empty())
    throw SchemaError("eval: --weights and --weights-dir are exclusive");

  const auto ck = model::load_checkpoint(ckpt);
  const auto groups = data::percentile_groups(train_profile(ck));
  const std::size_t k = ck.model.experts();

  struct Job {
    fs::path path;
    std::string name;
    std::vector<double> w;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < split_args.size(); ++i) {
    Job j;
    j.path = resolve_split(split_args[i], c);
    j.name = split_label(j.path);
    if (!a.weights.empty()) {
      j.w = read_weights(a.weights.size() == 1 ? a.weights[0] : a.weights[i]);
    } else if (!a.weights_dir.empty()) {
      j.w = read_weights(fs::path(a.weights_dir) / ("weights_" + j.name + ".json"));
    } else {
      j.w.assign(k, 1.0 / static_cast<double>(k));
    }
    model::check_simplex(j.w, k);
    jobs.push_back(std::move(j));
  }
  const bool weighted = !a.weights.empty() || !a.weights_dir.empty();
  const std::string variant = !a.variant.empty() ? a.variant : weighted ? "adapted" : "uniform";

  // Each split draws from its own named stream, so the result is independent
  // of the thread count and scheduling.
  std::vector<eval::EvalReport> reports(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const auto ds = data::load_dataset(jobs[i].path);
        check_split_shape(ck.model, ds, jobs[i].path);
        auto rng = stage_rng(c, Stage::kEval).split(name_stream(jobs[i].name));
        reports[i] = eval::evaluate(ck.model, ds, jobs[i].w, groups, c.views, rng);
        reports[i].split = jobs[i].name;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t nthreads = a.threads.value_or(c.eval.threads);
  if (nthreads == 0) nthreads = std::max(1u, std::thread::hardware_concurrency());
  nthreads = std::min(nthreads, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  json doc = {{"format", "tade-eval"}, {"variant", variant}, {"reports", json::array()}};
  for (const auto& r : reports) doc["reports"].push_back(r.to_json());
  if (a.out.empty()) {
    std::cout << pretty(doc);
  } else {
    write_text(a.out, pretty(doc));
  }
  if (!a.csv.empty()) {
    const fs::path csv = a.csv;
    std::string rows;
    if (!fs::exists(csv) || fs::file_size(csv) == 0) rows = eval::EvalReport::csv_header() + "\n";
    for (const auto& r : reports) rows += r.csv_row(variant) + "\n";
    ensure_parent(csv);
    io::append_file(csv, rows);
  }
  for (const auto& r : reports)
    g_log.err() << r.split << " [" << variant << "] top1 " << r.top1 << "\n";
  return kExitOk;
}

struct ReportArgs {
  std::vector<std::string> csvs;
  std::string out_dir;
  std::string baseline = "uniform";
};

std::string file_safe(const std::string& s) {
  std::string out = s;
  for (char& ch : out)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.'))
      ch = '_';
  return out;
}

int cmd_report(const RunConfig& c, const ReportArgs& a) {
  std::vector<ReportRow> rows;
  for (const auto& p : a.csvs) {
    auto part = parse_eval_csv(io::read_file(p));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (rows.empty()) throw SchemaError("report: no result rows in the input");
  const fs::path dir =
      a.out_dir.empty() ? fs::path(c.paths.run_dir) / "report" : fs::path(a.out_dir);
  fs::create_directories(dir);
  write_text(dir / "summary.md", render_markdown(rows, a.baseline));
  std::vector<std::string> variants;
  for (const auto& r : rows)
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end())
      variants.push_back(r.variant);
  for (const auto& v : variants) write_text(dir / (file_safe(v) + ".tsv"), render_tsv(rows, v));
  g_log.out() << "report with " << rows.size() << " rows written to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ContractError& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return kExitContract;
  } catch (const Error& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  } catch (...) {
    std::cerr << "internal error\n";
    return 1;
  }
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Skill-diverse expert ensemble with test-time aggregation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;
  auto* gen = app.add_subcommand("gen-data", "Generate the training set and test splits");
  std::string gen_out;
  add_common(gen, common);
  gen->add_option("-o,--out-dir", gen_out, "Output directory (default paths.data_dir)");

  auto* trn = app.add_subcommand("train", "Train the multi-expert model");
  TrainArgs ta;
  add_common(trn, common);
  trn->add_option("--data-dir", ta.data_dir, "Directory holding train.bin");
  trn->add_option("-o,--out", ta.out, "Checkpoint path (default run_dir/model.ckpt)");
  trn->add_option("--stats", ta.stats, "Per-epoch JSONL stats path");
  trn->add_option("--resume", ta.resume, "Continue from this checkpoint");
  trn->add_option("--stop-after", ta.stop_after, "Stop once this many epochs are complete");

  auto* adp = app.add_subcommand("adapt", "Learn aggregation weights on an unlabeled split");
  AdaptArgs aa;
  add_common(adp, common);
  adp->add_option("--checkpoint", aa.checkpoint, "Model checkpoint");
  adp->add_option("--split", aa.split, "Split name or .bin path")->required();
  adp->add_option("-o,--out", aa.out, "Weights JSON (default run_dir/weights_<split>.json)");
  adp->add_option("--trace", aa.trace, "Per-epoch JSONL trace path");

  auto* evl = app.add_subcommand("eval", "Evaluate on one or more test splits");
  EvalArgs ea;
  add_common(evl, common);
  evl->add_option("--checkpoint", ea.checkpoint, "Model checkpoint");
  evl->add_option("--split", ea.splits, "Split names or .bin paths; 'all' or none = manifest");
  evl->add_option("--weights", ea.weights, "Weights JSON: one for all splits or one per split");
  evl->add_option("--weights-dir", ea.weights_dir, "Directory of weights_<split>.json files");
  evl->add_option("--variant", ea.variant, "Variant label for CSV rows");
  evl->add_option("-o,--out", ea.out, "Report JSON path (default stdout)");
  evl->add_option("--csv", ea.csv, "Append one CSV row per split here");
  evl->add_option("--threads", ea.threads, "Worker threads (0 = all cores)");

  auto* rep = app.add_subcommand("report", "Summarise eval CSV files");
  ReportArgs ra;
  add_common(rep, common);
  rep->add_option("--csv", ra.csvs, "Eval CSV files")->required();
  rep->add_option("-o,--out-dir", ra.out_dir, "Output directory (default run_dir/report)");
  rep->add_option("--baseline", ra.baseline, "Variant the delta columns subtract");

  auto* cfg = app.add_subcommand("config", "Print the effective run config as JSON");
  add_common(cfg, common);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    g_log.set_quiet(common.quiet);
    const RunConfig c = common.resolve();
    if (*gen) return cmd_gen_data(c, gen_out);
    if (*trn) return cmd_train(c, ta);
    if (*adp) return cmd_adapt(c, aa);
    if (*evl) return cmd_eval(c, ea);
    if (*rep) return cmd_report(c, ra);
    if (*cfg) {
      std::cout << pretty(to_json(c));
      return kExitOk;
    }
    return kExitInvalid;
  } catch (...) {
    return exit_code_for_current_exception();
  }
}

}  // namespace tade::cli
