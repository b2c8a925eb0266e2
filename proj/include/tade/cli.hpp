// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: gen-data, train, adapt, eval, report, config.
//
// Exit codes: 0 ok, 2 I/O, 3 divergence, 4 contract violation,
// 5 empty or invalid input.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tade/data.hpp"

namespace tade::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitContract = 4;
inline constexpr int kExitInvalid = 5;

/// Runs one command in-process. `args` excludes the program name. Messages go
/// to stderr; nothing is thrown.
int run(const std::vector<std::string>& args);

/// Maps the in-flight exception to an exit code, printing its message.
int exit_code_for_current_exception();

// ---------------------------------------------------------------------------
// Test-split naming shared by gen-data, eval and report.

/// "uniform", "forward_50", "backward_2.5".
std::string split_name(data::Direction d, double rho);

struct SplitKey {
  data::Direction direction = data::Direction::kUniform;
  double rho = 1.0;
};
/// Inverse of split_name; nullopt for names outside that scheme.
std::optional<SplitKey> parse_split_name(const std::string& name);

// ---------------------------------------------------------------------------
// Report assembly

struct ReportRow {
  std::string split;
  std::string variant;
  std::size_t samples = 0;
  double top1 = 0.0;
  std::optional<double> many, medium, few;
  double confidence = 0.0;
  double mi_nats = 0.0;
  double entropy_nats = 0.0;
  double stability = 0.0;
  std::string weights;
};

/// Parses eval CSV text (header required). SchemaError on a bad header or row.
std::vector<ReportRow> parse_eval_csv(const std::string& text);

/// Orders splits along the forward -> uniform -> backward axis (forward by
/// decreasing rho, backward by increasing rho); unknown names keep their
/// first-seen order after those.
std::vector<std::string> ordered_splits(const std::vector<ReportRow>& rows);

/// Markdown table of top-1 per split and variant, with a delta column for
/// every variant other than `baseline` when the baseline is present.
std::string render_markdown(const std::vector<ReportRow>& rows, const std::string& baseline);

/// Plot-ready TSV for one variant, rows in ordered_splits order.
std::string render_tsv(const std::vector<ReportRow>& rows, const std::string& variant);

}  // namespace tade::cli
