// SPDX-License-Identifier: Apache-2.0
//
// Evaluation protocol and diagnostics: top-1 and per-group accuracy, mean
// max-probability confidence, plug-in I(Yhat;Y) and H(Yhat), and the
// class-hard-mean tightness identity.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tade/data.hpp"
#include "tade/model.hpp"
#include "tade/numkit.hpp"
#include "tade/rng.hpp"

namespace tade::eval {

/// Row argmaxes (ties to the lowest index).
std::vector<int> hard_predictions(const num::Matrix& probs);

double top1(const num::Matrix& probs, std::span<const int> labels);

/// Accuracy per group; a group with no test samples is std::nullopt.
struct GroupAccuracy {
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
  std::size_t many_n = 0;
  std::size_t medium_n = 0;
  std::size_t few_n = 0;
};

GroupAccuracy group_accuracy(const num::Matrix& probs, std::span<const int> labels,
                             const data::ClassGroups& groups);

double confidence(const num::Matrix& probs);

struct InfoStats {
  double mi_nats = 0.0;
  double entropy_nats = 0.0;        // H(Yhat)
  double label_entropy_nats = 0.0;  // H(Y)
};

/// Plug-in estimates from the joint count matrix of (prediction, label).
InfoStats mi_and_entropy(std::span<const int> predictions, std::span<const int> labels,
                         std::size_t classes);

struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
};

/// lhs = sum_k [ sum_{j in Z_k} |y_j|^2 - (1/|Z_k|) sum_{j,j' in Z_k} y_j . y_j' ]
/// rhs = sum_k   sum_{j in Z_k} |y_j - c_k|^2,  c_k the class hard mean.
/// Rows must have unit L2 norm within 1e-12 (ContractError otherwise).
IdentityCheck identity_check(const num::Matrix& vectors, std::span<const int> labels);

/// Rows scaled to unit L2 norm.
num::Matrix l2_normalize_rows(const num::Matrix& m);

struct EvalReport {
  std::string split;
  std::size_t samples = 0;
  double top1 = 0.0;
  GroupAccuracy groups;
  double confidence = 0.0;
  double mi_nats = 0.0;
  double entropy_nats = 0.0;
  double stability = 0.0;
  std::vector<double> weights_used;

  nlohmann::json to_json() const;
  /// One CSV row: see csv_header().
  std::string csv_row(const std::string& variant) const;
  static std::string csv_header();
};

/// Predicts with weights w, then assembles every metric; stability uses fresh
/// views drawn from rng.
EvalReport evaluate(const model::ExpertModel& m, const data::Dataset& test,
                    std::span<const double> w, const data::ClassGroups& groups,
                    const data::ViewConfig& views, Rng& rng);

}  // namespace tade::eval
