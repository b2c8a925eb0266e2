// SPDX-License-Identifier: Apache-2.0
//
// Test-time self-supervised aggregation. The trained model is frozen; only K
// unconstrained parameters `raw` are learned, with w = softmax(raw) and the
// ensemble prediction softmax(sum_k w_k v_k). The objective is prediction
// stability
//
//     S = (1/n) sum_i  p(view1(x_i)) . p(view2(x_i))
//
// maximised by SGD ascent on unlabeled test features. Adaptation halts at the
// end of the first epoch in which some w_k <= stop_threshold.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"
#include "tade/data.hpp"
#include "tade/model.hpp"
#include "tade/rng.hpp"
#include "tade/train.hpp"

namespace tade::aggr {

inline constexpr double kDefaultStopThreshold = 0.05;

struct AggregationState {
  std::vector<double> raw;
  std::vector<double> w;
  double stop_threshold = kDefaultStopThreshold;
  std::size_t epoch = 0;
  bool stopped = false;

  static AggregationState uniform(std::size_t experts,
                                  double stop_threshold = kDefaultStopThreshold);
  /// Replaces raw and recomputes w = softmax(raw).
  void set_raw(std::vector<double> r);
};

struct StabilityReport {
  double S = 0.0;
  std::vector<double> per_batch;
};

/// Expert logits of both views of a batch; fixes the random draw so S and its
/// gradient can be evaluated repeatedly on the same views.
struct ViewLogits {
  std::vector<num::Matrix> first;
  std::vector<num::Matrix> second;

  std::size_t rows() const { return first.empty() ? 0 : first.front().rows(); }
};

ViewLogits view_logits(const model::ExpertModel& m, const num::Matrix& batch,
                       const data::ViewConfig& views, Rng& rng);

/// Mean over rows of softmax(sum_k w_k v1_k) . softmax(sum_k w_k v2_k).
double stability_of(const ViewLogits& vl, std::span<const double> w);
/// dS/dw on the simplex coordinates (no softmax chain).
std::vector<double> stability_grad_weights(const ViewLogits& vl, std::span<const double> w);
/// dS/draw, chained through w = softmax(raw).
std::vector<double> stability_grad_raw(const ViewLogits& vl, std::span<const double> raw);

/// S over `batch` split into chunks of `chunk` rows (0 = one chunk), drawing
/// fresh views for every row.
StabilityReport stability(const model::ExpertModel& m, const num::Matrix& batch,
                          const AggregationState& state, const data::ViewConfig& views, Rng& rng,
                          std::size_t chunk = 0);

/// Gradient of the S that stability() would report on the same rng state
/// (single chunk), with respect to state.raw.
std::vector<double> stability_grad_w(const model::ExpertModel& m, const num::Matrix& batch,
                                     const AggregationState& state,
                                     const data::ViewConfig& views, Rng& rng);

struct AdaptConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  bool nesterov = true;
  data::ViewConfig views;
  double stop_threshold = kDefaultStopThreshold;

  void validate() const;
  bool operator==(const AdaptConfig&) const = default;
};

struct AdaptEpoch {
  std::size_t epoch = 0;
  double S = 0.0;  // mean pre-step batch stability over the epoch
  std::vector<double> w;
  bool stopped = false;

  nlohmann::json to_json() const;
};

struct AdaptResult {
  AggregationState state;
  std::vector<AdaptEpoch> trace;
};

/// Learns aggregation weights from unlabeled features only. Throws
/// DivergenceError if S becomes NaN.
AdaptResult adapt(const model::ExpertModel& m, const num::Matrix& test_features,
                  const AdaptConfig& cfg, Rng& rng);

}  // namespace tade::aggr
