// SPDX-License-Identifier: Apache-2.0
//
// Expertise-guided losses. Each is softmax cross-entropy on logits shifted by
// a class-dependent offset
//
//     offset_k = alpha * log(pi_k) - beta * log(pi_bar_k)
//
// (alpha, beta) = (0, 0) is plain cross-entropy (forward expert),
// (1, 0) the balanced softmax loss (uniform expert) and (1, lambda) the
// inverse softmax loss (backward expert).
#pragma once

#include <span>
#include <vector>

#include "tade/data.hpp"
#include "tade/numkit.hpp"

namespace tade::loss {

struct ExpertAdjustment {
  double alpha = 0.0;
  double beta = 0.0;
  bool operator==(const ExpertAdjustment&) const = default;
};

inline constexpr double kDefaultLambda = 2.0;

/// Adjustments for K experts: expert 0 is (0, 0); experts 1..K-1 get alpha = 1
/// and beta evenly spaced over [0, lambda]. K = 3 gives exactly
/// {(0,0), (1,0), (1,lambda)}; K = 2 gives {(0,0), (1,lambda)}.
std::vector<ExpertAdjustment> expert_adjustments(std::size_t experts, double lambda);

struct LossValue {
  double value = 0.0;
  num::Matrix grad_logits;
};

/// Per-class offset alpha * log pi - beta * log pi_bar. Throws DomainError on
/// a non-positive prior entry.
std::vector<double> logit_offset(const data::ClassPrior& prior, const ExpertAdjustment& adj);

std::vector<double> adjusted_probs(std::span<const double> logits, const data::ClassPrior& prior,
                                   const ExpertAdjustment& adj);

/// Mean cross-entropy of softmax(v_i + offset) against y_i, and its gradient
/// with respect to v (already divided by the batch size).
LossValue adjusted_ce(const num::Matrix& logits, std::span<const int> labels,
                      std::span<const double> offset);

LossValue ce_loss(const num::Matrix& logits, std::span<const int> labels);
LossValue bal_loss(const num::Matrix& logits, std::span<const int> labels,
                   const data::ClassPrior& prior);
LossValue inv_loss(const num::Matrix& logits, std::span<const int> labels,
                   const data::ClassPrior& prior, double lambda);
LossValue expert_loss(const num::Matrix& logits, std::span<const int> labels,
                      const data::ClassPrior& prior, const ExpertAdjustment& adj);

}  // namespace tade::loss
