// SPDX-License-Identifier: Apache-2.0
#include "tade/losses.hpp"

#include <cmath>
#include <sstream>

#include "tade/error.hpp"

namespace tade::loss {

std::vector<ExpertAdjustment> expert_adjustments(std::size_t experts, double lambda) {
  if (experts < 2) throw DomainError("expert_adjustments: need at least 2 experts");
  std::vector<ExpertAdjustment> out{{0.0, 0.0}};
  if (experts == 2) {
    out.push_back({1.0, lambda});
    return out;
  }
  const double steps = static_cast<double>(experts - 2);
  for (std::size_t i = 0; i + 1 < experts; ++i)
    out.push_back({1.0, lambda * static_cast<double>(i) / steps});
  return out;
}

std::vector<double> logit_offset(const data::ClassPrior& prior, const ExpertAdjustment& adj) {
  if (prior.pi.size() != prior.pi_bar.size()) throw ShapeError("prior: pi / pi_bar length mismatch");
  std::vector<double> offset(prior.pi.size(), 0.0);
  for (std::size_t k = 0; k < offset.size(); ++k) {
    if (!(prior.pi[k] > 0.0) || !(prior.pi_bar[k] > 0.0))
      throw DomainError("logit adjustment needs a strictly positive prior");
    offset[k] = adj.alpha * std::log(prior.pi[k]) - adj.beta * std::log(prior.pi_bar[k]);
  }
  return offset;
}

std::vector<double> adjusted_probs(std::span<const double> logits, const data::ClassPrior& prior,
                                   const ExpertAdjustment& adj) {
  const auto offset = logit_offset(prior, adj);
  if (offset.size() != logits.size()) throw ShapeError("adjusted_probs: logits / prior mismatch");
  std::vector<double> shifted(logits.begin(), logits.end());
  for (std::size_t k = 0; k < shifted.size(); ++k) shifted[k] += offset[k];
  return num::softmax(shifted);
}

LossValue adjusted_ce(const num::Matrix& logits, std::span<const int> labels,
                      std::span<const double> offset) {
  if (labels.size() != logits.rows()) throw ShapeError("loss: label count != batch size");
  if (offset.size() != logits.cols()) throw ShapeError("loss: offset length != class count");
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  LossValue out{0.0, num::Matrix(n, c)};
  if (n == 0) return out;

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> shifted(c);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      std::ostringstream msg;
      msg << "loss: label " << y << " out of range for " << c << " classes";
      throw IndexError(msg.str());
    }
    auto v = logits.row(i);
    for (std::size_t k = 0; k < c; ++k) shifted[k] = v[k] + offset[k];
    const auto logp = num::log_softmax(shifted);
    out.value -= logp[static_cast<std::size_t>(y)];
    auto g = out.grad_logits.row(i);
    for (std::size_t k = 0; k < c; ++k) g[k] = std::exp(logp[k]) * inv_n;
    g[static_cast<std::size_t>(y)] -= inv_n;
  }
  out.value *= inv_n;
  return out;
}

LossValue ce_loss(const num::Matrix& logits, std::span<const int> labels) {
  const std::vector<double> zero(logits.cols(), 0.0);
  return adjusted_ce(logits, labels, zero);
}

LossValue bal_loss(const num::Matrix& logits, std::span<const int> labels,
                   const data::ClassPrior& prior) {
  return expert_loss(logits, labels, prior, {1.0, 0.0});
}

LossValue inv_loss(const num::Matrix& logits, std::span<const int> labels,
                   const data::ClassPrior& prior, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("inv_loss: lambda must be >= 0");
  return expert_loss(logits, labels, prior, {1.0, lambda});
}

LossValue expert_loss(const num::Matrix& logits, std::span<const int> labels,
                      const data::ClassPrior& prior, const ExpertAdjustment& adj) {
  return adjusted_ce(logits, labels, logit_offset(prior, adj));
}

}  // namespace tade::loss
