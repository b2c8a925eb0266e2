// SPDX-License-Identifier: Apache-2.0
//
// Multi-expert MLP: a shared ReLU backbone feeding K independent heads. Each
// head is zero or more ReLU hidden layers followed by a linear layer to C
// logits. Backward is hand-derived; the backbone receives the sum of every
// head's input gradient.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tade/numkit.hpp"
#include "tade/rng.hpp"

namespace tade::model {

/// y = x W + b with W stored in x out.
struct DenseLayer {
  num::Matrix weight;
  std::vector<double> bias;

  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }
  bool operator==(const DenseLayer&) const = default;
};

/// Parameter tensors in canonical order: backbone layers, then head 0's
/// layers, head 1's, and so on; within a layer the weight precedes the bias.
/// Gradients share this layout.
struct ParamSet {
  std::vector<DenseLayer> backbone;
  std::vector<std::vector<DenseLayer>> heads;

  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  /// Human-readable name per block, e.g. "head.2.1.bias".
  std::vector<std::string> block_names() const;
  std::size_t count() const;

  /// Same shapes, all zeros.
  ParamSet zeros_like() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const ParamSet&) const = default;
};

using ParamGrads = ParamSet;

struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> backbone_widths;
  std::vector<std::size_t> head_widths;
  std::size_t experts = 3;
  std::size_t classes = 0;

  /// Width feeding the heads (input_dim when the backbone is empty).
  std::size_t feature_dim() const {
    return backbone_widths.empty() ? input_dim : backbone_widths.back();
  }
  bool operator==(const Architecture&) const = default;
};

struct ExpertModel {
  Architecture arch;
  std::uint64_t seed = 0;
  ParamSet params;

  std::size_t experts() const { return arch.experts; }
  std::size_t classes() const { return arch.classes; }
  bool operator==(const ExpertModel&) const = default;
};

/// Weights ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)), biases zero.
ExpertModel init_model(const Architecture& arch, Rng& rng);

/// Cached activations for one batch. `inputs[l]` is what layer l consumed,
/// `pre[l]` its pre-activation output.
struct ForwardTrace {
  num::Matrix x;
  std::vector<num::Matrix> backbone_inputs;
  std::vector<num::Matrix> backbone_pre;
  num::Matrix features;
  std::vector<std::vector<num::Matrix>> head_inputs;
  std::vector<std::vector<num::Matrix>> head_pre;
};

struct ForwardResult {
  std::vector<num::Matrix> logits;  // one batch x C matrix per expert
  ForwardTrace trace;
};

ForwardResult forward(const ExpertModel& m, const num::Matrix& x);
/// Forward pass without keeping the trace.
std::vector<num::Matrix> expert_logits(const ExpertModel& m, const num::Matrix& x);

/// Gradient of sum_k L_k(v_k) with respect to every parameter, given each
/// expert's dL_k/dv_k. The trace is consumed.
ParamGrads backward(const ExpertModel& m, ForwardTrace&& trace,
                    std::span<const num::Matrix> grad_logits);

/// sum_k w_k v_k. w must have K non-negative entries summing to 1 within 1e-9;
/// otherwise ContractError.
num::Matrix ensemble_logits(std::span<const num::Matrix> logits, std::span<const double> w);
void check_simplex(std::span<const double> w, std::size_t experts);

/// Row-wise softmax of the weighted ensemble.
num::Matrix predict(const ExpertModel& m, const num::Matrix& x, std::span<const double> w);

}  // namespace tade::model
