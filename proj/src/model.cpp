// SPDX-License-Identifier: Apache-2.0
#include "tade/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tade/error.hpp"

namespace tade::model {

namespace {

DenseLayer make_layer(std::size_t in, std::size_t out, Rng& rng) {
  DenseLayer layer{num::Matrix(in, out), std::vector<double>(out, 0.0)};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.weight.data()) w = rng.uniform(-limit, limit);
  return layer;
}

num::Matrix affine(const num::Matrix& a, const DenseLayer& layer) {
  auto out = num::matmul(a, layer.weight);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
  }
  return out;
}

num::Matrix relu(num::Matrix m) {
  for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
  return m;
}

// Zeroes g wherever the matching pre-activation was not positive.
void relu_backward(num::Matrix& g, const num::Matrix& pre) {
  auto& gd = g.data();
  const auto& pd = pre.data();
  for (std::size_t i = 0; i < gd.size(); ++i)
    if (!(pd[i] > 0.0)) gd[i] = 0.0;
}

void accumulate_layer_grad(DenseLayer& grad, const num::Matrix& input, const num::Matrix& g) {
  grad.weight = num::matmul_tn(input, g);
  std::fill(grad.bias.begin(), grad.bias.end(), 0.0);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    auto row = g.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) grad.bias[c] += row[c];
  }
}

void add_into(num::Matrix& acc, const num::Matrix& x) {
  auto& a = acc.data();
  const auto& b = x.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace

std::vector<std::span<double>> ParamSet::blocks() {
  std::vector<std::span<double>> out;
  auto push = [&](DenseLayer& l) {
    out.emplace_back(l.weight.data());
    out.emplace_back(l.bias);
  };
  for (auto& l : backbone) push(l);
  for (auto& head : heads)
    for (auto& l : head) push(l);
  return out;
}

std::vector<std::span<const double>> ParamSet::blocks() const {
  std::vector<std::span<const double>> out;
  auto push = [&](const DenseLayer& l) {
    out.emplace_back(l.weight.data());
    out.emplace_back(l.bias);
  };
  for (const auto& l : backbone) push(l);
  for (const auto& head : heads)
    for (const auto& l : head) push(l);
  return out;
}

std::vector<std::string> ParamSet::block_names() const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < backbone.size(); ++l) {
    out.push_back("backbone." + std::to_string(l) + ".weight");
    out.push_back("backbone." + std::to_string(l) + ".bias");
  }
  for (std::size_t h = 0; h < heads.size(); ++h) {
    for (std::size_t l = 0; l < heads[h].size(); ++l) {
      const auto stem = "head." + std::to_string(h) + "." + std::to_string(l);
      out.push_back(stem + ".weight");
      out.push_back(stem + ".bias");
    }
  }
  return out;
}

std::size_t ParamSet::count() const {
  std::size_t n = 0;
  for (auto b : blocks()) n += b.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z = *this;
  for (auto b : z.blocks()) std::fill(b.begin(), b.end(), 0.0);
  return z;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(count());
  for (auto b : blocks()) flat.insert(flat.end(), b.begin(), b.end());
  return flat;
}

void ParamSet::assign(std::span<const double> flat) {
  if (flat.size() != count()) throw ShapeError("ParamSet::assign: parameter count mismatch");
  std::size_t pos = 0;
  for (auto b : blocks()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), b.size(), b.begin());
    pos += b.size();
  }
}

ExpertModel init_model(const Architecture& arch, Rng& rng) {
  if (arch.experts < 2) throw DomainError("init_model: need at least 2 experts");
  if (arch.classes < 2) throw DomainError("init_model: need at least 2 classes");
  if (arch.input_dim == 0) throw DomainError("init_model: input_dim must be positive");

  ExpertModel m;
  m.arch = arch;
  m.seed = rng.seed();
  std::size_t width = arch.input_dim;
  for (std::size_t w : arch.backbone_widths) {
    m.params.backbone.push_back(make_layer(width, w, rng));
    width = w;
  }
  for (std::size_t k = 0; k < arch.experts; ++k) {
    std::vector<DenseLayer> head;
    std::size_t hw = width;
    for (std::size_t w : arch.head_widths) {
      head.push_back(make_layer(hw, w, rng));
      hw = w;
    }
    head.push_back(make_layer(hw, arch.classes, rng));
    m.params.heads.push_back(std::move(head));
  }
  return m;
}

ForwardResult forward(const ExpertModel& m, const num::Matrix& x) {
  if (x.cols() != m.arch.input_dim) {
    std::ostringstream msg;
    msg << "forward: input has " << x.cols() << " columns, model expects " << m.arch.input_dim;
    throw ShapeError(msg.str());
  }
  ForwardResult res;
  auto& tr = res.trace;
  tr.x = x;
  num::Matrix a = x;
  for (const auto& layer : m.params.backbone) {
    tr.backbone_inputs.push_back(a);
    auto pre = affine(a, layer);
    a = relu(pre);
    tr.backbone_pre.push_back(std::move(pre));
  }
  tr.features = a;

  for (const auto& head : m.params.heads) {
    std::vector<num::Matrix> inputs;
    std::vector<num::Matrix> pres;
    num::Matrix h = tr.features;
    for (std::size_t l = 0; l < head.size(); ++l) {
      inputs.push_back(h);
      auto pre = affine(h, head[l]);
      h = (l + 1 < head.size()) ? relu(pre) : pre;
      pres.push_back(std::move(pre));
    }
    res.logits.push_back(std::move(h));
    tr.head_inputs.push_back(std::move(inputs));
    tr.head_pre.push_back(std::move(pres));
  }
  return res;
}

std::vector<num::Matrix> expert_logits(const ExpertModel& m, const num::Matrix& x) {
  return forward(m, x).logits;
}

ParamGrads backward(const ExpertModel& m, ForwardTrace&& trace,
                    std::span<const num::Matrix> grad_logits) {
  const ForwardTrace tr = std::move(trace);
  if (grad_logits.size() != m.params.heads.size() || tr.head_inputs.size() != m.params.heads.size())
    throw ShapeError("backward: expert count mismatch between model, trace and gradients");

  ParamGrads grads = m.params.zeros_like();
  const std::size_t batch = tr.x.rows();
  num::Matrix feature_grad(batch, tr.features.cols());

  for (std::size_t k = 0; k < m.params.heads.size(); ++k) {
    const auto& head = m.params.heads[k];
    if (grad_logits[k].rows() != batch || grad_logits[k].cols() != m.arch.classes)
      throw ShapeError("backward: gradient shape does not match logits");
    num::Matrix g = grad_logits[k];
    for (std::size_t l = head.size(); l-- > 0;) {
      accumulate_layer_grad(grads.heads[k][l], tr.head_inputs[k][l], g);
      g = num::matmul_nt(g, head[l].weight);
      if (l > 0) relu_backward(g, tr.head_pre[k][l - 1]);
    }
    add_into(feature_grad, g);
  }

  num::Matrix g = std::move(feature_grad);
  for (std::size_t l = m.params.backbone.size(); l-- > 0;) {
    relu_backward(g, tr.backbone_pre[l]);
    accumulate_layer_grad(grads.backbone[l], tr.backbone_inputs[l], g);
    if (l > 0) g = num::matmul_nt(g, m.params.backbone[l].weight);
  }
  return grads;
}

void check_simplex(std::span<const double> w, std::size_t experts) {
  std::ostringstream msg;
  if (w.size() != experts) {
    msg << "aggregation weights: expected " << experts << " entries, got " << w.size();
    throw ContractError(msg.str());
  }
  double sum = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      msg << "aggregation weights: entries must be finite and non-negative";
      throw ContractError(msg.str());
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    msg.precision(17);
    msg << "aggregation weights must sum to 1 (got " << sum << ")";
    throw ContractError(msg.str());
  }
}

num::Matrix ensemble_logits(std::span<const num::Matrix> logits, std::span<const double> w) {
  check_simplex(w, logits.size());
  if (logits.empty()) return {};
  num::Matrix out(logits.front().rows(), logits.front().cols());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (logits[k].rows() != out.rows() || logits[k].cols() != out.cols())
      throw ShapeError("ensemble_logits: experts disagree on shape");
    auto& o = out.data();
    const auto& v = logits[k].data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += w[k] * v[i];
  }
  return out;
}

num::Matrix predict(const ExpertModel& m, const num::Matrix& x, std::span<const double> w) {
  const auto logits = expert_logits(m, x);
  return num::softmax_rows(ensemble_logits(logits, w));
}

}  // namespace tade::model
