// SPDX-License-Identifier: Apache-2.0
#include "tade/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tade/error.hpp"
#include "tade/ttaggr.hpp"

namespace tade::eval {

std::vector<int> hard_predictions(const num::Matrix& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) out[r] = static_cast<int>(num::argmax(probs.row(r)));
  return out;
}

double top1(const num::Matrix& probs, std::span<const int> labels) {
  if (labels.size() != probs.rows()) throw ShapeError("top1: label count != rows");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < probs.rows(); ++r)
    if (static_cast<int>(num::argmax(probs.row(r))) == labels[r]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

GroupAccuracy group_accuracy(const num::Matrix& probs, std::span<const int> labels,
                             const data::ClassGroups& groups) {
  if (labels.size() != probs.rows()) throw ShapeError("group_accuracy: label count != rows");
  std::size_t classes = probs.cols();
  // 0 = many, 1 = medium, 2 = few, 3 = unassigned
  std::vector<int> group_of(classes, 3);
  auto mark = [&](const std::vector<std::size_t>& ks, int g) {
    for (auto k : ks)
      if (k < classes) group_of[k] = g;
  };
  mark(groups.many, 0);
  mark(groups.medium, 1);
  mark(groups.few, 2);

  std::size_t hits[3] = {0, 0, 0};
  std::size_t totals[3] = {0, 0, 0};
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto y = static_cast<std::size_t>(labels[r]);
    if (y >= classes || group_of[y] == 3) continue;
    const int g = group_of[y];
    ++totals[g];
    if (num::argmax(probs.row(r)) == y) ++hits[g];
  }
  auto acc = [&](int g) -> std::optional<double> {
    if (totals[g] == 0) return std::nullopt;
    return static_cast<double>(hits[g]) / static_cast<double>(totals[g]);
  };
  return {acc(0), acc(1), acc(2), totals[0], totals[1], totals[2]};
}

double confidence(const num::Matrix& probs) {
  if (probs.rows() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    sum += *std::max_element(row.begin(), row.end());
  }
  return sum / static_cast<double>(probs.rows());
}

InfoStats mi_and_entropy(std::span<const int> predictions, std::span<const int> labels,
                         std::size_t classes) {
  if (predictions.size() != labels.size()) throw ShapeError("mi_and_entropy: length mismatch");
  if (predictions.empty()) throw DomainError("mi_and_entropy: empty input");
  std::vector<double> joint(classes * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto a = static_cast<std::size_t>(predictions[i]);
    const auto b = static_cast<std::size_t>(labels[i]);
    if (a >= classes || b >= classes) throw IndexError("mi_and_entropy: class index out of range");
    joint[a * classes + b] += 1.0;
  }
  const double n = static_cast<double>(labels.size());
  std::vector<double> p_pred(classes, 0.0), p_label(classes, 0.0);
  for (auto& v : joint) v /= n;
  for (std::size_t a = 0; a < classes; ++a)
    for (std::size_t b = 0; b < classes; ++b) {
      p_pred[a] += joint[a * classes + b];
      p_label[b] += joint[a * classes + b];
    }

  auto entropy = [](const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
      if (v > 0.0) h -= v * std::log(v);
    return h;
  };
  InfoStats s;
  s.entropy_nats = entropy(p_pred);
  s.label_entropy_nats = entropy(p_label);
  double mi = 0.0;
  for (std::size_t a = 0; a < classes; ++a)
    for (std::size_t b = 0; b < classes; ++b) {
      const double pj = joint[a * classes + b];
      if (pj > 0.0) mi += pj * std::log(pj / (p_pred[a] * p_label[b]));
    }
  s.mi_nats = std::max(0.0, mi);
  return s;
}

IdentityCheck identity_check(const num::Matrix& vectors, std::span<const int> labels) {
  if (labels.size() != vectors.rows()) throw ShapeError("identity_check: label count != rows");
  for (std::size_t r = 0; r < vectors.rows(); ++r) {
    const double norm = std::sqrt(num::dot(vectors.row(r), vectors.row(r)));
    if (std::abs(norm - 1.0) > 1e-12) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "identity_check: row " << r << " has L2 norm " << norm << ", expected 1";
      throw ContractError(msg.str());
    }
  }

  int max_label = -1;
  for (int y : labels) {
    if (y < 0) throw IndexError("identity_check: negative label");
    max_label = std::max(max_label, y);
  }
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(max_label + 1));
  for (std::size_t r = 0; r < labels.size(); ++r)
    members[static_cast<std::size_t>(labels[r])].push_back(r);

  const std::size_t dim = vectors.cols();
  IdentityCheck out;
  for (const auto& z : members) {
    if (z.empty()) continue;
    const double size = static_cast<double>(z.size());

    double sq = 0.0;
    double pairwise = 0.0;
    for (auto j : z) {
      sq += num::dot(vectors.row(j), vectors.row(j));
      for (auto jp : z) pairwise += num::dot(vectors.row(j), vectors.row(jp));
    }
    out.lhs += sq - pairwise / size;

    std::vector<double> centre(dim, 0.0);
    for (auto j : z) {
      auto row = vectors.row(j);
      for (std::size_t d = 0; d < dim; ++d) centre[d] += row[d];
    }
    for (double& c : centre) c /= size;
    for (auto j : z) {
      auto row = vectors.row(j);
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = row[d] - centre[d];
        out.rhs += diff * diff;
      }
    }
  }
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

num::Matrix l2_normalize_rows(const num::Matrix& m) {
  num::Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double norm = std::sqrt(num::dot(row, row));
    if (norm == 0.0) throw DomainError("l2_normalize_rows: zero row");
    for (double& v : row) v /= norm;
  }
  return out;
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string opt_csv(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream ss;
  ss.precision(17);
  ss << *v;
  return ss.str();
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  return {{"split", split},
          {"samples", samples},
          {"top1", top1},
          {"group_acc",
           {{"many", opt_json(groups.many)},
            {"medium", opt_json(groups.medium)},
            {"few", opt_json(groups.few)}}},
          {"group_samples",
           {{"many", groups.many_n}, {"medium", groups.medium_n}, {"few", groups.few_n}}},
          {"confidence", confidence},
          {"mi_nats", mi_nats},
          {"entropy_nats", entropy_nats},
          {"stability", stability},
          {"weights_used", weights_used}};
}

std::string EvalReport::csv_header() {
  return "split,variant,samples,top1,many,medium,few,confidence,mi_nats,entropy_nats,stability,"
         "weights";
}

std::string EvalReport::csv_row(const std::string& variant) const {
  std::ostringstream ss;
  ss.precision(17);
  ss << split << ',' << variant << ',' << samples << ',' << top1 << ',' << opt_csv(groups.many)
     << ',' << opt_csv(groups.medium) << ',' << opt_csv(groups.few) << ',' << confidence << ','
     << mi_nats << ',' << entropy_nats << ',' << stability << ',';
  for (std::size_t k = 0; k < weights_used.size(); ++k) ss << (k ? ";" : "") << weights_used[k];
  return ss.str();
}

EvalReport evaluate(const model::ExpertModel& m, const data::Dataset& test,
                    std::span<const double> w, const data::ClassGroups& groups,
                    const data::ViewConfig& views, Rng& rng) {
  const auto probs = model::predict(m, test.features, w);
  EvalReport rep;
  rep.samples = test.size();
  rep.top1 = top1(probs, test.labels);
  rep.groups = group_accuracy(probs, test.labels, groups);
  rep.confidence = confidence(probs);
  if (!test.labels.empty()) {
    const auto info = mi_and_entropy(hard_predictions(probs), test.labels, m.classes());
    rep.mi_nats = info.mi_nats;
    rep.entropy_nats = info.entropy_nats;
  }
  aggr::AggregationState state;
  state.w.assign(w.begin(), w.end());
  rep.stability = aggr::stability(m, test.features, state, views, rng, 128).S;
  rep.weights_used.assign(w.begin(), w.end());
  return rep;
}

}  // namespace tade::eval
