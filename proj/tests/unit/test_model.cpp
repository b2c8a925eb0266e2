// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "../support.hpp"
#include "doctest.h"
#include "tade/error.hpp"
#include "tade/losses.hpp"
#include "tade/model.hpp"

using namespace tade;
using num::Matrix;

namespace {

model::ExpertModel small_model(std::uint64_t seed, model::Architecture arch = {4, {6, 5}, {3}, 3, 3}) {
  Rng rng(seed);
  return model::init_model(arch, rng);
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("init is deterministic and shaped by the architecture") {
    const auto a = small_model(1), b = small_model(1), c = small_model(2);
    CHECK(a == b);
    CHECK(!(a.params == c.params));
    REQUIRE(a.params.backbone.size() == 2);
    CHECK(a.params.backbone[0].in() == 4);
    CHECK(a.params.backbone[1].out() == 5);
    REQUIRE(a.params.heads.size() == 3);
    CHECK(a.params.heads[0].size() == 2);
    CHECK(a.params.heads[0][0].in() == 5);
    CHECK(a.params.heads[0][1].out() == 3);
    // 4*6+6 + 6*5+5 + 3 * (5*3+3 + 3*3+3)
    CHECK(a.params.count() == 30 + 35 + 3 * 30);
    CHECK(a.params.block_names().size() == a.params.blocks().size());
  }

  TEST_CASE("init rejects degenerate architectures") {
    Rng rng(1);
    CHECK_THROWS_AS(model::init_model({4, {}, {}, 1, 3}, rng), DomainError);
    CHECK_THROWS_AS(model::init_model({4, {}, {}, 2, 1}, rng), DomainError);
  }

  TEST_CASE("xavier scale") {
    Rng rng(3);
    const auto m = model::init_model({200, {300}, {}, 2, 10}, rng);
    const auto& w = m.params.backbone[0].weight.data();
    double s2 = 0;
    for (double v : w) s2 += v * v;
    const double sd = std::sqrt(s2 / static_cast<double>(w.size()));
    const double expected = std::sqrt(6.0 / 500.0) / std::sqrt(3.0);  // sd of U(-a, a)
    CHECK(std::abs(sd - expected) < 0.1 * expected);
    for (double b : m.params.backbone[0].bias) CHECK(b == 0.0);
  }

  TEST_CASE("flatten and assign round-trip") {
    auto m = small_model(4);
    auto flat = m.params.flatten();
    for (double& v : flat) v += 1.0;
    m.params.assign(flat);
    CHECK(m.params.flatten() == flat);
    CHECK_THROWS_AS(m.params.assign(std::vector<double>(3)), ShapeError);
  }

  TEST_CASE("forward basics") {
    auto m = small_model(5);
    for (auto b : m.params.blocks())
      for (double& v : b) v = 0.0;
    const auto z = model::expert_logits(m, Matrix(1, 4, 1.0));
    for (const auto& l : z)
      for (double v : l.data()) CHECK(v == 0.0);

    auto n = small_model(6);
    const auto x = Matrix::from_rows({{1, 2, 3, 4}, {1, 2, 3, 4}});
    for (const auto& l : model::expert_logits(n, x))
      for (std::size_t j = 0; j < l.cols(); ++j) CHECK(l(0, j) == l(1, j));
    CHECK_THROWS_AS(model::expert_logits(n, Matrix(1, 3)), ShapeError);
  }

  TEST_CASE("linear-only model is an explicit affine map") {
    Rng rng(7);
    auto m = small_model(7, {3, {}, {}, 2, 4});
    testing::randomize_params(m, rng);
    const auto x = testing::random_matrix(5, 3, rng);
    const auto logits = model::expert_logits(m, x);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& layer = m.params.heads[k][0];
      auto ref = num::matmul(x, layer.weight);
      for (std::size_t r = 0; r < ref.rows(); ++r)
        for (std::size_t c = 0; c < ref.cols(); ++c)
          CHECK(logits[k](r, c) == doctest::Approx(ref(r, c) + layer.bias[c]).epsilon(1e-13));
    }
  }

  TEST_CASE("zero logit gradients give zero parameter gradients") {
    auto m = small_model(8);
    Rng rng(8);
    auto fr = model::forward(m, testing::random_matrix(3, 4, rng));
    std::vector<Matrix> g(3, Matrix(3, 3));
    const auto grads = model::backward(m, std::move(fr.trace), g);
    for (double v : grads.flatten()) CHECK(v == 0.0);
  }

  TEST_CASE("linear head gradient closed form") {
    Rng rng(9);
    auto m = small_model(9, {3, {}, {}, 2, 4});
    testing::randomize_params(m, rng);
    const auto x = testing::random_matrix(6, 3, rng);
    const auto y = testing::random_labels(6, 4, rng);
    auto fr = model::forward(m, x);
    const auto lv = loss::ce_loss(fr.logits[0], y);
    std::vector<Matrix> g = {lv.grad_logits, Matrix(6, 4)};
    const auto grads = model::backward(m, std::move(fr.trace), g);
    // x^T (softmax(v) - onehot) / batch
    auto delta = num::softmax_rows(model::expert_logits(m, x)[0]);
    for (std::size_t i = 0; i < 6; ++i) delta(i, static_cast<std::size_t>(y[i])) -= 1.0;
    auto ref = num::matmul_tn(x, delta);
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(grads.heads[0][0].weight.data()[i] == doctest::Approx(ref.data()[i] / 6).epsilon(1e-12));
    for (double v : grads.heads[1][0].weight.data()) CHECK(v == 0.0);
  }

  TEST_CASE("full backward matches finite differences") {
    Rng rng(10);
    for (int t = 0; t < 20; ++t) {
      auto m = small_model(100 + t, {3, {4, 3}, {3}, 3, 3});
      testing::randomize_params(m, rng);
      const auto x = testing::random_matrix(3, 3, rng);
      const auto y = testing::random_labels(3, 3, rng);
      const auto prior = testing::random_prior(3, rng);
      const auto adj = loss::expert_adjustments(3, 2.0);
      auto f = [&](const model::ExpertModel& mm) {
        const auto logits = model::expert_logits(mm, x);
        double s = 0;
        for (std::size_t k = 0; k < 3; ++k) s += loss::expert_loss(logits[k], y, prior, adj[k]).value;
        return s;
      };
      auto fr = model::forward(m, x);
      std::vector<Matrix> g;
      for (std::size_t k = 0; k < 3; ++k)
        g.push_back(loss::expert_loss(fr.logits[k], y, prior, adj[k]).grad_logits);
      const auto analytic = model::backward(m, std::move(fr.trace), g).flatten();
      const auto numeric = num::finite_diff_grad(
          [&](std::span<const double> p) {
            auto mm = m;
            mm.params.assign(p);
            return f(mm);
          },
          m.params.flatten());
      CHECK(testing::grad_mismatch(analytic, numeric, 1e-5) <= 1.0);
    }
  }

  TEST_CASE("ensemble logits") {
    Rng rng(11);
    std::vector<Matrix> same(3, testing::random_matrix(2, 4, rng));
    const std::vector<double> u(3, 1.0 / 3);
    const auto e = model::ensemble_logits(same, u);
    for (std::size_t i = 0; i < e.size(); ++i)
      CHECK(e.data()[i] == doctest::Approx(same[0].data()[i]).epsilon(1e-15));

    std::vector<Matrix> v = {testing::random_matrix(2, 4, rng), testing::random_matrix(2, 4, rng),
                             testing::random_matrix(2, 4, rng)};
    const std::vector<double> e2 = {0, 1, 0};
    CHECK(model::ensemble_logits(v, e2) == v[1]);
    const std::vector<double> w = {0.5, 0.3, 0.2};
    const auto mix = model::ensemble_logits(v, w);
    for (std::size_t i = 0; i < mix.size(); ++i)
      CHECK(mix.data()[i] == doctest::Approx(0.5 * v[0].data()[i] + 0.3 * v[1].data()[i] +
                                             0.2 * v[2].data()[i])
                                 .epsilon(1e-14));
  }

  TEST_CASE("simplex contract") {
    CHECK_NOTHROW(model::check_simplex(std::vector<double>{0.2, 0.8}, 2));
    CHECK_THROWS_AS(model::check_simplex(std::vector<double>{0.5, 0.6}, 2), ContractError);
    CHECK_THROWS_AS(model::check_simplex(std::vector<double>{1.2, -0.2}, 2), ContractError);
    CHECK_THROWS_AS(model::check_simplex(std::vector<double>{1.0}, 2), ContractError);
  }

  TEST_CASE("predict") {
    auto m = small_model(12, {2, {}, {}, 2, 2});
    for (auto b : m.params.blocks())
      for (double& v : b) v = 0.0;
    const auto p = model::predict(m, Matrix(3, 2, 1.0), std::vector<double>{0.5, 0.5});
    for (double v : p.data()) CHECK(v == 0.5);

    auto n = small_model(13);
    Rng rng(13);
    const auto x = testing::random_matrix(4, 4, rng);
    const std::vector<double> e1 = {0, 1, 0};
    CHECK(model::predict(n, x, e1) == num::softmax_rows(model::expert_logits(n, x)[1]));

    // a common shift of every expert's final bias leaves argmax unchanged
    const std::vector<double> w = {0.2, 0.5, 0.3};
    const auto before = model::predict(n, x, w);
    for (auto& head : n.params.heads)
      for (double& b : head.back().bias) b += 4.0;
    const auto after = model::predict(n, x, w);
    for (std::size_t r = 0; r < 4; ++r) CHECK(num::argmax(before.row(r)) == num::argmax(after.row(r)));
  }
}
