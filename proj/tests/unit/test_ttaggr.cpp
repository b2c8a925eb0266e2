// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "../support.hpp"
#include "doctest.h"
#include "tade/error.hpp"
#include "tade/ttaggr.hpp"

using namespace tade;
using tade::testing::grad_mismatch;
using tade::testing::random_matrix;

namespace {

aggr::ViewLogits random_views(std::size_t k, std::size_t n, std::size_t c, Rng& rng,
                              double scale = 2.0) {
  aggr::ViewLogits vl;
  for (std::size_t e = 0; e < k; ++e) {
    vl.first.push_back(random_matrix(n, c, rng, scale));
    vl.second.push_back(random_matrix(n, c, rng, scale));
  }
  return vl;
}

// Direct evaluation with explicit loops in long double.
double stability_oracle(const aggr::ViewLogits& vl, const std::vector<double>& w) {
  const std::size_t n = vl.rows(), c = vl.first.front().cols();
  long double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<long double> a(c, 0), b(c, 0);
    for (std::size_t k = 0; k < w.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) {
        a[j] += w[k] * vl.first[k](i, j);
        b[j] += w[k] * vl.second[k](i, j);
      }
    long double za = 0, zb = 0;
    for (std::size_t j = 0; j < c; ++j) {
      za += std::exp(a[j]);
      zb += std::exp(b[j]);
    }
    for (std::size_t j = 0; j < c; ++j) total += std::exp(a[j]) / za * std::exp(b[j]) / zb;
  }
  return static_cast<double>(total / n);
}

}  // namespace

TEST_SUITE("ttaggr") {
  TEST_CASE("uniform state") {
    const auto s = aggr::AggregationState::uniform(4);
    CHECK(s.w == std::vector<double>(4, 0.25));
    CHECK(s.stop_threshold == 0.05);
    CHECK_FALSE(s.stopped);
  }

  TEST_CASE("stability extremes") {
    aggr::ViewLogits same, apart;
    num::Matrix a(1, 3), b(1, 3);
    a(0, 0) = 50;
    b(0, 1) = 50;
    same.first = {a, a};
    same.second = {a, a};
    apart.first = {a, a};
    apart.second = {b, b};
    const std::vector<double> w = {0.5, 0.5};
    CHECK(aggr::stability_of(same, w) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(aggr::stability_of(apart, w) == doctest::Approx(0.0).epsilon(1e-12));

    // all-zero logits give uniform predictions, S = 1/C
    aggr::ViewLogits flat;
    flat.first = {num::Matrix(2, 4)};
    flat.second = {num::Matrix(2, 4)};
    CHECK(aggr::stability_of(flat, std::vector<double>{1.0}) == doctest::Approx(0.25));
  }

  TEST_CASE("stability matches a direct double loop") {
    Rng rng(12);
    for (int t = 0; t < 10; ++t) {
      const std::size_t k = 2 + rng.below(3);
      const auto vl = random_views(k, 1 + rng.below(9), 2 + rng.below(6), rng);
      std::vector<double> raw(k);
      for (double& r : raw) r = rng.normal();
      const auto w = num::softmax(raw);
      CHECK(std::abs(aggr::stability_of(vl, w) - stability_oracle(vl, w)) < 1e-12);
    }
  }

  TEST_CASE("gradients agree with finite differences") {
    Rng rng(13);
    for (int t = 0; t < 10; ++t) {
      const std::size_t k = 2 + rng.below(3);
      const auto vl = random_views(k, 1 + rng.below(6), 2 + rng.below(5), rng);
      std::vector<double> w(k);
      for (double& v : w) v = 0.2 + rng.uniform();
      const auto gw = aggr::stability_grad_weights(vl, w);
      const auto nw = num::finite_diff_grad([&](std::span<const double> x) { return aggr::stability_of(vl, x); }, w);
      CHECK(grad_mismatch(gw, nw) <= 1.0);

      std::vector<double> raw(k);
      for (double& r : raw) r = rng.normal();
      const auto gr = aggr::stability_grad_raw(vl, raw);
      const auto nr = num::finite_diff_grad(
          [&](std::span<const double> r) { return aggr::stability_of(vl, num::softmax(r)); }, raw);
      CHECK(grad_mismatch(gr, nr) <= 1.0);
    }
  }

  TEST_CASE("raw gradient is the softmax chain of the weight gradient") {
    Rng rng(14);
    const auto vl = random_views(3, 5, 4, rng);
    const std::vector<double> raw = {0.3, -0.7, 1.1};
    const auto w = num::softmax(raw);
    const auto gw = aggr::stability_grad_weights(vl, w);
    const auto gr = aggr::stability_grad_raw(vl, raw);
    const double mean = std::inner_product(w.begin(), w.end(), gw.begin(), 0.0);
    for (std::size_t k = 0; k < 3; ++k) CHECK(gr[k] == doctest::Approx(w[k] * (gw[k] - mean)));
  }

  TEST_CASE("identical experts give a zero raw gradient") {
    Rng rng(15);
    const auto base = random_views(1, 6, 5, rng);
    aggr::ViewLogits vl;
    for (int k = 0; k < 3; ++k) {
      vl.first.push_back(base.first[0]);
      vl.second.push_back(base.second[0]);
    }
    for (double g : aggr::stability_grad_raw(vl, std::vector<double>{0.4, -1.0, 2.0}))
      CHECK(std::abs(g) < 1e-15);
  }

  TEST_CASE("zero epochs keep uniform weights") {
    auto sc = tade::testing::make_noise_expert_scenario(1);
    sc.adapt.epochs = 0;
    Rng rng(1);
    const auto res = aggr::adapt(sc.model, sc.features, sc.adapt, rng);
    CHECK(res.trace.empty());
    CHECK(res.state.w == std::vector<double>(3, 1.0 / 3.0));
    CHECK_FALSE(res.state.stopped);
  }

  TEST_CASE("noise expert is switched off and adaptation stops") {
    const auto sc = tade::testing::make_noise_expert_scenario(2);
    Rng rng(2);
    const auto res = aggr::adapt(sc.model, sc.features, sc.adapt, rng);
    REQUIRE_FALSE(res.trace.empty());
    CHECK(res.state.stopped);
    CHECK(res.trace.back().stopped);
    CHECK(res.state.epoch == res.trace.size());
    CHECK(res.state.w[2] <= 0.05);
    for (std::size_t e = 0; e + 1 < res.trace.size(); ++e) {
      CHECK_FALSE(res.trace[e].stopped);
      CHECK(res.trace[e + 1].w[2] < res.trace[e].w[2]);
    }
    for (const auto& ep : res.trace) {
      CHECK(std::accumulate(ep.w.begin(), ep.w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(*std::min_element(ep.w.begin(), ep.w.end()) > 0.0);
    }
    CHECK(res.trace.front().to_json().contains("S"));
  }

  TEST_CASE("adaptation is deterministic given the stream") {
    const auto sc = tade::testing::make_noise_expert_scenario(3);
    Rng a(9), b(9);
    const auto ra = aggr::adapt(sc.model, sc.features, sc.adapt, a);
    const auto rb = aggr::adapt(sc.model, sc.features, sc.adapt, b);
    CHECK(ra.state.raw == rb.state.raw);
    CHECK(ra.trace.size() == rb.trace.size());
  }

  TEST_CASE("stop threshold is inclusive") {
    auto sc = tade::testing::make_noise_expert_scenario(4);
    sc.adapt.lr = 0.0;
    sc.adapt.epochs = 3;
    sc.adapt.stop_threshold = 1.0 / 3.0;
    Rng r1(1);
    const auto at = aggr::adapt(sc.model, sc.features, sc.adapt, r1);
    CHECK(at.state.stopped);
    CHECK(at.state.epoch == 1);

    sc.adapt.stop_threshold = std::nextafter(1.0 / 3.0, 0.0);
    Rng r2(1);
    const auto below = aggr::adapt(sc.model, sc.features, sc.adapt, r2);
    CHECK_FALSE(below.state.stopped);
    CHECK(below.state.epoch == 3);
  }

  TEST_CASE("stability rises under small full-batch steps") {
    auto sc = tade::testing::make_noise_expert_scenario(5);
    sc.adapt.views = {};  // both views equal the input, so S is deterministic
    sc.adapt.batch_size = sc.features.rows();
    sc.adapt.momentum = 0.0;
    sc.adapt.lr = 0.05;
    sc.adapt.epochs = 15;
    sc.adapt.stop_threshold = 0.0;
    Rng rng(5);
    const auto res = aggr::adapt(sc.model, sc.features, sc.adapt, rng);
    REQUIRE(res.trace.size() == 15);
    for (std::size_t e = 1; e < res.trace.size(); ++e) CHECK(res.trace[e].S >= res.trace[e - 1].S);
  }

  TEST_CASE("chunked stability equals one pass when views are deterministic") {
    const auto sc = tade::testing::make_noise_expert_scenario(6);
    const auto st = aggr::AggregationState::uniform(3);
    Rng a(1), b(1);
    const double whole = aggr::stability(sc.model, sc.features, st, {}, a).S;
    const double chunked = aggr::stability(sc.model, sc.features, st, {}, b, 37).S;
    CHECK(chunked == doctest::Approx(whole).epsilon(1e-12));
  }

  TEST_CASE("invalid settings") {
    aggr::AdaptConfig cfg;
    cfg.stop_threshold = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
  }
}
