// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "../support.hpp"
#include "doctest.h"
#include "tade/error.hpp"
#include "tade/eval.hpp"

using namespace tade;

namespace {

num::Matrix one_hot(const std::vector<int>& cls, std::size_t c) {
  num::Matrix m(cls.size(), c);
  for (std::size_t i = 0; i < cls.size(); ++i) m(i, static_cast<std::size_t>(cls[i])) = 1.0;
  return m;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("top-1 accuracy") {
    const std::vector<int> y = {0, 1, 2, 1, 0, 2, 2, 1, 0, 1};
    CHECK(eval::top1(one_hot(y, 3), y) == 1.0);
    std::vector<int> wrong = y;
    for (int& v : wrong) v = (v + 1) % 3;
    CHECK(eval::top1(one_hot(wrong, 3), y) == 0.0);
    std::vector<int> part = y;
    for (int i = 0; i < 3; ++i) part[i] = (part[i] + 1) % 3;
    CHECK(eval::top1(one_hot(part, 3), y) == doctest::Approx(0.7));
    CHECK_THROWS_AS(eval::top1(one_hot(y, 3), std::vector<int>{0}), ShapeError);
  }

  TEST_CASE("group accuracy") {
    const std::vector<int> y = {0, 0, 1, 2, 2};
    const std::vector<int> pred = {0, 0, 1, 0, 1};
    data::ClassGroups g{{0}, {1}, {2}};
    const auto ga = eval::group_accuracy(one_hot(pred, 3), y, g);
    CHECK(*ga.many == 1.0);
    CHECK(*ga.medium == 1.0);
    CHECK(*ga.few == 0.0);
    CHECK(ga.many_n == 2);
    CHECK(ga.few_n == 2);

    data::ClassGroups no_few{{0, 1}, {2}, {}};
    const auto gb = eval::group_accuracy(one_hot(pred, 3), y, no_few);
    CHECK_FALSE(gb.few.has_value());
    CHECK(*gb.many == 1.0);
  }

  TEST_CASE("confidence") {
    CHECK(eval::confidence(one_hot({0, 2, 1}, 3)) == 1.0);
    num::Matrix flat(5, 4);
    for (double& v : flat.data()) v = 0.25;
    CHECK(eval::confidence(flat) == doctest::Approx(0.25));
  }

  TEST_CASE("mutual information and entropy") {
    const std::vector<int> y = {0, 1, 0, 1, 0, 1};
    const auto perfect = eval::mi_and_entropy(y, y, 2);
    CHECK(perfect.mi_nats == doctest::Approx(std::numbers::ln2));
    CHECK(perfect.entropy_nats == doctest::Approx(std::numbers::ln2));
    const auto constant = eval::mi_and_entropy(std::vector<int>(6, 1), y, 2);
    CHECK(constant.mi_nats == doctest::Approx(0.0));
    CHECK(constant.entropy_nats == doctest::Approx(0.0));
    CHECK(constant.label_entropy_nats == doctest::Approx(std::numbers::ln2));

    // joint counts ((40, 10), (10, 40))
    std::vector<int> p, l;
    auto add = [&](int a, int b, int n) {
      for (int i = 0; i < n; ++i) {
        p.push_back(a);
        l.push_back(b);
      }
    };
    add(0, 0, 40);
    add(0, 1, 10);
    add(1, 0, 10);
    add(1, 1, 40);
    const auto s = eval::mi_and_entropy(p, l, 2);
    const double oracle = 2 * 0.4 * std::log(0.4 / 0.25) + 2 * 0.1 * std::log(0.1 / 0.25);
    CHECK(s.mi_nats == doctest::Approx(oracle).epsilon(1e-14));
    CHECK(s.mi_nats <= s.entropy_nats + 1e-15);
    CHECK_THROWS_AS(eval::mi_and_entropy(std::vector<int>{}, std::vector<int>{}, 2), DomainError);
    CHECK_THROWS_AS(eval::mi_and_entropy(std::vector<int>{3}, std::vector<int>{0}, 2), IndexError);
  }

  TEST_CASE("hard-mean identity") {
    num::Matrix same(3, 2);
    for (std::size_t i = 0; i < 3; ++i) same(i, 0) = 1.0;
    auto r = eval::identity_check(same, std::vector<int>{0, 0, 0});
    CHECK(std::abs(r.lhs) < 1e-15);
    CHECK(std::abs(r.rhs) < 1e-15);

    num::Matrix ortho(2, 2);
    ortho(0, 0) = 1.0;
    ortho(1, 1) = 1.0;
    r = eval::identity_check(ortho, std::vector<int>{1, 1});
    CHECK(r.lhs == doctest::Approx(1.0));
    CHECK(r.rhs == doctest::Approx(1.0));

    Rng rng(44);
    const auto v = eval::l2_normalize_rows(tade::testing::random_matrix(200, 6, rng));
    for (std::size_t i = 0; i < v.rows(); ++i) CHECK(num::dot(v.row(i), v.row(i)) == doctest::Approx(1.0));
    r = eval::identity_check(v, tade::testing::random_labels(200, 5, rng));
    CHECK(r.residual < 1e-10);

    num::Matrix bad(1, 2);
    bad(0, 0) = 2.0;
    CHECK_THROWS_AS(eval::identity_check(bad, std::vector<int>{0}), ContractError);
  }

  TEST_CASE("report serialisation") {
    eval::EvalReport rep;
    rep.split = "uniform";
    rep.samples = 10;
    rep.top1 = 0.5;
    rep.groups.many = 1.0;
    rep.groups.few = 0.25;
    rep.weights_used = {0.5, 0.5};
    CHECK(eval::EvalReport::csv_header() ==
          "split,variant,samples,top1,many,medium,few,confidence,mi_nats,entropy_nats,stability,weights");
    CHECK(rep.csv_row("adapted") == "uniform,adapted,10,0.5,1,,0.25,0,0,0,0,0.5;0.5");
    const auto j = rep.to_json();
    CHECK(j["group_acc"]["medium"].is_null());
    CHECK(j["group_acc"]["few"] == 0.25);
  }

  TEST_CASE("evaluation with one-hot weights reproduces a single expert") {
    Rng rng(8);
    auto m = model::init_model({4, {6}, {}, 3, 3}, rng);
    tade::testing::randomize_params(m, rng);
    auto drng = rng.split(1);
    const auto test = data::gen_gaussian_mixture(data::make_profile(3, 20, 1, data::Direction::kUniform),
                                                 4, 3.0, drng);
    const auto logits = model::expert_logits(m, test.features);
    const data::ClassGroups g{{0}, {1}, {2}};
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> w(3, 0.0);
      w[k] = 1.0;
      Rng r(1);
      const auto rep = eval::evaluate(m, test, w, g, {}, r);
      const auto probs = num::softmax_rows(logits[k]);
      CHECK(rep.top1 == eval::top1(probs, test.labels));
      CHECK(rep.confidence == doctest::Approx(eval::confidence(probs)).epsilon(1e-12));
      CHECK(rep.weights_used == w);
      CHECK(rep.samples == 60);
    }
    const std::vector<double> w = {0.2, 0.3, 0.5};
    Rng a(3), b(3);
    const data::ViewConfig views{0.5, 0.1, 0.1};
    CHECK(eval::evaluate(m, test, w, g, views, a).to_json() ==
          eval::evaluate(m, test, w, g, views, b).to_json());
  }
}
