// SPDX-License-Identifier: Apache-2.0
#include "../support.hpp"
#include "doctest.h"
#include "json.hpp"
#include "tade/byteio.hpp"
#include "tade/checkpoint.hpp"
#include "tade/error.hpp"

using namespace tade;

namespace {

model::Checkpoint sample(bool with_opt) {
  Rng rng(31);
  model::Checkpoint ck;
  ck.model = model::init_model({5, {7}, {3}, 3, 4}, rng);
  testing::randomize_params(ck.model, rng);
  ck.train_counts = {40, 12, 5, 2};
  ck.epochs_completed = 3;
  if (with_opt) {
    ck.opt = train::OptState::for_model(ck.model);
    for (auto b : ck.opt->velocity.blocks())
      for (double& v : b) v = rng.normal();
  }
  return ck;
}

nlohmann::json header_of(const std::string& bytes) {
  io::Reader r(bytes);
  r.take(8);
  const auto len = r.u64();
  return nlohmann::json::parse(r.take(len));
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round-trip with and without optimizer state") {
    for (bool with_opt : {false, true}) {
      const auto ck = sample(with_opt);
      CHECK(model::decode_checkpoint(model::encode_checkpoint(ck)) == ck);
    }
  }

  TEST_CASE("header documents layout") {
    const auto ck = sample(false);
    const auto bytes = model::encode_checkpoint(ck);
    CHECK(bytes.substr(0, 8) == "TADECKPT");
    const auto h = header_of(bytes);
    CHECK(h["param_count"] == ck.model.params.count());
    CHECK(h["architecture"]["backbone_widths"] == std::vector<int>{7});
    CHECK(h["tensors"].size() == ck.model.params.blocks().size());
    CHECK(h["tensors"][0]["shape"] == std::vector<int>{5, 7});
    CHECK(h.contains("layer_order"));
    CHECK(h["train_counts"] == ck.train_counts);
  }

  TEST_CASE("corrupt files are rejected") {
    const auto bytes = model::encode_checkpoint(sample(true));
    auto bad = bytes;
    bad[0] = 'x';
    CHECK_THROWS_AS(model::decode_checkpoint(bad), SchemaError);
    CHECK_THROWS_AS(model::decode_checkpoint(bytes.substr(0, bytes.size() - 8)), SchemaError);
    CHECK_THROWS_AS(model::decode_checkpoint(bytes.substr(0, 20)), SchemaError);
  }

  TEST_CASE("save and load") {
    testing::TempDir tmp("ckpt");
    const auto ck = sample(true);
    model::save_checkpoint(ck, tmp.path() / "m.ckpt");
    CHECK(model::load_checkpoint(tmp.path() / "m.ckpt") == ck);
    CHECK_THROWS_AS(model::load_checkpoint(tmp.path() / "nope.ckpt"), IoError);
  }
}
