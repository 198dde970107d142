#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "gdig/error.hpp"
#include "gdig/gradfeat.hpp"
#include "gdig/rng.hpp"
#include "gdig/toylm.hpp"

using namespace gdig;
using namespace gdig::toylm;
using namespace gdig::gradfeat;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.embed_dim = 4;
  cfg.context_window = 3;
  cfg.hidden_dim = 6;
  cfg.num_mlp_layers = 4;
  return cfg;
}

Example make_example(const std::string& id, const std::string& prompt,
                     const std::string& response) {
  Example ex;
  ex.id = id;
  ex.prompt_tokens = vocab::tokenize(prompt);
  ex.response_tokens = vocab::tokenize(response);
  ex.response_tokens.push_back(vocab::kEos);
  return ex;
}

}  // namespace

TEST_CASE("selector presets resolve to the documented layers") {
  ModelConfig cfg = tiny_config();  // L = 4, selectable 0..4
  CHECK(LayerSelector::final_only().resolve(cfg) == std::vector<int>{4});
  CHECK(LayerSelector::strided(3).resolve(cfg) == std::vector<int>{0, 3});
  CHECK(LayerSelector::strided(2).resolve(cfg) == std::vector<int>{0, 2, 4});
  CHECK(LayerSelector::explicit_layers({4, 1, 1}).resolve(cfg) == std::vector<int>{1, 4});
  CHECK_THROWS_AS(LayerSelector::explicit_layers({5}).resolve(cfg), Error);
  CHECK_THROWS_AS(LayerSelector::explicit_layers({-1}).resolve(cfg), Error);
}

TEST_CASE("feature_dim counts weights plus biases of the selection") {
  ModelConfig cfg = tiny_config();
  // final_only: vocab x hidden weights + vocab biases
  CHECK(LayerSelector::final_only().feature_dim(cfg) == 259 * 6 + 259);
  // layer 0: 6 x (3*4) + 6; layer 3: 6 x 6 + 6
  CHECK(LayerSelector::strided(3).feature_dim(cfg) == (6 * 12 + 6) + (6 * 6 + 6));
}

TEST_CASE("single-token features equal the unscaled layer gradient") {
  Rng rng(2);
  Params p = Params::random_init(tiny_config(), 0.2, rng);
  Example ex = make_example("e", "ab", "");
  ex.response_tokens = {static_cast<Token>('z')};  // exactly one token: T = 1
  FeatureVector fv = extract(p, ex, LayerSelector::final_only());
  auto [grad, stats] = backward(p, ex);
  const auto& blk = grad.blocks.output;
  REQUIRE(fv.values.size() == blk.W.size() + blk.b.size());
  std::int64_t pos = 0;
  for (Eigen::Index i = 0; i < blk.W.rows(); ++i) {
    for (Eigen::Index j = 0; j < blk.W.cols(); ++j) {
      CHECK(fv.values(pos++) == doctest::Approx(blk.W(i, j)).epsilon(1e-6));
    }
    CHECK(fv.values(pos++) == doctest::Approx(blk.b(i)).epsilon(1e-6));
  }
}

TEST_CASE("features are token-averaged") {
  Rng rng(3);
  Params p = Params::random_init(tiny_config(), 0.2, rng);
  Example ex = make_example("e", "ab", "xyz");  // T = 4 with EOS
  FeatureVector fv = extract(p, ex, LayerSelector::strided(3));
  auto [grad, stats] = backward(p, ex);
  // Sum of (1/T)-scaled gradient over the two selected layers, flattened.
  double sum_sq = 0.0;
  for (int idx : {0, 3}) {
    const auto& blk = grad.blocks.selectable_layer(idx);
    sum_sq += blk.W.squaredNorm() + blk.b.squaredNorm();
  }
  const double expected_norm = std::sqrt(sum_sq) / 4.0;
  CHECK(static_cast<double>(fv.values.norm()) ==
        doctest::Approx(expected_norm).epsilon(1e-5));
}

TEST_CASE("cache round-trip is bit-identical") {
  Rng rng(5);
  Params p = Params::random_init(tiny_config(), 0.2, rng);
  std::vector<Example> data = {make_example("a", "one", "111"),
                               make_example("b", "two", "222"),
                               make_example("c", "three", "333")};
  const std::string path = "test_gradfeat_cache.grads";
  GradCache cache = batch_extract(p, data, LayerSelector::strided(3), path);
  CHECK(cache.count() == 3);
  CHECK(cache.ids == std::vector<std::string>{"a", "b", "c"});
  GradCache loaded = load_cache(path);
  CHECK(loaded.dim == cache.dim);
  CHECK(loaded.ids == cache.ids);
  CHECK((loaded.rows - cache.rows).cwiseAbs().maxCoeff() == 0.0f);
  CHECK(loaded.selector.describe() == cache.selector.describe());
  std::remove(path.c_str());
  std::remove((path + ".ids.jsonl").c_str());
}

TEST_CASE("cached rows agree with direct extraction") {
  Rng rng(6);
  Params p = Params::random_init(tiny_config(), 0.2, rng);
  std::vector<Example> data = {make_example("a", "one", "11"),
                               make_example("b", "two", "22")};
  const std::string path = "test_gradfeat_rows.grads";
  GradCache cache = batch_extract(p, data, LayerSelector::final_only(), path);
  for (std::int64_t i = 0; i < cache.count(); ++i) {
    FeatureVector direct = extract(p, data[i], LayerSelector::final_only());
    FeatureVector row = cache.feature(i);
    CHECK(row.id == data[i].id);
    CHECK((row.values - direct.values).cwiseAbs().maxCoeff() == 0.0f);
  }
  std::remove(path.c_str());
  std::remove((path + ".ids.jsonl").c_str());
}

TEST_CASE("load_cache rejects a truncated file") {
  const std::string path = "test_gradfeat_trunc.grads";
  std::FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("GDIG", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_cache(path), Error);
  std::remove(path.c_str());
}
