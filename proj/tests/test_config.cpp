#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gdig/config.hpp"
#include "gdig/error.hpp"

using namespace gdig;
using namespace gdig::config;

namespace {

const char* kSample = R"(# run configuration
[data]
candidates = pool.jsonl
seeds = seeds.jsonl
valid = valid.jsonl

[model]
embed_dim = 8
hidden_dim = 16

[train]
learning_rate = 0.01
epochs = 2
optimizer = adam

[influence]
lambda = 0.5
selector = stride:2
quality_mode = fraction
tau = 0.8

[diversity]
n_select = 20

[run]
seed = 123
out_dir = /tmp/gdig-test
)";

}  // namespace

TEST_CASE("ini parsing handles sections, comments and whitespace") {
  IniFile ini = IniFile::parse_text("  # comment\n[sec]\n key = value # trailing\n\nx=1\n");
  CHECK(ini.get("sec", "key", "") == "value");
  CHECK(ini.get_int("sec", "x", 0) == 1);
  CHECK(ini.get("sec", "missing", "fb") == "fb");
  CHECK(ini.has("sec", "key"));
  CHECK_FALSE(ini.has("sec", "missing"));
}

TEST_CASE("ini parsing rejects malformed lines") {
  CHECK_THROWS_AS(IniFile::parse_text("[unterminated\n"), Error);
  CHECK_THROWS_AS(IniFile::parse_text("no equals sign\n"), Error);
  IniFile ini = IniFile::parse_text("[s]\nx = abc\n");
  CHECK_THROWS_AS(ini.get_int("s", "x", 0), Error);
  CHECK_THROWS_AS(ini.get_double("s", "x", 0.0), Error);
}

TEST_CASE("hash is stable under formatting and sensitive to values") {
  IniFile a = IniFile::parse_text("[s]\nx = 1\ny = 2\n");
  IniFile b = IniFile::parse_text("# different layout\n[s]\n  y=2\n  x=1\n");
  CHECK(a.hash() == b.hash());
  IniFile c = IniFile::parse_text("[s]\nx = 1\ny = 3\n");
  CHECK(a.hash() != c.hash());
}

TEST_CASE("selector strings parse into the documented modes") {
  toylm::ModelConfig cfg;  // L = 4
  CHECK(parse_selector("final_only").resolve(cfg) == std::vector<int>{4});
  CHECK(parse_selector("stride:3").resolve(cfg) == std::vector<int>{0, 3});
  CHECK(parse_selector("explicit:1,3").resolve(cfg) == std::vector<int>{1, 3});
  CHECK_THROWS_AS(parse_selector("every_other"), Error);
}

TEST_CASE("pipeline config picks up every section") {
  PipelineConfig cfg = PipelineConfig::from_ini(IniFile::parse_text(kSample));
  CHECK(cfg.candidates_path == "pool.jsonl");
  CHECK(cfg.model.embed_dim == 8);
  CHECK(cfg.model.hidden_dim == 16);
  CHECK(cfg.model.context_window == 8);  // default
  CHECK(cfg.train.learning_rate == 0.01);
  CHECK(cfg.train.epochs == 2);
  CHECK(cfg.train.optimizer == finetune::Optimizer::kAdam);
  CHECK(cfg.lambda == 0.5);
  CHECK(cfg.influence_selector.describe() == "stride:2");
  CHECK(cfg.quality.mode == select::QualityCriterion::Mode::kFraction);
  CHECK(cfg.quality.tau == 0.8);
  CHECK(cfg.n_select == 20);
  CHECK(cfg.seed == 123);
  CHECK(cfg.out_dir == "/tmp/gdig-test");
  CHECK(cfg.config_hash == IniFile::parse_text(kSample).hash());
}

TEST_CASE("defaults apply when keys are missing") {
  PipelineConfig cfg = PipelineConfig::from_ini(IniFile::parse_text(""));
  CHECK(cfg.model.embed_dim == 16);
  CHECK(cfg.model.num_mlp_layers == 4);
  CHECK(cfg.lambda == 1e-3);
  CHECK(cfg.influence_selector.describe() == "stride:3");
  CHECK(cfg.diversity_selector.describe() == "final_only");
  CHECK(cfg.quality.mode == select::QualityCriterion::Mode::kStrict);
}

TEST_CASE("bad enum values are rejected") {
  CHECK_THROWS_AS(
      PipelineConfig::from_ini(IniFile::parse_text("[train]\noptimizer = rmsprop\n")), Error);
  CHECK_THROWS_AS(
      PipelineConfig::from_ini(IniFile::parse_text("[influence]\nquality_mode = loose\n")),
      Error);
}

TEST_CASE("derived cluster and projection sizes follow the documented caps") {
  PipelineConfig cfg;
  CHECK(cfg.effective_k_clusters(4000) == 512);   // capped at 512
  CHECK(cfg.effective_k_clusters(100) == 25);     // pool / 4
  CHECK(cfg.effective_k_clusters(2) == 1);        // floor of 1
  CHECK(cfg.effective_proj_dim(9000) == 400);     // capped at 400
  CHECK(cfg.effective_proj_dim(120) == 120);
  cfg.k_clusters = 7;
  cfg.proj_dim = 33;
  CHECK(cfg.effective_k_clusters(4000) == 7);     // explicit values win
  CHECK(cfg.effective_proj_dim(9000) == 33);
}

TEST_CASE("validate_paths reports the missing file") {
  PipelineConfig cfg;
  cfg.candidates_path = "/nonexistent/pool.jsonl";
  cfg.seeds_path = "/nonexistent/seeds.jsonl";
  cfg.valid_path = "/nonexistent/valid.jsonl";
  CHECK_THROWS_AS(cfg.validate_paths(), Error);
  cfg.candidates_path = "";
  CHECK_THROWS_AS(cfg.validate_paths(), Error);
}
