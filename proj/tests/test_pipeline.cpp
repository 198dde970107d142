#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gdig/dataio.hpp"
#include "gdig/error.hpp"
#include "gdig/oracle.hpp"
#include "gdig/pipeline.hpp"

using namespace gdig;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

// Builds a small cipher-corpus workspace and the matching config.
struct Workspace {
  fs::path dir;
  config::PipelineConfig cfg;

  explicit Workspace(const std::string& name, double lambda = 1e-3) {
    dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);

    oracle::NoiseSpec noise;
    noise.corpus_size = 48;
    noise.noise_rate = 0.25;
    noise.seed = 5;
    auto [pool, flags] = oracle::make_noisy_corpus(noise);

    oracle::NoiseSpec clean = noise;
    clean.corpus_size = 6;
    clean.noise_rate = 0.0;
    clean.seed = 99;
    auto [extra, extra_flags] = oracle::make_noisy_corpus(clean);
    std::vector<toylm::Example> seeds(extra.begin(), extra.begin() + 3);
    std::vector<toylm::Example> valid(extra.begin() + 3, extra.end());

    dataio::save_examples(pool, (dir / "pool.jsonl").string());
    dataio::save_examples(seeds, (dir / "seeds.jsonl").string());
    dataio::save_examples(valid, (dir / "valid.jsonl").string());

    std::ostringstream ini;
    ini << "[data]\n"
        << "candidates = " << (dir / "pool.jsonl").string() << "\n"
        << "seeds = " << (dir / "seeds.jsonl").string() << "\n"
        << "valid = " << (dir / "valid.jsonl").string() << "\n"
        << "[model]\nembed_dim = 4\ncontext_window = 6\nhidden_dim = 8\nnum_mlp_layers = 2\n"
        << "[train]\nlearning_rate = 0.002\nepochs = 1\nbatch_size = 16\n"
        << "[influence]\nlambda = " << lambda << "\nselector = explicit:1\n"
        << "quality_mode = fraction\ntau = 0.34\n"
        << "[diversity]\nn_select = 4\nk_clusters = 4\nproj_dim = 16\n"
        << "[run]\nseed = 11\nout_dir = " << (dir / "out").string() << "\n";
    cfg = config::PipelineConfig::from_ini(config::IniFile::parse_text(ini.str()));
  }

  ~Workspace() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("full pipeline produces every artifact and a consistent report") {
  Workspace ws("gdig_pipeline_full");
  select::SelectionReport report = pipeline::run(ws.cfg);
  pipeline::StagePaths paths = pipeline::StagePaths::in(ws.cfg.out_dir);
  for (const std::string& p :
       {paths.checkpoint, paths.history, paths.seed_grads, paths.candidate_grads, paths.kfac,
        paths.influence, paths.selection_report, paths.selected, paths.manifest}) {
    CHECK(fs::exists(p));
  }
  CHECK(report.selected_ids.size() == 4);
  CHECK(report.quality_pass_ids.size() >= 4);
  // selected.jsonl holds exactly the selected ids, in order.
  auto selected = dataio::load_examples(paths.selected);
  REQUIRE(selected.size() == report.selected_ids.size());
  for (std::size_t i = 0; i < selected.size(); ++i) {
    CHECK(selected[i].id == report.selected_ids[i]);
  }
}

TEST_CASE("two runs with the same config are byte-identical") {
  Workspace a("gdig_pipeline_det_a");
  Workspace b("gdig_pipeline_det_b");
  pipeline::run(a.cfg);
  pipeline::run(b.cfg);
  pipeline::StagePaths pa = pipeline::StagePaths::in(a.cfg.out_dir);
  pipeline::StagePaths pb = pipeline::StagePaths::in(b.cfg.out_dir);
  CHECK(read_file(pa.selected) == read_file(pb.selected));
  CHECK(read_file(pa.checkpoint) == read_file(pb.checkpoint));
  // The influence header embeds the config hash, which covers the data
  // paths; compare the numeric payload instead of raw bytes.
  influence::InfluenceMatrix ma = influence::load_matrix(pa.influence);
  influence::InfluenceMatrix mb = influence::load_matrix(pb.influence);
  CHECK(ma.candidate_ids == mb.candidate_ids);
  CHECK((ma.scores - mb.scores).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a cached rerun skips recomputation and returns the stored report") {
  Workspace ws("gdig_pipeline_cache");
  select::SelectionReport first = pipeline::run(ws.cfg);
  pipeline::StagePaths paths = pipeline::StagePaths::in(ws.cfg.out_dir);
  const auto stamp = fs::last_write_time(paths.checkpoint);
  select::SelectionReport second = pipeline::run(ws.cfg);
  CHECK(fs::last_write_time(paths.checkpoint) == stamp);  // finetune skipped
  CHECK(second.selected_ids == first.selected_ids);
  CHECK(second.quality_pass_ids == first.quality_pass_ids);
  CHECK(second.config_hash == first.config_hash);
}

TEST_CASE("resuming from a stage recomputes it and leaves upstream untouched") {
  Workspace ws("gdig_pipeline_resume");
  pipeline::run(ws.cfg);
  pipeline::StagePaths paths = pipeline::StagePaths::in(ws.cfg.out_dir);
  const auto ckpt_stamp = fs::last_write_time(paths.checkpoint);
  const std::string before = read_file(paths.selected);
  select::SelectionReport report = pipeline::run(ws.cfg, "influence");
  CHECK(fs::last_write_time(paths.checkpoint) == ckpt_stamp);
  CHECK(read_file(paths.selected) == before);  // same config, same result
  CHECK(report.selected_ids.size() == 4);
}

TEST_CASE("resuming without valid upstream caches is a cache error") {
  Workspace ws("gdig_pipeline_noresume");
  try {
    pipeline::run(ws.cfg, "select");
    FAIL("expected a cache error");
  } catch (const Error& e) {
    CHECK(e.code() == "cache");
  }
}

TEST_CASE("unknown stages are rejected") {
  Workspace ws("gdig_pipeline_badstage");
  CHECK_THROWS_AS(pipeline::run(ws.cfg, "deploy"), Error);
  CHECK_THROWS_AS(pipeline::run_single(ws.cfg, ""), Error);
}

TEST_CASE("a config change invalidates the cache") {
  Workspace ws("gdig_pipeline_stale");
  pipeline::run(ws.cfg);
  pipeline::StagePaths paths = pipeline::StagePaths::in(ws.cfg.out_dir);
  const auto stamp = fs::last_write_time(paths.influence);
  config::PipelineConfig changed = ws.cfg;
  changed.lambda = 0.5;
  changed.config_hash ^= 0x1234567ULL;  // as a real config edit would
  pipeline::run(changed);
  CHECK(fs::last_write_time(paths.influence) != stamp);
}

TEST_CASE("errors inside a stage carry the stage code") {
  Workspace ws("gdig_pipeline_stageerr");
  config::PipelineConfig bad = ws.cfg;
  bad.n_select = 1000;  // more than can survive any filter
  try {
    pipeline::run(bad);
    FAIL("expected a stage error");
  } catch (const Error& e) {
    CHECK(e.code().rfind("stage:", 0) == 0);
  }
}
