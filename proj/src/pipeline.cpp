#include "gdig/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "gdig/curvature.hpp"
#include "gdig/dataio.hpp"
#include "gdig/error.hpp"
#include "gdig/finetune.hpp"
#include "gdig/gradfeat.hpp"
#include "gdig/influence.hpp"
#include "gdig/rng.hpp"

namespace gdig::pipeline {

namespace fs = std::filesystem;

StagePaths StagePaths::in(const std::string& out_dir) {
  StagePaths p;
  p.checkpoint = out_dir + "/checkpoint.gdlm";
  p.history = out_dir + "/history.json";
  p.seed_grads = out_dir + "/seeds.grads";
  p.candidate_grads = out_dir + "/candidates.grads";
  p.kfac = out_dir + "/kfac.gkfc";
  p.influence = out_dir + "/influence.ginm";
  p.diversity_grads = out_dir + "/diversity.grads";
  p.selection_report = out_dir + "/selection.json";
  p.selected = out_dir + "/selected.jsonl";
  p.manifest = out_dir + "/manifest.json";
  return p;
}

namespace {

struct Manifest {
  std::unordered_map<std::string, std::uint64_t> stage_hash;

  static Manifest load(const std::string& path) {
    Manifest m;
    std::ifstream is(path);
    if (!is) return m;
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.contains("stages")) return m;
    for (const auto& [stage, hash] : j.at("stages").items()) {
      m.stage_hash[stage] = hash.get<std::uint64_t>();
    }
    return m;
  }

  void save(const std::string& path) const {
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& [stage, hash] : stage_hash) stages[stage] = hash;
    std::ofstream os(path);
    if (!os) throw io_error("cannot write manifest " + path);
    os << nlohmann::json{{"stages", stages}}.dump(2) << "\n";
  }
};

bool artifacts_exist(const std::string& stage, const StagePaths& paths) {
  auto all = [](std::initializer_list<std::string> files) {
    return std::all_of(files.begin(), files.end(),
                       [](const std::string& f) { return fs::exists(f); });
  };
  if (stage == "finetune") return all({paths.checkpoint, paths.history});
  if (stage == "grads") return all({paths.seed_grads, paths.candidate_grads});
  if (stage == "curvature") return all({paths.kfac});
  if (stage == "influence") return all({paths.influence});
  if (stage == "select") return all({paths.selection_report, paths.selected});
  throw input_error("unknown stage: " + stage);
}

struct Context {
  const config::PipelineConfig& cfg;
  StagePaths paths;
  std::vector<toylm::Example> candidates;
  std::vector<toylm::Example> seeds;
  std::vector<toylm::Example> valid;
  select::SelectionReport report;
};

void run_finetune(Context& ctx) {
  Rng init_rng(ctx.cfg.seed, 100);
  toylm::Params params0 =
      toylm::Params::random_init(ctx.cfg.model, ctx.cfg.init_scale, init_rng);
  auto [best, history] =
      finetune::train(params0, ctx.candidates, ctx.valid, ctx.cfg.train);
  toylm::save_params(best, ctx.paths.checkpoint);
  std::ofstream os(ctx.paths.history);
  if (!os) throw io_error("cannot write " + ctx.paths.history);
  nlohmann::json j = nlohmann::json::parse(finetune::history_to_json(history));
  j["config_hash"] = ctx.cfg.config_hash;
  os << j.dump(2) << "\n";
}

void run_grads(Context& ctx) {
  const toylm::Params params = toylm::load_params(ctx.paths.checkpoint);
  gradfeat::batch_extract(params, ctx.seeds, ctx.cfg.influence_selector,
                          ctx.paths.seed_grads);
  gradfeat::batch_extract(params, ctx.candidates, ctx.cfg.influence_selector,
                          ctx.paths.candidate_grads);
}

void run_curvature(Context& ctx) {
  const toylm::Params params = toylm::load_params(ctx.paths.checkpoint);
  curvature::KfacFactor factors =
      curvature::accumulate(ctx.candidates, params, ctx.cfg.influence_selector);
  curvature::save_factors(factors, ctx.paths.kfac);
}

void run_influence(Context& ctx) {
  curvature::KfacFactor factors = curvature::load_factors(ctx.paths.kfac);
  curvature::DampedInverse inv = curvature::prepare_inverse(factors, ctx.cfg.lambda);
  gradfeat::GradCache seeds = gradfeat::load_cache(ctx.paths.seed_grads);
  gradfeat::GradCache cands = gradfeat::load_cache(ctx.paths.candidate_grads);
  influence::InfluenceMatrix matrix = influence::influence_matrix(inv, seeds, cands);
  matrix.config_hash = ctx.cfg.config_hash;
  influence::save_matrix(matrix, ctx.paths.influence);
}

void run_select(Context& ctx) {
  influence::InfluenceMatrix matrix = influence::load_matrix(ctx.paths.influence);
  std::vector<std::string> pass = select::quality_filter(matrix, ctx.cfg.quality);
  if (pass.empty()) {
    throw stage_error("quality_filter", "no candidates survived the quality filter");
  }
  if (ctx.cfg.n_select == 0) {
    throw stage_error("select", "diversity.n_select must be set");
  }
  if (ctx.cfg.n_select > pass.size()) {
    throw stage_error("quality_filter",
                      "n_select " + std::to_string(ctx.cfg.n_select) +
                          " exceeds the quality-pass pool of " +
                          std::to_string(pass.size()));
  }

  std::unordered_map<std::string, std::size_t> index_by_id;
  for (std::size_t i = 0; i < ctx.candidates.size(); ++i) {
    index_by_id[ctx.candidates[i].id] = i;
  }
  std::vector<toylm::Example> pool;
  pool.reserve(pass.size());
  for (const std::string& id : pass) pool.push_back(ctx.candidates.at(index_by_id.at(id)));

  const toylm::Params params = toylm::load_params(ctx.paths.checkpoint);
  gradfeat::GradCache features = gradfeat::batch_extract(
      params, pool, ctx.cfg.diversity_selector, ctx.paths.diversity_grads);

  const int k = std::min<int>(ctx.cfg.effective_k_clusters(pool.size()),
                              static_cast<int>(pool.size()));
  const int proj = ctx.cfg.effective_proj_dim(features.dim);
  Rng rng(ctx.cfg.seed, 200);
  select::DiversifyResult diversified =
      select::diversify(features.rows, ctx.cfg.n_select, k, proj, rng);

  select::SelectionReport report;
  report.quality_pass_ids = pass;
  report.cluster_of_selected = diversified.assignment;
  for (std::size_t idx : diversified.selected) report.selected_ids.push_back(pass[idx]);
  report.take_counts = diversified.take_counts;
  report.lambda = ctx.cfg.lambda;
  report.k_clusters = k;
  report.proj_dim = proj;
  report.seed = ctx.cfg.seed;
  report.config_hash = ctx.cfg.config_hash;

  std::ofstream os(ctx.paths.selection_report);
  if (!os) throw io_error("cannot write " + ctx.paths.selection_report);
  os << select::report_to_json(report) << "\n";
  dataio::filter_jsonl_by_id(ctx.cfg.candidates_path, report.selected_ids,
                             ctx.paths.selected);
  ctx.report = std::move(report);
}

void run_stage(Context& ctx, const std::string& stage) {
  try {
    if (stage == "finetune") {
      run_finetune(ctx);
    } else if (stage == "grads") {
      run_grads(ctx);
    } else if (stage == "curvature") {
      run_curvature(ctx);
    } else if (stage == "influence") {
      run_influence(ctx);
    } else if (stage == "select") {
      run_select(ctx);
    } else {
      throw input_error("unknown stage: " + stage);
    }
  } catch (const Error& e) {
    if (e.code().rfind("stage:", 0) == 0) throw;
    throw stage_error(stage, e.what());
  }
}

void load_report(Context& ctx) {
  std::ifstream is(ctx.paths.selection_report);
  if (!is) throw io_error("cannot open " + ctx.paths.selection_report);
  nlohmann::json j = nlohmann::json::parse(is);
  ctx.report.quality_pass_ids = j.at("quality_pass_ids").get<std::vector<std::string>>();
  ctx.report.cluster_of_selected = j.at("cluster_of_selected").get<std::vector<int>>();
  ctx.report.selected_ids = j.at("selected_ids").get<std::vector<std::string>>();
  ctx.report.take_counts = j.at("take_counts").get<std::vector<int>>();
  const auto& cfg = j.at("config");
  ctx.report.lambda = cfg.at("lambda").get<double>();
  ctx.report.k_clusters = cfg.at("k_clusters").get<int>();
  ctx.report.proj_dim = cfg.at("proj_dim").get<int>();
  ctx.report.seed = cfg.at("seed").get<std::uint64_t>();
  ctx.report.config_hash = cfg.at("config_hash").get<std::uint64_t>();
}

select::SelectionReport run_impl(const config::PipelineConfig& cfg,
                                 const std::string& resume_from, bool single_stage) {
  cfg.validate_paths();
  fs::create_directories(cfg.out_dir);

  Context ctx{cfg, StagePaths::in(cfg.out_dir), {}, {}, {}, {}};
  ctx.candidates = dataio::load_examples(cfg.candidates_path);
  ctx.seeds = dataio::load_examples(cfg.seeds_path);
  ctx.valid = dataio::load_examples(cfg.valid_path);

  Manifest manifest = Manifest::load(ctx.paths.manifest);
  const auto& stages = stage_names();
  if (!resume_from.empty() &&
      std::find(stages.begin(), stages.end(), resume_from) == stages.end()) {
    throw input_error("unknown stage: " + resume_from);
  }

  bool reached_resume = resume_from.empty();
  bool ran_select = false;
  for (const std::string& stage : stages) {
    if (!resume_from.empty() && stage == resume_from) reached_resume = true;
    const bool cached = manifest.stage_hash.count(stage) &&
                        manifest.stage_hash.at(stage) == cfg.config_hash &&
                        artifacts_exist(stage, ctx.paths);
    if (!reached_resume) {
      // Upstream of the requested stage must already be valid in cache.
      if (!cached) {
        throw cache_error("stage '" + stage +
                          "' is stale or missing; rerun the pipeline or resume earlier");
      }
      continue;
    }
    if (single_stage && stage != resume_from) break;  // downstream untouched
    const bool force = !resume_from.empty();
    if (!force && cached) continue;
    run_stage(ctx, stage);
    if (stage == "select") ran_select = true;
    manifest.stage_hash[stage] = cfg.config_hash;
    manifest.save(ctx.paths.manifest);
  }

  if (!single_stage && !ran_select) load_report(ctx);
  return ctx.report;
}

}  // namespace

select::SelectionReport run(const config::PipelineConfig& cfg, const std::string& resume_from) {
  return run_impl(cfg, resume_from, false);
}

void run_single(const config::PipelineConfig& cfg, const std::string& stage) {
  if (stage.empty()) throw input_error("run_single: stage required");
  run_impl(cfg, stage, true);
}

}  // namespace gdig::pipeline
