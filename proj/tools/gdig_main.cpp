#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "gdig/config.hpp"
#include "gdig/dataio.hpp"
#include "gdig/error.hpp"
#include "gdig/eval.hpp"
#include "gdig/oracle.hpp"
#include "gdig/pipeline.hpp"

namespace {

using namespace gdig;

struct CommonOpts {
  std::string config_path;
  std::string stage;
  std::string out_dir;
  std::int64_t seed = -1;
};

config::PipelineConfig load_config(const CommonOpts& opts) {
  config::IniFile ini = config::IniFile::parse_file(opts.config_path);
  if (!opts.out_dir.empty()) ini.set("run", "out_dir", opts.out_dir);
  if (opts.seed >= 0) ini.set("run", "seed", std::to_string(opts.seed));
  return config::PipelineConfig::from_ini(ini);
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_stage = false) {
  cmd->add_option("--config", opts.config_path, "config file (key=value with [sections])")
      ->required();
  cmd->add_option("--out", opts.out_dir, "output directory override");
  cmd->add_option("--seed", opts.seed, "rng seed override");
  if (with_stage) cmd->add_option("--stage", opts.stage, "stage to resume from");
}

int cmd_evaluate(const CommonOpts& opts, const std::string& params_override,
                 const std::string& test_override) {
  config::PipelineConfig cfg = load_config(opts);
  const std::string params_path =
      params_override.empty() ? cfg.out_dir + "/checkpoint.gdlm" : params_override;
  const std::string test_path = test_override.empty() ? cfg.test_path : test_override;
  if (test_path.empty()) throw input_error("no test set: set data.test or --test");

  toylm::Params params = toylm::load_params(params_path);
  std::vector<toylm::Example> test_set = dataio::load_examples(test_path);
  eval::EvalReport report = eval::evaluate(params, test_set, cfg.seed);

  std::filesystem::create_directories(cfg.out_dir);
  const std::string report_path = cfg.out_dir + "/eval.json";
  std::ofstream os(report_path);
  if (!os) throw io_error("cannot write " + report_path);
  os << report.to_json() << "\n";
  std::cout << "token_accuracy=" << report.token_accuracy << " bleu=" << report.bleu_score
            << " report=" << report_path << "\n";
  return 0;
}

int cmd_oracle(const CommonOpts& opts) {
  config::PipelineConfig cfg = load_config(opts);
  config::IniFile ini = config::IniFile::parse_file(opts.config_path);
  nlohmann::json out;

  // Quadratic testbed: retrained loss change vs influence prediction.
  {
    const int dim = static_cast<int>(ini.get_int("oracle", "quadratic_dim", 6));
    const int n_cand = static_cast<int>(ini.get_int("oracle", "quadratic_candidates", 30));
    const double eps = ini.get_double("oracle", "quadratic_epsilon", 0.01);
    Rng rng(cfg.seed, 300);
    oracle::QuadraticTestbed bed;
    bed.eigenvalues.resize(dim);
    for (int i = 0; i < dim; ++i) bed.eigenvalues(i) = 0.5 + 2.0 * rng.uniform();
    bed.basis = Eigen::MatrixXd::Identity(dim, dim);
    bed.centers.resize(n_cand, dim);
    for (int i = 0; i < n_cand; ++i)
      for (int j = 0; j < dim; ++j) bed.centers(i, j) = rng.normal();
    bed.test_center.resize(dim);
    for (int j = 0; j < dim; ++j) bed.test_center(j) = rng.normal();
    bed.eta = 0.1;
    bed.steps = 50;

    std::vector<double> deltas, predictions;
    for (int m = 0; m < n_cand; ++m) {
      deltas.push_back(bed.delta(eps, static_cast<std::size_t>(m)));
      predictions.push_back(eps * bed.influence(static_cast<std::size_t>(m)));
    }
    out["quadratic"] = {{"pearson_r", oracle::pearson(deltas, predictions)},
                        {"deltas", deltas},
                        {"predictions", predictions}};
  }

  // Lemma-1 equivalence error on a rotated quadratic.
  {
    Rng rng(cfg.seed, 301);
    const int dim = 5;
    oracle::QuadraticProblem problem;
    problem.eigenvalues.resize(dim);
    for (int i = 0; i < dim; ++i) problem.eigenvalues(i) = 0.2 + 1.5 * rng.uniform();
    Eigen::MatrixXd gauss(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) gauss(i, j) = rng.normal();
    problem.basis = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
    problem.target.resize(dim);
    for (int i = 0; i < dim; ++i) problem.target(i) = rng.normal();
    out["lemma1"] = {{"max_error", oracle::gd_vs_ridge_check(problem, 0.1, 40)}};
  }

  // LM upweighted retraining vs influence, on the candidate pool.
  if (ini.get_int("oracle", "lm_candidates", 0) > 0) {
    cfg.validate_paths();
    std::vector<toylm::Example> train_set = dataio::load_examples(cfg.candidates_path);
    std::vector<toylm::Example> seeds = dataio::load_examples(cfg.seeds_path);
    const std::size_t n_cand = std::min<std::size_t>(
        train_set.size(), static_cast<std::size_t>(ini.get_int("oracle", "lm_candidates", 0)));
    const std::size_t n_test =
        std::min<std::size_t>(seeds.size(),
                              static_cast<std::size_t>(ini.get_int("oracle", "lm_seeds", 8)));
    seeds.resize(n_test);

    toylm::Params base = toylm::load_params(cfg.out_dir + "/checkpoint.gdlm");
    oracle::LmExperimentConfig exp;
    exp.candidate_indices.resize(n_cand);
    std::iota(exp.candidate_indices.begin(), exp.candidate_indices.end(), 0);
    exp.lambda = cfg.lambda;
    exp.selector = cfg.influence_selector;
    exp.retrain = cfg.train;
    exp.retrain.epochs = static_cast<int>(ini.get_int("oracle", "lm_retrain_epochs", 1));
    oracle::LmExperimentResult result =
        oracle::lm_upweight_experiment(train_set, seeds, base, exp);
    out["lm"] = {{"pearson_r", result.pearson_r},
                 {"spearman_rho", result.spearman_rho},
                 {"deltas", result.deltas},
                 {"predictions", result.predictions}};
  }

  std::filesystem::create_directories(cfg.out_dir);
  const std::string report_path = cfg.out_dir + "/oracle.json";
  std::ofstream os(report_path);
  if (!os) throw io_error("cannot write " + report_path);
  os << out.dump(2) << "\n";
  std::cout << "oracle report written to " << report_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradient-based selection of high-quality, diverse finetuning data"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string params_override, test_override;

  CLI::App* c_finetune = app.add_subcommand("finetune", "train the model on the candidates");
  add_common(c_finetune, opts);
  CLI::App* c_grads = app.add_subcommand("grads", "extract gradient feature caches");
  add_common(c_grads, opts);
  CLI::App* c_influence =
      app.add_subcommand("influence", "build KFAC curvature and the influence matrix");
  add_common(c_influence, opts);
  CLI::App* c_select = app.add_subcommand("select", "quality filter + diversity resampling");
  add_common(c_select, opts);
  CLI::App* c_pipeline = app.add_subcommand("pipeline", "run every stage with caching");
  add_common(c_pipeline, opts, /*with_stage=*/true);
  CLI::App* c_evaluate = app.add_subcommand("evaluate", "greedy decode + metrics");
  add_common(c_evaluate, opts);
  c_evaluate->add_option("--params", params_override, "checkpoint path");
  c_evaluate->add_option("--test", test_override, "test set path");
  CLI::App* c_oracle = app.add_subcommand("oracle", "ground-truth retraining checks");
  add_common(c_oracle, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_finetune->parsed()) {
      pipeline::run_single(load_config(opts), "finetune");
    } else if (c_grads->parsed()) {
      pipeline::run_single(load_config(opts), "grads");
    } else if (c_influence->parsed()) {
      config::PipelineConfig cfg = load_config(opts);
      pipeline::run_single(cfg, "curvature");
      pipeline::run_single(cfg, "influence");
    } else if (c_select->parsed()) {
      pipeline::run_single(load_config(opts), "select");
    } else if (c_pipeline->parsed()) {
      select::SelectionReport report = pipeline::run(load_config(opts), opts.stage);
      std::cout << "selected " << report.selected_ids.size() << " of "
                << report.quality_pass_ids.size() << " quality-pass candidates\n";
    } else if (c_evaluate->parsed()) {
      return cmd_evaluate(opts, params_override, test_override);
    } else if (c_oracle->parsed()) {
      return cmd_oracle(opts);
    }
  } catch (const Error& e) {
    std::cerr << "error" << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal] " << e.what() << "\n";
    return 1;
  }
  return 0;
}
