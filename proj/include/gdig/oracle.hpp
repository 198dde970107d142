#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gdig/curvature.hpp"
#include "gdig/finetune.hpp"
#include "gdig/gradfeat.hpp"
#include "gdig/toylm.hpp"

namespace gdig::oracle {

// ---- Upweighted retraining on the toy LM ----

struct UpweightSpec {
  std::size_t candidate_index = 0;
  double epsilon = 0.0;  // nonzero, |epsilon| <= 1
  finetune::TrainConfig retrain;
  toylm::Example test_example;
};

// Retrains twice from base_params (weights 1/n vs 1/n + eps on the
// candidate, identical shuffling) and returns the test-loss difference.
double upweight_delta(const std::vector<toylm::Example>& train_set, const UpweightSpec& spec,
                      const toylm::Params& base_params);

// ---- Lemma-1 SGD / ridge equivalence ----

// The damping implied by T fixed-rate gradient steps in one
// eigendirection: lambda = ev * r / (1 - r) with r = (1 - eta*ev)^T.
double lemma1_lambda(double eta, int steps, double eigenvalue);

struct QuadraticProblem {
  Eigen::VectorXd eigenvalues;  // all > 0
  Eigen::MatrixXd basis;        // orthonormal Q
  Eigen::VectorXd target;       // minimizer; training starts at zero
};

// Runs T full-batch gradient steps from zero on the quadratic and
// compares against the ridge minimizer with per-direction lemma lambda;
// returns the max absolute coordinate error.
double gd_vs_ridge_check(const QuadraticProblem& p, double eta, int steps);

// ---- Quadratic influence testbed ----

// n candidate losses L_i(theta) = 1/2 (theta - c_i)^T H (theta - c_i)
// sharing the curvature H = Q diag(ev) Q^T; training runs T full-batch
// gradient steps from zero on the (optionally upweighted) mean loss.
struct QuadraticTestbed {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd basis;
  Eigen::MatrixXd centers;      // n x d candidate minimizers
  Eigen::VectorXd test_center;  // minimizer of the probe loss
  double eta = 0.1;
  int steps = 50;

  Eigen::VectorXd train(double epsilon, std::size_t candidate) const;
  double test_loss(const Eigen::VectorXd& theta) const;
  // Actual retrained test-loss change for upweighting `candidate` by eps.
  double delta(double epsilon, std::size_t candidate) const;
  // Influence score at the end of base training, with per-direction
  // lemma-1 damping.
  double influence(std::size_t candidate) const;
};

// ---- Planted-noise synthetic corpus ----

struct NoiseSpec {
  std::size_t corpus_size = 500;
  double noise_rate = 0.1;  // in [0, 1)
  std::uint64_t seed = 0;
  int cipher_shift = 3;
};

// Cipher-translation corpus: source is a random lowercase string, target
// shifts each letter by cipher_shift (mod 26); with probability
// noise_rate the target is replaced by an unrelated string and flagged.
std::pair<std::vector<toylm::Example>, std::vector<bool>> make_noisy_corpus(
    const NoiseSpec& spec);

// ---- Correlation helpers ----

double pearson(const std::vector<double>& a, const std::vector<double>& b);
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// ---- LM influence-vs-retraining experiment ----

struct LmExperimentConfig {
  std::vector<std::size_t> candidate_indices;
  double epsilon = 0.0;  // 0 means 0.5/n
  double lambda = 1e-3;
  gradfeat::LayerSelector selector = gradfeat::LayerSelector::strided(3);
  finetune::TrainConfig retrain;
};

struct LmExperimentResult {
  std::vector<double> deltas;       // mean test-loss change per candidate
  std::vector<double> predictions;  // eps * mean influence per candidate
  double pearson_r = 0.0;
  double spearman_rho = 0.0;
};

// For each candidate: retrain with its loss upweighted by eps and measure
// the mean loss change over test_set; compare against the influence
// prediction computed from KFAC curvature at base_params.
LmExperimentResult lm_upweight_experiment(const std::vector<toylm::Example>& train_set,
                                          const std::vector<toylm::Example>& test_set,
                                          const toylm::Params& base_params,
                                          const LmExperimentConfig& cfg);

}  // namespace gdig::oracle
