#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdig/toylm.hpp"

namespace gdig::finetune {

enum class Optimizer { kSgd, kAdam };

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 1;
  int batch_size = 8;
  int eval_every_steps = 10;
  Optimizer optimizer = Optimizer::kSgd;
  std::uint64_t seed = 0;

  // Paper-style defaults: lr 1e-5, 3 epochs, global batch 64, eval every 10.
  static TrainConfig paper_preset();
  // Desk-scale defaults for the toy model.
  static TrainConfig toy_preset();

  void validate() const;
};

struct EvalPoint {
  int step = 0;
  double valid_loss = 0.0;
};

struct TrainHistory {
  std::vector<double> train_loss;  // per optimization step
  std::vector<EvalPoint> evals;
  int best_step = 0;
  double best_valid_loss = 0.0;
};

// Mean of per-example losses, summed in index order.
double mean_loss(const toylm::Params& params, const std::vector<toylm::Example>& data);

// Minimize the mean response loss; returns the checkpoint with the
// smallest recorded validation loss (evaluated every eval_every_steps and
// at the final step).
std::pair<toylm::Params, TrainHistory> train(const toylm::Params& params0,
                                             const std::vector<toylm::Example>& train_set,
                                             const std::vector<toylm::Example>& valid_set,
                                             const TrainConfig& cfg);

// Minimize sum_i w_i * L_i with the same shuffling and batching as train()
// and no checkpoint selection; used by the upweighted retraining oracle,
// where the two runs must differ only in the weights.
toylm::Params train_weighted(const toylm::Params& params0,
                             const std::vector<toylm::Example>& data,
                             const std::vector<double>& weights, const TrainConfig& cfg);

std::string history_to_json(const TrainHistory& history);

}  // namespace gdig::finetune
