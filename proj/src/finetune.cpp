#include "gdig/finetune.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "gdig/error.hpp"
#include "gdig/parallel.hpp"
#include "gdig/rng.hpp"

namespace gdig::finetune {

using toylm::Example;
using toylm::Params;

TrainConfig TrainConfig::paper_preset() {
  TrainConfig cfg;
  cfg.learning_rate = 1e-5;
  cfg.epochs = 3;
  cfg.batch_size = 64;
  cfg.eval_every_steps = 10;
  return cfg;
}

TrainConfig TrainConfig::toy_preset() {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.eval_every_steps = 10;
  return cfg;
}

void TrainConfig::validate() const {
  if (learning_rate < 0.0) throw input_error("learning_rate must be >= 0");
  if (epochs < 1) throw input_error("epochs must be >= 1");
  if (batch_size < 1) throw input_error("batch_size must be >= 1");
  if (eval_every_steps < 1) throw input_error("eval_every_steps must be >= 1");
}

double mean_loss(const Params& params, const std::vector<Example>& data) {
  if (data.empty()) throw input_error("mean_loss: empty dataset");
  std::vector<double> losses = parallel_map<double>(
      data.size(), [&](std::size_t i) { return toylm::loss(params, data[i]); });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(data.size());
}

namespace {

struct AdamState {
  Params m;
  Params v;
  int t = 0;
};

template <typename Fn>
void for_each_block(Params& a, Params& b, Params& c, Params& d, Fn fn) {
  fn(a.embedding, b.embedding, c.embedding, d.embedding);
  for (std::size_t l = 0; l < a.hidden.size(); ++l) {
    fn(a.hidden[l].W, b.hidden[l].W, c.hidden[l].W, d.hidden[l].W);
    fn(a.hidden[l].b, b.hidden[l].b, c.hidden[l].b, d.hidden[l].b);
  }
  fn(a.output.W, b.output.W, c.output.W, d.output.W);
  fn(a.output.b, b.output.b, c.output.b, d.output.b);
}

void adam_step(Params& theta, Params& grad, AdamState& state, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, state.t);
  const double bc2 = 1.0 - std::pow(beta2, state.t);
  for_each_block(theta, grad, state.m, state.v, [&](auto& th, auto& g, auto& m, auto& v) {
    m = beta1 * m + (1.0 - beta1) * g;
    v = (beta2 * v.array() + (1.0 - beta2) * g.array().square()).matrix();
    th.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  });
}

// Weighted batch gradient, merged in batch index order for determinism.
std::pair<Params, double> batch_gradient(const Params& params,
                                         const std::vector<Example>& data,
                                         const std::vector<std::size_t>& batch,
                                         const std::vector<double>& weights) {
  auto per_example = parallel_map<std::pair<toylm::PerExampleGradient, double>>(
      batch.size(), [&](std::size_t k) {
        const Example& ex = data[batch[k]];
        auto [g, stats] = toylm::backward(params, ex);
        return std::make_pair(std::move(g), toylm::loss(params, ex));
      });
  Params total = Params::zeros(params.config);
  double loss_sum = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const double w = weights[batch[k]];
    total.axpy(w, per_example[k].first.blocks);
    loss_sum += w * per_example[k].second;
  }
  return {std::move(total), loss_sum};
}

// Core loop minimizing sum_i w_i L_i. Each batch estimates the weighted
// sum by scaling with n/|B|; for uniform weights this is the batch mean.
Params run_optimizer(const Params& params0, const std::vector<Example>& data,
                     const std::vector<double>& weights, const TrainConfig& cfg,
                     const std::function<void(int, double, const Params&)>& on_step) {
  Params theta = params0;
  AdamState adam;
  if (cfg.optimizer == Optimizer::kAdam) {
    adam.m = Params::zeros(params0.config);
    adam.v = Params::zeros(params0.config);
  }
  const std::size_t n = data.size();
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(cfg.seed, static_cast<std::uint64_t>(epoch) + 1);
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
      const double scale = static_cast<double>(n) / static_cast<double>(batch.size());
      auto [grad, batch_loss] = batch_gradient(theta, data, batch, weights);
      if (!std::isfinite(batch_loss)) {
        throw divergence_error("non-finite loss at step " + std::to_string(step));
      }
      if (cfg.optimizer == Optimizer::kSgd) {
        if (cfg.learning_rate != 0.0) theta.axpy(-cfg.learning_rate * scale, grad);
      } else {
        grad.scale(scale);
        adam_step(theta, grad, adam, cfg.learning_rate);
      }
      ++step;
      if (on_step) on_step(step, batch_loss * scale, theta);
    }
  }
  return theta;
}

}  // namespace

std::pair<Params, TrainHistory> train(const Params& params0,
                                      const std::vector<Example>& train_set,
                                      const std::vector<Example>& valid_set,
                                      const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || valid_set.empty()) {
    throw input_error("train: train and valid sets must be non-empty");
  }
  const std::size_t n = train_set.size();
  std::vector<double> weights(n, 1.0 / static_cast<double>(n));
  const int steps_per_epoch = static_cast<int>((n + cfg.batch_size - 1) / cfg.batch_size);
  const int total_steps = cfg.epochs * steps_per_epoch;

  TrainHistory history;
  Params best = params0;
  bool have_best = false;
  auto on_step = [&](int step, double train_loss, const Params& theta) {
    history.train_loss.push_back(train_loss);
    if (step % cfg.eval_every_steps == 0 || step == total_steps) {
      const double vl = mean_loss(theta, valid_set);
      history.evals.push_back(EvalPoint{step, vl});
      if (!have_best || vl < history.best_valid_loss) {
        have_best = true;
        history.best_valid_loss = vl;
        history.best_step = step;
        best = theta;
      }
    }
  };
  run_optimizer(params0, train_set, weights, cfg, on_step);
  return {std::move(best), std::move(history)};
}

Params train_weighted(const Params& params0, const std::vector<Example>& data,
                      const std::vector<double>& weights, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw input_error("train_weighted: empty dataset");
  if (weights.size() != data.size()) {
    throw input_error("train_weighted: weights/data size mismatch");
  }
  return run_optimizer(params0, data, weights, cfg, nullptr);
}

std::string history_to_json(const TrainHistory& history) {
  std::ostringstream os;
  os << "{\"best_step\":" << history.best_step
     << ",\"best_valid_loss\":" << history.best_valid_loss << ",\"train_loss\":[";
  for (std::size_t i = 0; i < history.train_loss.size(); ++i) {
    if (i) os << ",";
    os << history.train_loss[i];
  }
  os << "],\"evals\":[";
  for (std::size_t i = 0; i < history.evals.size(); ++i) {
    if (i) os << ",";
    os << "{\"step\":" << history.evals[i].step
       << ",\"valid_loss\":" << history.evals[i].valid_loss << "}";
  }
  os << "]}";
  return os.str();
}

}  // namespace gdig::finetune
