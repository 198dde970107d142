#include "gdig/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gdig/error.hpp"
#include "gdig/influence.hpp"
#include "gdig/parallel.hpp"
#include "gdig/rng.hpp"

namespace gdig::oracle {

using toylm::Example;
using toylm::Params;

double upweight_delta(const std::vector<Example>& train_set, const UpweightSpec& spec,
                      const Params& base_params) {
  const std::size_t n = train_set.size();
  if (spec.candidate_index >= n) throw input_error("upweight_delta: candidate out of range");
  if (std::abs(spec.epsilon) > 1.0) throw input_error("upweight_delta: |epsilon| must be <= 1");

  std::vector<double> base_weights(n, 1.0 / static_cast<double>(n));
  std::vector<double> up_weights = base_weights;
  up_weights[spec.candidate_index] += spec.epsilon;

  const Params theta0 = finetune::train_weighted(base_params, train_set, base_weights,
                                                 spec.retrain);
  const Params theta_eps = finetune::train_weighted(base_params, train_set, up_weights,
                                                    spec.retrain);
  return toylm::loss(theta_eps, spec.test_example) - toylm::loss(theta0, spec.test_example);
}

double lemma1_lambda(double eta, int steps, double eigenvalue) {
  const double factor = 1.0 - eta * eigenvalue;
  if (factor < 0.0 || factor >= 1.0) {
    throw precondition_error("lemma1_lambda: need 0 <= 1 - eta*eigenvalue < 1");
  }
  const double r = std::pow(factor, steps);
  if (r == 0.0) return 0.0;
  return eigenvalue * r / (1.0 - r);
}

double gd_vs_ridge_check(const QuadraticProblem& p, double eta, int steps) {
  const Eigen::Index d = p.eigenvalues.size();
  // GD from zero on 1/2 (theta - t)^T H (theta - t); gradient H(theta - t).
  Eigen::MatrixXd h = p.basis * p.eigenvalues.asDiagonal() * p.basis.transpose();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  for (int k = 0; k < steps; ++k) {
    theta -= eta * (h * (theta - p.target));
  }
  // Ridge minimizer with the per-direction lemma damping:
  // u_i = ev_i / (ev_i + lambda_i) * (Q^T t)_i.
  Eigen::VectorXd t_eig = p.basis.transpose() * p.target;
  Eigen::VectorXd ridge_eig(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double lambda = lemma1_lambda(eta, steps, p.eigenvalues(i));
    ridge_eig(i) = p.eigenvalues(i) / (p.eigenvalues(i) + lambda) * t_eig(i);
  }
  Eigen::VectorXd ridge = p.basis * ridge_eig;
  return (theta - ridge).cwiseAbs().maxCoeff();
}

Eigen::VectorXd QuadraticTestbed::train(double epsilon, std::size_t candidate) const {
  const Eigen::Index d = centers.cols();
  Eigen::MatrixXd h = basis * eigenvalues.asDiagonal() * basis.transpose();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  const Eigen::VectorXd mean_center = centers.colwise().mean().transpose();
  const Eigen::VectorXd cand_center =
      centers.row(static_cast<Eigen::Index>(candidate)).transpose();
  for (int k = 0; k < steps; ++k) {
    // grad = (1/n) sum H (theta - c_i) + eps H (theta - c_m)
    Eigen::VectorXd grad = h * (theta - mean_center);
    if (epsilon != 0.0) grad += epsilon * (h * (theta - cand_center));
    theta -= eta * grad;
  }
  return theta;
}

double QuadraticTestbed::test_loss(const Eigen::VectorXd& theta) const {
  Eigen::MatrixXd h = basis * eigenvalues.asDiagonal() * basis.transpose();
  Eigen::VectorXd diff = theta - test_center;
  return 0.5 * diff.dot(h * diff);
}

double QuadraticTestbed::delta(double epsilon, std::size_t candidate) const {
  return test_loss(train(epsilon, candidate)) - test_loss(train(0.0, candidate));
}

double QuadraticTestbed::influence(std::size_t candidate) const {
  const Eigen::VectorXd theta = train(0.0, 0);
  Eigen::MatrixXd h = basis * eigenvalues.asDiagonal() * basis.transpose();
  const Eigen::VectorXd grad_test = h * (theta - test_center);
  const Eigen::VectorXd grad_cand =
      h * (theta - centers.row(static_cast<Eigen::Index>(candidate)).transpose());
  // (H + lambda)^-1 with per-direction lemma damping, in the eigenbasis.
  Eigen::VectorXd gt = basis.transpose() * grad_test;
  Eigen::VectorXd gc = basis.transpose() * grad_cand;
  double score = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    const double lambda = lemma1_lambda(eta, steps, eigenvalues(i));
    score -= gt(i) * gc(i) / (eigenvalues(i) + lambda);
  }
  return score;
}

std::pair<std::vector<Example>, std::vector<bool>> make_noisy_corpus(const NoiseSpec& spec) {
  if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0) {
    throw input_error("make_noisy_corpus: noise_rate must be in [0, 1)");
  }
  Rng rng(spec.seed, 0);
  auto random_word = [&](Rng& r) {
    const std::size_t len = 6 + r.index(11);  // 6..16
    std::string s(len, 'a');
    for (auto& c : s) c = static_cast<char>('a' + r.index(26));
    return s;
  };
  auto shift = [&](const std::string& s) {
    std::string out = s;
    for (auto& c : out) c = static_cast<char>('a' + (c - 'a' + spec.cipher_shift) % 26);
    return out;
  };

  std::vector<Example> examples;
  std::vector<bool> corrupted;
  examples.reserve(spec.corpus_size);
  corrupted.reserve(spec.corpus_size);
  for (std::size_t i = 0; i < spec.corpus_size; ++i) {
    const std::string src = random_word(rng);
    std::string tgt = shift(src);
    bool flag = false;
    if (rng.uniform() < spec.noise_rate) {
      tgt = random_word(rng);
      flag = true;
    }
    Example ex;
    ex.id = "noisy-" + std::to_string(i);
    ex.prompt_tokens = toylm::vocab::tokenize(toylm::render_prompt(src, "Cipher"));
    ex.response_tokens = toylm::vocab::tokenize(tgt);
    ex.response_tokens.push_back(toylm::vocab::kEos);
    examples.push_back(std::move(ex));
    corrupted.push_back(flag);
  }
  return {std::move(examples), std::move(corrupted)};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw input_error("pearson: need >= 2 pairs");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

LmExperimentResult lm_upweight_experiment(const std::vector<Example>& train_set,
                                          const std::vector<Example>& test_set,
                                          const Params& base_params,
                                          const LmExperimentConfig& cfg) {
  if (cfg.candidate_indices.empty()) throw input_error("experiment: no candidates");
  if (test_set.empty()) throw input_error("experiment: empty test set");
  const std::size_t n = train_set.size();
  const double eps = cfg.epsilon != 0.0 ? cfg.epsilon : 0.5 / static_cast<double>(n);

  // Influence predictions from curvature at the base checkpoint.
  curvature::KfacFactor factors = curvature::accumulate(train_set, base_params, cfg.selector);
  curvature::DampedInverse inv = curvature::prepare_inverse(factors, cfg.lambda);
  std::vector<Eigen::VectorXd> test_precond(test_set.size());
  for (std::size_t t = 0; t < test_set.size(); ++t) {
    gradfeat::FeatureVector g_t = gradfeat::extract(base_params, test_set[t], cfg.selector);
    test_precond[t] = curvature::ihvp(inv, g_t.values);
  }

  // Baseline retrain shared by every candidate.
  std::vector<double> base_weights(n, 1.0 / static_cast<double>(n));
  const Params theta0 =
      finetune::train_weighted(base_params, train_set, base_weights, cfg.retrain);
  double base_test_loss = 0.0;
  for (const Example& ex : test_set) base_test_loss += toylm::loss(theta0, ex);
  base_test_loss /= static_cast<double>(test_set.size());

  LmExperimentResult result;
  result.deltas.resize(cfg.candidate_indices.size());
  result.predictions.resize(cfg.candidate_indices.size());
  parallel_for(cfg.candidate_indices.size(), [&](std::size_t k) {
    const std::size_t m = cfg.candidate_indices[k];
    if (m >= n) throw input_error("experiment: candidate index out of range");

    std::vector<double> weights = base_weights;
    weights[m] += eps;
    const Params theta_eps =
        finetune::train_weighted(base_params, train_set, weights, cfg.retrain);
    double test_loss = 0.0;
    for (const Example& ex : test_set) test_loss += toylm::loss(theta_eps, ex);
    test_loss /= static_cast<double>(test_set.size());
    result.deltas[k] = test_loss - base_test_loss;

    gradfeat::FeatureVector g_m = gradfeat::extract(base_params, train_set[m], cfg.selector);
    const Eigen::VectorXd gm = g_m.values.cast<double>();
    double mean_influence = 0.0;
    for (const auto& precond : test_precond) mean_influence -= precond.dot(gm);
    mean_influence /= static_cast<double>(test_precond.size());
    result.predictions[k] = eps * mean_influence;
  });
  result.pearson_r = pearson(result.deltas, result.predictions);
  result.spearman_rho = spearman(result.deltas, result.predictions);
  return result;
}

}  // namespace gdig::oracle
