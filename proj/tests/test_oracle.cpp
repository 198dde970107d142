#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gdig/error.hpp"
#include "gdig/oracle.hpp"
#include "gdig/rng.hpp"

using namespace gdig;
using namespace gdig::toylm;
using namespace gdig::oracle;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.embed_dim = 4;
  cfg.context_window = 4;
  cfg.hidden_dim = 6;
  cfg.num_mlp_layers = 2;
  return cfg;
}

std::vector<Example> tiny_dataset() {
  std::vector<Example> data;
  const char* pairs[][2] = {{"ab", "xy"}, {"cd", "uv"}, {"ef", "st"}, {"gh", "qr"}};
  int i = 0;
  for (const auto& pr : pairs) {
    Example ex;
    ex.id = "d" + std::to_string(i++);
    ex.prompt_tokens = vocab::tokenize(pr[0]);
    ex.response_tokens = vocab::tokenize(pr[1]);
    ex.response_tokens.push_back(vocab::kEos);
    data.push_back(ex);
  }
  return data;
}

Eigen::MatrixXd random_orthonormal(int n, Rng& rng) {
  Eigen::MatrixXd gauss(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gauss(i, j) = rng.normal();
  return Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
}

}  // namespace

TEST_CASE("lemma1_lambda closed-form checks") {
  // r = (1 - eta*ev)^T; with eta*ev = 0.5, T = 1: r = 1/2, lambda = ev.
  CHECK(lemma1_lambda(0.5, 1, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  // eta*ev = 1 gives r = 0: fully converged, no damping.
  CHECK(lemma1_lambda(1.0, 5, 1.0) == 0.0);
  // Hand-derived case: eta = 0.1, ev = 1, T = 10 -> r = 0.9^10.
  const double r = std::pow(0.9, 10);
  CHECK(lemma1_lambda(0.1, 10, 1.0) == doctest::Approx(r / (1.0 - r)).epsilon(1e-12));
  // More steps always means less damping.
  CHECK(lemma1_lambda(0.1, 20, 1.0) < lemma1_lambda(0.1, 10, 1.0));
}

TEST_CASE("lemma1_lambda rejects divergent step sizes") {
  CHECK_THROWS_AS(lemma1_lambda(3.0, 5, 1.0), Error);   // 1 - eta*ev < 0
  CHECK_THROWS_AS(lemma1_lambda(0.0, 5, 1.0), Error);   // no progress: r = 1
  CHECK_THROWS_AS(lemma1_lambda(0.1, 5, 0.0), Error);   // zero curvature
}

TEST_CASE("gd equals ridge on a diagonal quadratic") {
  QuadraticProblem p;
  p.eigenvalues = Eigen::Vector4d(0.3, 0.7, 1.2, 2.0);
  p.basis = Eigen::MatrixXd::Identity(4, 4);
  p.target = Eigen::Vector4d(1.0, -2.0, 0.5, 3.0);
  CHECK(gd_vs_ridge_check(p, 0.2, 25) < 1e-12);
}

TEST_CASE("gd equals ridge on a rotated quadratic") {
  Rng rng(3);
  QuadraticProblem p;
  p.eigenvalues.resize(5);
  for (int i = 0; i < 5; ++i) p.eigenvalues(i) = 0.2 + 1.5 * rng.uniform();
  p.basis = random_orthonormal(5, rng);
  p.target.resize(5);
  for (int i = 0; i < 5; ++i) p.target(i) = rng.normal();
  CHECK(gd_vs_ridge_check(p, 0.1, 40) < 1e-8);
}

TEST_CASE("quadratic testbed influence is exact up to a shared offset") {
  // Upweighting also scales the Hessian by (1 + eps), which shifts every
  // candidate's delta by the same amount at first order; the influence
  // score captures all of the candidate-dependent part.
  Rng rng(5);
  QuadraticTestbed bed;
  const int d = 4, n = 6;
  bed.eigenvalues.resize(d);
  for (int i = 0; i < d; ++i) bed.eigenvalues(i) = 0.5 + rng.uniform();
  bed.basis = random_orthonormal(d, rng);
  bed.centers.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) bed.centers(i, j) = rng.normal();
  bed.test_center.resize(d);
  for (int j = 0; j < d; ++j) bed.test_center(j) = rng.normal();
  bed.eta = 0.1;
  bed.steps = 60;

  const double eps = 1e-5;
  std::vector<double> residual;
  for (std::size_t m = 0; m < n; ++m) {
    residual.push_back(bed.delta(eps, m) - eps * bed.influence(m));
  }
  const double offset = std::accumulate(residual.begin(), residual.end(), 0.0) / n;
  for (double r : residual) CHECK(std::abs(r - offset) < 1e-9);
}

TEST_CASE("quadratic testbed delta is antisymmetric in epsilon at first order") {
  Rng rng(6);
  QuadraticTestbed bed;
  bed.eigenvalues = Eigen::Vector3d(0.4, 0.9, 1.6);
  bed.basis = Eigen::MatrixXd::Identity(3, 3);
  bed.centers.resize(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) bed.centers(i, j) = rng.normal();
  bed.test_center = Eigen::Vector3d(0.5, -1.0, 2.0);
  bed.eta = 0.15;
  bed.steps = 40;
  const double eps = 1e-4;
  const double plus = bed.delta(eps, 1);
  const double minus = bed.delta(-eps, 1);
  // The sum cancels the first-order term; what remains is O(eps^2).
  CHECK(std::abs(plus + minus) < 1e-6);
  CHECK(std::abs(plus + minus) < 0.05 * std::abs(plus));
}

TEST_CASE("upweight_delta with epsilon 0 is exactly zero") {
  Rng rng(7);
  Params base = Params::random_init(tiny_config(), 0.2, rng);
  std::vector<Example> data = tiny_dataset();
  UpweightSpec spec;
  spec.candidate_index = 1;
  spec.epsilon = 0.0;
  spec.retrain.learning_rate = 0.05;
  spec.retrain.epochs = 2;
  spec.retrain.batch_size = 2;
  spec.test_example = data[0];
  CHECK(upweight_delta(data, spec, base) == 0.0);
}

TEST_CASE("upweight_delta is first-order antisymmetric in epsilon") {
  Rng rng(8);
  Params base = Params::random_init(tiny_config(), 0.2, rng);
  std::vector<Example> data = tiny_dataset();
  UpweightSpec spec;
  spec.candidate_index = 2;
  spec.retrain.learning_rate = 0.05;
  spec.retrain.epochs = 2;
  spec.retrain.batch_size = 4;
  spec.test_example = data[0];
  spec.epsilon = 1e-4;
  const double plus = upweight_delta(data, spec, base);
  spec.epsilon = -1e-4;
  const double minus = upweight_delta(data, spec, base);
  CHECK(plus != 0.0);
  CHECK(std::abs(plus + minus) < 0.05 * std::abs(plus));
}

TEST_CASE("upweighting an example reduces its own loss") {
  Rng rng(9);
  Params base = Params::random_init(tiny_config(), 0.2, rng);
  std::vector<Example> data = tiny_dataset();
  UpweightSpec spec;
  spec.candidate_index = 3;
  spec.epsilon = 0.5;
  spec.retrain.learning_rate = 0.05;
  spec.retrain.epochs = 5;
  spec.retrain.batch_size = 4;
  spec.test_example = data[3];  // probe the candidate itself
  CHECK(upweight_delta(data, spec, base) < 0.0);
}

TEST_CASE("make_noisy_corpus is deterministic and honest about its flags") {
  NoiseSpec spec;
  spec.corpus_size = 200;
  spec.noise_rate = 0.2;
  spec.seed = 31;
  auto [ex1, fl1] = make_noisy_corpus(spec);
  auto [ex2, fl2] = make_noisy_corpus(spec);
  REQUIRE(ex1.size() == 200);
  CHECK(fl1 == fl2);
  for (std::size_t i = 0; i < ex1.size(); ++i) {
    CHECK(ex1[i].id == ex2[i].id);
    CHECK(ex1[i].prompt_tokens == ex2[i].prompt_tokens);
    CHECK(ex1[i].response_tokens == ex2[i].response_tokens);
  }
  // Flagged fraction is near the configured rate.
  const double frac = std::count(fl1.begin(), fl1.end(), true) / 200.0;
  CHECK(frac > 0.1);
  CHECK(frac < 0.3);
  // Clean rows decode to the shift cipher of the prompt's quoted source.
  for (std::size_t i = 0; i < ex1.size(); ++i) {
    const std::string prompt = vocab::detokenize(ex1[i].prompt_tokens);
    const auto q1 = prompt.find('"');
    const auto q2 = prompt.rfind('"');
    REQUIRE(q1 != std::string::npos);
    const std::string src = prompt.substr(q1 + 1, q2 - q1 - 1);
    std::string expected = src;
    for (auto& c : expected) c = static_cast<char>('a' + (c - 'a' + 3) % 26);
    TokenList resp = ex1[i].response_tokens;
    REQUIRE(resp.back() == vocab::kEos);
    resp.pop_back();
    if (!fl1[i]) {
      CHECK(vocab::detokenize(resp) == expected);
    } else {
      CHECK(vocab::detokenize(resp) != expected);
    }
  }
}

TEST_CASE("make_noisy_corpus validates the rate") {
  NoiseSpec spec;
  spec.noise_rate = 1.0;
  CHECK_THROWS_AS(make_noisy_corpus(spec), Error);
}

TEST_CASE("pearson and spearman agree with hand-computed values") {
  std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y{2, 4, 6, 8, 10};
  CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-14));
  std::vector<double> yneg{5, 4, 3, 2, 1};
  CHECK(pearson(x, yneg) == doctest::Approx(-1.0).epsilon(1e-14));
  // Monotone but nonlinear: spearman 1, pearson < 1.
  std::vector<double> ymono{1, 8, 27, 64, 125};
  CHECK(spearman(x, ymono) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pearson(x, ymono) < 1.0);
  // Constant input: defined as zero correlation.
  std::vector<double> flat{3, 3, 3, 3, 3};
  CHECK(pearson(x, flat) == 0.0);
  // Tied values use average ranks; textbook example.
  std::vector<double> a{1, 2, 2, 4};
  std::vector<double> b{1, 3, 2, 4};
  CHECK(spearman(a, b) == doctest::Approx(0.9486832980505138).epsilon(1e-9));
}

TEST_CASE("lm_upweight_experiment runs end to end on a small problem") {
  Rng rng(12);
  Params base = Params::random_init(tiny_config(), 0.2, rng);
  std::vector<Example> data = tiny_dataset();
  LmExperimentConfig cfg;
  cfg.candidate_indices = {0, 1, 2, 3};
  cfg.lambda = 1e-3;
  cfg.selector = gradfeat::LayerSelector::explicit_layers({2});
  cfg.retrain.learning_rate = 0.05;
  cfg.retrain.epochs = 2;
  cfg.retrain.batch_size = 4;
  LmExperimentResult r = lm_upweight_experiment(data, {data[0], data[1]}, base, cfg);
  REQUIRE(r.deltas.size() == 4);
  REQUIRE(r.predictions.size() == 4);
  for (double d : r.deltas) CHECK(std::isfinite(d));
  for (double p : r.predictions) CHECK(std::isfinite(p));
  CHECK(std::abs(r.pearson_r) <= 1.0 + 1e-12);
  CHECK(std::abs(r.spearman_rho) <= 1.0 + 1e-12);
}
