#include "gdig/eval.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gdig/error.hpp"
#include "gdig/parallel.hpp"
#include "gdig/rng.hpp"

namespace gdig::eval {

namespace {

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) tokens.push_back(tok);
  return tokens;
}

std::map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      key += tokens[i + j];
      key += '\x1f';
    }
    counts[key]++;
  }
  return counts;
}

}  // namespace

double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size() || hypotheses.empty()) {
    throw input_error("bleu: need equal, non-empty hypothesis/reference lists");
  }
  long long hyp_len = 0, ref_len = 0;
  long long matches[4] = {0, 0, 0, 0};
  long long totals[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto hyp = whitespace_tokens(hypotheses[i]);
    const auto ref = whitespace_tokens(references[i]);
    hyp_len += static_cast<long long>(hyp.size());
    ref_len += static_cast<long long>(ref.size());
    for (int n = 1; n <= 4; ++n) {
      const auto hyp_ngrams = ngram_counts(hyp, n);
      const auto ref_ngrams = ngram_counts(ref, n);
      for (const auto& [key, count] : hyp_ngrams) {
        auto it = ref_ngrams.find(key);
        if (it != ref_ngrams.end()) matches[n - 1] += std::min(count, it->second);
        totals[n - 1] += count;
      }
    }
  }
  if (hyp_len == 0 || totals[0] == 0 || matches[0] == 0) return 0.0;

  double log_precision = 0.0;
  for (int n = 1; n <= 4; ++n) {
    double m = static_cast<double>(matches[n - 1]);
    double t = static_cast<double>(totals[n - 1]);
    if (n > 1) {  // add-one smoothing
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_precision += 0.25 * std::log(m / t);
  }
  const double bp = hyp_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) /
                                             static_cast<double>(hyp_len))
                        : 1.0;
  return 100.0 * bp * std::exp(log_precision);
}

namespace {

// Regularized incomplete beta I_x(a, b) via the standard continued
// fraction expansion.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 200;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw input_error("paired_t_test: need equal lists of length >= 2");
  }
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n - 1);
  if (var == 0.0) {
    if (mean == 0.0) return {0.0, 1.0};
    return {mean > 0.0 ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::min()};
  }
  const double t = mean / std::sqrt(var / static_cast<double>(n));
  const double dof = static_cast<double>(n - 1);
  // two-sided p = I_{dof/(dof+t^2)}(dof/2, 1/2)
  const double p = incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
  return {t, std::max(p, std::numeric_limits<double>::min())};
}

EvalReport evaluate(const toylm::Params& params, const std::vector<toylm::Example>& test_set,
                    std::uint64_t seed) {
  if (test_set.empty()) throw input_error("evaluate: empty test set");
  EvalReport report;
  report.per_example_accuracy.resize(test_set.size());
  std::vector<std::string> hyps(test_set.size());
  std::vector<std::string> refs(test_set.size());
  std::vector<std::size_t> correct_counts(test_set.size(), 0);
  parallel_for(test_set.size(), [&](std::size_t i) {
    const toylm::Example& ex = test_set[i];
    Rng rng(seed, i);
    const toylm::TokenList preds = toylm::teacher_forced_argmax(params, ex, rng);
    std::size_t correct = 0;
    for (std::size_t j = 0; j < preds.size(); ++j) {
      if (preds[j] == ex.response_tokens[j]) ++correct;
    }
    correct_counts[i] = correct;
    report.per_example_accuracy[i] =
        preds.empty() ? 1.0 : static_cast<double>(correct) / static_cast<double>(preds.size());

    const int cap = static_cast<int>(ex.response_tokens.size()) * 2 + 8;
    hyps[i] = toylm::vocab::detokenize(toylm::greedy_decode(params, ex.prompt_tokens, cap));
    refs[i] = toylm::vocab::detokenize(ex.response_tokens);
  });

  std::size_t total_tokens = 0, total_correct = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    total_tokens += test_set[i].response_tokens.size();
    total_correct += correct_counts[i];
  }
  report.token_accuracy =
      total_tokens == 0
          ? 1.0
          : static_cast<double>(total_correct) / static_cast<double>(total_tokens);
  report.bleu_score = bleu(hyps, refs);
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j = {
      {"token_accuracy", token_accuracy},
      {"bleu", bleu_score},
      {"per_example_accuracy", per_example_accuracy},
  };
  if (t_test) {
    j["t_test"] = {{"t", t_test->t}, {"p", t_test->p}};
  }
  return j.dump(2);
}

}  // namespace gdig::eval
