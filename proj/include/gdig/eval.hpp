#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gdig/toylm.hpp"

namespace gdig::eval {

// Corpus BLEU-4 in [0, 100]: add-one smoothing on the n>1 precisions,
// brevity penalty, whitespace tokenization.
double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
};

// Paired two-sided t-test on a - b; all-zero differences return (0, 1).
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct EvalReport {
  double token_accuracy = 0.0;  // teacher-forced argmax vs reference
  double bleu_score = 0.0;      // greedy decode vs reference text
  std::vector<double> per_example_accuracy;
  std::optional<TTestResult> t_test;

  std::string to_json() const;
};

EvalReport evaluate(const toylm::Params& params, const std::vector<toylm::Example>& test_set,
                    std::uint64_t seed = 0);

}  // namespace gdig::eval
