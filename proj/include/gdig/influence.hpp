#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gdig/curvature.hpp"
#include "gdig/gradfeat.hpp"

namespace gdig::influence {

struct SeedSet {
  std::vector<toylm::Example> examples;
  gradfeat::GradCache features;
};

// rows = candidates, cols = seeds; entry (m, t) is I(z_m, z_t). Negative
// means training on candidate m is predicted to reduce loss on seed t.
struct InfluenceMatrix {
  std::vector<std::string> candidate_ids;
  std::vector<std::string> seed_ids;
  Eigen::MatrixXd scores;
  double lambda = 0.0;
  std::string selector;
  std::uint64_t config_hash = 0;
};

// -<(H + lambda I)^-1 g_t, g_m>
double influence_pair(const curvature::DampedInverse& inv,
                      const gradfeat::FeatureVector& g_t, const gradfeat::FeatureVector& g_m);

double self_influence(const curvature::DampedInverse& inv, const gradfeat::FeatureVector& g);

// Precomputes one ihvp per seed, then scores every candidate row.
InfluenceMatrix influence_matrix(const curvature::DampedInverse& inv,
                                 const gradfeat::GradCache& seeds,
                                 const gradfeat::GradCache& candidates);

// Header JSON (ids, dims, lambda, selector, config hash) followed by a
// raw little-endian f64 block, row-major.
void save_matrix(const InfluenceMatrix& m, const std::string& path);
InfluenceMatrix load_matrix(const std::string& path);

}  // namespace gdig::influence
