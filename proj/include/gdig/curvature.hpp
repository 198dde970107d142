#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gdig/gradfeat.hpp"
#include "gdig/linalg.hpp"
#include "gdig/toylm.hpp"

namespace gdig::curvature {

// Per-layer Kronecker factors of the empirical Fisher: A is the second
// moment of layer inputs (with homogeneous 1), G of pre-activation
// gradients, both averaged over response tokens.
struct LayerFactor {
  int layer_index = 0;
  Eigen::MatrixXd A;  // (in+1) x (in+1)
  Eigen::MatrixXd G;  // out x out
};

struct KfacFactor {
  std::vector<LayerFactor> layers;
  std::int64_t token_count = 0;
};

struct LayerInverse {
  int layer_index = 0;
  SymEigen A;  // eigendecomposition, negatives clamped to 0
  SymEigen G;
};

// Eigen-damped Kronecker inverse: applies (G (x) A + lambda I)^-1 per
// layer exactly in the factor eigenbasis.
struct DampedInverse {
  std::vector<LayerInverse> layers;
  double lambda = 1e-3;
};

// A = (1/N_tok) sum a a^T, G = (1/N_tok) sum g g^T over all response
// tokens of all examples, for the selected layers.
KfacFactor accumulate(const std::vector<toylm::Example>& data, const toylm::Params& params,
                      const gradfeat::LayerSelector& sel);

DampedInverse prepare_inverse(const KfacFactor& factors, double lambda);

// (H + lambda I)^-1 grad, blockwise per layer, without materializing the
// Kronecker product. Layout matches gradfeat (row-major [W | b] blocks).
Eigen::VectorXd ihvp(const DampedInverse& inv, const Eigen::VectorXf& grad);
Eigen::VectorXd ihvp(const DampedInverse& inv, const Eigen::VectorXd& grad);

// Dense reference eFIM over per-example token-summed gradients, in the
// same flattened layout; guarded to small layer selections.
Eigen::MatrixXd dense_efim(const std::vector<toylm::Example>& data,
                           const toylm::Params& params, const gradfeat::LayerSelector& sel);

std::int64_t inverse_dim(const DampedInverse& inv);

void save_factors(const KfacFactor& factors, const std::string& path);
KfacFactor load_factors(const std::string& path);

}  // namespace gdig::curvature
