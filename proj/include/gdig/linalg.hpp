#pragma once

#include <Eigen/Dense>

#include "gdig/rng.hpp"

namespace gdig {

struct SymEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns, input = V diag(values) V^T
};

// Eigendecomposition of a symmetric matrix. Input must be square and
// symmetric to 1e-8; reconstruction holds to 1e-10 relative error.
SymEigen sym_eig(const Eigen::MatrixXd& m);

// Solve m x = b for symmetric positive definite m.
Eigen::VectorXd spd_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& b);

// out_dim x input_dim matrix with i.i.d. N(0, 1/out_dim) entries,
// deterministic given the rng state.
Eigen::MatrixXd random_projection(int input_dim, int out_dim, Rng& rng);

// Squared Euclidean distances between rows of `points` (n x d -> n x n).
Eigen::MatrixXd pairwise_sqdist(const Eigen::MatrixXd& points);

}  // namespace gdig
