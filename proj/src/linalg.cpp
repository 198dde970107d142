#include "gdig/linalg.hpp"

#include <cmath>

#include "gdig/error.hpp"

namespace gdig {

SymEigen sym_eig(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw shape_error("sym_eig: matrix must be square");
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw shape_error("sym_eig: matrix not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) {
    throw singular_error("sym_eig: eigensolver did not converge");
  }
  return SymEigen{solver.eigenvalues(), solver.eigenvectors()};
}

Eigen::VectorXd spd_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& b) {
  if (m.rows() != m.cols() || m.rows() != b.size()) {
    throw shape_error("spd_solve: dimension mismatch");
  }
  SymEigen eig = sym_eig(m);
  if (eig.values.minCoeff() <= 0.0) {
    throw singular_error("spd_solve: matrix not positive definite");
  }
  // Solve in the eigenbasis; LLT would do, but the spectrum is already
  // needed for the PD check.
  Eigen::VectorXd coeffs = eig.vectors.transpose() * b;
  coeffs.array() /= eig.values.array();
  return eig.vectors * coeffs;
}

Eigen::MatrixXd random_projection(int input_dim, int out_dim, Rng& rng) {
  if (out_dim <= 0 || out_dim > input_dim) {
    throw shape_error("random_projection: need 0 < out_dim <= input_dim");
  }
  const double sigma = 1.0 / std::sqrt(static_cast<double>(out_dim));
  Eigen::MatrixXd p(out_dim, input_dim);
  for (int i = 0; i < out_dim; ++i) {
    for (int j = 0; j < input_dim; ++j) {
      p(i, j) = sigma * rng.normal();
    }
  }
  return p;
}

Eigen::MatrixXd pairwise_sqdist(const Eigen::MatrixXd& points) {
  if (points.rows() == 0) {
    throw shape_error("pairwise_sqdist: empty input");
  }
  const Eigen::Index n = points.rows();
  Eigen::VectorXd sq = points.rowwise().squaredNorm();
  Eigen::MatrixXd d = sq.replicate(1, n) + sq.transpose().replicate(n, 1) -
                      2.0 * points * points.transpose();
  // Symmetrize and clip roundoff negatives.
  d = 0.5 * (d + d.transpose()).eval();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

}  // namespace gdig
