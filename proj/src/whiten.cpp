#include "csim/whiten.hpp"

#include <Eigen/Eigenvalues>
#include <string>

#include "csim/common.hpp"

namespace csim {

WhitenedSet whiten(const ExemplarSet& set, double ridge) {
  set.validate();
  if (ridge < 0.0 && ridge != kAutoRidge) {
    throw std::invalid_argument("ridge must be >= 0");
  }
  const Eigen::Index n = set.size();
  const Eigen::Index d = set.dim();
  if (n < 2) {
    throw std::invalid_argument(
        "whitening needs at least 2 samples, got " + std::to_string(n));
  }

  const Eigen::VectorXd mean = set.descriptors.colwise().mean();
  const Eigen::MatrixXd centered = set.descriptors.rowwise() - mean.transpose();
  Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);
  // Symmetrize before decomposing; the product above is symmetric only up to
  // rounding.
  cov = 0.5 * (cov + cov.transpose()).eval();

  if (ridge == kAutoRidge) {
    ridge = 1e-6 * cov.trace() / static_cast<double>(d);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw SolverError("eigendecomposition of the covariance failed");
  }
  const Eigen::VectorXd evals = eig.eigenvalues();
  const double max_eval = evals.maxCoeff();
  const double singular_floor = 1e-12 * std::max(max_eval, 1.0);
  if (evals.minCoeff() + ridge <= singular_floor) {
    throw DataError(
        "covariance is singular (min eigenvalue " +
        std::to_string(evals.minCoeff()) +
        "); pass ridge > 0 to regularize");
  }

  Eigen::VectorXd inv_sqrt(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    inv_sqrt[i] = 1.0 / std::sqrt(evals[i] + ridge);
  }
  WhitenedSet out;
  out.transform =
      eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
  out.transform = 0.5 * (out.transform + out.transform.transpose()).eval();
  out.mean = mean;
  out.whitened = centered * out.transform;
  out.sequence = set.sequence;
  out.ids = set.ids;
  out.validate();
  return out;
}

}  // namespace csim
