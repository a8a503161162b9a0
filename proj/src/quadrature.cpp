#include "frg/quadrature.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "frg/errors.hpp"

namespace frg {

GaussHermiteRule gauss_hermite(int points) {
  if (points < 1) throw PreconditionError("gauss_hermite: need at least one point");

  // Jacobi matrix of the (physicists') Hermite polynomials: zero diagonal,
  // off-diagonal beta_i = sqrt(i / 2).
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(points, points);
  for (int i = 1; i < points; ++i) {
    const double beta = std::sqrt(0.5 * i);
    jacobi(i, i - 1) = beta;
    jacobi(i - 1, i) = beta;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  if (solver.info() != Eigen::Success)
    throw EvaluationError("gauss_hermite: eigendecomposition failed");

  GaussHermiteRule rule;
  rule.nodes.resize(points);
  rule.weights.resize(points);
  rule.log_weights.resize(points);
  const double log_sqrt_pi = 0.5 * std::log(M_PI);
  for (int i = 0; i < points; ++i) {
    rule.nodes[i] = solver.eigenvalues()(i);
    const double first = solver.eigenvectors()(0, i);
    rule.weights[i] = std::sqrt(M_PI) * first * first;
    rule.log_weights[i] = log_sqrt_pi + 2.0 * std::log(std::abs(first));
  }
  return rule;
}

}  // namespace frg
