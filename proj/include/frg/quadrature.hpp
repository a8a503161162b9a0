#pragma once

#include <vector>

namespace frg {

/// Nodes and weights of the n-point Gauss-Hermite rule for the weight
/// exp(-z^2) on the real line.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> log_weights;
};

/// Golub-Welsch construction from the Jacobi matrix of the Hermite
/// recurrence. Exact (up to roundoff) for polynomials of degree < 2n.
GaussHermiteRule gauss_hermite(int points);

}  // namespace frg
