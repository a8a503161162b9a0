#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "frg/conjugate.hpp"
#include "frg/measure.hpp"

namespace frg {

struct SmallBallEstimate {
  Eigen::VectorXd center;
  double radius = 0.0;
  double probability = 0.0;
  double std_error = 0.0;
  std::int64_t samples = 0;
  std::int64_t hits = 0;
  bool low_confidence = false;
  bool importance_sampled = false;
};

/// μ{(x−center)ᵀJ(x−center) ≤ radius²} by Monte Carlo on the engine's cached
/// points, with antithetic pairing for symmetric models; switches to a
/// curvature-matched importance sampler when the plain hit count is small.
SmallBallEstimate small_ball(const Expectations& engine, const Eigen::MatrixXd& j,
                             const Eigen::VectorXd& center, double radius);

struct OMEstimate {
  Eigen::VectorXd a, b;
  std::vector<double> radii;        // as given (strictly decreasing)
  std::vector<double> log_ratios;   // ln μ(K_s(a)) − ln μ(K_s(b)) per radius
  std::vector<bool> defined;        // false marks the undefined 0/0 outcome
  std::vector<double> ratio_errors; // propagated standard error per radius
  double extrapolated = 0.0;        // intercept of the fit in s²
  double fit_slope = 0.0;           // slope of the fit in s²
  double extrapolation_std_error = 0.0;
  double fit_residual = 0.0;        // largest |fit − data| over the window
  int fit_points = 0;
};

/// Log-ratio curve of small-ball probabilities at two centers and its s² → 0
/// extrapolation; the fit window holds the smallest radii whose hit counts
/// reach 100 at both centers.
OMEstimate om_estimate(const Expectations& engine, const Eigen::MatrixXd& j,
                       const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const std::vector<double>& radii, int fit_window = 4);

struct NuKProfile {
  std::vector<double> s;
  std::vector<double> density;
  std::vector<double> density_error;
  double total_mass = 0.0;       // trapezoid over the grid
  double total_mass_error = 0.0; // MC + quadrature + truncation estimate
  double log_normalizer = 0.0;   // ln N_k used in the density
};

/// Radial density s ↦ (r_k²/N_k)·μ(K_s(w))·s·exp[−r_k²s²/2] on a grid, with a
/// consistency check that it integrates to total mass 1.
NuKProfile nu_k_profile(const ConjugateSolver& solver, double k,
                        const std::vector<double>& s_grid);

/// ν_k([eps, ∞)) through the layer-cake identity on the cached sample;
/// eps = 0 recovers the total mass.
double nu_k_mass_tail(const ConjugateSolver& solver, double k, double eps);

struct AdmissibilityRatio {
  double inf_ratio = 0.0;  // in (0, 1]; exactly 1 in the symmetric case
  Eigen::VectorXd argmin;
  bool converged = false;  // false: the value is only an upper bound
  int iterations = 0;
};

/// Minimizes the tilted-integral ratio of the admissibility criterion at
/// (k, y) over tilts by Newton; the ratio tends to 1 along k at admissible y.
AdmissibilityRatio admissibility_ratio(const ConjugateSolver& solver, double k,
                                       const Eigen::VectorXd& y);

struct BoundaryOptions {
  int fit_points = 0;            // Γ-limit fit size; 0 = largest half, at least 3
  int om_fit_window = 4;
  bool skip_admissibility = false;
};

struct BoundaryCheck {
  double gamma_limit = 0.0;  // 1/k² Richardson extrapolation of Γ_k(y)
  double om_value = 0.0;     // OM estimate of the k → ∞ boundary value
  double gap = 0.0;
  std::vector<double> k_grid;
  std::vector<double> gamma_values;
  double gamma_fit_residual = 0.0;
  std::vector<double> admissibility_ratios;  // at the sampled trend points
  std::vector<double> diagonal_log_ratios;   // joint (k, s) diagonal sequence
  OMEstimate om;
};

/// Cross-validates the k → ∞ limit of Γ_k(y) against the Onsager-Machlup
/// value computed from small-ball ratios at metric R0.
BoundaryCheck boundary_check(const ConjugateSolver& solver, const Eigen::VectorXd& y,
                             const std::vector<double>& k_grid,
                             const std::vector<double>& radius_grid,
                             const BoundaryOptions& options = {});

struct SymmetryDefect {
  double level = 1.0;        // empirical 5th percentile of the reflection ratio
  std::int64_t points = 0;   // ball points inspected
};

/// Diagnostic for approximate symmetry of μ about y on a small J-ball:
/// the low quantile of min(dens(x), dens(2y−x))/dens(x). Reported only.
SymmetryDefect symmetry_defect(const Expectations& engine, const Eigen::MatrixXd& j,
                               const Eigen::VectorXd& y, double radius);

}  // namespace frg
