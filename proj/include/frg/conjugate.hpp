#pragma once

#include <Eigen/Dense>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "frg/measure.hpp"
#include "frg/regulator.hpp"

namespace frg {

/// A tilt vector with the cached normalizer, mean, and covariance of the
/// exponentially tilted regulated measure it induces.
struct TiltedState {
  double k = 0.0;
  Eigen::VectorXd phi;
  double log_z = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  bool converged = false;
  int iterations = 0;
  double mean_gap = 0.0;  // ‖mean − target‖ at exit
  std::string trace;
};

struct ConjugateResult {
  double value = 0.0;        // V_k*(y)
  double gamma_value = 0.0;  // Γ_k(y) = V_k*(y) − ½ (y−w)ᵀR_k(y−w)
  TiltedState tilt;
};

struct NormalizerDerivative {
  double analytic = 0.0;
  double fd = 0.0;
  double residual = 0.0;
  double tolerance = 0.0;
};

struct MonotonicityRow {
  double k = 0.0;
  double vstar = 0.0;
  double f_y = 0.0;  // V_k*(y) − ln N_k
};

struct NewtonOptions {
  double tol = 0.0;  // 0 = automatic (1e-10 quadrature, 10·stderr Monte Carlo)
  int max_iter = 100;
  const Eigen::VectorXd* warm = nullptr;
  // When false, solver failures return the best iterate with converged =
  // false instead of throwing (the objective only decreases, so the final
  // iterate bounds the minimum from above).
  bool throw_on_failure = true;
};

/// Newton mean-matching for the strictly convex objective
///   φ ↦ ln ∫ exp[φ·x − ½·quad_coeff·(x−center)ᵀR0(x−center)] dμ(x) − φ·y,
/// whose stationary point matches the tilted mean to y. log_z of the result
/// is the raw log integral at the optimum (no normalizer subtracted).
TiltedState newton_mean_match(const Expectations& engine, const Eigen::MatrixXd& r0,
                              double quad_coeff, const Eigen::VectorXd& center,
                              const Eigen::VectorXd& y, const NewtonOptions& opts = {});

/// Regulated cumulant generating functions V_k, their convex conjugates, and
/// the effective average action Γ_k, bound to one engine and one regulator
/// family. Normalizers and integrability checks are cached per k.
class ConjugateSolver {
 public:
  ConjugateSolver(const Expectations& engine, const RegulatorFamily& fam);

  const Expectations& engine() const { return engine_; }
  const RegulatorFamily& family() const { return fam_; }

  /// ln N_k and N_k = ∫ exp[−½Q_k] dμ ∈ (0, 1].
  double log_normalizer(double k) const;
  double normalizer(double k) const;

  /// V_k(φ) = ln ∫ exp[φ·x] dμ_k.
  double v(double k, const Eigen::VectorXd& phi) const;

  /// Analytic right-derivative of k ↦ N_k against a central difference;
  /// throws if they disagree beyond max(1e-6, 5·propagated error).
  NormalizerDerivative normalizer_derivative_check(double k, double h = 1e-5) const;

  /// Optimal tilt with E_{μ_k^φ}[x] = y; log_z is ln ∫ exp[φ·x] dμ_k.
  TiltedState solve_tilt(double k, const Eigen::VectorXd& y,
                         const NewtonOptions& opts = {}) const;

  /// V_k*(y) by mean-matching, and Γ_k(y).
  ConjugateResult conjugate(double k, const Eigen::VectorXd& y,
                            const NewtonOptions& opts = {}) const;

  /// Table of (k, V_k*(y), V_k*(y) − ln N_k) along an increasing grid;
  /// throws if the third column fails to be nondecreasing within slack.
  std::vector<MonotonicityRow> conjugate_monotonicity_check(
      const Eigen::VectorXd& y, const std::vector<double>& k_grid,
      double slack = 1e-6) const;

  /// Integrability guard for ∫ exp[Q'_k/(2R) − ½Q_k] dμ over R ∈ {1,2,4,…}:
  /// analytic positive-definiteness test backed by a numeric attempt.
  void check_derivative_bound(double k) const;

  /// Mean-matching tolerance for this engine.
  double default_tol() const;

 private:
  const Expectations& engine_;
  const RegulatorFamily& fam_;
  mutable std::mutex mutex_;
  mutable std::map<double, double> log_nk_;
  mutable std::set<double> bound_ok_;
};

}  // namespace frg
