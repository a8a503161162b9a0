#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "frg/conjugate.hpp"

namespace frg {

/// Per-k record of the flow check: the action value, both sides of the flow
/// equation, and solver diagnostics.
struct FlowRecord {
  double k = 0.0;
  double gamma = 0.0;
  double lhs_fd = 0.0;         // central-difference dΓ_k(y)/dk
  double rhs = 0.0;            // trace_term − subtract_term
  double residual = 0.0;       // |lhs_fd − rhs|
  double trace_term = 0.0;     // ½ Tr[(dR_k/dk)·Cov of the tilted measure]
  double subtract_term = 0.0;  // ½ E_{μ_k}[Q'_k]
  int tilt_iterations = 0;
  bool tilt_converged = false;
  double mean_gap = 0.0;
};

struct FlowGrid {
  std::vector<double> k_values;  // strictly increasing, positive
  Eigen::VectorXd y;
  double fd_step = 0.0;  // 0 → automatic 1e-4·(1+k) per point

  double step_at(double k) const;
  void validate() const;
};

struct FlowResult {
  std::vector<FlowRecord> records;
  bool aborted = false;
  double failed_k = 0.0;
  std::string message;
};

struct WetterichRhs {
  double rhs = 0.0;
  double trace_term = 0.0;
  double subtract_term = 0.0;
  TiltedState tilt;
};

struct IntegratedFlowCheck {
  double gamma_end_direct = 0.0;
  double gamma_end_integrated = 0.0;
  double gap = 0.0;
};

struct PropagatorExperiment {
  Eigen::MatrixXd cov_tilted;
  Eigen::MatrixXd inverse_sum;  // (Hess Γ_k(y) + R_k)⁻¹
  double deviation = 0.0;       // relative Frobenius distance
  double condition = 0.0;       // condition number of Hess Γ + R_k
  bool invertible = true;
};

/// Right-hand side of the flow equation at (k, y): the regulator-derivative
/// trace against the tilted covariance, minus half the regulated mean of Q'_k.
WetterichRhs wetterich_rhs(const ConjugateSolver& solver, double k,
                           const Eigen::VectorXd& y,
                           const Eigen::VectorXd* warm = nullptr);

/// Sweeps the grid with warm-started tilts, comparing the finite-difference
/// k-derivative of Γ_k(y) with the assembled right-hand side. Aborts with
/// partial records when a point falls outside the numeric domain interior.
FlowResult run_flow(const ConjugateSolver& solver, const FlowGrid& grid);

/// Trapezoid-integrates the recorded right-hand side and compares against
/// the directly computed endpoint action.
IntegratedFlowCheck integrated_flow_check(const std::vector<FlowRecord>& records);

/// Numerical test of the (unproven) identity: tilted covariance versus the
/// inverse of Hess Γ_k(y) + R_k. Reported, never asserted.
PropagatorExperiment propagator_identity_experiment(const ConjugateSolver& solver,
                                                    double k, const Eigen::VectorXd& y,
                                                    double hess_step = 1e-2);

}  // namespace frg
