#include "frg/flow.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "frg/errors.hpp"

namespace frg {

double FlowGrid::step_at(double k) const {
  return fd_step > 0.0 ? fd_step : 1e-4 * (1.0 + k);
}

void FlowGrid::validate() const {
  if (k_values.size() < 2) throw ConfigError("flow grid needs at least two k values");
  if (!(k_values.front() > 0.0)) throw ConfigError("flow grid must start above 0");
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < k_values.size(); ++i) {
    if (!(k_values[i] > k_values[i - 1]))
      throw ConfigError("flow grid must be strictly increasing");
    min_gap = std::min(min_gap, k_values[i] - k_values[i - 1]);
  }
  if (fd_step > 0.0 && fd_step >= 0.5 * min_gap)
    throw ConfigError("fd_step must stay below half the minimum grid gap");
  for (double k : k_values) {
    if (step_at(k) >= k)
      throw ConfigError("finite-difference step reaches below k = 0; raise kmin");
  }
  if (y.size() == 0) throw ConfigError("flow grid is missing the evaluation point y");
}

WetterichRhs wetterich_rhs(const ConjugateSolver& solver, double k,
                           const Eigen::VectorXd& y, const Eigen::VectorXd* warm) {
  const RegulatorFamily& fam = solver.family();
  NewtonOptions opts;
  opts.warm = warm;
  WetterichRhs out;
  out.tilt = solver.solve_tilt(k, y, opts);

  const double scale = fam.r(k) * fam.r_dot(k);  // ½·(2 r ṙ)
  out.trace_term = scale * (fam.r0() * out.tilt.cov).trace();

  // ½ E_{μ_k}[Q'_k] from the regulated measure's own moments.
  const double r = fam.r(k);
  Expectations::TiltSpec spec;
  spec.phi = Eigen::VectorXd::Zero(fam.dim());
  spec.quad_coeff = r * r;
  spec.r0 = fam.r0();
  spec.center = fam.w();
  const auto mk = solver.engine().tilted_moments(spec);
  const Eigen::VectorXd d = mk.mean - fam.w();
  out.subtract_term = scale * ((fam.r0() * mk.cov).trace() + d.dot(fam.r0() * d));

  out.rhs = out.trace_term - out.subtract_term;
  return out;
}

FlowResult run_flow(const ConjugateSolver& solver, const FlowGrid& grid) {
  grid.validate();
  FlowResult result;
  result.records.reserve(grid.k_values.size());

  Eigen::VectorXd warm;
  for (double k : grid.k_values) {
    try {
      const Eigen::VectorXd* warm_ptr = warm.size() > 0 ? &warm : nullptr;
      WetterichRhs rhs = wetterich_rhs(solver, k, grid.y, warm_ptr);
      warm = rhs.tilt.phi;

      const double vstar = rhs.tilt.phi.dot(grid.y) - rhs.tilt.log_z;
      const double gamma = vstar - 0.5 * solver.family().q(k, grid.y);

      const double h = grid.step_at(k);
      NewtonOptions opts;
      opts.warm = &warm;
      const ConjugateResult lo = solver.conjugate(k - h, grid.y, opts);
      const ConjugateResult hi = solver.conjugate(k + h, grid.y, opts);
      const double lhs = (hi.gamma_value - lo.gamma_value) / (2.0 * h);

      FlowRecord rec;
      rec.k = k;
      rec.gamma = gamma;
      rec.lhs_fd = lhs;
      rec.rhs = rhs.rhs;
      rec.residual = std::abs(lhs - rhs.rhs);
      rec.trace_term = rhs.trace_term;
      rec.subtract_term = rhs.subtract_term;
      rec.tilt_iterations = rhs.tilt.iterations;
      rec.tilt_converged = rhs.tilt.converged;
      rec.mean_gap = rhs.tilt.mean_gap;
      result.records.push_back(rec);
    } catch (const DomainError& err) {
      result.aborted = true;
      result.failed_k = k;
      result.message = err.what();
      break;
    }
  }
  return result;
}

IntegratedFlowCheck integrated_flow_check(const std::vector<FlowRecord>& records) {
  if (records.size() < 3)
    throw PreconditionError("integrated_flow_check: need at least three records");
  double integral = 0.0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const double dk = records[i].k - records[i - 1].k;
    integral += 0.5 * dk * (records[i].rhs + records[i - 1].rhs);
  }
  IntegratedFlowCheck out;
  out.gamma_end_direct = records.back().gamma;
  out.gamma_end_integrated = records.front().gamma + integral;
  out.gap = std::abs(out.gamma_end_direct - out.gamma_end_integrated);
  return out;
}

PropagatorExperiment propagator_identity_experiment(const ConjugateSolver& solver,
                                                    double k, const Eigen::VectorXd& y,
                                                    double hess_step) {
  if (solver.engine().monte_carlo())
    throw ConfigError(
        "propagator_identity_experiment needs the quadrature estimator (the "
        "finite-difference Hessian is too noise-sensitive)");
  if (!(hess_step > 0.0))
    throw PreconditionError("propagator_identity_experiment: step must be positive");

  const int n = y.size();
  const ConjugateResult at_y = solver.conjugate(k, y);
  NewtonOptions opts;
  opts.warm = &at_y.tilt.phi;
  auto gamma = [&](const Eigen::VectorXd& point) {
    return solver.conjugate(k, point, opts).gamma_value;
  };

  const double h = hess_step;
  Eigen::MatrixXd hess(n, n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd ei = Eigen::VectorXd::Zero(n);
    ei(i) = h;
    hess(i, i) = (gamma(y + ei) - 2.0 * at_y.gamma_value + gamma(y - ei)) / (h * h);
    for (int j = i + 1; j < n; ++j) {
      Eigen::VectorXd ej = Eigen::VectorXd::Zero(n);
      ej(j) = h;
      const double cross = (gamma(y + ei + ej) - gamma(y + ei - ej) -
                            gamma(y - ei + ej) + gamma(y - ei - ej)) /
                           (4.0 * h * h);
      hess(i, j) = cross;
      hess(j, i) = cross;
    }
  }

  PropagatorExperiment out;
  out.cov_tilted = at_y.tilt.cov;
  const Eigen::MatrixXd sum = hess + solver.family().r_k(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sum);
  const double lo = es.eigenvalues().cwiseAbs().minCoeff();
  const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
  out.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (es.eigenvalues().minCoeff() <= 0.0 || out.condition > 1e14) {
    out.invertible = false;
    out.inverse_sum = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    out.deviation = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.inverse_sum = sum.inverse();
  out.deviation = (out.cov_tilted - out.inverse_sum).norm() / out.cov_tilted.norm();
  return out;
}

}  // namespace frg
