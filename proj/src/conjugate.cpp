#include "frg/conjugate.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "frg/errors.hpp"

namespace frg {

namespace {

Expectations::TiltSpec make_spec(const Eigen::MatrixXd& r0, double quad_coeff,
                                 const Eigen::VectorXd& center,
                                 const Eigen::VectorXd& phi) {
  Expectations::TiltSpec spec;
  spec.phi = phi;
  spec.quad_coeff = quad_coeff;
  if (quad_coeff != 0.0) {
    spec.r0 = r0;
    spec.center = center;
  }
  return spec;
}

// Keep only the last few trace lines so exception messages stay readable.
std::string tail_lines(const std::string& text, int keep) {
  std::size_t pos = text.size();
  if (pos > 0 && text[pos - 1] == '\n') --pos;  // ignore the trailing newline
  for (int seen = 0; pos > 0; ++seen) {
    const std::size_t prev = text.rfind('\n', pos - 1);
    if (prev == std::string::npos) return text;
    if (seen + 1 == keep) return "  ...\n" + text.substr(prev + 1);
    pos = prev;
  }
  return text;
}

}  // namespace

TiltedState newton_mean_match(const Expectations& engine, const Eigen::MatrixXd& r0,
                              double quad_coeff, const Eigen::VectorXd& center,
                              const Eigen::VectorXd& y, const NewtonOptions& opts) {
  const int n = engine.model().dim();
  if (y.size() != n) throw PreconditionError("newton_mean_match: target dimension mismatch");

  TiltedState state;
  state.phi = opts.warm != nullptr ? *opts.warm : Eigen::VectorXd::Zero(n);
  std::ostringstream trace;

  auto moments = [&](const Eigen::VectorXd& phi) {
    return engine.tilted_moments(make_spec(r0, quad_coeff, center, phi));
  };

  Expectations::TiltedMoments m = moments(state.phi);
  double objective = m.log_integral - state.phi.dot(y);
  double best_gap = std::numeric_limits<double>::infinity();
  double tol = 0.0;

  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd grad = m.mean - y;
    const double gap = grad.norm();
    const double noise =
        engine.monte_carlo() ? std::sqrt(std::max(m.cov.trace(), 0.0) / m.ess) : 0.0;
    tol = opts.tol > 0.0 ? opts.tol : std::max(1e-10, 10.0 * noise);

    state.iterations = iter;
    state.mean_gap = gap;
    state.log_z = m.log_integral;
    state.mean = m.mean;
    state.cov = m.cov;
    trace << "iter " << iter << ": |grad| = " << gap << ", tol = " << tol << "\n";

    if (gap <= tol) {
      state.converged = true;
      break;
    }
    if (iter >= opts.max_iter) {
      state.converged = false;
      state.trace = trace.str();
      if (!opts.throw_on_failure) return state;
      throw ConvergenceError("mean matching did not converge in " +
                             std::to_string(opts.max_iter) + " iterations:\n" +
                             tail_lines(trace.str(), 8));
    }
    if (state.phi.norm() > 1e6 && gap >= best_gap) {
      state.trace = trace.str();
      if (!opts.throw_on_failure) return state;
      throw DomainError(
          "mean matching diverged (|phi| > 1e6 without progress); target appears "
          "outside the numeric domain interior");
    }
    best_gap = std::min(best_gap, gap);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.cov);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || lo / hi < 1e-12) {
      state.trace = trace.str();
      if (!opts.throw_on_failure) return state;
      std::ostringstream msg;
      msg << "tilted covariance ill-conditioned (eigenvalues in [" << lo << ", " << hi
          << "])";
      throw ConvergenceError(msg.str());
    }
    const Eigen::VectorXd step = -es.eigenvectors() *
                                 (es.eigenvectors().transpose() * grad).cwiseQuotient(
                                     es.eigenvalues());

    // Armijo backtracking on the convex objective.
    const double slope = grad.dot(step);
    double alpha = 1.0;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      const Eigen::VectorXd trial = state.phi + alpha * step;
      Expectations::TiltedMoments mt = moments(trial);
      const double trial_obj = mt.log_integral - trial.dot(y);
      if (trial_obj <= objective + 1e-4 * alpha * slope) {
        state.phi = trial;
        objective = trial_obj;
        m = std::move(mt);
        accepted = true;
        trace << "  step alpha = " << alpha << ", objective = " << objective << "\n";
        break;
      }
      alpha /= 2.0;
    }
    // Stall: the line search either failed outright or accepted a step too
    // small to change phi in double precision. The gradient has hit the
    // estimator's numeric floor; treat a sufficiently small residual gap as
    // converged (the value error it induces is second order in the gap).
    const double moved = accepted ? alpha * step.cwiseAbs().maxCoeff() : 0.0;
    if (!accepted || moved <= 1e-15 * (1.0 + state.phi.cwiseAbs().maxCoeff())) {
      state.converged = gap <= std::max(tol, 1e-7);
      state.trace = trace.str();
      if (state.converged) break;
      if (!opts.throw_on_failure) return state;
      std::ostringstream msg;
      msg << "mean matching stalled at its numeric floor with gradient norm " << gap
          << " (tolerance " << tol << "):\n"
          << tail_lines(trace.str(), 8);
      throw ConvergenceError(msg.str());
    }
  }
  state.trace = trace.str();
  return state;
}

ConjugateSolver::ConjugateSolver(const Expectations& engine, const RegulatorFamily& fam)
    : engine_(engine), fam_(fam) {
  if (engine_.model().dim() != fam_.dim())
    throw ConfigError("measure and regulator dimensions differ");
}

double ConjugateSolver::default_tol() const {
  return engine_.monte_carlo() ? 0.0 : 1e-10;  // 0 lets the solver adapt to noise
}

void ConjugateSolver::check_derivative_bound(double k) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (bound_ok_.count(k) > 0) return;
  }
  const double r = fam_.r(k);
  const double rd = fam_.r_dot(k);
  bool ok = false;
  // Exponent of the integrand against the Gaussian factor of μ:
  // (rṙ/R)·Q0 − ½r²·Q0 − ½(x−m)ᵀC⁻¹(x−m); integrable iff the total quadratic
  // form is negative definite. A perturbation only shrinks the density, so
  // the Gaussian test covers both kinds.
  const Eigen::MatrixXd& prec = engine_.model().precision();
  for (double upper = 1.0; upper <= double(1 << 20); upper *= 2.0) {
    const Eigen::MatrixXd total =
        0.5 * prec + (0.5 * r * r - r * rd / upper) * fam_.r0();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(total);
    if (es.eigenvalues().minCoeff() > 0.0) {
      ok = true;
      break;
    }
  }
  if (!ok) {
    // Fall back to attempting the integral itself.
    for (double upper = 1.0; upper <= double(1 << 20); upper *= 2.0) {
      try {
        const auto est = engine_.expect(
            [](const Eigen::Ref<const Eigen::VectorXd>&) { return 1.0; },
            [&](const Eigen::Ref<const Eigen::VectorXd>& x) {
              return fam_.q_prime(k, x) / (2.0 * upper) - 0.5 * fam_.q(k, x);
            });
        if (std::isfinite(est.value)) {
          ok = true;
          break;
        }
      } catch (const EvaluationError&) {
        continue;
      }
    }
  }
  if (!ok) {
    std::ostringstream msg;
    msg << "regulator derivative bound failed at k = " << k
        << ": ∫ exp[Q'_k/(2R) − ½Q_k] dμ diverges for every tried R; "
           "the schedule grows too fast for this measure";
    throw PreconditionError(msg.str());
  }
  std::lock_guard<std::mutex> lock(mutex_);
  bound_ok_.insert(k);
}

double ConjugateSolver::log_normalizer(double k) const {
  if (!(k >= 0.0)) throw PreconditionError("flow parameter k must be nonnegative");
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = log_nk_.find(k);
    if (it != log_nk_.end()) return it->second;
  }
  const double r = fam_.r(k);
  const auto spec = make_spec(fam_.r0(), r * r, fam_.w(),
                              Eigen::VectorXd::Zero(fam_.dim()));
  const double value = engine_.tilted_moments(spec).log_integral;
  std::lock_guard<std::mutex> lock(mutex_);
  log_nk_.emplace(k, value);
  return value;
}

double ConjugateSolver::normalizer(double k) const { return std::exp(log_normalizer(k)); }

double ConjugateSolver::v(double k, const Eigen::VectorXd& phi) const {
  check_derivative_bound(k);
  const double r = fam_.r(k);
  const auto spec = make_spec(fam_.r0(), r * r, fam_.w(), phi);
  return engine_.tilted_moments(spec).log_integral - log_normalizer(k);
}

NormalizerDerivative ConjugateSolver::normalizer_derivative_check(double k,
                                                                  double h) const {
  if (!(k > 0.0)) throw PreconditionError("normalizer_derivative_check: k must be positive");
  if (!(h > 0.0) || h >= k) throw PreconditionError("normalizer_derivative_check: need 0 < h < k");
  check_derivative_bound(k);

  const auto analytic_est = engine_.expect(
      [&](const Eigen::Ref<const Eigen::VectorXd>& x) { return fam_.q_prime(k, x); },
      [&](const Eigen::Ref<const Eigen::VectorXd>& x) { return -0.5 * fam_.q(k, x); });

  // One common-random-number pass for the central difference keeps the
  // statistical error of the difference itself, not of each endpoint.
  const auto fd_est = engine_.expect(
      [&](const Eigen::Ref<const Eigen::VectorXd>& x) {
        return (std::exp(-0.5 * fam_.q(k + h, x)) - std::exp(-0.5 * fam_.q(k - h, x))) /
               (2.0 * h);
      },
      [](const Eigen::Ref<const Eigen::VectorXd>&) { return 0.0; });

  NormalizerDerivative out;
  out.analytic = -0.5 * analytic_est.value;
  out.fd = fd_est.value;
  out.residual = std::abs(out.analytic - out.fd);
  out.tolerance = std::max(1e-6, 5.0 * (0.5 * analytic_est.std_error + fd_est.std_error));
  if (out.residual > out.tolerance) {
    std::ostringstream msg;
    msg << "normalizer derivative mismatch at k = " << k << ": analytic = " << out.analytic
        << ", central difference = " << out.fd << ", residual " << out.residual << " > "
        << out.tolerance;
    throw ConsistencyError(msg.str());
  }
  return out;
}

TiltedState ConjugateSolver::solve_tilt(double k, const Eigen::VectorXd& y,
                                        const NewtonOptions& opts) const {
  check_derivative_bound(k);
  const double r = fam_.r(k);
  TiltedState state = newton_mean_match(engine_, fam_.r0(), r * r, fam_.w(), y, opts);
  state.k = k;
  state.log_z -= log_normalizer(k);  // report ln ∫ exp[φ·x] dμ_k
  return state;
}

ConjugateResult ConjugateSolver::conjugate(double k, const Eigen::VectorXd& y,
                                           const NewtonOptions& opts) const {
  ConjugateResult result;
  result.tilt = solve_tilt(k, y, opts);
  result.value = result.tilt.phi.dot(y) - result.tilt.log_z;
  result.gamma_value = result.value - 0.5 * fam_.q(k, y);
  return result;
}

std::vector<MonotonicityRow> ConjugateSolver::conjugate_monotonicity_check(
    const Eigen::VectorXd& y, const std::vector<double>& k_grid, double slack) const {
  if (k_grid.empty())
    throw PreconditionError("conjugate_monotonicity_check: empty grid");
  for (std::size_t i = 1; i < k_grid.size(); ++i)
    if (k_grid[i] < k_grid[i - 1])
      throw PreconditionError("conjugate_monotonicity_check: grid must be nondecreasing");

  std::vector<MonotonicityRow> rows;
  rows.reserve(k_grid.size());
  NewtonOptions opts;
  Eigen::VectorXd warm;
  for (double k : k_grid) {
    if (warm.size() > 0) opts.warm = &warm;
    const ConjugateResult res = conjugate(k, y, opts);
    warm = res.tilt.phi;
    rows.push_back({k, res.value, res.value - log_normalizer(k)});
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].f_y < rows[i - 1].f_y - slack) {
      std::ostringstream msg;
      msg << "V_k*(y) − ln N_k decreased along the grid: f(" << rows[i - 1].k
          << ") = " << rows[i - 1].f_y << " vs f(" << rows[i].k << ") = " << rows[i].f_y;
      throw ConsistencyError(msg.str());
    }
  }
  return rows;
}

}  // namespace frg
