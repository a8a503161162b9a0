#include "frg/onsager.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "frg/errors.hpp"
#include "frg/rng.hpp"

namespace frg {

namespace {

constexpr std::int64_t kBlock = 1 << 20;
constexpr std::uint64_t kPurposeProposal = 2;
constexpr std::int64_t kPlainHitFloor = 1000;  // below this, importance-sample

struct BallCurve {
  std::vector<double> probability;
  std::vector<double> std_error;
  std::vector<std::int64_t> hits;  // raw sample memberships
  std::int64_t units = 0;          // independent averaging units
};

// Shared-sample ball probabilities at several radii for one (metric, center).
// Indicators are monotone in the radius pointwise, so the curve is exactly
// nondecreasing per seed. Symmetric models contribute antithetic partners.
BallCurve ball_curve(const Expectations& engine, const Eigen::MatrixXd& j,
                     const Eigen::VectorXd& center, const std::vector<double>& radii) {
  if (!engine.monte_carlo())
    throw ConfigError("small-ball probabilities need the Monte Carlo estimator");
  const int n = engine.model().dim();
  if (j.rows() != n || j.cols() != n || center.size() != n)
    throw PreconditionError("ball_curve: dimension mismatch");
  for (double r : radii)
    if (!(r > 0.0)) throw PreconditionError("ball radii must be positive");

  const auto sym = engine.model().symmetry_center();
  const bool anti = sym.has_value();
  const std::int64_t count = engine.count();
  const int nr = static_cast<int>(radii.size());

  std::vector<double> r2(nr);
  for (int i = 0; i < nr; ++i) r2[i] = radii[i] * radii[i];
  std::vector<double> sum_v(nr, 0.0), sum_v2(nr, 0.0);
  std::vector<std::int64_t> hits(nr, 0);

  Eigen::VectorXd reflect_shift;
  if (anti) reflect_shift = 2.0 * (*sym) - center;

  for (std::int64_t a = 0; a < count; a += kBlock) {
    const std::int64_t len = std::min<std::int64_t>(kBlock, count - a);
    const auto block = engine.points().middleCols(a, len);
    const Eigen::MatrixXd d = block.colwise() - center;
    const Eigen::RowVectorXd rho2 = d.cwiseProduct(j * d).colwise().sum();
    Eigen::RowVectorXd rho2r;
    if (anti) {
      const Eigen::MatrixXd dr = (-block).colwise() + reflect_shift;
      rho2r = dr.cwiseProduct(j * dr).colwise().sum();
    }
    for (std::int64_t i = 0; i < len; ++i) {
      for (int r = 0; r < nr; ++r) {
        const int in1 = rho2(i) <= r2[r] ? 1 : 0;
        if (anti) {
          const int in2 = rho2r(i) <= r2[r] ? 1 : 0;
          const double v = 0.5 * (in1 + in2);
          sum_v[r] += v;
          sum_v2[r] += v * v;
          hits[r] += in1 + in2;
        } else {
          sum_v[r] += in1;
          sum_v2[r] += in1;
          hits[r] += in1;
        }
      }
    }
  }

  BallCurve curve;
  curve.units = count;
  curve.probability.resize(nr);
  curve.std_error.resize(nr);
  curve.hits = std::move(hits);
  const double nn = static_cast<double>(count);
  for (int r = 0; r < nr; ++r) {
    const double p = sum_v[r] / nn;
    curve.probability[r] = p;
    const double var = std::max(0.0, (sum_v2[r] - nn * p * p) / (nn - 1.0));
    curve.std_error[r] = std::sqrt(var / nn);
  }
  return curve;
}

SmallBallEstimate importance_sampled_ball(const Expectations& engine,
                                          const Eigen::MatrixXd& j,
                                          const Eigen::VectorXd& center, double radius) {
  const MeasureModel& model = engine.model();
  const int n = model.dim();

  // Proposal: Gaussian at the ball center whose precision adds the model's
  // local curvature and the ball scale, so draws land on the ball at O(1)
  // rate while the weight stays bounded.
  Eigen::MatrixXd prop_precision = model.precision() + j / (radius * radius);
  if (model.kind() == MeasureKind::PerturbedGaussian) {
    const Eigen::VectorXd h = model.perturbation().hessian_diagonal(center);
    prop_precision += h.cwiseMax(0.0).asDiagonal();
  }
  const Eigen::LLT<Eigen::MatrixXd> llt_prec(prop_precision);
  if (llt_prec.info() != Eigen::Success)
    throw EvaluationError("importance sampler: proposal precision not PD");
  const Eigen::MatrixXd prop_cov = prop_precision.inverse();
  const Eigen::MatrixXd prop_factor = Eigen::LLT<Eigen::MatrixXd>(prop_cov).matrixL();

  double log_det_prec = 0.0;
  const Eigen::MatrixXd lprec = llt_prec.matrixL();
  for (int i = 0; i < n; ++i) log_det_prec += 2.0 * std::log(lprec(i, i));
  const double log_q_const = 0.5 * log_det_prec - 0.5 * n * std::log(2.0 * M_PI);

  // ln of the full normalizer of the model's unnormalized density.
  double log_zmu = 0.5 * n * std::log(2.0 * M_PI) + engine.log_base_normalizer();
  for (int i = 0; i < n; ++i) log_zmu += std::log(model.covariance_factor()(i, i));

  const std::int64_t m =
      std::clamp<std::int64_t>(engine.config().samples, 100000, 1000000);
  Rng rng = Rng::stream(engine.config().seed, stream_tag(kPurposeProposal, 0));

  double sum = 0.0, sum2 = 0.0;
  std::int64_t hits = 0;
  Eigen::VectorXd z(n), x(n), d(n);
  const double r2 = radius * radius;
  for (std::int64_t i = 0; i < m; ++i) {
    for (int c = 0; c < n; ++c) z(c) = rng.next_normal();
    x = center + prop_factor * z;
    d = x - center;
    if (d.dot(j * d) > r2) continue;
    const double log_q = log_q_const - 0.5 * d.dot(prop_precision * d);
    const double t = std::exp(model.log_density_unnormalized(x) - log_q - log_zmu);
    if (!std::isfinite(t))
      throw EvaluationError("importance sampler: weight overflowed");
    sum += t;
    sum2 += t * t;
    ++hits;
  }

  SmallBallEstimate est;
  est.center = center;
  est.radius = radius;
  est.samples = m;
  est.hits = hits;
  est.importance_sampled = true;
  const double mm = static_cast<double>(m);
  est.probability = sum / mm;
  const double var = std::max(0.0, (sum2 - mm * est.probability * est.probability) / (mm - 1.0));
  est.std_error = std::sqrt(var / mm);
  if (hits == 0) {
    est.probability = 0.0;
    est.std_error = 3.0 / mm;
    est.low_confidence = true;
  }
  return est;
}

// Weighted least squares of y against [1, s²]; returns intercept, its
// standard error, and the largest absolute residual over the window.
struct QuadFit {
  double intercept = 0.0;
  double slope = 0.0;
  double intercept_error = 0.0;
  double max_residual = 0.0;
};

QuadFit fit_intercept_in_s2(const std::vector<double>& s, const std::vector<double>& y,
                            const std::vector<double>& sigma) {
  const std::size_t m = s.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double var = std::max(sigma[i] * sigma[i], 1e-30);
    const double w = 1.0 / var;
    const double u = s[i] * s[i];
    s0 += w;
    s1 += w * u;
    s2 += w * u * u;
    t0 += w * y[i];
    t1 += w * y[i] * u;
  }
  const double det = s0 * s2 - s1 * s1;
  QuadFit fit;
  if (m == 1 || det <= 0.0) {
    fit.intercept = y.empty() ? 0.0 : y.front();
    fit.intercept_error = sigma.empty() ? 0.0 : sigma.front();
    return fit;
  }
  fit.intercept = (s2 * t0 - s1 * t1) / det;
  fit.slope = (s0 * t1 - s1 * t0) / det;
  fit.intercept_error = std::sqrt(s2 / det);
  for (std::size_t i = 0; i < m; ++i) {
    const double u = s[i] * s[i];
    fit.max_residual =
        std::max(fit.max_residual, std::abs(y[i] - fit.intercept - fit.slope * u));
  }
  return fit;
}

}  // namespace

SmallBallEstimate small_ball(const Expectations& engine, const Eigen::MatrixXd& j,
                             const Eigen::VectorXd& center, double radius) {
  if (!(radius > 0.0)) throw PreconditionError("small_ball: radius must be positive");
  const BallCurve curve = ball_curve(engine, j, center, {radius});

  if (curve.hits[0] >= kPlainHitFloor) {
    SmallBallEstimate est;
    est.center = center;
    est.radius = radius;
    est.probability = curve.probability[0];
    est.std_error = curve.std_error[0];
    est.samples = curve.units;
    est.hits = curve.hits[0];
    return est;
  }
  SmallBallEstimate est = importance_sampled_ball(engine, j, center, radius);
  if (curve.hits[0] == 0 && est.hits == 0) {
    est.probability = 0.0;
    est.std_error = 3.0 / static_cast<double>(curve.units);
    est.low_confidence = true;
  }
  return est;
}

OMEstimate om_estimate(const Expectations& engine, const Eigen::MatrixXd& j,
                       const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const std::vector<double>& radii, int fit_window) {
  if (radii.size() < 2) throw PreconditionError("om_estimate: need at least two radii");
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] < radii[i - 1]))
      throw PreconditionError("om_estimate: radius grid must be strictly decreasing");
  if (fit_window < 2) throw PreconditionError("om_estimate: fit window must hold at least two radii");

  const BallCurve ca = ball_curve(engine, j, a, radii);
  const BallCurve cb = ball_curve(engine, j, b, radii);
  if (ca.probability.front() <= 0.0 || cb.probability.front() <= 0.0)
    throw EstimationError(
        "om_estimate: a center has no hits even at the largest radius; enlarge the "
        "radii or use importance sampling");

  OMEstimate out;
  out.a = a;
  out.b = b;
  out.radii = radii;
  const int nr = static_cast<int>(radii.size());
  out.log_ratios.resize(nr);
  out.ratio_errors.resize(nr);
  out.defined.resize(nr);
  for (int i = 0; i < nr; ++i) {
    const double pa = ca.probability[i], pb = cb.probability[i];
    out.defined[i] = pa > 0.0 && pb > 0.0;
    if (out.defined[i]) {
      out.log_ratios[i] = std::log(pa) - std::log(pb);
      out.ratio_errors[i] = std::sqrt(
          (ca.std_error[i] * ca.std_error[i]) / (pa * pa) +
          (cb.std_error[i] * cb.std_error[i]) / (pb * pb));
    } else if (pa == 0.0 && pb == 0.0) {
      out.log_ratios[i] = std::numeric_limits<double>::quiet_NaN();  // 0/0: undefined
      out.ratio_errors[i] = std::numeric_limits<double>::quiet_NaN();
    } else {
      out.log_ratios[i] = pa == 0.0 ? -std::numeric_limits<double>::infinity()
                                    : std::numeric_limits<double>::infinity();
      out.ratio_errors[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }

  // Fit window: the smallest radii whose hit counts reach 100 at both
  // centers; windows with starved smallest radii slide upward.
  std::vector<int> usable;  // indices, smallest radius first
  for (int i = nr - 1; i >= 0; --i)
    if (out.defined[i] && ca.hits[i] >= 100 && cb.hits[i] >= 100)
      usable.push_back(i);
  if (usable.size() < 2)
    throw EstimationError(
        "om_estimate: fewer than two radii have 100 hits at both centers; "
        "increase the sample budget or use importance sampling");
  const int take = std::min<int>(fit_window, static_cast<int>(usable.size()));
  std::vector<double> fs, fy, fsig;
  for (int t = 0; t < take; ++t) {
    const int i = usable[t];
    fs.push_back(radii[i]);
    fy.push_back(out.log_ratios[i]);
    fsig.push_back(out.ratio_errors[i]);
  }
  const QuadFit fit = fit_intercept_in_s2(fs, fy, fsig);
  out.extrapolated = fit.intercept;
  out.fit_slope = fit.slope;
  out.extrapolation_std_error = fit.intercept_error;
  out.fit_residual = fit.max_residual;
  out.fit_points = take;
  return out;
}

NuKProfile nu_k_profile(const ConjugateSolver& solver, double k,
                        const std::vector<double>& s_grid) {
  if (!(k > 0.0)) throw PreconditionError("nu_k_profile: k must be positive");
  if (s_grid.size() < 5)
    throw PreconditionError("nu_k_profile: need at least five grid points");
  if (!(s_grid.front() >= 0.0))
    throw PreconditionError("nu_k_profile: radii must be nonnegative");
  for (std::size_t i = 1; i < s_grid.size(); ++i)
    if (!(s_grid[i] > s_grid[i - 1]))
      throw PreconditionError("nu_k_profile: grid must be strictly increasing");

  const Expectations& engine = solver.engine();
  const RegulatorFamily& fam = solver.family();
  if (!engine.monte_carlo())
    throw ConfigError("nu_k_profile needs the Monte Carlo estimator");

  const double r = fam.r(k);
  const double r2 = r * r;
  Expectations::TiltSpec nk_spec;
  nk_spec.phi = Eigen::VectorXd::Zero(fam.dim());
  nk_spec.quad_coeff = r2;
  nk_spec.r0 = fam.r0();
  nk_spec.center = fam.w();
  const auto nk_moments = engine.tilted_moments(nk_spec);
  const double log_nk = nk_moments.log_integral;
  const double nk = std::exp(log_nk);
  const double nk_rel_error = nk_moments.log_std_error;
  const int nr = static_cast<int>(s_grid.size());

  // Trapezoid coefficients of the grid, then per-point contributions
  // g_j = (r²/N_k) Σ_{s_i ≥ ρ_j} w_i s_i exp[−r²s_i²/2]: the trapezoid mass
  // is the plain sample mean of g, giving a correlation-aware error.
  std::vector<double> trap(nr, 0.0);
  for (int i = 0; i + 1 < nr; ++i) {
    const double h = s_grid[i + 1] - s_grid[i];
    trap[i] += 0.5 * h;
    trap[i + 1] += 0.5 * h;
  }
  std::vector<double> coeff(nr), suffix(nr + 1, 0.0);
  for (int i = 0; i < nr; ++i)
    coeff[i] = trap[i] * s_grid[i] * std::exp(-0.5 * r2 * s_grid[i] * s_grid[i]);
  for (int i = nr - 1; i >= 0; --i) suffix[i] = suffix[i + 1] + coeff[i];

  const std::int64_t count = engine.count();
  std::vector<double> ball_sum(nr, 0.0);
  double g_sum = 0.0, g_sum2 = 0.0;
  const double scale = r2 / nk;
  for (std::int64_t a = 0; a < count; a += kBlock) {
    const std::int64_t len = std::min<std::int64_t>(kBlock, count - a);
    const auto block = engine.points().middleCols(a, len);
    const Eigen::MatrixXd d = block.colwise() - fam.w();
    const Eigen::RowVectorXd rho2 = d.cwiseProduct(fam.r0() * d).colwise().sum();
    for (std::int64_t i = 0; i < len; ++i) {
      const double rho = std::sqrt(std::max(0.0, rho2(i)));
      const int first =
          static_cast<int>(std::lower_bound(s_grid.begin(), s_grid.end(), rho) -
                           s_grid.begin());
      for (int s = first; s < nr; ++s) ball_sum[s] += 1.0;
      const double g = scale * suffix[first];
      g_sum += g;
      g_sum2 += g * g;
    }
  }

  NuKProfile out;
  out.s = s_grid;
  out.log_normalizer = log_nk;
  out.density.resize(nr);
  out.density_error.resize(nr);
  const double nn = static_cast<double>(count);
  for (int i = 0; i < nr; ++i) {
    const double p = ball_sum[i] / nn;
    const double factor = scale * s_grid[i] * std::exp(-0.5 * r2 * s_grid[i] * s_grid[i]);
    out.density[i] = factor * p;
    out.density_error[i] = factor * std::sqrt(std::max(0.0, p * (1.0 - p) / nn));
  }

  out.total_mass = g_sum / nn;
  const double g_var = std::max(0.0, (g_sum2 - nn * out.total_mass * out.total_mass) / (nn - 1.0));
  const double mc_err = std::sqrt(g_var / nn);

  // Quadrature error by grid halving, truncation by the exponential tail.
  double half = 0.0;
  {
    std::vector<int> half_idx;
    for (int i = 0; i < nr; i += 2) half_idx.push_back(i);
    if (half_idx.back() != nr - 1) half_idx.push_back(nr - 1);
    for (std::size_t i = 0; i + 1 < half_idx.size(); ++i) {
      const int lo = half_idx[i], hi = half_idx[i + 1];
      half += 0.5 * (s_grid[hi] - s_grid[lo]) * (out.density[lo] + out.density[hi]);
    }
  }
  const double quad_err = std::abs(out.total_mass - half) / 3.0;
  const double tail = std::exp(-0.5 * r2 * s_grid.back() * s_grid.back()) / nk;
  const double stat_err = mc_err + out.total_mass * nk_rel_error;
  out.total_mass_error = stat_err + quad_err + tail;

  const double tol = 5.0 * stat_err + quad_err + tail + 1e-9;
  if (std::abs(out.total_mass - 1.0) > tol) {
    std::ostringstream msg;
    msg << "nu_k total mass " << out.total_mass << " deviates from 1 beyond " << tol
        << " at k = " << k;
    throw ConsistencyError(msg.str());
  }
  return out;
}

double nu_k_mass_tail(const ConjugateSolver& solver, double k, double eps) {
  if (!(k > 0.0)) throw PreconditionError("nu_k_mass_tail: k must be positive");
  if (!(eps >= 0.0)) throw PreconditionError("nu_k_mass_tail: eps must be nonnegative");
  const Expectations& engine = solver.engine();
  const RegulatorFamily& fam = solver.family();
  const double r = fam.r(k);
  const double r2 = r * r;

  // Layer-cake identity: ν_k([eps, ∞)) = N_k⁻¹ E_μ[ exp(−r²ρ²/2)·1(ρ ≥ eps) ].
  const auto est = engine.expect(
      [&](const Eigen::Ref<const Eigen::VectorXd>& x) {
        const Eigen::VectorXd d = x - fam.w();
        const double rho2 = d.dot(fam.r0() * d);
        return rho2 >= eps * eps ? 1.0 : 0.0;
      },
      [&](const Eigen::Ref<const Eigen::VectorXd>& x) {
        const Eigen::VectorXd d = x - fam.w();
        return -0.5 * r2 * d.dot(fam.r0() * d);
      });
  return est.value / std::exp(solver.log_normalizer(k));
}

AdmissibilityRatio admissibility_ratio(const ConjugateSolver& solver, double k,
                                       const Eigen::VectorXd& y) {
  if (!(k > 0.0)) throw PreconditionError("admissibility_ratio: k must be positive");
  const Expectations& engine = solver.engine();
  const RegulatorFamily& fam = solver.family();
  if (y.size() != fam.dim())
    throw PreconditionError("admissibility_ratio: dimension mismatch");
  const double quad = fam.r(k) * fam.r(k);

  Expectations::TiltSpec spec;
  spec.phi = Eigen::VectorXd::Zero(fam.dim());
  spec.quad_coeff = quad;
  spec.r0 = fam.r0();
  spec.center = y;
  const double denominator_log = engine.tilted_moments(spec).log_integral;

  NewtonOptions opts;
  opts.throw_on_failure = false;
  const TiltedState state = newton_mean_match(engine, fam.r0(), quad, y, y, opts);

  AdmissibilityRatio out;
  out.argmin = state.phi;
  out.converged = state.converged;
  out.iterations = state.iterations;
  const double numerator_log = state.log_z - state.phi.dot(y);
  out.inf_ratio = std::exp(numerator_log - denominator_log);
  return out;
}

BoundaryCheck boundary_check(const ConjugateSolver& solver, const Eigen::VectorXd& y,
                             const std::vector<double>& k_grid,
                             const std::vector<double>& radius_grid,
                             const BoundaryOptions& options) {
  if (k_grid.size() < 3)
    throw PreconditionError("boundary_check: need at least three k values");
  for (std::size_t i = 0; i < k_grid.size(); ++i) {
    if (!(k_grid[i] > 0.0)) throw PreconditionError("boundary_check: k must be positive");
    if (i > 0 && !(k_grid[i] > k_grid[i - 1]))
      throw PreconditionError("boundary_check: k grid must be strictly increasing");
  }
  const RegulatorFamily& fam = solver.family();
  const Expectations& engine = solver.engine();

  BoundaryCheck out;
  out.k_grid = k_grid;

  if (!options.skip_admissibility) {
    std::vector<std::size_t> trend = {0, k_grid.size() / 3, (2 * k_grid.size()) / 3,
                                      k_grid.size() - 1};
    trend.erase(std::unique(trend.begin(), trend.end()), trend.end());
    for (std::size_t idx : trend)
      out.admissibility_ratios.push_back(
          admissibility_ratio(solver, k_grid[idx], y).inf_ratio);
    const double first = out.admissibility_ratios.front();
    const double last = out.admissibility_ratios.back();
    if (last < first - 0.02 || last < 0.5) {
      std::ostringstream msg;
      msg << "boundary_check: admissibility trend fails at y (ratio " << first
          << " -> " << last << "); the limit identification is not justified here";
      throw PreconditionError(msg.str());
    }
  }

  // Γ_k(y) along the grid with warm starts, then a 1/k² extrapolation over
  // the largest values.
  NewtonOptions opts;
  Eigen::VectorXd warm;
  for (double k : k_grid) {
    if (warm.size() > 0) opts.warm = &warm;
    const ConjugateResult res = solver.conjugate(k, y, opts);
    warm = res.tilt.phi;
    out.gamma_values.push_back(res.gamma_value);
  }
  const int fit_n = options.fit_points > 0
                        ? std::min<int>(options.fit_points, static_cast<int>(k_grid.size()))
                        : std::max<int>(3, static_cast<int>(k_grid.size()) / 2);
  {
    const int start = static_cast<int>(k_grid.size()) - fit_n;
    std::vector<double> u, g, sig;
    for (int i = start; i < static_cast<int>(k_grid.size()); ++i) {
      u.push_back(1.0 / k_grid[i]);  // fit variable is 1/k², handled below
      g.push_back(out.gamma_values[i]);
      sig.push_back(1.0);
    }
    // fit_intercept_in_s2 fits against the square of its abscissa, so pass 1/k.
    const QuadFit fit = fit_intercept_in_s2(u, g, sig);
    out.gamma_limit = fit.intercept;
    out.gamma_fit_residual = fit.max_residual;
  }

  out.om = om_estimate(engine, fam.r0(), fam.w(), y, radius_grid, options.om_fit_window);
  out.om_value = out.om.extrapolated;

  // Joint-limit diagonal: pair each radius s with k = 1/s² and use that k's
  // scale-free metric (constant here by schedule separability).
  for (double s : radius_grid) {
    const double k_diag = std::max(1.0 / (s * s), k_grid.front());
    const Eigen::MatrixXd metric = fam.j_k(k_diag);
    const BallCurve at_w = ball_curve(engine, metric, fam.w(), {s});
    const BallCurve at_y = ball_curve(engine, metric, y, {s});
    out.diagonal_log_ratios.push_back(
        at_w.probability[0] > 0.0 && at_y.probability[0] > 0.0
            ? std::log(at_w.probability[0]) - std::log(at_y.probability[0])
            : std::numeric_limits<double>::quiet_NaN());
  }

  out.gap = std::abs(out.gamma_limit - out.om_value);
  return out;
}

SymmetryDefect symmetry_defect(const Expectations& engine, const Eigen::MatrixXd& j,
                               const Eigen::VectorXd& y, double radius) {
  if (!(radius > 0.0)) throw PreconditionError("symmetry_defect: radius must be positive");
  if (!engine.monte_carlo())
    throw ConfigError("symmetry_defect needs the Monte Carlo estimator");
  const MeasureModel& model = engine.model();
  const std::int64_t count = engine.count();
  const double r2 = radius * radius;

  std::vector<double> ratios;
  for (std::int64_t a = 0; a < count; a += kBlock) {
    const std::int64_t len = std::min<std::int64_t>(kBlock, count - a);
    const auto block = engine.points().middleCols(a, len);
    const Eigen::MatrixXd d = block.colwise() - y;
    const Eigen::RowVectorXd rho2 = d.cwiseProduct(j * d).colwise().sum();
    for (std::int64_t i = 0; i < len; ++i) {
      if (rho2(i) > r2) continue;
      const Eigen::VectorXd x = block.col(i);
      const double direct = model.log_density_unnormalized(x);
      const double mirrored = model.log_density_unnormalized(2.0 * y - x);
      ratios.push_back(std::min(1.0, std::exp(mirrored - direct)));
    }
  }

  SymmetryDefect out;
  out.points = static_cast<std::int64_t>(ratios.size());
  if (ratios.empty()) {
    out.level = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  std::sort(ratios.begin(), ratios.end());
  out.level = ratios[static_cast<std::size_t>(0.05 * (ratios.size() - 1))];
  return out;
}

}  // namespace frg
