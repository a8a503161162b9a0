#include "frg/measure.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "frg/errors.hpp"
#include "frg/quadrature.hpp"
#include "frg/rng.hpp"

namespace frg {

namespace {

constexpr std::int64_t kBlock = 1 << 20;

constexpr std::uint64_t kPurposeCache = 0;
constexpr std::uint64_t kPurposeFresh = 1;

void check_square(const Eigen::MatrixXd& c, int n) {
  if (c.rows() != n || c.cols() != n) {
    std::ostringstream msg;
    msg << "covariance must be " << n << "x" << n << ", got " << c.rows() << "x"
        << c.cols();
    throw ConfigError(msg.str());
  }
}

// Runs jobs 0..count-1 on up to worker_limit() threads. Each job must write
// only to its own output slice, so results do not depend on scheduling.
void run_jobs(int count, const std::function<void(int)>& job) {
  const int workers = std::min(count, worker_limit());
  if (workers <= 1) {
    for (int j = 0; j < count; ++j) job(j);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      for (int j = next.fetch_add(1); j < count; j = next.fetch_add(1)) job(j);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

int worker_limit() {
  const char* env = std::getenv("FRGFLOW_THREADS");
  if (env != nullptr) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

bool Perturbation::empty() const {
  for (const auto& axis : coeffs)
    for (double c : axis)
      if (c != 0.0) return false;
  return true;
}

double Perturbation::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double p = 0.0;
  const int n = std::min<int>(static_cast<int>(coeffs.size()), static_cast<int>(x.size()));
  for (int i = 0; i < n; ++i) {
    const auto& cs = coeffs[i];
    if (cs.empty()) continue;
    const double t = x(i) * x(i);
    double axis = 0.0;
    for (auto it = cs.rbegin(); it != cs.rend(); ++it) axis = (axis + *it) * t;
    p += axis;
  }
  return p;
}

Eigen::VectorXd Perturbation::hessian_diagonal(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(x.size());
  const int n = std::min<int>(static_cast<int>(coeffs.size()), static_cast<int>(x.size()));
  for (int i = 0; i < n; ++i) {
    const auto& cs = coeffs[i];
    for (std::size_t d = 0; d < cs.size(); ++d) {
      const double deg = 2.0 * static_cast<double>(d + 1);
      h(i) += cs[d] * deg * (deg - 1.0) * std::pow(x(i), deg - 2.0);
    }
  }
  return h;
}

MeasureModel::MeasureModel(MeasureKind kind, Eigen::VectorXd mean,
                           Eigen::MatrixXd covariance, Perturbation p)
    : kind_(kind),
      mean_(std::move(mean)),
      covariance_(std::move(covariance)),
      perturbation_(std::move(p)) {
  const int n = static_cast<int>(mean_.size());
  if (n < 1) throw ConfigError("measure dimension must be positive");
  if (!mean_.allFinite()) throw ConfigError("mean has non-finite entries");
  check_square(covariance_, n);
  if (!covariance_.allFinite()) throw ConfigError("covariance has non-finite entries");
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (std::abs(covariance_(i, j) - covariance_(j, i)) > 1e-12) {
        std::ostringstream msg;
        msg << "covariance not symmetric: entry (" << i << "," << j << ") = "
            << covariance_(i, j) << " vs (" << j << "," << i << ") = "
            << covariance_(j, i);
        throw ConfigError(msg.str());
      }
    }
  }
  covariance_ = ((covariance_ + covariance_.transpose()) / 2.0).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance_);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0) {
    std::ostringstream msg;
    msg << "covariance not positive definite: smallest eigenvalue = "
        << es.eigenvalues().minCoeff();
    throw ConfigError(msg.str());
  }
  precision_ = covariance_.inverse();
  precision_ = ((precision_ + precision_.transpose()) / 2.0).eval();
  chol_ = Eigen::LLT<Eigen::MatrixXd>(covariance_).matrixL();

  if (kind_ == MeasureKind::PerturbedGaussian) {
    if (perturbation_.coeffs.size() != static_cast<std::size_t>(n))
      throw ConfigError("perturbation must list coefficients for every axis");
    for (std::size_t i = 0; i < perturbation_.coeffs.size(); ++i) {
      for (std::size_t d = 0; d < perturbation_.coeffs[i].size(); ++d) {
        const double c = perturbation_.coeffs[i][d];
        if (!std::isfinite(c) || c < 0.0) {
          std::ostringstream msg;
          msg << "perturbation coefficient of x_" << i << "^" << 2 * (d + 1)
              << " must be finite and nonnegative, got " << c;
          throw ConfigError(msg.str());
        }
      }
    }
  }
}

MeasureModel MeasureModel::gaussian(Eigen::VectorXd mean, Eigen::MatrixXd covariance) {
  return MeasureModel(MeasureKind::Gaussian, std::move(mean), std::move(covariance),
                      Perturbation{});
}

MeasureModel MeasureModel::perturbed_gaussian(Eigen::VectorXd mean,
                                              Eigen::MatrixXd covariance,
                                              Perturbation p) {
  return MeasureModel(MeasureKind::PerturbedGaussian, std::move(mean),
                      std::move(covariance), std::move(p));
}

double MeasureModel::log_density_unnormalized(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != mean_.size() || !x.allFinite())
    throw DomainError("log_density_unnormalized: point must be finite and of model dimension");
  const Eigen::VectorXd d = x - mean_;
  double v = -0.5 * d.dot(precision_ * d);
  if (kind_ == MeasureKind::PerturbedGaussian) v -= perturbation_(x);
  return v;
}

std::optional<Eigen::VectorXd> MeasureModel::symmetry_center() const {
  if (kind_ == MeasureKind::Gaussian) return mean_;
  if (perturbation_.empty()) return mean_;
  if (mean_.isZero(0.0)) return mean_;  // even p and centered base
  return std::nullopt;
}

void EstimatorConfig::validate() const {
  if (mode == EstimatorMode::Quadrature && nodes_per_dim < 1)
    throw ConfigError("estimator: nodes per dimension must be positive");
  if (mode == EstimatorMode::MonteCarlo && samples < 1)
    throw ConfigError("estimator: sample count must be positive");
  if (streams < 1) throw ConfigError("estimator: stream count must be positive");
  if (dim_switch < 1) throw ConfigError("estimator: dim_switch must be positive");
}

Expectations::Expectations(MeasureModel model, EstimatorConfig cfg)
    : model_(std::move(model)), cfg_(cfg) {
  cfg_.validate();
  if (cfg_.mode == EstimatorMode::Quadrature) {
    if (model_.dim() > cfg_.dim_switch) {
      std::ostringstream msg;
      msg << "quadrature requested in dimension " << model_.dim()
          << " above the threshold " << cfg_.dim_switch << "; use Monte Carlo";
      throw ConfigError(msg.str());
    }
    build_quadrature();
  } else {
    build_monte_carlo();
  }
}

void Expectations::build_quadrature() {
  const int n = model_.dim();
  const int m = cfg_.nodes_per_dim;
  const GaussHermiteRule rule = gauss_hermite(m);

  std::int64_t total = 1;
  for (int i = 0; i < n; ++i) {
    total *= m;
    if (total > (std::int64_t{1} << 26))
      throw ConfigError("quadrature grid too large; reduce nodes or use Monte Carlo");
  }

  points_.resize(n, total);
  logw_.resize(total);
  const double log_norm = -0.5 * n * std::log(M_PI);
  const double sqrt2 = std::sqrt(2.0);

  std::vector<int> idx(n, 0);
  Eigen::VectorXd z(n);
  for (std::int64_t j = 0; j < total; ++j) {
    double lw = log_norm;
    for (int i = 0; i < n; ++i) {
      z(i) = rule.nodes[idx[i]];
      lw += rule.log_weights[idx[i]];
    }
    const Eigen::VectorXd x = model_.mean() + model_.covariance_factor() * (sqrt2 * z);
    points_.col(j) = x;
    if (model_.kind() == MeasureKind::PerturbedGaussian) lw -= model_.perturbation()(x);
    logw_(j) = lw;
    for (int i = 0; i < n; ++i) {
      if (++idx[i] < m) break;
      idx[i] = 0;
    }
  }

  // Normalize so the weights describe the probability measure itself. The
  // shifted sum of the raw weights is ln ∫ exp[-p] dN(m, C).
  const double shift = logw_.maxCoeff();
  const double lse = shift + std::log((logw_.array() - shift).exp().sum());
  log_zp_ = model_.kind() == MeasureKind::PerturbedGaussian ? lse : 0.0;
  logw_.array() -= lse;
}

Eigen::MatrixXd Expectations::generate(std::int64_t count, std::uint64_t purpose,
                                       std::int64_t* accepts,
                                       std::int64_t* proposals) const {
  const int n = model_.dim();
  const int streams = cfg_.streams;
  Eigen::MatrixXd out(n, count);

  std::vector<std::int64_t> offset(streams + 1, 0);
  for (int s = 0; s < streams; ++s)
    offset[s + 1] = offset[s] + count / streams + (s < count % streams ? 1 : 0);

  std::vector<std::int64_t> acc(streams, 0), prop(streams, 0);
  const bool perturbed = model_.kind() == MeasureKind::PerturbedGaussian &&
                         !model_.perturbation().empty();
  const Eigen::VectorXd mean = model_.mean();
  const Eigen::MatrixXd chol = model_.covariance_factor();
  const Perturbation& pert = model_.perturbation();
  std::string failure;
  std::mutex failure_mutex;

  run_jobs(streams, [&](int s) {
    Rng rng = Rng::stream(cfg_.seed, stream_tag(purpose, static_cast<std::uint64_t>(s)));
    Eigen::VectorXd z(n), x(n);
    for (std::int64_t j = offset[s]; j < offset[s + 1]; ++j) {
      for (;;) {
        for (int i = 0; i < n; ++i) z(i) = rng.next_normal();
        x.noalias() = mean + chol * z;
        if (!perturbed) {
          ++prop[s];
          ++acc[s];
          break;
        }
        ++prop[s];
        const double log_u = std::log(rng.next_uniform());
        if (log_u < -pert(x)) {
          ++acc[s];
          break;
        }
        if (prop[s] >= 100000 && acc[s] < static_cast<std::int64_t>(1e-4 * prop[s])) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          failure =
              "rejection sampler acceptance rate below 1e-4; reduce the "
              "perturbation or rescale the base covariance";
          return;
        }
      }
      out.col(j) = x;
    }
  });
  if (!failure.empty()) throw SamplerError(failure);

  std::int64_t a = 0, p = 0;
  for (int s = 0; s < streams; ++s) {
    a += acc[s];
    p += prop[s];
  }
  if (accepts != nullptr) *accepts = a;
  if (proposals != nullptr) *proposals = p;
  return out;
}

void Expectations::build_monte_carlo() {
  std::int64_t accepts = 0, proposals = 0;
  points_ = generate(cfg_.samples, kPurposeCache, &accepts, &proposals);
  logw_uniform_ = -std::log(static_cast<double>(cfg_.samples));
  log_zp_ = model_.kind() == MeasureKind::PerturbedGaussian
                ? std::log(static_cast<double>(accepts) / static_cast<double>(proposals))
                : 0.0;
}

Eigen::MatrixXd Expectations::sample(std::int64_t count) const {
  if (!monte_carlo())
    throw ConfigError("sample: drawing points requires the Monte Carlo estimator");
  if (count < 1) throw PreconditionError("sample: count must be positive");
  return generate(count, kPurposeFresh, nullptr, nullptr);
}

Expectations::Estimate Expectations::expect(const ScalarFn& f,
                                            const ScalarFn& weight_log) const {
  const std::int64_t n = count();
  double shift = -std::numeric_limits<double>::infinity();
  double acc1 = 0.0, acc2 = 0.0;

  for (std::int64_t j = 0; j < n; ++j) {
    const auto x = points_.col(j);
    const double e = log_weight(j) + weight_log(x);
    if (std::isnan(e) || e == std::numeric_limits<double>::infinity()) {
      std::ostringstream msg;
      msg << "expect: weight exponent overflowed at x = [" << x.transpose() << "]";
      throw EvaluationError(msg.str());
    }
    if (e == -std::numeric_limits<double>::infinity()) continue;
    const double fx = f(x);
    if (!std::isfinite(fx)) {
      std::ostringstream msg;
      msg << "expect: integrand non-finite at x = [" << x.transpose() << "]";
      throw EvaluationError(msg.str());
    }
    if (e > shift) {
      const double scale = std::exp(shift - e);
      acc1 *= scale;
      acc2 *= scale * scale;
      shift = e;
    }
    const double u = std::exp(e - shift);
    acc1 += u * fx;
    acc2 += u * u * fx * fx;
  }

  Estimate est{0.0, 0.0};
  if (shift == -std::numeric_limits<double>::infinity()) return est;
  est.value = std::exp(shift) * acc1;
  if (!std::isfinite(est.value))
    throw EvaluationError("expect: estimate overflowed; rescale the weight");
  if (monte_carlo() && n > 1) {
    // Per-sample terms are t_j = exp(weight_log) * f; acc2 carries their
    // shifted squares.
    const double nn = static_cast<double>(n);
    const double sum_sq = std::exp(2.0 * shift) * acc2 * nn * nn;
    const double var = std::max(0.0, (sum_sq - nn * est.value * est.value) / (nn - 1.0));
    est.std_error = std::sqrt(var / nn);
  }
  return est;
}

Expectations::TiltedMoments Expectations::tilted_moments(const TiltSpec& g) const {
  const std::int64_t n = count();
  const int dim = model_.dim();
  if (g.phi.size() != dim)
    throw PreconditionError("tilted_moments: tilt dimension mismatch");
  const bool quad = g.quad_coeff != 0.0;
  if (quad && (g.r0.rows() != dim || g.r0.cols() != dim || g.center.size() != dim))
    throw PreconditionError("tilted_moments: quadratic part dimension mismatch");

  Eigen::VectorXd e(n);
  for (std::int64_t a = 0; a < n; a += kBlock) {
    const std::int64_t len = std::min<std::int64_t>(kBlock, n - a);
    const auto block = points_.middleCols(a, len);
    auto seg = e.segment(a, len);
    seg = (g.phi.transpose() * block).transpose();
    if (quad) {
      const Eigen::MatrixXd d = block.colwise() - g.center;
      seg -= (0.5 * g.quad_coeff) *
             d.cwiseProduct(g.r0 * d).colwise().sum().transpose();
    }
    if (uniform_weights())
      seg.array() += logw_uniform_;
    else
      seg += logw_.segment(a, len);
  }
  if (!e.allFinite())
    throw EvaluationError("tilted_moments: weight exponent overflowed");

  const double shift = e.maxCoeff();
  Eigen::VectorXd u = (e.array() - shift).exp();
  const double s0 = u.sum();
  const double s2 = u.squaredNorm();
  if (!(s0 > 0.0) || !std::isfinite(s0))
    throw EvaluationError("tilted_moments: degenerate weight normalization");

  TiltedMoments out;
  out.log_integral = shift + std::log(s0);
  out.mean = points_ * u / s0;
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(dim, dim);
  for (std::int64_t a = 0; a < n; a += kBlock) {
    const std::int64_t len = std::min<std::int64_t>(kBlock, n - a);
    const Eigen::MatrixXd d = points_.middleCols(a, len).colwise() - out.mean;
    second.noalias() +=
        (d.array().rowwise() * u.segment(a, len).transpose().array()).matrix() *
        d.transpose();
  }
  out.cov = (second + second.transpose()) / (2.0 * s0);
  out.ess = s0 * s0 / s2;
  out.log_std_error =
      monte_carlo()
          ? std::sqrt(std::max(0.0, s2 / (s0 * s0) - 1.0 / static_cast<double>(n)))
          : 0.0;
  if (!out.mean.allFinite() || !out.cov.allFinite())
    throw EvaluationError("tilted_moments: moments overflowed");
  return out;
}

}  // namespace frg
