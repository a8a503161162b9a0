#include "frg/regulator.hpp"

#include <cassert>
#include <cmath>
#include <sstream>

#include "frg/errors.hpp"

namespace frg {

namespace {

constexpr std::int64_t kBlock = 1 << 20;

void require_nonneg_k(double k) {
  if (!(k >= 0.0)) throw PreconditionError("flow parameter k must be nonnegative");
}

}  // namespace

Schedule schedule_from_name(const std::string& name) {
  if (name == "linear") return Schedule::Linear;
  if (name == "quadratic") return Schedule::Quadratic;
  if (name == "expm1") return Schedule::Expm1;
  throw ConfigError("unknown schedule '" + name +
                    "'; expected linear, quadratic, or expm1");
}

std::string schedule_name(Schedule s) {
  switch (s) {
    case Schedule::Linear: return "linear";
    case Schedule::Quadratic: return "quadratic";
    case Schedule::Expm1: return "expm1";
  }
  return "unknown";
}

Eigen::MatrixXd OmegaFrame::reconstruct() const {
  if (vectors.size() == 0) {
    const int n = static_cast<int>(vectors.rows());
    return Eigen::MatrixXd::Zero(n, n);
  }
  return vectors * vectors.transpose();
}

RegulatorFamily::RegulatorFamily(Eigen::MatrixXd r0, Schedule schedule,
                                 Eigen::VectorXd w)
    : r0_(std::move(r0)), schedule_(schedule), w_(std::move(w)) {
  const int n = static_cast<int>(w_.size());
  if (n < 1) throw ConfigError("regulator: base point must be nonempty");
  if (!w_.allFinite()) throw ConfigError("regulator: base point has non-finite entries");
  if (r0_.rows() != n || r0_.cols() != n) {
    std::ostringstream msg;
    msg << "regulator: R0 must be " << n << "x" << n << ", got " << r0_.rows() << "x"
        << r0_.cols();
    throw ConfigError(msg.str());
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (std::abs(r0_(i, j) - r0_(j, i)) > 1e-12) {
        std::ostringstream msg;
        msg << "regulator: R0 not symmetric: entry (" << i << "," << j << ") = "
            << r0_(i, j) << " vs (" << j << "," << i << ") = " << r0_(j, i);
        throw ConfigError(msg.str());
      }
    }
  }
  r0_ = ((r0_ + r0_.transpose()) / 2.0).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r0_);
  if (es.info() != Eigen::Success)
    throw ConfigError("regulator: eigendecomposition of R0 failed");
  if (es.eigenvalues().minCoeff() < -1e-12) {
    std::ostringstream msg;
    msg << "regulator: R0 not positive semidefinite: smallest eigenvalue = "
        << es.eigenvalues().minCoeff();
    throw ConfigError(msg.str());
  }
  eigvecs_ = es.eigenvectors();
  eigvals_ = es.eigenvalues().cwiseMax(0.0);
}

double RegulatorFamily::r(double k) const {
  require_nonneg_k(k);
  switch (schedule_) {
    case Schedule::Linear: return k;
    case Schedule::Quadratic: return k * k;
    case Schedule::Expm1: return std::expm1(k);
  }
  return 0.0;
}

double RegulatorFamily::r_dot(double k) const {
  require_nonneg_k(k);
  switch (schedule_) {
    case Schedule::Linear: return 1.0;
    case Schedule::Quadratic: return 2.0 * k;
    case Schedule::Expm1: return std::exp(k);
  }
  return 0.0;
}

Eigen::MatrixXd RegulatorFamily::r_k(double k) const {
  const double s = r(k);
  return (s * s) * r0_;
}

Eigen::MatrixXd RegulatorFamily::r_k_dot(double k) const {
  return (2.0 * r(k) * r_dot(k)) * r0_;
}

double RegulatorFamily::q(double k, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (!x.allFinite()) throw DomainError("q: point must be finite");
  const Eigen::VectorXd d = x - w_;
  const double s = r(k);
  return s * s * d.dot(r0_ * d);
}

double RegulatorFamily::q_prime(double k,
                                const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (!x.allFinite()) throw DomainError("q_prime: point must be finite");
  const Eigen::VectorXd d = x - w_;
  return 2.0 * r(k) * r_dot(k) * d.dot(r0_ * d);
}

Eigen::MatrixXd RegulatorFamily::j_k(double k) const {
  require_nonneg_k(k);
  if (k == 0.0) return Eigen::MatrixXd::Zero(dim(), dim());
  return r0_;
}

OmegaFrame RegulatorFamily::omega_frame(double k) const {
  const double scale = 2.0 * r(k) * r_dot(k);
  assert(scale >= 0.0 && "regulator derivative must stay PSD");
  const int n = dim();
  int rank = 0;
  for (int i = 0; i < n; ++i)
    if (scale * eigvals_(i) > 0.0) ++rank;
  OmegaFrame frame;
  frame.vectors.resize(n, rank);
  int c = 0;
  for (int i = 0; i < n; ++i) {
    const double lambda = scale * eigvals_(i);
    if (lambda > 0.0) frame.vectors.col(c++) = std::sqrt(lambda) * eigvecs_.col(i);
  }
  return frame;
}

Expectations::Estimate ball_probability(const Expectations& engine,
                                        const Eigen::MatrixXd& j,
                                        const Eigen::VectorXd& center, double radius) {
  if (radius <= 0.0) throw PreconditionError("ball_probability: radius must be positive");
  const std::int64_t n = engine.count();
  const double r2 = radius * radius;
  double p = 0.0;
  std::int64_t hits = 0;
  for (std::int64_t a = 0; a < n; a += kBlock) {
    const std::int64_t len = std::min<std::int64_t>(kBlock, n - a);
    const Eigen::MatrixXd d = engine.points().middleCols(a, len).colwise() - center;
    const Eigen::RowVectorXd rho2 = d.cwiseProduct(j * d).colwise().sum();
    for (std::int64_t i = 0; i < len; ++i) {
      if (rho2(i) <= r2) {
        ++hits;
        p += std::exp(engine.log_weight(a + i));
      }
    }
  }
  Expectations::Estimate est{p, 0.0};
  if (engine.monte_carlo()) {
    const double nn = static_cast<double>(n);
    est.std_error = std::sqrt(std::max(0.0, p * (1.0 - p) / nn));
  }
  return est;
}

BallLimitResult ball_measure_limit_check(const MeasureModel& model,
                                         const EstimatorConfig& cfg,
                                         const std::vector<Eigen::MatrixXd>& js,
                                         const Eigen::MatrixXd& j_limit,
                                         const Eigen::VectorXd& center, double eps) {
  if (js.empty()) throw PreconditionError("ball_measure_limit_check: empty matrix chain");
  auto check_step = [](const Eigen::MatrixXd& lo, const Eigen::MatrixXd& hi,
                       const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hi - lo);
    if (es.eigenvalues().minCoeff() < -1e-10) {
      std::ostringstream msg;
      msg << what << ": quadratic forms must be nondecreasing (violation "
          << es.eigenvalues().minCoeff() << ")";
      throw PreconditionError(msg.str());
    }
  };
  for (std::size_t i = 1; i < js.size(); ++i)
    check_step(js[i - 1], js[i], "ball_measure_limit_check");
  check_step(js.back(), j_limit, "ball_measure_limit_check (limit form)");

  const Expectations engine(model, cfg);
  BallLimitResult result;
  result.sequence.reserve(js.size());
  result.sequence_error.reserve(js.size());
  for (const auto& j : js) {
    const auto est = ball_probability(engine, j, center, eps);
    result.sequence.push_back(est.value);
    result.sequence_error.push_back(est.std_error);
  }
  const auto lim = ball_probability(engine, j_limit, center, eps);
  result.limit = lim.value;
  result.limit_error = lim.std_error;

  for (std::size_t i = 1; i < result.sequence.size(); ++i) {
    if (result.sequence[i] > result.sequence[i - 1] + 1e-15) {
      std::ostringstream msg;
      msg << "ball measures increased along an increasing form chain at step " << i
          << ": " << result.sequence[i - 1] << " -> " << result.sequence[i];
      throw ConsistencyError(msg.str());
    }
  }
  const double tol =
      4.0 * (result.sequence_error.back() + result.limit_error) + 1e-12;
  if (std::abs(result.sequence.back() - result.limit) > tol) {
    std::ostringstream msg;
    msg << "ball-measure sequence tail " << result.sequence.back()
        << " does not meet the limit value " << result.limit << " within " << tol;
    throw ConsistencyError(msg.str());
  }
  return result;
}

}  // namespace frg
