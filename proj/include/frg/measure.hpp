#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace frg {

/// Even polynomial perturbation acting axis-wise:
///   p(x) = sum_i sum_j coeffs[i][j] * x_i^(2(j+1)).
/// All coefficients must be nonnegative, so p >= 0 everywhere and exp[-p]
/// is a valid rejection envelope with constant 1.
struct Perturbation {
  std::vector<std::vector<double>> coeffs;

  bool empty() const;
  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// p is axis-separable, so its Hessian is diagonal.
  Eigen::VectorXd hessian_diagonal(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

enum class MeasureKind { Gaussian, PerturbedGaussian };

/// A fully supported probability measure on R^n with all exponential
/// moments: either N(m, C) or a reweighting of it by exp[-p(x)].
class MeasureModel {
 public:
  static MeasureModel gaussian(Eigen::VectorXd mean, Eigen::MatrixXd covariance);
  static MeasureModel perturbed_gaussian(Eigen::VectorXd mean,
                                         Eigen::MatrixXd covariance,
                                         Perturbation p);

  int dim() const { return static_cast<int>(mean_.size()); }
  MeasureKind kind() const { return kind_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  const Eigen::MatrixXd& precision() const { return precision_; }
  /// Lower-triangular L with C = L L^T.
  const Eigen::MatrixXd& covariance_factor() const { return chol_; }
  const Perturbation& perturbation() const { return perturbation_; }

  /// Log of the unnormalized Lebesgue density: the Gaussian exponent, minus
  /// the perturbation when present.
  double log_density_unnormalized(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Center of point symmetry of the density, when it has one.
  std::optional<Eigen::VectorXd> symmetry_center() const;

 private:
  MeasureModel(MeasureKind kind, Eigen::VectorXd mean, Eigen::MatrixXd covariance,
               Perturbation p);

  MeasureKind kind_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd precision_;
  Eigen::MatrixXd chol_;
  Perturbation perturbation_;
};

enum class EstimatorMode { Quadrature, MonteCarlo };

struct EstimatorConfig {
  EstimatorMode mode = EstimatorMode::Quadrature;
  int nodes_per_dim = 64;         // quadrature
  std::int64_t samples = 200000;  // monte carlo
  std::uint64_t seed = 42;
  int streams = 8;
  int dim_switch = 3;

  void validate() const;
};

/// Expectation engine bound to one (model, estimator) pair. Every integral
/// downstream reduces to expect() or tilted_moments(). In Monte Carlo mode
/// the point cloud is drawn once at construction and shared by all callers
/// (common random numbers), so repeated queries are deterministic and vary
/// smoothly in their parameters. Immutable after construction; safe to share
/// across threads.
class Expectations {
 public:
  Expectations(MeasureModel model, EstimatorConfig cfg);

  using ScalarFn = std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>;

  struct Estimate {
    double value;
    double std_error;  // 0 in quadrature mode
  };

  /// ∫ f(x) exp[weight_log(x)] dμ(x).
  Estimate expect(const ScalarFn& f, const ScalarFn& weight_log) const;

  /// Weight exponent g(x) = phi·x − ½·quad_coeff·(x−center)ᵀ R0 (x−center).
  struct TiltSpec {
    Eigen::VectorXd phi;
    double quad_coeff = 0.0;
    Eigen::MatrixXd r0;      // unused when quad_coeff == 0
    Eigen::VectorXd center;  // unused when quad_coeff == 0
  };

  struct TiltedMoments {
    double log_integral;   // ln ∫ exp[g] dμ
    Eigen::VectorXd mean;  // mean of μ_g ∝ exp[g]·μ
    Eigen::MatrixXd cov;   // covariance of μ_g
    double ess;            // effective sample size (node count in quadrature)
    double log_std_error;  // MC standard error of log_integral, else 0
  };

  /// Reweighted moments in one sweep; the workhorse of the tilt solver and
  /// the flow assembly.
  TiltedMoments tilted_moments(const TiltSpec& g) const;

  /// Fresh i.i.d. draws from μ, one column per draw (Monte Carlo mode only).
  Eigen::MatrixXd sample(std::int64_t count) const;

  const MeasureModel& model() const { return model_; }
  const EstimatorConfig& config() const { return cfg_; }
  bool monte_carlo() const { return cfg_.mode == EstimatorMode::MonteCarlo; }

  /// Cached evaluation points (one per column) with normalized log weights
  /// (logsumexp of all weights is 0).
  const Eigen::MatrixXd& points() const { return points_; }
  std::int64_t count() const { return points_.cols(); }
  double log_weight(std::int64_t j) const {
    return logw_.size() > 0 ? logw_(j) : logw_uniform_;
  }
  bool uniform_weights() const { return logw_.size() == 0; }

  /// ln ∫ exp[-p] dN(m, C): zero for the Gaussian kind; from the quadrature
  /// grid, or the rejection acceptance rate, for the perturbed kind.
  double log_base_normalizer() const { return log_zp_; }

 private:
  void build_quadrature();
  void build_monte_carlo();
  Eigen::MatrixXd generate(std::int64_t count, std::uint64_t purpose,
                           std::int64_t* accepts, std::int64_t* proposals) const;

  MeasureModel model_;
  EstimatorConfig cfg_;
  Eigen::MatrixXd points_;
  Eigen::VectorXd logw_;       // per-point log weights (quadrature mode)
  double logw_uniform_ = 0.0;  // shared log weight (Monte Carlo mode)
  double log_zp_ = 0.0;
};

/// Worker cap honoring the FRGFLOW_THREADS environment variable.
int worker_limit();

}  // namespace frg
