#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "frg/measure.hpp"

namespace frg {

enum class Schedule { Linear, Quadratic, Expm1 };

Schedule schedule_from_name(const std::string& name);
std::string schedule_name(Schedule s);

/// Vectors v_a with Σ_a v_a v_aᵀ = dR_k/dk; the eigenframe of the regulator
/// derivative at a fixed flow parameter.
struct OmegaFrame {
  Eigen::MatrixXd vectors;  // one frame vector per column; may be empty
  Eigen::MatrixXd reconstruct() const;
};

/// The monotone regulator family R_k = r(k)²·R0 anchored at the base point
/// w, with quadratic functionals Q_k(x) = (x−w)ᵀ R_k (x−w) and their
/// k-derivatives. Immutable; all methods are pure.
class RegulatorFamily {
 public:
  RegulatorFamily(Eigen::MatrixXd r0, Schedule schedule, Eigen::VectorXd w);

  int dim() const { return static_cast<int>(w_.size()); }
  const Eigen::MatrixXd& r0() const { return r0_; }
  const Eigen::VectorXd& w() const { return w_; }
  Schedule schedule() const { return schedule_; }

  double r(double k) const;
  double r_dot(double k) const;
  Eigen::MatrixXd r_k(double k) const;      // r(k)² R0
  Eigen::MatrixXd r_k_dot(double k) const;  // 2 r(k) ṙ(k) R0

  double q(double k, const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double q_prime(double k, const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// The scale-free form J_k = I_k / r_k², which for separable schedules is
  /// the R0 form itself for every k > 0 (and vanishes at k = 0).
  Eigen::MatrixXd j_k(double k) const;

  OmegaFrame omega_frame(double k) const;

 private:
  Eigen::MatrixXd r0_;
  Schedule schedule_;
  Eigen::VectorXd w_;
  Eigen::MatrixXd eigvecs_;
  Eigen::VectorXd eigvals_;
};

/// μ of the ellipsoid {x : (x−center)ᵀ J (x−center) ≤ radius²}, evaluated on
/// the engine's cached points so that estimates at nested sets share one
/// sample (common random numbers).
Expectations::Estimate ball_probability(const Expectations& engine,
                                        const Eigen::MatrixXd& j,
                                        const Eigen::VectorXd& center, double radius);

struct BallLimitResult {
  std::vector<double> sequence;        // μ(K^{J_i}_eps(h)) per input matrix
  std::vector<double> sequence_error;  // standard errors
  double limit;                        // μ(K^{J}_eps(h)) for the limit form
  double limit_error;
};

/// Evaluates ball measures along an increasing chain J_1 ≤ J_2 ≤ … ≤ J and
/// checks the monotone-limit law: the sequence must be nonincreasing
/// (exactly, by shared points) and its tail must meet the limit value within
/// Monte Carlo tolerance.
BallLimitResult ball_measure_limit_check(const MeasureModel& model,
                                         const EstimatorConfig& cfg,
                                         const std::vector<Eigen::MatrixXd>& js,
                                         const Eigen::MatrixXd& j_limit,
                                         const Eigen::VectorXd& center, double eps);

}  // namespace frg
