#pragma once

// Independent oracles for the test suite. Everything here is computed from
// first principles (closed forms, dense grid integration, grid search) and
// never calls into the library's estimators, so agreement is evidence, not
// tautology.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

inline double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double chi2_cdf_1d(double t) {
    // P(Z² ≤ t) for standard normal Z.
    return t <= 0 ? 0.0 : 2.0 * phi_cdf(std::sqrt(t)) - 1.0;
}

// ∫ f(x) dx over [lo, hi] by the composite trapezoid rule.
inline double trapezoid(double lo, double hi, int n,
                        const std::function<double(double)>& f) {
    if (n < 2) throw std::invalid_argument("trapezoid: need at least two points");
    const double h = (hi - lo) / (n - 1);
    double acc = 0.5 * (f(lo) + f(hi));
    for (int i = 1; i + 1 < n; ++i) acc += f(lo + h * i);
    return acc * h;
}

// ∫ f(x) φ(x; m, c) dx over m ± 12σ on a dense grid.
inline double gauss_expect(double m, double c, const std::function<double(double)>& f,
                           int n = 400001) {
    const double sigma = std::sqrt(c);
    const double norm = 1.0 / std::sqrt(2.0 * M_PI * c);
    return trapezoid(m - 12 * sigma, m + 12 * sigma, n, [&](double x) {
        double d = x - m;
        return f(x) * norm * std::exp(-0.5 * d * d / c);
    });
}

// Closed forms for N(m, C) reweighted by exp[−½ r² (x−w)ᵀ R0 (x−w)]:
// the reweighted measure is Gaussian with precision C⁻¹ + r²R0.
struct Gaussian {
    Eigen::VectorXd m, w;
    Eigen::MatrixXd C, R0;
    std::function<double(double)> r;      // schedule scale
    std::function<double(double)> r_dot;  // its k-derivative

    static Gaussian linear(Eigen::VectorXd m, Eigen::MatrixXd C, Eigen::MatrixXd R0,
                           Eigen::VectorXd w) {
        return {std::move(m), std::move(w), std::move(C), std::move(R0),
                [](double k) { return k; }, [](double) { return 1.0; }};
    }

    Eigen::MatrixXd rk(double k) const { return r(k) * r(k) * R0; }
    Eigen::MatrixXd precision_k(double k) const { return C.inverse() + rk(k); }
    Eigen::MatrixXd cov_k(double k) const { return precision_k(k).inverse(); }
    Eigen::VectorXd mean_k(double k) const {
        return precision_k(k).llt().solve(C.inverse() * m + rk(k) * w);
    }

    double log_nk(double k) const {
        const int n = static_cast<int>(m.size());
        Eigen::MatrixXd rkm = rk(k);
        Eigen::MatrixXd middle = rkm - rkm * precision_k(k).llt().solve(rkm);
        Eigen::VectorXd d = m - w;
        double logdet =
            std::log((Eigen::MatrixXd::Identity(n, n) + C * rkm).determinant());
        return -0.5 * logdet - 0.5 * d.dot(middle * d);
    }

    // d/dk of N_k (not of its log).
    double nk_derivative(double k, double h = 1e-6) const {
        return (std::exp(log_nk(k + h)) - std::exp(log_nk(k - h))) / (2 * h);
    }

    // Cumulant generating function of the reweighted measure.
    double v(double k, const Eigen::VectorXd& phi) const {
        return phi.dot(mean_k(k)) + 0.5 * phi.dot(cov_k(k) * phi);
    }

    double vstar(double k, const Eigen::VectorXd& y) const {
        Eigen::VectorXd d = y - mean_k(k);
        return 0.5 * d.dot(precision_k(k) * d);
    }

    double gamma(double k, const Eigen::VectorXd& y) const {
        Eigen::VectorXd d = y - w;
        return vstar(k, y) - 0.5 * d.dot(rk(k) * d);
    }

    double gamma_k_derivative(double k, const Eigen::VectorXd& y,
                              double h = 1e-6) const {
        return (gamma(k + h, y) - gamma(k - h, y)) / (2 * h);
    }
};

// 1D measures with density ∝ exp[ℓ(x)] on a wide grid: cumulant generating
// function and conjugate by brute force, for the non-Gaussian cases.
struct GridMeasure1D {
    std::function<double(double)> log_density;  // unnormalized
    double lo, hi;
    int n = 400001;

    double integral(const std::function<double(double)>& f) const {
        return trapezoid(lo, hi, n, [&](double x) {
            return f(x) * std::exp(log_density(x));
        });
    }

    // ln ∫ e^{φx − ½ q (x−c)²} dμ̂ where μ̂ is the normalized measure.
    double log_tilted_integral(double phi, double quad, double center) const {
        double z0 = integral([](double) { return 1.0; });
        double zt = integral([&](double x) {
            double d = x - center;
            return std::exp(phi * x - 0.5 * quad * d * d);
        });
        return std::log(zt) - std::log(z0);
    }

    double tilted_mean(double phi, double quad, double center) const {
        double zt = integral([&](double x) {
            double d = x - center;
            return std::exp(phi * x - 0.5 * quad * d * d);
        });
        double mt = integral([&](double x) {
            double d = x - center;
            return x * std::exp(phi * x - 0.5 * quad * d * d);
        });
        return mt / zt;
    }

    // sup_φ [φy − V(φ)] by coarse grid plus ternary refinement.
    double conjugate(double y, double quad, double center, double phi_lo,
                     double phi_hi, int grid = 481) const {
        auto objective = [&](double phi) {
            return phi * y - log_tilted_integral(phi, quad, center);
        };
        double best_phi = phi_lo, best = objective(phi_lo);
        for (int i = 1; i < grid; ++i) {
            double phi = phi_lo + (phi_hi - phi_lo) * i / (grid - 1);
            double val = objective(phi);
            if (val > best) {
                best = val;
                best_phi = phi;
            }
        }
        double a = best_phi - (phi_hi - phi_lo) / (grid - 1);
        double b = best_phi + (phi_hi - phi_lo) / (grid - 1);
        for (int it = 0; it < 200; ++it) {
            double m1 = a + (b - a) / 3, m2 = b - (b - a) / 3;
            if (objective(m1) < objective(m2))
                a = m1;
            else
                b = m2;
        }
        return objective(0.5 * (a + b));
    }
};

inline GridMeasure1D quartic_grid(double c4, double lo = -10.0, double hi = 10.0) {
    return {[c4](double x) { return -0.5 * x * x - c4 * x * x * x * x; }, lo, hi};
}

}  // namespace oracle
