#pragma once

// Small construction helpers shared by the unit test suites.

#include <Eigen/Dense>
#include <initializer_list>

#include "frg/measure.hpp"

namespace testutil {

inline Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

inline Eigen::MatrixXd mat(int n, std::initializer_list<double> xs) {
    Eigen::MatrixXd m(n, n);
    int i = 0;
    for (double x : xs) {
        m(i / n, i % n) = x;
        ++i;
    }
    return m;
}

inline frg::EstimatorConfig quad_cfg(int nodes) {
    frg::EstimatorConfig cfg;
    cfg.mode = frg::EstimatorMode::Quadrature;
    cfg.nodes_per_dim = nodes;
    return cfg;
}

inline frg::EstimatorConfig mc_cfg(std::int64_t samples, std::uint64_t seed) {
    frg::EstimatorConfig cfg;
    cfg.mode = frg::EstimatorMode::MonteCarlo;
    cfg.samples = samples;
    cfg.seed = seed;
    return cfg;
}

}  // namespace testutil
