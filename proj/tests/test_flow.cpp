#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "frg/errors.hpp"
#include "frg/flow.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace frg;
using testutil::mat;
using testutil::mc_cfg;
using testutil::quad_cfg;
using testutil::vec;

namespace {

std::vector<double> linear_grid(double lo, double hi, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = lo + (hi - lo) * i / (n - 1);
    return g;
}

}  // namespace

TEST_CASE("flow grid validation") {
    FlowGrid grid;
    grid.y = vec({1.0});

    grid.k_values = {1.0};
    CHECK_THROWS_AS(grid.validate(), ConfigError);
    grid.k_values = {0.0, 1.0};
    CHECK_THROWS_AS(grid.validate(), ConfigError);
    grid.k_values = {1.0, 0.5};
    CHECK_THROWS_AS(grid.validate(), ConfigError);
    grid.k_values = {0.5, 1.0};
    CHECK_NOTHROW(grid.validate());

    grid.fd_step = 0.3;  // >= half the minimum gap
    CHECK_THROWS_AS(grid.validate(), ConfigError);
    grid.fd_step = 0.6;  // would reach below k = 0 at the first point
    CHECK_THROWS_AS(grid.validate(), ConfigError);
    grid.fd_step = 0.0;
    grid.y = Eigen::VectorXd();
    CHECK_THROWS_AS(grid.validate(), ConfigError);

    // Automatic step: 1e-4 (1 + k).
    CHECK(grid.step_at(1.5) == doctest::Approx(2.5e-4).epsilon(1e-12));
    grid.fd_step = 1e-3;
    CHECK(grid.step_at(1.5) == 1e-3);
}

TEST_CASE("flow right-hand side matches the closed-form derivative") {
    oracle::Gaussian ref = oracle::Gaussian::linear(vec({0.3}), mat(1, {0.8}),
                                                    mat(1, {1.2}), vec({0.5}));
    Expectations engine(MeasureModel::gaussian(ref.m, ref.C), quad_cfg(96));
    RegulatorFamily fam(ref.R0, Schedule::Linear, ref.w);
    ConjugateSolver solver(engine, fam);

    Eigen::VectorXd y = vec({1.0});
    for (double k : {0.5, 1.0, 1.8}) {
        WetterichRhs rhs = wetterich_rhs(solver, k, y);
        CHECK(rhs.tilt.converged);
        CHECK(rhs.rhs ==
              doctest::Approx(ref.gamma_k_derivative(k, y)).epsilon(1e-7));
        CHECK(rhs.rhs == doctest::Approx(rhs.trace_term - rhs.subtract_term)
                             .epsilon(1e-12));

        // Both terms have closed forms: r ṙ tr(R0 Σ_k^tilt) with the tilted
        // covariance equal to Σ_k, and r ṙ [tr(R0 Σ_k) + (m_k−w)ᵀR0(m_k−w)].
        const double scale = ref.r(k) * ref.r_dot(k);
        const double trace_ref = scale * (ref.R0 * ref.cov_k(k)).trace();
        Eigen::VectorXd d = ref.mean_k(k) - ref.w;
        const double subtract_ref =
            scale * ((ref.R0 * ref.cov_k(k)).trace() + d.dot(ref.R0 * d));
        CHECK(rhs.trace_term == doctest::Approx(trace_ref).epsilon(1e-8));
        CHECK(rhs.subtract_term == doctest::Approx(subtract_ref).epsilon(1e-8));
    }
}

TEST_CASE("flow right-hand side matches the closed form in two dimensions") {
    Eigen::VectorXd m = vec({0.2, -0.4});
    Eigen::MatrixXd C = mat(2, {1.0, 0.3, 0.3, 0.7});
    Eigen::MatrixXd R0 = mat(2, {1.0, 0.2, 0.2, 0.8});
    Eigen::VectorXd w = vec({0.5, 0.1});
    oracle::Gaussian ref = oracle::Gaussian::linear(m, C, R0, w);

    Expectations engine(MeasureModel::gaussian(m, C), quad_cfg(48));
    RegulatorFamily fam(R0, Schedule::Linear, w);
    ConjugateSolver solver(engine, fam);

    Eigen::VectorXd y = vec({0.7, -0.1});
    const double k = 0.8;
    WetterichRhs rhs = wetterich_rhs(solver, k, y);
    CHECK(rhs.rhs == doctest::Approx(ref.gamma_k_derivative(k, y)).epsilon(1e-6));
}

TEST_CASE("integrated flow over a grid closes on the endpoint action") {
    oracle::Gaussian ref = oracle::Gaussian::linear(vec({0.3}), mat(1, {0.8}),
                                                    mat(1, {1.2}), vec({0.5}));
    Expectations engine(MeasureModel::gaussian(ref.m, ref.C), quad_cfg(96));
    RegulatorFamily fam(ref.R0, Schedule::Linear, ref.w);
    ConjugateSolver solver(engine, fam);

    FlowGrid grid;
    grid.k_values = linear_grid(0.3, 2.0, 40);
    grid.y = vec({1.0});
    FlowResult fr = run_flow(solver, grid);
    CHECK(!fr.aborted);
    REQUIRE(fr.records.size() == 40);

    for (const FlowRecord& rec : fr.records) {
        CHECK(rec.tilt_converged);
        CHECK(rec.residual <= 1e-6);
        CHECK(rec.gamma ==
              doctest::Approx(ref.gamma(rec.k, grid.y)).epsilon(1e-8));
    }

    IntegratedFlowCheck ic = integrated_flow_check(fr.records);
    // Trapezoid error on a smooth integrand over 40 points.
    CHECK(ic.gap < 5e-4);
    CHECK(ic.gamma_end_direct ==
          doctest::Approx(ref.gamma(2.0, grid.y)).epsilon(1e-8));

    CHECK_THROWS_AS(integrated_flow_check({fr.records[0], fr.records[1]}),
                    PreconditionError);
}

TEST_CASE("flow aborts cleanly when a point leaves the numeric domain") {
    // 12 quadrature nodes cap the reachable means; a far target turns the
    // mean-matching problem infeasible and the sweep must stop with partial
    // records rather than throw.
    MeasureModel model = MeasureModel::gaussian(vec({0.0}), mat(1, {1.0}));
    Expectations engine(model, quad_cfg(12));
    RegulatorFamily fam(mat(1, {1.0}), Schedule::Quadratic, vec({0.0}));
    ConjugateSolver solver(engine, fam);

    FlowGrid grid;
    grid.k_values = linear_grid(0.5, 3.0, 6);
    grid.y = vec({20.0});
    FlowResult fr = run_flow(solver, grid);
    CHECK(fr.aborted);
    CHECK(fr.records.size() < grid.k_values.size());
    CHECK(fr.failed_k > 0.0);
    CHECK(!fr.message.empty());
}

TEST_CASE("propagator experiment matches the gaussian identity") {
    oracle::Gaussian ref = oracle::Gaussian::linear(vec({0.3}), mat(1, {0.8}),
                                                    mat(1, {1.2}), vec({0.5}));
    Expectations engine(MeasureModel::gaussian(ref.m, ref.C), quad_cfg(96));
    RegulatorFamily fam(ref.R0, Schedule::Linear, ref.w);
    ConjugateSolver solver(engine, fam);

    const double k = 1.1;
    PropagatorExperiment pe =
        propagator_identity_experiment(solver, k, vec({0.9}));
    CHECK(pe.invertible);
    // For a gaussian model Hess Γ + R_k = P_k exactly, so the inverse is the
    // tilted covariance.
    CHECK(pe.deviation < 1e-8);
    CHECK(pe.cov_tilted(0, 0) == doctest::Approx(ref.cov_k(k)(0, 0)).epsilon(1e-8));
    CHECK(pe.condition < 1e6);

    CHECK_THROWS_AS(propagator_identity_experiment(solver, k, vec({0.9}), 0.0),
                    PreconditionError);

    Expectations mc(MeasureModel::gaussian(ref.m, ref.C), mc_cfg(10000, 1));
    ConjugateSolver mc_solver(mc, fam);
    CHECK_THROWS_AS(propagator_identity_experiment(mc_solver, k, vec({0.9})),
                    ConfigError);
}

TEST_CASE("warm-started sweeps agree with cold solves") {
    oracle::Gaussian ref = oracle::Gaussian::linear(vec({0.3}), mat(1, {0.8}),
                                                    mat(1, {1.2}), vec({0.5}));
    Expectations engine(MeasureModel::gaussian(ref.m, ref.C), quad_cfg(96));
    RegulatorFamily fam(ref.R0, Schedule::Linear, ref.w);
    ConjugateSolver solver(engine, fam);

    FlowGrid grid;
    grid.k_values = linear_grid(0.4, 1.6, 7);
    grid.y = vec({0.9});
    FlowResult sweep = run_flow(solver, grid);
    REQUIRE(!sweep.aborted);
    for (const FlowRecord& rec : sweep.records) {
        WetterichRhs cold = wetterich_rhs(solver, rec.k, grid.y);
        CHECK(rec.rhs == doctest::Approx(cold.rhs).epsilon(1e-10));
        CHECK(rec.gamma ==
              doctest::Approx(cold.tilt.phi.dot(grid.y) - cold.tilt.log_z -
                              0.5 * solver.family().q(rec.k, grid.y))
                  .epsilon(1e-10));
    }
}
