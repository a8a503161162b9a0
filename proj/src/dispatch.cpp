#include "frg/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "frg/check.hpp"
#include "frg/config.hpp"
#include "frg/conjugate.hpp"
#include "frg/errors.hpp"
#include "frg/flow.hpp"
#include "frg/onsager.hpp"
#include "frg/report.hpp"
#include "frg/svg.hpp"

namespace frg {

namespace {

Json vector_json(const Eigen::VectorXd& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd point_from(const std::vector<double>& v, int dim, const char* flag) {
    if (static_cast<int>(v.size()) != dim)
        throw ConfigError(std::string(flag) + " has " + std::to_string(v.size()) +
                          " components; the model dimension is " + std::to_string(dim));
    return Eigen::Map<const Eigen::VectorXd>(v.data(), dim);
}

std::vector<double> linear_grid(double lo, double hi, int points) {
    std::vector<double> g(points);
    for (int i = 0; i < points; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
    return g;
}

std::vector<double> geometric_grid(double lo, double hi, int points) {
    std::vector<double> g(points);
    double ratio = std::pow(hi / lo, 1.0 / (points - 1));
    double v = lo;
    for (int i = 0; i < points; ++i) {
        g[i] = (i == points - 1) ? hi : v;
        v *= ratio;
    }
    return g;
}

std::optional<ReportWriter> make_report(const std::string& path, const std::string& command,
                                        const RunConfig& cfg) {
    if (path.empty()) return std::nullopt;
    return std::make_optional<ReportWriter>(path, command, cfg.config_hash,
                                            cfg.estimator.seed);
}

int run_conjugate(const std::string& config_path, double k,
                  const std::vector<double>& y_flags, const std::string& report_path,
                  std::ostream& out) {
    RunConfig cfg = load_run_config(config_path);
    Eigen::VectorXd y = point_from(y_flags, cfg.model.dim(), "--y");
    if (!(k > 0)) throw ConfigError("--k must be positive");

    Expectations engine(cfg.model, cfg.estimator);
    ConjugateSolver solver(engine, cfg.family);
    ConjugateResult res = solver.conjugate(k, y);

    Json rec{{"record", "conjugate"},
             {"k", k},
             {"y", vector_json(y)},
             {"vstar", res.value},
             {"gamma", res.gamma_value},
             {"phi", vector_json(res.tilt.phi)},
             {"iterations", res.tilt.iterations},
             {"converged", res.tilt.converged}};
    out << rec.dump() << "\n";
    if (auto w = make_report(report_path, "conjugate", cfg)) w->record(rec);
    return 0;
}

int run_flow_cmd(const std::string& config_path, const std::vector<double>& y_flags,
                 double kmin, double kmax, int points, const std::string& csv_path,
                 const std::string& svg_path, const std::string& report_path,
                 std::ostream& out) {
    if (kmax <= kmin) throw ConfigError("kmax must exceed kmin");
    if (!(kmin > 0)) throw ConfigError("--kmin must be positive");
    if (points < 2) throw ConfigError("--points must be at least 2");

    RunConfig cfg = load_run_config(config_path);
    Eigen::VectorXd y = point_from(y_flags, cfg.model.dim(), "--y");

    Expectations engine(cfg.model, cfg.estimator);
    ConjugateSolver solver(engine, cfg.family);
    FlowGrid grid;
    grid.k_values = linear_grid(kmin, kmax, points);
    grid.y = y;
    FlowResult fr = run_flow(solver, grid);

    if (!csv_path.empty()) write_flow_csv(csv_path, fr.records);

    double max_residual = 0.0;
    for (const FlowRecord& r : fr.records) max_residual = std::max(max_residual, r.residual);

    auto writer = make_report(report_path, "flow", cfg);
    for (const FlowRecord& r : fr.records) {
        Json rec{{"record", "flow"},        {"k", r.k},
                 {"gamma", r.gamma},        {"lhs", r.lhs_fd},
                 {"rhs", r.rhs},            {"residual", r.residual},
                 {"trace", r.trace_term},   {"subtract", r.subtract_term},
                 {"iterations", r.tilt_iterations}, {"converged", r.tilt_converged}};
        if (writer) writer->record(rec);
    }

    Json summary{{"record", "flowSummary"},
                 {"points", fr.records.size()},
                 {"maxResidual", max_residual},
                 {"aborted", fr.aborted}};
    if (fr.aborted) {
        summary["failedK"] = fr.failed_k;
        summary["message"] = fr.message;
    }
    out << summary.dump() << "\n";
    if (writer) writer->record(summary);

    if (!svg_path.empty() && !fr.records.empty()) {
        SvgSeries gamma{"gamma", {}, {}}, residual{"residual", {}, {}};
        for (const FlowRecord& r : fr.records) {
            gamma.x.push_back(r.k);
            gamma.y.push_back(r.gamma);
            residual.x.push_back(r.k);
            residual.y.push_back(r.residual);
        }
        write_svg(svg_path, {gamma, residual},
                  {"flow of the effective action", "k", "value"});
    }
    return fr.aborted ? 1 : 0;
}

int run_om(const std::string& config_path, const std::vector<double>& a_flags,
           const std::vector<double>& b_flags, const std::vector<double>& radii,
           int fit_window, const std::string& svg_path, const std::string& report_path,
           std::ostream& out) {
    if (radii.empty()) throw ConfigError("--radii must be nonempty");
    RunConfig cfg = load_run_config(config_path);
    Eigen::VectorXd a = point_from(a_flags, cfg.model.dim(), "--a");
    Eigen::VectorXd b = point_from(b_flags, cfg.model.dim(), "--b");

    Expectations engine(cfg.model, cfg.estimator);
    OMEstimate om = om_estimate(engine, cfg.family.r0(), a, b, radii, fit_window);

    auto writer = make_report(report_path, "om", cfg);
    for (std::size_t i = 0; i < om.radii.size(); ++i) {
        Json rec{{"record", "omRadius"},
                 {"s", om.radii[i]},
                 {"logRatio", om.log_ratios[i]},
                 {"defined", static_cast<bool>(om.defined[i])},
                 {"error", om.ratio_errors[i]}};
        out << rec.dump() << "\n";
        if (writer) writer->record(rec);
    }
    Json summary{{"record", "omSummary"},
                 {"a", vector_json(om.a)},
                 {"b", vector_json(om.b)},
                 {"omValue", om.extrapolated},
                 {"stdError", om.extrapolation_std_error},
                 {"fitResidual", om.fit_residual},
                 {"fitPoints", om.fit_points}};
    out << summary.dump() << "\n";
    if (writer) writer->record(summary);

    if (!svg_path.empty()) {
        SvgSeries data{"logRatio", {}, {}};
        double s2max = 0.0;
        for (std::size_t i = 0; i < om.radii.size(); ++i) {
            if (!om.defined[i]) continue;
            double s2 = om.radii[i] * om.radii[i];
            data.x.push_back(s2);
            data.y.push_back(om.log_ratios[i]);
            s2max = std::max(s2max, s2);
        }
        SvgSeries fit{"fit", {0.0, s2max},
                      {om.extrapolated, om.extrapolated + om.fit_slope * s2max}};
        write_svg(svg_path, {data, fit},
                  {"small-ball log ratio extrapolation", "s^2", "logRatio"});
    }
    return 0;
}

int run_boundary(const std::string& config_path, const std::vector<double>& y_flags,
                 double kmin, double kmax, int points, std::vector<double> radii,
                 const std::string& svg_path, const std::string& report_path,
                 std::ostream& out) {
    if (kmax <= kmin) throw ConfigError("kmax must exceed kmin");
    if (!(kmin > 0)) throw ConfigError("--kmin must be positive");
    if (points < 3) throw ConfigError("--points must be at least 3");

    RunConfig cfg = load_run_config(config_path);
    Eigen::VectorXd y = point_from(y_flags, cfg.model.dim(), "--y");
    if (radii.empty()) radii = {0.9, 0.75, 0.6, 0.5, 0.4, 0.32, 0.25, 0.2};

    Expectations engine(cfg.model, cfg.estimator);
    ConjugateSolver solver(engine, cfg.family);
    BoundaryCheck bc =
        boundary_check(solver, y, geometric_grid(kmin, kmax, points), radii);

    Json rec{{"record", "boundary"},
             {"y", vector_json(y)},
             {"gammaLimit", bc.gamma_limit},
             {"omValue", bc.om_value},
             {"gap", bc.gap},
             {"kGrid", bc.k_grid},
             {"gammaValues", bc.gamma_values},
             {"gammaFitResidual", bc.gamma_fit_residual},
             {"admissibilityRatios", bc.admissibility_ratios},
             {"diagonalLogRatios", bc.diagonal_log_ratios},
             {"omStdError", bc.om.extrapolation_std_error}};
    out << rec.dump() << "\n";
    if (auto writer = make_report(report_path, "boundary", cfg)) writer->record(rec);

    if (!svg_path.empty()) {
        SvgSeries gamma{"gamma", bc.k_grid, bc.gamma_values};
        SvgSeries om_line{"omValue",
                          {bc.k_grid.front(), bc.k_grid.back()},
                          {bc.om_value, bc.om_value}};
        write_svg(svg_path, {gamma, om_line},
                  {"action limit vs small-ball value", "k", "gamma"});
    }
    return 0;
}

int run_check(const std::string& config_path, std::ostream& out) {
    // The config is loaded to validate it (and exercise the full ingestion
    // path); the suite itself pins its own models and tolerances.
    RunConfig cfg = load_run_config(config_path);
    out << "config ok: hash " << Json(cfg.config_hash).dump() << ", dimension "
        << cfg.model.dim() << "\n";
    std::vector<CriterionResult> results = run_acceptance_suite(out);
    return all_passed(results) ? 0 : 1;
}

}  // namespace

int dispatch(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"flow, conjugate and boundary diagnostics for regulated measures"};
    app.require_subcommand(1);

    std::string config_path, report_path, svg_path, csv_path = "flow.csv";
    std::vector<double> y_flags, a_flags, b_flags, radii;
    double k = 1.0, kmin = 1.0, kmax = 8.0;
    int points = 16, fit_window = 4;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration file (TOML)")
            ->required();
    };

    CLI::App* conj = app.add_subcommand("conjugate", "conjugate value at one (k, y)");
    add_config(conj);
    conj->add_option("--k", k, "scale parameter")->required();
    conj->add_option("--y", y_flags, "target point components")->required()->delimiter(',');
    conj->add_option("--report", report_path, "append JSON records to this file");

    CLI::App* flow = app.add_subcommand("flow", "flow-equation sweep over a k grid");
    add_config(flow);
    flow->add_option("--y", y_flags, "evaluation point components")->required()->delimiter(',');
    flow->add_option("--kmin", kmin, "grid start")->required();
    flow->add_option("--kmax", kmax, "grid end")->required();
    flow->add_option("--points", points, "grid size")->required();
    flow->add_option("--csv", csv_path, "CSV output path (default flow.csv)");
    flow->add_option("--svg", svg_path, "optional SVG plot path");
    flow->add_option("--report", report_path, "append JSON records to this file");

    CLI::App* om = app.add_subcommand("om", "small-ball log-ratio extrapolation");
    add_config(om);
    om->add_option("--a", a_flags, "first center components")->required()->delimiter(',');
    om->add_option("--b", b_flags, "second center components")->required()->delimiter(',');
    om->add_option("--radii", radii, "strictly decreasing ball radii")
        ->required()
        ->delimiter(',');
    om->add_option("--fit-window", fit_window, "radii used in the extrapolation fit");
    om->add_option("--svg", svg_path, "optional SVG plot path");
    om->add_option("--report", report_path, "append JSON records to this file");

    CLI::App* boundary =
        app.add_subcommand("boundary", "large-k action limit vs small-ball value");
    add_config(boundary);
    boundary->add_option("--y", y_flags, "evaluation point components")
        ->required()
        ->delimiter(',');
    boundary->add_option("--kmin", kmin, "grid start (default 1)");
    boundary->add_option("--kmax", kmax, "grid end")->required();
    boundary->add_option("--points", points, "grid size")->required();
    boundary->add_option("--radii", radii, "ball radii (default built-in grid)")
        ->delimiter(',');
    boundary->add_option("--svg", svg_path, "optional SVG plot path");
    boundary->add_option("--report", report_path, "append JSON records to this file");

    CLI::App* check = app.add_subcommand("check", "run the full invariant suite");
    add_config(check);

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (conj->parsed()) return run_conjugate(config_path, k, y_flags, report_path, out);
        if (flow->parsed())
            return run_flow_cmd(config_path, y_flags, kmin, kmax, points, csv_path,
                                svg_path, report_path, out);
        if (om->parsed())
            return run_om(config_path, a_flags, b_flags, radii, fit_window, svg_path,
                          report_path, out);
        if (boundary->parsed())
            return run_boundary(config_path, y_flags, kmin, kmax, points, radii, svg_path,
                                report_path, out);
        if (check->parsed()) return run_check(config_path, out);
        err << "error: no subcommand selected\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(std::move(args), out, err);
}

}  // namespace frg
