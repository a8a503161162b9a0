#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "frg/config.hpp"
#include "frg/dispatch.hpp"
#include "frg/errors.hpp"
#include "frg/report.hpp"
#include "frg/svg.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace frg;

namespace {

// Runs f, which must throw E, and returns the exception message.
template <typename E>
std::string thrown_message(const std::function<void()>& f) {
    try {
        f();
    } catch (const E& e) {
        return e.what();
    }
    return "";
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

const char* kGoldenConfig = R"(schema_version = 1

[measure]
kind = "gaussian"
mean = [0.25, -0.5]
covariance = [
  1.0, 0.2,  # row one
  0.2, 0.8,
]

[regulator]
R0 = [1.0, 0.0, 0.0, 2.0]
schedule = "quadratic"
w = [0.1, 0.3]

[estimator]
mode = "monte_carlo"
samples = 5000
seed = 7
)";

}  // namespace

TEST_CASE("config parser reads scalars, strings, booleans and nested arrays") {
    const std::string text =
        "top = 3\n"
        "[alpha]\n"
        "name = \"he said \\\"hi\\\"\\n\"  # trailing comment\n"
        "count = -42\n"
        "rate = -3.5e-2\n"
        "on = true\n"
        "off = false\n"
        "grid = [1, 2.5, [3, 4]]\n"
        "note = \"a # b\"\n";
    ConfigTable t = parse_config_text(text);

    REQUIRE(t.count("top") == 1);
    CHECK(t.at("top").is_integer);
    CHECK(t.at("top").int_val == 3);
    CHECK(t.at("top").line == 1);

    CHECK(t.at("alpha.name").kind == ConfigValue::Kind::String);
    CHECK(t.at("alpha.name").str == "he said \"hi\"\n");
    CHECK(t.at("alpha.count").int_val == -42);
    CHECK(t.at("alpha.count").line == 4);
    CHECK(t.at("alpha.rate").kind == ConfigValue::Kind::Number);
    CHECK(!t.at("alpha.rate").is_integer);
    CHECK(t.at("alpha.rate").num == doctest::Approx(-0.035));
    CHECK(t.at("alpha.on").boolean);
    CHECK(!t.at("alpha.off").boolean);
    CHECK(t.at("alpha.note").str == "a # b");

    const ConfigValue& grid = t.at("alpha.grid");
    REQUIRE(grid.kind == ConfigValue::Kind::Array);
    REQUIRE(grid.array.size() == 3);
    CHECK(grid.array[0].int_val == 1);
    CHECK(grid.array[1].num == 2.5);
    REQUIRE(grid.array[2].kind == ConfigValue::Kind::Array);
    CHECK(grid.array[2].array[1].int_val == 4);
}

TEST_CASE("config parser accepts multi-line arrays with comments") {
    ConfigTable t = parse_config_text(
        "m = [\n"
        "  1, 2,  # first row\n"
        "  3, 4,\n"
        "]\n");
    REQUIRE(t.at("m").array.size() == 4);
    CHECK(t.at("m").array[3].int_val == 4);
    CHECK(t.at("m").line == 1);
}

TEST_CASE("config parser reports syntax errors with line numbers") {
    auto msg = [](const std::string& text) {
        return thrown_message<ConfigError>([&] { parse_config_text(text); });
    };
    CHECK(contains(msg("x =\n"), "config line 1: missing value"));
    CHECK(contains(msg("a = 1\n\nx = 1 2\n"), "config line 3: trailing characters"));
    CHECK(contains(msg("[bad\n"), "malformed section header"));
    CHECK(contains(msg("[]\n"), "empty section name"));
    CHECK(contains(msg("[a.b]\n"), "invalid section name"));
    CHECK(contains(msg("x 1\n"), "expected 'key = value'"));
    CHECK(contains(msg("= 1\n"), "empty key"));
    CHECK(contains(msg("k!ey = 1\n"), "invalid key"));
    CHECK(contains(msg("a = 1\na = 2\n"), "config line 2: duplicate key 'a'"));
    CHECK(contains(msg("[s]\na = 1\na = 2\n"), "duplicate key 'a' in [s]"));
    CHECK(contains(msg("[s]\n[s]\n"), "duplicate section [s]"));
    CHECK(contains(msg("x = [1, 2\n"), "unterminated array"));
    CHECK(contains(msg("x = \"abc\n"), "unterminated string"));
    CHECK(contains(msg("x = \"a\\qb\"\n"), "unsupported escape"));
    CHECK(contains(msg("x = 12abc\n"), "invalid number '12abc'"));
    CHECK(contains(msg("x = truely\n"), "invalid number 'truely'"));
    CHECK(contains(msg("x = nan\n"), "invalid number 'nan'"));
}

TEST_CASE("run config parses the full file and applies defaults") {
    RunConfig cfg = parse_run_config(kGoldenConfig);
    CHECK(cfg.schema_version == 1);
    CHECK(cfg.model.dim() == 2);
    CHECK(cfg.model.kind() == MeasureKind::Gaussian);
    CHECK(cfg.model.mean()(0) == 0.25);
    CHECK(cfg.model.covariance()(0, 1) == 0.2);
    CHECK(cfg.family.schedule() == Schedule::Quadratic);
    CHECK(cfg.family.r0()(1, 1) == 2.0);
    CHECK(cfg.family.w()(1) == 0.3);
    CHECK(cfg.estimator.mode == EstimatorMode::MonteCarlo);
    CHECK(cfg.estimator.samples == 5000);
    CHECK(cfg.estimator.seed == 7);

    // Unset estimator keys keep their defaults.
    EstimatorConfig defaults;
    CHECK(cfg.estimator.nodes_per_dim == defaults.nodes_per_dim);
    CHECK(cfg.estimator.streams == defaults.streams);
    CHECK(cfg.estimator.dim_switch == defaults.dim_switch);

    // A fully-default estimator section.
    RunConfig minimal = parse_run_config(
        "[measure]\nkind = \"gaussian\"\nmean = [0.0]\ncovariance = [1.0]\n"
        "[regulator]\nR0 = [1.0]\nschedule = \"linear\"\nw = [0.0]\n");
    CHECK(minimal.estimator.mode == defaults.mode);
    CHECK(minimal.estimator.samples == defaults.samples);
    CHECK(minimal.estimator.seed == defaults.seed);
}

TEST_CASE("run config rejects unknown keys and inconsistent sections") {
    auto msg = [](const std::string& text) {
        return thrown_message<ConfigError>([&] { parse_run_config(text); });
    };
    const std::string base =
        "[measure]\nkind = \"gaussian\"\nmean = [0.0]\ncovariance = [1.0]\n"
        "[regulator]\nR0 = [1.0]\nschedule = \"linear\"\nw = [0.0]\n";

    CHECK(contains(msg(base + "[estimator]\ntypo = 1\n"), "unknown key 'typo' in [estimator]"));
    CHECK(contains(msg(base + "bogus = 2\n"), "unknown key 'bogus'"));
    CHECK(contains(msg("schema_version = 2\n" + base), "unsupported schema_version 2"));
    CHECK(contains(msg(base + "[estimator]\nseed = -4\n"), "'seed' in [estimator]"));
    CHECK(contains(msg(base + "[estimator]\nseed = 1.5\n"),
                   "expected an integer for 'seed' in [estimator]"));
    CHECK(contains(msg(base + "[estimator]\nmode = \"exact\"\n"),
                   "unknown estimator mode \"exact\""));

    std::string bad_kind = base;
    bad_kind.replace(bad_kind.find("gaussian"), 8, "lebesgue");
    CHECK(contains(msg(bad_kind), "unknown measure kind"));

    std::string bad_sched = base;
    bad_sched.replace(bad_sched.find("linear"), 6, "cubic");
    CHECK_THROWS_AS(parse_run_config(bad_sched), ConfigError);

    // A perturbation is only meaningful for the perturbed kind, and required there.
    CHECK(contains(msg(base + "[extra]\nx = 1\n"), "unknown key 'x' in [extra]"));
    std::string pert = base;
    pert.insert(pert.find("[regulator]"), "perturbation = [[0.1]]\n");
    CHECK(contains(msg(pert), "requires kind"));
    std::string missing_pert = base;
    missing_pert.replace(missing_pert.find("\"gaussian\""), 10, "\"perturbed_gaussian\"");
    CHECK(contains(msg(missing_pert), "missing required key 'perturbation'"));

    CHECK(contains(
        msg("[measure]\nkind = \"gaussian\"\nmean = [0.0, 1.0]\ncovariance = [1.0]\n"
            "[regulator]\nR0 = [1.0, 0.0, 0.0, 1.0]\nschedule = \"linear\"\nw = [0.0, 0.0]\n"),
        "'covariance' in [measure] has 1 entries; expected 2x2 = 4"));

    CHECK(contains(msg("[measure]\nkind = \"gaussian\"\nmean = []\ncovariance = []\n"
                       "[regulator]\nR0 = []\nschedule = \"linear\"\nw = []\n"),
                   "must be nonempty"));

    // Dimension mismatches between sections are configuration errors too.
    CHECK(contains(msg("[measure]\nkind = \"gaussian\"\nmean = [0.0]\ncovariance = [1.0]\n"
                       "[regulator]\nR0 = [1.0]\nschedule = \"linear\"\nw = [0.0, 1.0]\n"),
                   "R0 must be 2x2"));
}

TEST_CASE("config echo round-trips and feeds the stable hash") {
    RunConfig cfg = parse_run_config(kGoldenConfig);
    const std::string echo = echo_config(cfg);
    RunConfig again = parse_run_config(echo);
    CHECK(echo_config(again) == echo);
    CHECK(again.config_hash == cfg.config_hash);
    CHECK(cfg.config_hash == fnv1a64(echo));

    // Any field change moves the hash.
    std::string reseeded(kGoldenConfig);
    reseeded.replace(reseeded.find("seed = 7"), 8, "seed = 8");
    CHECK(parse_run_config(reseeded).config_hash != cfg.config_hash);

    // Perturbed models round-trip their coefficient table too.
    RunConfig pert = parse_run_config(
        "[measure]\nkind = \"perturbed_gaussian\"\nmean = [0.0]\ncovariance = [1.0]\n"
        "perturbation = [[0.1, 0.05]]\n"
        "[regulator]\nR0 = [1.0]\nschedule = \"linear\"\nw = [0.0]\n");
    const std::string pecho = echo_config(pert);
    CHECK(contains(pecho, "perturbation = [[0.1, 0.05]]"));
    CHECK(echo_config(parse_run_config(pecho)) == pecho);
}

TEST_CASE("fnv1a64 matches the reference test vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("number text is shortest-round-trip decimal") {
    CHECK(number_text(2.5) == "2.5");
    CHECK(number_text(0.0) == "0");
    CHECK(number_text(-0.25) == "-0.25");
    for (double x : {0.1, 1.0 / 3.0, 1e-300, 12345.0, -7.25e88}) {
        CHECK(std::stod(number_text(x)) == x);
    }
}

TEST_CASE("flow csv text renders the fixed golden layout") {
    CHECK(flow_csv_text({}) == "k,gamma,lhs,rhs,residual,trace,subtract\n");

    FlowRecord a;
    a.k = 0.5;
    a.gamma = -0.25;
    a.lhs_fd = 1.5;
    a.rhs = 1.5;
    a.residual = 0.0;
    a.trace_term = 2.0;
    a.subtract_term = 0.5;
    FlowRecord b = a;
    b.k = 0.75;
    b.gamma = -0.125;
    CHECK(flow_csv_text({a, b}) ==
          "k,gamma,lhs,rhs,residual,trace,subtract\n"
          "0.5,-0.25,1.5,1.5,0,2,0.5\n"
          "0.75,-0.125,1.5,1.5,0,2,0.5\n");
}

TEST_CASE("report writer appends a header line and json records") {
    const std::filesystem::path path = temp_path("frg_test_report.jsonl");
    std::filesystem::remove(path);
    {
        ReportWriter w(path.string(), "flow", 0xdeadbeefULL, 42);
        w.record(Json{{"record", "x"}, {"v", 1}});
    }
    {
        ReportWriter w(path.string(), "flow", 0xdeadbeefULL, 42);
        w.record(Json{{"record", "y"}});
    }
    std::istringstream lines(read_file(path));
    std::string line;
    std::vector<std::string> all;
    while (std::getline(lines, line)) all.push_back(line);
    REQUIRE(all.size() == 4);  // append mode: two headers, two records

    Json header = Json::parse(all[0]);
    CHECK(header["record"] == "header");
    CHECK(header["command"] == "flow");
    CHECK(header["configHash"] == "0x00000000deadbeef");
    CHECK(header["provenance"]["seed"] == 42);
    CHECK(!header["provenance"]["timestamp"].get<std::string>().empty());
    CHECK(all[1] == "{\"record\":\"x\",\"v\":1}");
    CHECK(Json::parse(all[3])["record"] == "y");
    std::filesystem::remove(path);

    CHECK_THROWS_AS(ReportWriter("/nonexistent_dir_frg/x.jsonl", "flow", 1, 1), IoError);
}

TEST_CASE("svg renderer is deterministic and validates its input") {
    SvgSeries a{"alpha<&>", {0.0, 1.0, 2.0}, {0.5, 1.5, 1.0}};
    SvgSeries b{"dot", {1.0}, {0.75}};
    SvgOptions opt;
    opt.title = "x<y";
    opt.x_label = "time";
    opt.y_label = "value";

    const std::string svg = render_line_chart({a, b}, opt);
    CHECK(svg == render_line_chart({a, b}, opt));
    std::size_t polylines = 0;
    for (std::size_t p = svg.find("<polyline"); p != std::string::npos;
         p = svg.find("<polyline", p + 1))
        ++polylines;
    CHECK(polylines == 2);
    CHECK(contains(svg, "<circle"));  // single-point series gets a marker
    CHECK(contains(svg, "alpha&lt;&amp;&gt;"));
    CHECK(contains(svg, "x&lt;y"));
    CHECK(!contains(svg, "alpha<&>"));

    CHECK_THROWS_AS(render_line_chart({}, opt), PreconditionError);
    CHECK_THROWS_AS(render_line_chart({SvgSeries{"e", {}, {}}}, opt), PreconditionError);
    CHECK(contains(thrown_message<PreconditionError>([&] {
                       render_line_chart({SvgSeries{"m", {0.0, 1.0, 2.0}, {0.0, 1.0}}}, opt);
                   }),
                   "3 x values but 2"));
    CHECK_THROWS_AS(
        render_line_chart({SvgSeries{"n", {0.0, 1.0}, {0.0, std::nan("")}}}, opt),
        PreconditionError);

    const std::filesystem::path path = temp_path("frg_test_chart.svg");
    write_svg(path.string(), {a, b}, opt);
    CHECK(read_file(path) == svg);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(write_svg("/nonexistent_dir_frg/c.svg", {a, b}, opt), IoError);
}

TEST_CASE("dispatch maps outcomes to process exit codes") {
    const std::filesystem::path quad_cfg = temp_path("frg_test_quad.toml");
    write_file(quad_cfg,
               "[measure]\nkind = \"gaussian\"\nmean = [0.0]\ncovariance = [1.0]\n"
               "[regulator]\nR0 = [1.0]\nschedule = \"linear\"\nw = [0.0]\n"
               "[estimator]\nmode = \"quadrature\"\nnodes = 64\n");
    const std::filesystem::path mc_cfg = temp_path("frg_test_mc.toml");
    write_file(mc_cfg,
               "[measure]\nkind = \"gaussian\"\nmean = [0.0]\ncovariance = [1.0]\n"
               "[regulator]\nR0 = [1.0]\nschedule = \"linear\"\nw = [0.0]\n"
               "[estimator]\nmode = \"monte_carlo\"\nsamples = 40000\nseed = 11\n");

    auto run = [](std::vector<std::string> args, std::string* out_text = nullptr,
                  std::string* err_text = nullptr) {
        std::ostringstream out, err;
        int code = dispatch(std::move(args), out, err);
        if (out_text) *out_text = out.str();
        if (err_text) *err_text = err.str();
        return code;
    };

    std::string out, err;
    CHECK(run({"--help"}, &out) == 0);
    CHECK(contains(out, "conjugate"));
    CHECK(contains(out, "boundary"));

    CHECK(run({}, nullptr, &err) == 2);           // a subcommand is required
    CHECK(run({"fly"}, nullptr, &err) == 2);      // unknown subcommand
    CHECK(run({"conjugate", "--config", quad_cfg.string()}, nullptr, &err) == 2);

    CHECK(run({"conjugate", "--config", "/no/such/file.toml", "--k", "1", "--y", "0"},
              nullptr, &err) == 2);
    CHECK(contains(err, "config file not found"));

    // A successful conjugate evaluation prints one JSON record.
    CHECK(run({"conjugate", "--config", quad_cfg.string(), "--k", "1", "--y", "0.5"},
              &out) == 0);
    Json rec = Json::parse(out.substr(0, out.find('\n')));
    CHECK(rec["record"] == "conjugate");
    CHECK(rec["converged"] == true);
    oracle::Gaussian ref = oracle::Gaussian::linear(
        testutil::vec({0.0}), testutil::mat(1, {1.0}), testutil::mat(1, {1.0}),
        testutil::vec({0.0}));
    CHECK(rec["vstar"].get<double>() ==
          doctest::Approx(ref.vstar(1.0, testutil::vec({0.5}))).epsilon(1e-9));
    CHECK(rec["gamma"].get<double>() ==
          doctest::Approx(ref.gamma(1.0, testutil::vec({0.5}))).epsilon(1e-9));

    CHECK(run({"flow", "--config", quad_cfg.string(), "--y", "0.5", "--kmin", "2",
               "--kmax", "1", "--points", "5"},
              nullptr, &err) == 2);
    CHECK(contains(err, "kmax must exceed kmin"));

    // A full flow run: clean exit, summary line, deterministic CSV bytes.
    const std::filesystem::path csv = temp_path("frg_test_flow.csv");
    std::vector<std::string> flow_args = {
        "flow", "--config", quad_cfg.string(), "--y",      "0.5",
        "--kmin", "0.5",    "--kmax",          "1.5",      "--points",
        "5",      "--csv",  csv.string()};
    CHECK(run(flow_args, &out) == 0);
    Json summary = Json::parse(out.substr(0, out.find('\n')));
    CHECK(summary["record"] == "flowSummary");
    CHECK(summary["points"] == 5);
    CHECK(summary["aborted"] == false);
    CHECK(summary["maxResidual"].get<double>() < 1e-6);
    const std::string csv_first = read_file(csv);
    CHECK(contains(csv_first, "k,gamma,lhs,rhs,residual,trace,subtract\n"));
    CHECK(run(flow_args, &out) == 0);
    CHECK(read_file(csv) == csv_first);
    std::filesystem::remove(csv);

    // Runtime estimation failures exit 1 (not 2): increasing radii violate a
    // precondition of the extrapolation.
    CHECK(run({"om", "--config", mc_cfg.string(), "--a", "0.5", "--b", "0", "--radii",
               "0.2,0.3"},
              nullptr, &err) == 1);

    CHECK(run({"om", "--config", mc_cfg.string(), "--a", "0.5", "--b", "0", "--radii",
               "0.9,0.6,0.45,0.3"},
              &out) == 0);
    std::string last;
    std::istringstream out_lines(out);
    for (std::string l; std::getline(out_lines, l);)
        if (!l.empty()) last = l;
    Json om_summary = Json::parse(last);
    CHECK(om_summary["record"] == "omSummary");
    CHECK(om_summary["fitPoints"].get<int>() >= 2);

    std::filesystem::remove(quad_cfg);
    std::filesystem::remove(mc_cfg);
}
