#include "frg/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "frg/errors.hpp"

namespace frg {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

bool bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

// Removes a trailing # comment, ignoring # inside double-quoted strings.
std::string strip_comment(const std::string& line, int line_no) {
    std::string out;
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_string) {
            out += c;
            if (c == '\\') {
                if (i + 1 >= line.size()) fail(line_no, "dangling escape in string");
                out += line[++i];
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '#') break;
        if (c == '"') in_string = true;
        out += c;
    }
    if (in_string) fail(line_no, "unterminated string");
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct ValueParser {
    const std::string& text;
    std::size_t pos = 0;
    int line;

    void skip_ws() {
        while (pos < text.size() &&
               (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\r' || text[pos] == '\n'))
            ++pos;
    }

    ConfigValue parse() {
        skip_ws();
        if (pos >= text.size()) fail(line, "missing value");
        char c = text[pos];
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        if (text.compare(pos, 4, "true") == 0 && !tail_after(4)) return parse_bool(true, 4);
        if (text.compare(pos, 5, "false") == 0 && !tail_after(5)) return parse_bool(false, 5);
        return parse_number();
    }

    // True when the token would continue past `len` characters.
    bool tail_after(std::size_t len) const {
        return pos + len < text.size() && bare_key_char(text[pos + len]);
    }

    ConfigValue parse_bool(bool b, std::size_t len) {
        pos += len;
        ConfigValue v;
        v.kind = ConfigValue::Kind::Boolean;
        v.boolean = b;
        v.line = line;
        return v;
    }

    ConfigValue parse_string() {
        ++pos;  // opening quote
        std::string out;
        while (pos < text.size() && text[pos] != '"') {
            char c = text[pos++];
            if (c == '\\') {
                if (pos >= text.size()) fail(line, "dangling escape in string");
                char e = text[pos++];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: fail(line, std::string("unsupported escape \\") + e);
                }
            } else {
                out += c;
            }
        }
        if (pos >= text.size()) fail(line, "unterminated string");
        ++pos;  // closing quote
        ConfigValue v;
        v.kind = ConfigValue::Kind::String;
        v.str = std::move(out);
        v.line = line;
        return v;
    }

    ConfigValue parse_array() {
        ++pos;  // '['
        ConfigValue v;
        v.kind = ConfigValue::Kind::Array;
        v.line = line;
        for (;;) {
            skip_ws();
            if (pos >= text.size()) fail(line, "unterminated array");
            if (text[pos] == ']') {
                ++pos;
                return v;
            }
            v.array.push_back(parse());
            skip_ws();
            if (pos >= text.size()) fail(line, "unterminated array");
            if (text[pos] == ',') {
                ++pos;
            } else if (text[pos] != ']') {
                fail(line, "expected ',' or ']' in array");
            }
        }
    }

    ConfigValue parse_number() {
        std::size_t start = pos;
        while (pos < text.size() && (bare_key_char(text[pos]) || text[pos] == '+' ||
                                     text[pos] == '.' ))
            ++pos;
        std::string tok = text.substr(start, pos - start);
        if (tok.empty()) fail(line, "missing value");

        ConfigValue v;
        v.kind = ConfigValue::Kind::Number;
        v.line = line;

        bool integral = !tok.empty();
        for (std::size_t i = 0; i < tok.size(); ++i) {
            char c = tok[i];
            bool sign_ok = (i == 0 && (c == '+' || c == '-'));
            if (!sign_ok && !std::isdigit(static_cast<unsigned char>(c))) integral = false;
        }
        if (integral) {
            long long parsed = 0;
            auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), parsed);
            if (ec != std::errc() || p != tok.data() + tok.size())
                fail(line, "invalid integer '" + tok + "'");
            v.is_integer = true;
            v.int_val = parsed;
            v.num = static_cast<double>(parsed);
            return v;
        }

        char* end = nullptr;
        double parsed = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size() || !std::isfinite(parsed))
            fail(line, "invalid number '" + tok + "'");
        v.num = parsed;
        return v;
    }
};

std::string key_display(const std::string& flat) {
    auto dot = flat.find('.');
    if (dot == std::string::npos) return "'" + flat + "'";
    return "'" + flat.substr(dot + 1) + "' in [" + flat.substr(0, dot) + "]";
}

// Typed lookup helpers; every accessor records the key as consumed so that
// leftovers can be rejected afterwards.
struct Reader {
    const ConfigTable& table;
    std::set<std::string> consumed;

    const ConfigValue* find(const std::string& key) {
        auto it = table.find(key);
        if (it == table.end()) return nullptr;
        consumed.insert(key);
        return &it->second;
    }

    const ConfigValue& require(const std::string& key) {
        const ConfigValue* v = find(key);
        if (!v) throw ConfigError("config: missing required key " + key_display(key));
        return *v;
    }

    std::string get_string(const std::string& key) {
        const ConfigValue& v = require(key);
        if (v.kind != ConfigValue::Kind::String)
            fail(v.line, "expected a string for " + key_display(key));
        return v.str;
    }

    static double number_of(const ConfigValue& v, const std::string& key) {
        if (v.kind != ConfigValue::Kind::Number)
            fail(v.line, "expected a number for " + key_display(key));
        return v.num;
    }

    static long long integer_of(const ConfigValue& v, const std::string& key) {
        if (v.kind != ConfigValue::Kind::Number)
            fail(v.line, "expected an integer for " + key_display(key));
        if (v.is_integer) return v.int_val;
        double r = std::round(v.num);
        if (std::abs(v.num - r) > 1e-9 || std::abs(r) > 9.0e15)
            fail(v.line, "expected an integer for " + key_display(key));
        return static_cast<long long>(r);
    }

    long long get_integer(const std::string& key, long long fallback) {
        const ConfigValue* v = find(key);
        return v ? integer_of(*v, key) : fallback;
    }

    std::vector<double> get_number_list(const std::string& key) {
        const ConfigValue& v = require(key);
        if (v.kind != ConfigValue::Kind::Array)
            fail(v.line, "expected an array for " + key_display(key));
        std::vector<double> out;
        out.reserve(v.array.size());
        for (const ConfigValue& e : v.array) out.push_back(number_of(e, key));
        return out;
    }
};

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_matrix_row_major(const std::string& key, const std::vector<double>& flat,
                                    int n) {
    if (static_cast<int>(flat.size()) != n * n)
        throw ConfigError("config: " + key_display(key) + " has " +
                          std::to_string(flat.size()) + " entries; expected " +
                          std::to_string(n) + "x" + std::to_string(n) + " = " +
                          std::to_string(n * n));
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = flat[static_cast<std::size_t>(i) * n + j];
    return m;
}

void append_number(std::string& out, double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    out.append(buf, p);
}

void append_flat_matrix(std::string& out, const std::string& key, const Eigen::MatrixXd& m) {
    out += key;
    out += " = [\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out += "  ";
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            append_number(out, m(i, j));
            out += ",";
            if (j + 1 < m.cols()) out += " ";
        }
        out += "\n";
    }
    out += "]\n";
}

void append_vector(std::string& out, const std::string& key, const Eigen::VectorXd& v) {
    out += key;
    out += " = [";
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i > 0) out += ", ";
        append_number(out, v(i));
    }
    out += "]\n";
}

}  // namespace

ConfigTable parse_config_text(const std::string& text) {
    ConfigTable table;
    std::set<std::string> sections_seen;
    std::string section;

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        int stmt_line = line_no;
        std::string line = trim(strip_comment(raw, line_no));
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') fail(stmt_line, "malformed section header");
            std::string name = trim(line.substr(1, line.size() - 2));
            if (name.empty()) fail(stmt_line, "empty section name");
            for (char c : name)
                if (!bare_key_char(c)) fail(stmt_line, "invalid section name '" + name + "'");
            if (!sections_seen.insert(name).second)
                fail(stmt_line, "duplicate section [" + name + "]");
            section = name;
            continue;
        }

        auto eq = line.find('=');
        if (eq == std::string::npos) fail(stmt_line, "expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        if (key.empty()) fail(stmt_line, "empty key");
        for (char c : key)
            if (!bare_key_char(c)) fail(stmt_line, "invalid key '" + key + "'");

        // Arrays may span lines: accumulate until brackets balance outside strings.
        std::string value_text = line.substr(eq + 1);
        auto depth_of = [&](const std::string& s) {
            int depth = 0;
            bool in_string = false;
            for (std::size_t i = 0; i < s.size(); ++i) {
                char c = s[i];
                if (in_string) {
                    if (c == '\\') ++i;
                    else if (c == '"') in_string = false;
                } else if (c == '"') {
                    in_string = true;
                } else if (c == '[') {
                    ++depth;
                } else if (c == ']') {
                    --depth;
                }
            }
            return depth;
        };
        int depth = depth_of(value_text);
        while (depth > 0 && std::getline(in, raw)) {
            ++line_no;
            std::string more = strip_comment(raw, line_no);
            value_text += "\n" + more;
            depth += depth_of(more);
        }
        if (depth != 0) fail(stmt_line, "unterminated array");

        ValueParser vp{value_text, 0, stmt_line};
        ConfigValue value = vp.parse();
        vp.skip_ws();
        if (vp.pos != value_text.size())
            fail(stmt_line, "trailing characters after value");

        std::string flat = section.empty() ? key : section + "." + key;
        if (table.count(flat)) fail(stmt_line, "duplicate key " + key_display(flat));
        table.emplace(std::move(flat), std::move(value));
    }
    return table;
}

RunConfig::RunConfig(int schema, MeasureModel m, RegulatorFamily f, EstimatorConfig e)
    : schema_version(schema),
      model(std::move(m)),
      family(std::move(f)),
      estimator(e),
      config_hash(0) {
    if (model.dim() != family.dim())
        throw ConfigError("config: measure dimension " + std::to_string(model.dim()) +
                          " does not match regulator dimension " +
                          std::to_string(family.dim()));
    estimator.validate();
    config_hash = fnv1a64(echo_config(*this));
}

RunConfig parse_run_config(const std::string& text) {
    ConfigTable table = parse_config_text(text);
    Reader r{table, {}};

    long long schema = r.get_integer("schema_version", 1);
    if (schema != 1)
        throw ConfigError("config: unsupported schema_version " + std::to_string(schema) +
                          " (supported: 1)");

    // [measure]
    std::string kind = r.get_string("measure.kind");
    Eigen::VectorXd mean = to_vector(r.get_number_list("measure.mean"));
    int n = static_cast<int>(mean.size());
    if (n < 1) throw ConfigError("config: 'mean' in [measure] must be nonempty");
    Eigen::MatrixXd cov =
        to_matrix_row_major("measure.covariance", r.get_number_list("measure.covariance"), n);

    const ConfigValue* pert_val = r.find("measure.perturbation");
    std::optional<MeasureModel> model;
    if (kind == "gaussian") {
        if (pert_val)
            fail(pert_val->line,
                 "'perturbation' in [measure] requires kind = \"perturbed_gaussian\"");
        model = MeasureModel::gaussian(std::move(mean), std::move(cov));
    } else if (kind == "perturbed_gaussian") {
        if (!pert_val)
            throw ConfigError(
                "config: missing required key 'perturbation' in [measure] "
                "(kind = \"perturbed_gaussian\")");
        if (pert_val->kind != ConfigValue::Kind::Array)
            fail(pert_val->line, "expected an array of arrays for 'perturbation' in [measure]");
        Perturbation p;
        for (const ConfigValue& axis : pert_val->array) {
            if (axis.kind != ConfigValue::Kind::Array)
                fail(axis.line,
                     "expected per-axis coefficient arrays for 'perturbation' in [measure]");
            std::vector<double> coeffs;
            for (const ConfigValue& c : axis.array)
                coeffs.push_back(Reader::number_of(c, "measure.perturbation"));
            p.coeffs.push_back(std::move(coeffs));
        }
        model = MeasureModel::perturbed_gaussian(std::move(mean), std::move(cov), std::move(p));
    } else {
        throw ConfigError("config: unknown measure kind \"" + kind +
                          "\" (expected \"gaussian\" or \"perturbed_gaussian\")");
    }

    // [regulator]
    Eigen::MatrixXd r0 =
        to_matrix_row_major("regulator.R0", r.get_number_list("regulator.R0"), n);
    std::string schedule = r.get_string("regulator.schedule");
    Eigen::VectorXd w = to_vector(r.get_number_list("regulator.w"));
    RegulatorFamily family(std::move(r0), schedule_from_name(schedule), std::move(w));

    // [estimator] — optional, with defaults.
    EstimatorConfig est;
    if (const ConfigValue* v = r.find("estimator.mode")) {
        if (v->kind != ConfigValue::Kind::String)
            fail(v->line, "expected a string for 'mode' in [estimator]");
        if (v->str == "quadrature")
            est.mode = EstimatorMode::Quadrature;
        else if (v->str == "monte_carlo")
            est.mode = EstimatorMode::MonteCarlo;
        else
            fail(v->line, "unknown estimator mode \"" + v->str +
                              "\" (expected \"quadrature\" or \"monte_carlo\")");
    }
    est.nodes_per_dim = static_cast<int>(r.get_integer("estimator.nodes", est.nodes_per_dim));
    est.samples = r.get_integer("estimator.samples", est.samples);
    long long seed = r.get_integer("estimator.seed", static_cast<long long>(est.seed));
    if (seed < 0) throw ConfigError("config: 'seed' in [estimator] must be nonnegative");
    est.seed = static_cast<std::uint64_t>(seed);
    est.streams = static_cast<int>(r.get_integer("estimator.streams", est.streams));
    est.dim_switch = static_cast<int>(r.get_integer("estimator.dim_switch", est.dim_switch));

    for (const auto& [key, value] : table)
        if (!r.consumed.count(key))
            fail(value.line, "unknown key " + key_display(key));

    return RunConfig(static_cast<int>(schema), std::move(*model), std::move(family), est);
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config file not found: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string echo_config(const RunConfig& config) {
    std::string out;
    out += "schema_version = " + std::to_string(config.schema_version) + "\n\n";

    out += "[measure]\n";
    out += "kind = \"";
    out += config.model.kind() == MeasureKind::Gaussian ? "gaussian" : "perturbed_gaussian";
    out += "\"\n";
    append_vector(out, "mean", config.model.mean());
    append_flat_matrix(out, "covariance", config.model.covariance());
    if (config.model.kind() == MeasureKind::PerturbedGaussian) {
        out += "perturbation = [";
        const auto& coeffs = config.model.perturbation().coeffs;
        for (std::size_t i = 0; i < coeffs.size(); ++i) {
            if (i > 0) out += ", ";
            out += "[";
            for (std::size_t j = 0; j < coeffs[i].size(); ++j) {
                if (j > 0) out += ", ";
                append_number(out, coeffs[i][j]);
            }
            out += "]";
        }
        out += "]\n";
    }
    out += "\n[regulator]\n";
    append_flat_matrix(out, "R0", config.family.r0());
    out += "schedule = \"" + schedule_name(config.family.schedule()) + "\"\n";
    append_vector(out, "w", config.family.w());

    out += "\n[estimator]\n";
    out += "mode = \"";
    out += config.estimator.mode == EstimatorMode::Quadrature ? "quadrature" : "monte_carlo";
    out += "\"\n";
    out += "nodes = " + std::to_string(config.estimator.nodes_per_dim) + "\n";
    out += "samples = " + std::to_string(config.estimator.samples) + "\n";
    out += "seed = " + std::to_string(config.estimator.seed) + "\n";
    out += "streams = " + std::to_string(config.estimator.streams) + "\n";
    out += "dim_switch = " + std::to_string(config.estimator.dim_switch) + "\n";
    return out;
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace frg
