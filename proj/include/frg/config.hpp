#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "frg/measure.hpp"
#include "frg/regulator.hpp"

namespace frg {

// Minimal TOML-style value: string, number (with exact integer tracking),
// boolean, or (possibly nested) array.
struct ConfigValue {
    enum class Kind { String, Number, Boolean, Array };

    Kind kind = Kind::Number;
    std::string str;
    double num = 0.0;
    long long int_val = 0;
    bool is_integer = false;
    bool boolean = false;
    std::vector<ConfigValue> array;
    int line = 0;
};

// Flat table keyed by "section.key" ("" section for top-level keys).
using ConfigTable = std::map<std::string, ConfigValue>;

// Parses a TOML subset: [section] headers, key = value pairs, # comments,
// strings, numbers, booleans, and arrays (nested, multi-line). Throws
// ConfigError with a line number on any syntax problem.
ConfigTable parse_config_text(const std::string& text);

// Fully validated run configuration assembled from a config file.
struct RunConfig {
    int schema_version;
    MeasureModel model;
    RegulatorFamily family;
    EstimatorConfig estimator;
    std::uint64_t config_hash;  // FNV-1a over the canonical echo

    RunConfig(int schema, MeasureModel m, RegulatorFamily f, EstimatorConfig e);
};

// Builds a RunConfig from config text / a file on disk. Unknown keys,
// missing sections, dimension mismatches and malformed matrices are all
// rejected with a diagnostic naming the offending key or entry.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Canonical serialization; parse_run_config(echo_config(c)) reproduces c
// exactly (numbers are written with round-trip precision).
std::string echo_config(const RunConfig& config);

std::uint64_t fnv1a64(std::string_view data);

}  // namespace frg
