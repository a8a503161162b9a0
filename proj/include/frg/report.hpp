#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "frg/flow.hpp"

namespace frg {

using Json = nlohmann::ordered_json;

struct Provenance {
    std::uint64_t seed = 0;
    std::string git_describe;
    std::string timestamp;  // RFC 3339 UTC
};

Provenance make_provenance(std::uint64_t seed);
Json provenance_json(const Provenance& p);

// Header record identifying a run; every report file starts with one.
Json report_header(const std::string& command, std::uint64_t config_hash,
                   std::uint64_t seed);

// Append-only JSON-lines report file: one header line, then one line per
// record. Records carry no timestamps, so re-running with the same config
// and seed reproduces them byte for byte.
class ReportWriter {
  public:
    ReportWriter(std::string path, const std::string& command,
                 std::uint64_t config_hash, std::uint64_t seed);

    void record(const Json& rec);
    const std::string& path() const { return path_; }

  private:
    std::string path_;
    std::ofstream out_;
};

// CSV table of an integrated flow, one row per scale:
// k,gamma,lhs,rhs,residual,trace,subtract
void write_flow_csv(const std::string& path, const std::vector<FlowRecord>& records);
std::string flow_csv_text(const std::vector<FlowRecord>& records);

// Shortest round-trip decimal form of a double (used by all writers so
// that output bytes are reproducible).
std::string number_text(double x);

}  // namespace frg
