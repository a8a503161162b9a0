#include "frg/report.hpp"

#include <charconv>
#include <chrono>
#include <ctime>

#include "frg/errors.hpp"

#ifndef FRGFLOW_GIT_DESCRIBE
#define FRGFLOW_GIT_DESCRIBE "unknown"
#endif

namespace frg {

namespace {

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::string number_text(double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, p);
}

Provenance make_provenance(std::uint64_t seed) {
    Provenance p;
    p.seed = seed;
    p.git_describe = FRGFLOW_GIT_DESCRIBE;
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    p.timestamp = buf;
    return p;
}

Json provenance_json(const Provenance& p) {
    return Json{{"seed", p.seed},
                {"gitDescribe", p.git_describe},
                {"timestamp", p.timestamp}};
}

Json report_header(const std::string& command, std::uint64_t config_hash,
                   std::uint64_t seed) {
    return Json{{"record", "header"},
                {"command", command},
                {"configHash", hex64(config_hash)},
                {"provenance", provenance_json(make_provenance(seed))}};
}

ReportWriter::ReportWriter(std::string path, const std::string& command,
                           std::uint64_t config_hash, std::uint64_t seed)
    : path_(std::move(path)), out_(path_, std::ios::app | std::ios::binary) {
    if (!out_) throw IoError("cannot open report file for append: " + path_);
    out_ << report_header(command, config_hash, seed).dump() << "\n";
}

void ReportWriter::record(const Json& rec) {
    out_ << rec.dump() << "\n";
    if (!out_) throw IoError("write failed on report file: " + path_);
}

std::string flow_csv_text(const std::vector<FlowRecord>& records) {
    std::string out = "k,gamma,lhs,rhs,residual,trace,subtract\n";
    for (const FlowRecord& r : records) {
        out += number_text(r.k) + "," + number_text(r.gamma) + "," +
               number_text(r.lhs_fd) + "," + number_text(r.rhs) + "," +
               number_text(r.residual) + "," + number_text(r.trace_term) + "," +
               number_text(r.subtract_term) + "\n";
    }
    return out;
}

void write_flow_csv(const std::string& path, const std::vector<FlowRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open CSV file for write: " + path);
    out << flow_csv_text(records);
    if (!out) throw IoError("write failed on CSV file: " + path);
}

}  // namespace frg
