#pragma once

// CSV and run-manifest output. Floats are written with 17 significant
// digits so that repeated runs diff byte-identically across platforms.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace reldiff {

inline constexpr const char* kVersion = "0.1.0";

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open output file '" + path + "'");
        write_row(header);
    }

    void write_row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    void close() { out_.close(); }

  private:
    std::ofstream out_;
};

// FNV-1a over the canonical (key-sorted) JSON dump; invariant under key
// reordering because nlohmann objects iterate in sorted key order.
inline std::string config_hash(const nlohmann::json& config) {
    const std::string canon = config.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

struct RunManifest {
    std::string command_line;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;
    std::string started_at, finished_at;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["command_line"] = command_line;
        j["config"] = config;
        j["config_hash"] = config_hash(config);
        j["seed"] = seed;
        j["artifact_version"] = kVersion;
        j["started_at"] = started_at;
        j["finished_at"] = finished_at;
        j["outputs"] = outputs;
        return j;
    }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot open manifest file '" + path + "'");
        out << to_json().dump(2) << '\n';
    }
};

}  // namespace reldiff
