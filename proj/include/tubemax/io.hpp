#pragma once

// CSV and JSON output. CSV: header row, comma separated, %.10e numbers, LF.

#include "tubemax/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace tubemax {

inline std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10e", v);
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    void add(const std::string& name, std::vector<double> values) {
        if (!columns.empty() && values.size() != columns.front().size()) {
            throw DomainError("csv: column '" + name + "' has the wrong length");
        }
        header.push_back(name);
        columns.push_back(std::move(values));
    }

    std::string str() const {
        std::string out;
        for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
        out += '\n';
        const std::size_t rows = columns.empty() ? 0 : columns.front().size();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + format_number(columns[c][r]);
            out += '\n';
        }
        return out;
    }
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << text;
    if (!f) throw ConfigError("write failed: " + path.string());
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) { write_text(path, table.str()); }

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// --out if given, else $TUBEMAX_OUT_DIR, else ./tubemax-out.
inline std::filesystem::path output_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("TUBEMAX_OUT_DIR"); env && *env) return env;
    return "tubemax-out";
}

}  // namespace tubemax
