#pragma once

#include "toda/grid.hpp"

#include <map>
#include <string>
#include <vector>

namespace toda {

// Full-precision decimal formatting (round trips through text exactly).
std::string format_full(double x);

/**
 * Write text to path atomically (temp file + rename), creating parent
 * directories as needed.
 */
void atomic_write(const std::string& path, const std::string& content);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    void add_row(std::initializer_list<double> vals) { rows.emplace_back(vals); }
    std::string to_string() const;
};

/**
 * Flat key = value configuration with '#' comments; dotted keys express
 * nesting, comma-separated values express lists.
 */
struct KeyValueConfig {
    std::map<std::string, std::string> values;
    std::vector<std::string> consumed;

    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_string(const std::string& text);

    bool has(const std::string& key) const { return values.count(key) > 0; }
    std::string get_string(const std::string& key, const std::string& fallback);
    std::string require_string(const std::string& key);
    double get_double(const std::string& key, double fallback);
    double require_double(const std::string& key);
    long get_long(const std::string& key, long fallback);
    bool get_bool(const std::string& key, bool fallback);
    std::vector<double> get_list(const std::string& key, std::vector<double> fallback = {});
    std::vector<double> require_list(const std::string& key);

    // keys present in the file but never read by the experiment
    std::vector<std::string> unknown_keys() const;
};

} // namespace toda
