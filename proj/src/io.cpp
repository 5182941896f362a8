#include "toda/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace toda {

std::string format_full(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void atomic_write(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("atomic_write: cannot open " + tmp.string());
        out << content;
        if (!out.good()) throw std::runtime_error("atomic_write: write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string CsvTable::to_string() const {
    std::ostringstream os;
    for (size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_full(row[i]);
        os << "\n";
    }
    return os.str();
}

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) +
                                                     ": empty key");
        cfg.values[key] = value;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config file not readable: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_string(os.str());
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) {
    consumed.push_back(key);
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

std::string KeyValueConfig::require_string(const std::string& key) {
    consumed.push_back(key);
    auto it = values.find(key);
    if (it == values.end()) throw std::invalid_argument("config: missing required key '" + key + "'");
    return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
    consumed.push_back(key);
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size())
        throw std::invalid_argument("config: key '" + key + "' is not a number: " + it->second);
    return v;
}

double KeyValueConfig::require_double(const std::string& key) {
    if (!has(key)) throw std::invalid_argument("config: missing required key '" + key + "'");
    return get_double(key, 0.0);
}

long KeyValueConfig::get_long(const std::string& key, long fallback) {
    consumed.push_back(key);
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    size_t pos = 0;
    const long v = std::stol(it->second, &pos);
    if (pos != it->second.size())
        throw std::invalid_argument("config: key '" + key + "' is not an integer: " + it->second);
    return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
    consumed.push_back(key);
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::invalid_argument("config: key '" + key + "' is not a boolean: " + it->second);
}

std::vector<double> KeyValueConfig::get_list(const std::string& key, std::vector<double> fallback) {
    consumed.push_back(key);
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::vector<double> out;
    std::istringstream in(it->second);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        size_t pos = 0;
        out.push_back(std::stod(tok, &pos));
        if (pos != tok.size())
            throw std::invalid_argument("config: key '" + key + "' has a bad list entry: " + tok);
    }
    return out;
}

std::vector<double> KeyValueConfig::require_list(const std::string& key) {
    if (!has(key)) throw std::invalid_argument("config: missing required key '" + key + "'");
    return get_list(key);
}

std::vector<std::string> KeyValueConfig::unknown_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values)
        if (std::find(consumed.begin(), consumed.end(), k) == consumed.end()) out.push_back(k);
    return out;
}

} // namespace toda
