#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "localtrans/core.hpp"

namespace localtrans {

// Flat `key = value` text config. Every key must be consumed by the command
// that loads the file; leftovers are a hard error so typos never pass
// silently.
class KeyValueFile {
public:
    KeyValueFile() = default;

    static KeyValueFile load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw DataError(path + ": cannot open file");
        KeyValueFile kv;
        kv.path_ = path;
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const std::string stripped = strip(line);
            if (stripped.empty() || stripped[0] == '#') continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
            const std::string key = strip(stripped.substr(0, eq));
            const std::string val = strip(stripped.substr(eq + 1));
            if (key.empty())
                throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
            if (kv.values_.count(key))
                throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            kv.values_[key] = val;
        }
        return kv;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        return it->second;
    }

    std::string require_string(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError(path_ + ": missing required key '" + key + "'");
        consumed_.insert(key);
        return it->second;
    }

    long get_int(const std::string& key, long fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        return parse_int(it->second, key);
    }

    double get_double(const std::string& key, double fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        return parse_double(it->second, key);
    }

    bool get_bool(const std::string& key, bool fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        return parse_bool(it->second, key);
    }

    void reject_unconsumed() const {
        std::vector<std::string> unknown;
        for (const auto& [k, v] : values_)
            if (!consumed_.count(k)) unknown.push_back(k);
        if (!unknown.empty()) {
            std::string msg = path_ + ": unknown key(s):";
            for (const auto& k : unknown) msg += " '" + k + "'";
            throw ConfigError(msg);
        }
    }

    long parse_int(const std::string& v, const std::string& key) const {
        std::size_t pos = 0;
        long out = 0;
        try {
            out = std::stol(v, &pos);
        } catch (...) {
            throw ConfigError(path_ + ": key '" + key + "': expected integer, got '" + v + "'");
        }
        if (pos != v.size())
            throw ConfigError(path_ + ": key '" + key + "': expected integer, got '" + v + "'");
        return out;
    }

    double parse_double(const std::string& v, const std::string& key) const {
        std::size_t pos = 0;
        double out = 0;
        try {
            out = std::stod(v, &pos);
        } catch (...) {
            throw ConfigError(path_ + ": key '" + key + "': expected number, got '" + v + "'");
        }
        if (pos != v.size())
            throw ConfigError(path_ + ": key '" + key + "': expected number, got '" + v + "'");
        return out;
    }

    bool parse_bool(const std::string& v, const std::string& key) const {
        if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "off" || v == "no") return false;
        throw ConfigError(path_ + ": key '" + key + "': expected boolean, got '" + v + "'");
    }

    static std::string strip(const std::string& s) {
        std::size_t b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        std::size_t e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    std::string path_ = "<memory>";
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

inline void write_key_values(const std::string& path,
                             const std::vector<std::pair<std::string, std::string>>& kvs) {
    std::ofstream f(path);
    if (!f) throw DataError(path + ": cannot open for writing");
    for (const auto& [k, v] : kvs) f << k << " = " << v << "\n";
}

} // namespace localtrans
