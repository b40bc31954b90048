// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

// Minimal `key = value` configuration files. Lines starting with '#' are
// comments; later keys override earlier ones.

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "uwbpos/error.hpp"

namespace uwbpos {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_string(std::string_view s, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(delim, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s, std::string_view what) {
    const std::string t = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
        throw Error(ErrorCode::InvalidArgument, "cannot parse '" + t + "' as number for " + std::string(what));
    }
    return v;
}

inline long long parse_int(std::string_view s, std::string_view what) {
    const std::string t = trim(s);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
        throw Error(ErrorCode::InvalidArgument, "cannot parse '" + t + "' as integer for " + std::string(what));
    }
    return v;
}

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::istream& in) {
        KeyValueConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = trim(line);
            if (t.empty() || t.front() == '#') continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorCode::InvalidArgument,
                            "config line " + std::to_string(lineno) + " has no '=': " + t);
            }
            cfg.values_[trim(std::string_view(t).substr(0, eq))] = trim(std::string_view(t).substr(eq + 1));
        }
        return cfg;
    }

    static KeyValueConfig parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::Io, "cannot open config " + path);
        return parse(in);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    std::optional<std::string> find(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::string get(const std::string& key, const std::string& fallback) const {
        return find(key).value_or(fallback);
    }
    std::string require_string(const std::string& key) const {
        auto v = find(key);
        if (!v) throw Error(ErrorCode::InvalidArgument, "missing config key '" + key + "'");
        return *v;
    }
    double get(const std::string& key, double fallback) const {
        auto v = find(key);
        return v ? parse_double(*v, key) : fallback;
    }
    long long get(const std::string& key, long long fallback) const {
        auto v = find(key);
        return v ? parse_int(*v, key) : fallback;
    }
    int get(const std::string& key, int fallback) const {
        return static_cast<int>(get(key, static_cast<long long>(fallback)));
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace uwbpos
