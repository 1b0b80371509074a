#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "turbsim/error.hpp"

namespace turbsim {

/// Flat UTF-8 key-value document: one `key = value` per line, `#` comments.
/// Keys keep insertion order so written files diff cleanly.
class KeyValueDoc {
public:
    void set(const std::string& key, std::string value) {
        for (auto& [k, v] : entries_)
            if (k == key) {
                v = std::move(value);
                return;
            }
        entries_.emplace_back(key, std::move(value));
    }
    void set(const std::string& key, double value) { set(key, format_double(value)); }
    void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }
    void set(const std::string& key, int value) { set(key, std::to_string(value)); }

    bool has(const std::string& key) const {
        for (const auto& e : entries_)
            if (e.first == key) return true;
        return false;
    }

    const std::string& get(const std::string& key) const {
        for (const auto& e : entries_)
            if (e.first == key) return e.second;
        throw Error(ErrorKind::format, "missing key '" + key + "'");
    }

    double get_double(const std::string& key) const { return parse_double(get(key), key); }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }
    std::uint64_t get_u64(const std::string& key) const {
        const auto& s = get(key);
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        require(ec == std::errc{} && p == s.data() + s.size(), ErrorKind::format,
                "key '" + key + "': not an unsigned integer: " + s);
        return v;
    }
    int get_int(const std::string& key) const {
        const auto& s = get(key);
        int v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        require(ec == std::errc{} && p == s.data() + s.size(), ErrorKind::format,
                "key '" + key + "': not an integer: " + s);
        return v;
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string str() const {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
        return out;
    }

    static KeyValueDoc parse(const std::string& text) {
        KeyValueDoc doc;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto s = trim(line);
            if (s.empty() || s[0] == '#') continue;
            const auto eq = s.find('=');
            require(eq != std::string::npos, ErrorKind::format,
                    "line " + std::to_string(lineno) + ": expected key = value");
            auto key = trim(s.substr(0, eq));
            require(!key.empty(), ErrorKind::format, "line " + std::to_string(lineno) + ": empty key");
            doc.set(key, trim(s.substr(eq + 1)));
        }
        return doc;
    }

    static KeyValueDoc load(const std::string& path) {
        std::ifstream f(path);
        require(static_cast<bool>(f), ErrorKind::io, "cannot read " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        require(static_cast<bool>(f), ErrorKind::io, "cannot write " + path);
        f << str();
        require(static_cast<bool>(f), ErrorKind::io, "write failed: " + path);
    }

    /// Shortest representation that parses back to the identical double.
    static std::string format_double(double v) {
        char buf[64];
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, p);
    }

    static double parse_double(const std::string& s, const std::string& key = "value") {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        require(ec == std::errc{} && p == s.data() + s.size(), ErrorKind::format,
                "key '" + key + "': not a number: " + s);
        return v;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace turbsim
