#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace picp {

/// Flat `key = value` settings with `#` comments. Every lookup marks the key
/// as used so callers can reject unknown keys.
class KeyValueConfig
{
public:
    KeyValueConfig() = default;

    /// Throws ParseError (with the line number) on malformed lines or repeated keys.
    static KeyValueConfig parse(const std::string& text, const std::string& source = "<config>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    /// Sets or replaces a value (command-line overrides).
    void set(const std::string& key, const std::string& value);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Keys never looked up, in sorted order.
    std::vector<std::string> unused_keys() const;
    /// Line where `key` was defined (0 for keys set programmatically).
    std::size_t line_of(const std::string& key) const;
    const std::string& source() const { return source_; }

private:
    struct Entry
    {
        std::string value;
        std::size_t line = 0;
    };
    const Entry* lookup(const std::string& key) const;
    [[noreturn]] void fail(const std::string& key, const std::string& what) const;

    std::string source_ = "<config>";
    std::map<std::string, Entry> values_;
    mutable std::set<std::string> used_;
};

}  // namespace picp
