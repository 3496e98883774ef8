#include "picp/config.hpp"

#include "picp/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace picp {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source)
{
    KeyValueConfig cfg;
    cfg.source_ = source;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(source, line_no, "expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ParseError(source, line_no, "empty key");
        if (key.find_first_of(" \t") != std::string::npos)
            throw ParseError(source, line_no, "key '" + key + "' contains whitespace");
        if (cfg.values_.count(key))
            throw ParseError(source, line_no,
                             "key '" + key + "' repeated (first set on line " +
                                 std::to_string(cfg.values_[key].line) + ")");
        cfg.values_[key] = Entry{value, line_no};
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void KeyValueConfig::set(const std::string& key, const std::string& value)
{
    values_[key] = Entry{value, 0};
}

const KeyValueConfig::Entry* KeyValueConfig::lookup(const std::string& key) const
{
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
}

void KeyValueConfig::fail(const std::string& key, const std::string& what) const
{
    throw ParseError(source_, line_of(key), "key '" + key + "': " + what);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const
{
    const Entry* e = lookup(key);
    return e ? e->value : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const
{
    const Entry* e = lookup(key);
    if (!e)
        return fallback;
    if (e->value == "inf" || e->value == "off" || e->value == "infinity")
        return std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
    if (ec != std::errc() || ptr != e->value.data() + e->value.size() || std::isnan(v))
        fail(key, "expected a number, got '" + e->value + "'");
    return v;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const
{
    const Entry* e = lookup(key);
    if (!e)
        return fallback;
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
    if (ec != std::errc() || ptr != e->value.data() + e->value.size())
        fail(key, "expected an integer, got '" + e->value + "'");
    return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const
{
    const Entry* e = lookup(key);
    if (!e)
        return fallback;
    if (e->value == "true" || e->value == "on" || e->value == "yes" || e->value == "1")
        return true;
    if (e->value == "false" || e->value == "off" || e->value == "no" || e->value == "0")
        return false;
    fail(key, "expected true/false, got '" + e->value + "'");
}

std::vector<std::string> KeyValueConfig::unused_keys() const
{
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
    {
        if (!used_.count(k))
            out.push_back(k);
    }
    return out;
}

std::size_t KeyValueConfig::line_of(const std::string& key) const
{
    const auto it = values_.find(key);
    return it == values_.end() ? 0 : it->second.line;
}

}  // namespace picp
