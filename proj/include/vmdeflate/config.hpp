// Copyright 2026 The vmdeflate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * \file vmdeflate/config.hpp
 *
 * \brief Flat `key = value` files and small text helpers shared by the
 *  trace, engine and CLI layers.
 */

#ifndef VMDEFLATE_CONFIG_HPP
#define VMDEFLATE_CONFIG_HPP

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace vmdeflate {

/// Malformed or inconsistent input (files, flags, values).
class InputError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
    {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true)
    {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
        {
            break;
        }
        start = pos + 1;
    }
    return out;
}

template <typename T>
T parse_number(std::string_view s, std::string_view what)
{
    s = trim(s);
    T value{};
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc{} || ptr != end || s.empty())
    {
        throw InputError("invalid " + std::string(what) + ": '" + std::string(s) + "'");
    }
    return value;
}

inline bool parse_bool(std::string_view s, std::string_view what)
{
    s = trim(s);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw InputError("invalid " + std::string(what) + ": '" + std::string(s) + "'");
}

/// Shortest round-trip decimal form.
inline std::string format_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

/**
 * Parsed `key = value` file. Blank lines and `#` comments are skipped.
 * Every key must be consumed by the reader; leftovers are reported by
 * reject_unknown() so typos do not silently fall back to defaults.
 */
class KeyValueFile
{
public:
    static KeyValueFile parse(std::istream& in, std::string source = "<input>")
    {
        KeyValueFile kv;
        kv.source_ = std::move(source);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line))
        {
            ++lineno;
            std::string_view body = line;
            if (const auto hash = body.find('#'); hash != std::string_view::npos)
            {
                body = body.substr(0, hash);
            }
            body = trim(body);
            if (body.empty())
            {
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string_view::npos)
            {
                throw InputError(kv.source_ + ":" + std::to_string(lineno) + ": expected key=value");
            }
            std::string key(trim(body.substr(0, eq)));
            if (key.empty())
            {
                throw InputError(kv.source_ + ":" + std::to_string(lineno) + ": empty key");
            }
            if (kv.values_.count(key) != 0)
            {
                throw InputError(kv.source_ + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
            }
            kv.values_[key] = std::string(trim(body.substr(eq + 1)));
        }
        return kv;
    }

    static KeyValueFile load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw InputError("cannot open '" + path + "'");
        }
        return parse(in, path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get(const std::string& key, const std::string& fallback) const
    {
        used_.insert(key);
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const
    {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end())
        {
            throw InputError(source_ + ": missing key '" + key + "'");
        }
        return it->second;
    }

    template <typename T>
    T number(const std::string& key, T fallback) const
    {
        return has(key) ? parse_number<T>(get(key, ""), source_ + ": " + key) : (used_.insert(key), fallback);
    }

    bool flag(const std::string& key, bool fallback) const
    {
        return has(key) ? parse_bool(get(key, ""), source_ + ": " + key) : (used_.insert(key), fallback);
    }

    void reject_unknown() const
    {
        for (const auto& [k, v] : values_)
        {
            if (used_.count(k) == 0)
            {
                throw InputError(source_ + ": unknown key '" + k + "'");
            }
        }
    }

    const std::string& source() const { return source_; }

private:
    std::string source_;
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

} // namespace vmdeflate

#endif // VMDEFLATE_CONFIG_HPP
