#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace rfcn {

/// Flat `key = value` run configuration with `#` comments. Command-line
/// flags override file values; the fully resolved configuration is written
/// back into the run's output directory for provenance.
struct RunConfig {
    std::map<std::string, std::string> kv;

    static RunConfig load(const std::filesystem::path& path);
    static RunConfig parse(const std::string& text, const std::string& origin);

    bool has(const std::string& key) const { return kv.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback = "") const;
    void set(const std::string& key, const std::string& value) { kv[key] = value; }

    std::string serialize() const;
    void write(const std::filesystem::path& path) const;
};

}  // namespace rfcn
