#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "sargan/errors.hpp"

namespace sargan {

// Flat key=value settings, merged from a config file and command-line
// overrides (later source wins). Keys must be registered up front; unknown
// keys are rejected at load time.
class RunConfig {
public:
    explicit RunConfig(std::set<std::string> known_keys);

    void load_file(const std::filesystem::path& path); // '#' comments, key=value lines
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

private:
    void check_known(const std::string& key) const;

    std::set<std::string> known_;
    std::map<std::string, std::string> values_;
};

} // namespace sargan
