#include "sargan/config.hpp"

#include <algorithm>
#include <fstream>

namespace sargan {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

RunConfig::RunConfig(std::set<std::string> known_keys) : known_(std::move(known_keys)) {}

void RunConfig::check_known(const std::string& key) const {
    if (!known_.count(key)) throw ConfigError("config: unknown key '" + key + "'");
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("config: cannot open " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected key=value at " + path.string() + ":" +
                              std::to_string(lineno));
        set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    check_known(key);
    values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
    check_known(key);
    return values_.count(key) > 0;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    check_known(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    check_known(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' is not a number: " + it->second);
    }
}

int RunConfig::get_int(const std::string& key, int fallback) const {
    check_known(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const int v = std::stoi(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' is not an integer: " + it->second);
    }
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    check_known(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' is not an unsigned integer: " + it->second);
    }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    check_known(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("config: '" + key + "' is not a boolean: " + it->second);
}

} // namespace sargan
