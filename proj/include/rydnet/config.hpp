#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydnet/physics.hpp"

namespace rydnet {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat `key = value` configuration. Blank lines and lines starting with '#'
/// are ignored; later assignments override earlier ones.
class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "<string>");
    static Config load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> find(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    /// Comma- or whitespace-separated list of numbers.
    std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    /// Canonical `key = value` text, sorted by key.
    std::string dump() const;

private:
    std::map<std::string, std::string> values_;
};

/// Reads C3_MHz_um3, C6_MHz_um6, C4_MHz_um4 (frequency/2pi) over the defaults.
PhysicalConstants physical_constants(const Config& cfg);
/// Reads Omega_c_MHz, Gamma_p_MHz, rho_bg_per_um2, bg_cutoff_um.
EitParameters eit_parameters(const Config& cfg);

} // namespace rydnet
