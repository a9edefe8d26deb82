#include "rydnet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "rydnet/units.hpp"

namespace rydnet {

namespace {

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& text)
{
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ConfigError("config key '" + key + "': '" + text + "' is not a number");
    return v;
}

} // namespace

Config Config::parse(const std::string& text, const std::string& origin)
{
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#')
            continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
        const std::string key = trim(t.substr(0, eq));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(number) + ": empty key");
        cfg.values_[key] = trim(t.substr(eq + 1));
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::optional<std::string> Config::find(const std::string& key) const
{
    const auto it = values_.find(key);
    if (it == values_.end())
        return std::nullopt;
    return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const
{
    return find(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const
{
    const auto v = find(key);
    return v ? parse_double(key, *v) : fallback;
}

long long Config::get_int(const std::string& key, long long fallback) const
{
    const auto v = find(key);
    if (!v)
        return fallback;
    long long out = 0;
    const auto* end = v->data() + v->size();
    const auto [ptr, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc() || ptr != end)
        throw ConfigError("config key '" + key + "': '" + *v + "' is not an integer");
    return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const
{
    const auto v = find(key);
    if (!v)
        return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on")
        return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off")
        return false;
    throw ConfigError("config key '" + key + "': '" + *v + "' is not a boolean");
}

std::vector<double> Config::get_doubles(const std::string& key, std::vector<double> fallback) const
{
    const auto v = find(key);
    if (!v)
        return fallback;
    std::string s = *v;
    for (char& c : s)
        if (c == ',' || c == '[' || c == ']')
            c = ' ';
    std::istringstream in(s);
    std::vector<double> out;
    std::string tok;
    while (in >> tok)
        out.push_back(parse_double(key, tok));
    return out;
}

std::string Config::dump() const
{
    std::string out;
    for (const auto& [k, v] : values_)
        out += k + " = " + v + "\n";
    return out;
}

PhysicalConstants physical_constants(const Config& cfg)
{
    PhysicalConstants c = PhysicalConstants::defaults();
    c.C3 = units::from_mhz(cfg.get_double("C3_MHz_um3", units::to_mhz(c.C3)));
    c.C6 = units::from_mhz(cfg.get_double("C6_MHz_um6", units::to_mhz(c.C6)));
    c.C4 = units::from_mhz(cfg.get_double("C4_MHz_um4", units::to_mhz(c.C4)));
    c.nu = static_cast<int>(cfg.get_int("nu", c.nu));
    c.env_state_label = cfg.get_string("env_state", c.env_state_label);
    c.validate();
    return c;
}

EitParameters eit_parameters(const Config& cfg)
{
    EitParameters e = EitParameters::defaults();
    e.Omega_c = units::from_mhz(cfg.get_double("Omega_c_MHz", units::to_mhz(e.Omega_c)));
    e.Gamma_p = units::from_mhz(cfg.get_double("Gamma_p_MHz", units::to_mhz(e.Gamma_p)));
    e.rho_bg = cfg.get_double("rho_bg_per_um2", e.rho_bg);
    e.bg_cutoff = cfg.get_double("bg_cutoff_um", e.bg_cutoff);
    if (!(e.Omega_c > 0.0) || !(e.Gamma_p > 0.0) || !(e.rho_bg >= 0.0) || !(e.bg_cutoff >= 0.0))
        throw ConfigError("EIT parameters must be positive");
    return e;
}

} // namespace rydnet
