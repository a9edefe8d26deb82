#include "rydnet/physics.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rydnet/random.hpp"
#include "rydnet/units.hpp"

namespace rydnet {

PhysicalConstants PhysicalConstants::defaults()
{
    return {units::from_mhz(1.6e3), units::from_mhz(1.0e-3), units::from_mhz(0.1), 43, "38s"};
}

void PhysicalConstants::validate() const
{
    if (C3 == 0.0 || !std::isfinite(C3))
        throw std::invalid_argument("C3 must be finite and non-zero");
    if (!std::isfinite(C6) || !std::isfinite(C4))
        throw std::invalid_argument("C6 and C4 must be finite");
}

EitParameters EitParameters::defaults()
{
    return {units::from_mhz(30.0), units::from_mhz(6.1), 16.0, 0.25};
}

AggregateHamiltonian build_hamiltonian(std::span<const Vec3> positions, double C3)
{
    const auto n = static_cast<Eigen::Index>(positions.size());
    AggregateHamiltonian h{Eigen::MatrixXd::Zero(n, n)};
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = a + 1; b < n; ++b) {
            const Vec3 d = positions[static_cast<std::size_t>(a)] - positions[static_cast<std::size_t>(b)];
            const double r2 = d.x * d.x + d.y * d.y + d.z * d.z;
            if (!(r2 > 1e-18))
                throw GeometryError("build_hamiltonian: atoms " + std::to_string(a) + " and " + std::to_string(b) + " coincide");
            const double r = std::sqrt(r2);
            const double cos2 = d.z * d.z / r2;
            const double w = (1.0 - 3.0 * cos2) * C3 / (2.0 * r2 * r);
            h.W(a, b) = w;
            h.W(b, a) = w;
        }
    }
    return h;
}

AggregateHamiltonian build_hamiltonian(const NetworkRealization& real, const PhysicalConstants& consts)
{
    const auto pos = real.positions();
    return build_hamiltonian(pos, consts.C3);
}

std::string to_string(DecoherenceMode mode)
{
    switch (mode) {
    case DecoherenceMode::none: return "none";
    case DecoherenceMode::realistic: return "realistic";
    case DecoherenceMode::rescaled: return "rescaled";
    }
    return "none";
}

DecoherenceMode decoherence_mode_from_string(const std::string& s)
{
    if (s == "none")
        return DecoherenceMode::none;
    if (s == "realistic")
        return DecoherenceMode::realistic;
    if (s == "rescaled")
        return DecoherenceMode::rescaled;
    throw std::invalid_argument("unknown decoherence mode '" + s + "'");
}

EnvironmentRealization EnvironmentRealization::none(std::size_t sites)
{
    EnvironmentRealization env;
    env.h_prime = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sites));
    env.l = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(sites));
    return env;
}

void evaluate_effective_operators(std::span<const Vec3> sites, std::span<const Vec2> bg, double Omega_p,
                                  const EitParameters& eit, const PhysicalConstants& consts,
                                  Eigen::Ref<Eigen::VectorXd> h_prime, Eigen::Ref<Eigen::VectorXcd> l)
{
    const std::size_t ns = sites.size();
    const double V_c = eit.V_c();
    const double h_pref = Omega_p * Omega_p / (eit.Omega_c * eit.Omega_c);
    const double l_pref = Omega_p / std::sqrt(eit.Gamma_p);

    std::vector<double> vs(ns);   // s-state shift from each site
    std::vector<double> vp(ns);   // p-state shift from each site
    for (std::size_t n = 0; n < ns; ++n) {
        h_prime[static_cast<Eigen::Index>(n)] = 0.0;
        l[static_cast<Eigen::Index>(n)] = 0.0;
    }
    for (const Vec2& x : bg) {
        const Vec3 xa = Vec3::in_plane(x);
        for (std::size_t n = 0; n < ns; ++n) {
            const Vec3 d = sites[n] - xa;
            const double r2 = d.x * d.x + d.y * d.y + d.z * d.z;
            vs[n] = consts.C6 / (r2 * r2 * r2);
            vp[n] = consts.C4 / (r2 * r2);
        }
        for (std::size_t n = 0; n < ns; ++n) {
            // Site n carries the p excitation, every other site is in s.
            double vbar = vp[n];
            for (std::size_t m = 0; m < ns; ++m)
                if (m != n)
                    vbar += vs[m];
            const double ratio = vbar / V_c;
            h_prime[static_cast<Eigen::Index>(n)] += h_pref * vbar / (1.0 + ratio * ratio);
            // 1 / (i + a) = (a - i) / (a^2 + 1) with a = V_c / vbar
            if (vbar != 0.0) {
                const double a = V_c / vbar;
                const double den = a * a + 1.0;
                l[static_cast<Eigen::Index>(n)] += l_pref * std::complex<double>(a / den, -1.0 / den);
            }
        }
    }
}

EnvironmentRealization sample_environment(const BoxLayout& box, double Omega_p, const EitParameters& eit,
                                          const PhysicalConstants& consts, std::uint64_t seed)
{
    if (!(Omega_p > 0.0) || !(eit.Omega_c > 0.0) || !(eit.Gamma_p > 0.0))
        throw std::invalid_argument("sample_environment: Rabi frequencies and Gamma_p must be positive");

    std::vector<Vec3> coupled;
    coupled.push_back(input_site(box.L));
    for (const auto& p : box.positions)
        coupled.push_back(Vec3::in_plane(p));

    const auto n_bg = static_cast<std::size_t>(std::llround(eit.rho_bg * box.L * box.L));
    const double h = 0.5 * box.L;
    const double cut2 = eit.bg_cutoff * eit.bg_cutoff;

    EnvironmentRealization env;
    env.mode = DecoherenceMode::realistic;
    env.Omega_p = Omega_p;
    env.Omega_c = eit.Omega_c;
    env.Gamma_p = eit.Gamma_p;
    env.V_c = eit.V_c();
    env.bg_positions.reserve(n_bg);

    Rng rng(seed);
    for (std::size_t a = 0; a < n_bg; ++a) {
        Vec2 x;
        bool clear = false;
        int tries = 0;
        while (!clear) {
            if (++tries > 10'000)
                throw GeometryError("sample_environment: cannot place background atom outside the cutoff radius");
            x = {rng.uniform(-h, h), rng.uniform(-h, h)};
            clear = true;
            for (const Vec3& s : coupled) {
                const double dx = s.x - x.x, dy = s.y - x.y;
                if (dx * dx + dy * dy + s.z * s.z < cut2) {
                    clear = false;
                    break;
                }
            }
        }
        env.bg_positions.push_back(x);
    }

    const std::size_t n_sites = static_cast<std::size_t>(box.M) + 3;
    env.h_prime = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_sites));
    env.l = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n_sites));
    const auto nc = static_cast<Eigen::Index>(coupled.size());
    evaluate_effective_operators(coupled, env.bg_positions, Omega_p, eit, consts, env.h_prime.head(nc), env.l.head(nc));
    return env;
}

DephasingRates dephasing_rates(const Eigen::VectorXcd& l)
{
    const auto n = l.size();
    DephasingRates out{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = a + 1; b < n; ++b) {
            const std::complex<double> c = l[a] * std::conj(l[b]);
            const double g = std::norm(l[a]) + std::norm(l[b]) - 2.0 * c.real();
            out.gamma(a, b) = out.gamma(b, a) = std::max(g, 0.0);
            out.epsilon(a, b) = c.imag();
            out.epsilon(b, a) = -c.imag();
        }
    }
    return out;
}

double mean_pair_rate(const Eigen::VectorXcd& l, std::span<const std::size_t> sites)
{
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        for (std::size_t j = i + 1; j < sites.size(); ++j) {
            const auto a = static_cast<Eigen::Index>(sites[i]);
            const auto b = static_cast<Eigen::Index>(sites[j]);
            sum += std::norm(l[a]) + std::norm(l[b]) - 2.0 * (l[a] * std::conj(l[b])).real();
            ++pairs;
        }
    }
    if (pairs == 0)
        throw std::invalid_argument("mean_pair_rate: need at least two sites");
    return sum / static_cast<double>(pairs);
}

EnvironmentRealization rescale_decoherence(const EnvironmentRealization& env, double gamma_target,
                                           std::span<const std::size_t> sites)
{
    if (!(gamma_target >= 0.0))
        throw std::invalid_argument("rescale_decoherence: gamma_target must be non-negative");
    const double mean = mean_pair_rate(env.l, sites);
    if (!(mean > 0.0))
        throw std::domain_error("rescale_decoherence: all couplings equal, mean dephasing rate is zero");
    EnvironmentRealization out = env;
    out.mode = DecoherenceMode::rescaled;
    out.gamma_target = gamma_target;
    out.scale = gamma_target / mean;
    out.h_prime.setZero();
    out.l *= std::sqrt(out.scale);
    return out;
}

} // namespace rydnet
