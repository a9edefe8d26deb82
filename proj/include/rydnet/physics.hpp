#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rydnet/geometry.hpp"

namespace rydnet {

/// Interaction coefficients in angular units (rad/us times a power of um).
/// Only C3 is physical input; C6 and C4 default to placeholder magnitudes.
struct PhysicalConstants {
    double C3;
    double C6;
    double C4;
    int nu = 43;
    std::string env_state_label = "38s";

    /// Defaults from frequency/2pi values: C3 = 1.6e3 MHz um^3, and
    /// placeholder C6 = 1.0e-3 MHz um^6, C4 = 0.1 MHz um^4 (see README).
    static PhysicalConstants defaults();
    void validate() const;
};

/// EIT parameters of the background gas (angular units, um^-2 density).
struct EitParameters {
    double Omega_c;
    double Gamma_p;
    double rho_bg = 16.0;        // atoms per um^2 (1.6e13 m^-2)
    double bg_cutoff = 0.25;     // um, exclusion radius around network atoms

    static EitParameters defaults();   // Omega_c/2pi = 30 MHz, Gamma_p/2pi = 6.1 MHz
    double V_c() const { return Omega_c * Omega_c / (2.0 * Gamma_p); }
};

/// Real symmetric dipole-dipole coupling matrix W with zero diagonal.
struct AggregateHamiltonian {
    Eigen::MatrixXd W;
    double max_abs() const { return W.cwiseAbs().maxCoeff(); }
};

/// W_nm = (1 - 3 cos^2 theta_nm) C3 / (2 |R_nm|^3), theta measured from the z
/// axis. Throws GeometryError for coincident atoms.
AggregateHamiltonian build_hamiltonian(std::span<const Vec3> positions, double C3);
AggregateHamiltonian build_hamiltonian(const NetworkRealization& real, const PhysicalConstants& consts);

enum class DecoherenceMode { none, realistic, rescaled };

std::string to_string(DecoherenceMode mode);
DecoherenceMode decoherence_mode_from_string(const std::string& s);

/// Background-gas environment of one realization together with the derived
/// diagonal operators H' = diag(h_prime) and L = diag(l).
struct EnvironmentRealization {
    DecoherenceMode mode = DecoherenceMode::none;
    std::vector<Vec2> bg_positions;
    double Omega_p = 0.0;
    double Omega_c = 0.0;
    double Gamma_p = 0.0;
    double V_c = 0.0;
    Eigen::VectorXd h_prime;
    Eigen::VectorXcd l;
    double gamma_target = 0.0;   // rescaled mode only
    double scale = 1.0;          // rescaled mode: the factor s^2 applied to the rates

    static EnvironmentRealization none(std::size_t sites);
    std::size_t sites() const { return static_cast<std::size_t>(h_prime.size()); }
};

/// Samples round(rho_bg L^2) background atoms uniformly in the box and
/// evaluates the effective operators at the input and box sites. The output
/// atoms sit outside the EIT region, so their entries are zero.
/// Background atoms within bg_cutoff of an input/box site are redrawn.
EnvironmentRealization sample_environment(const BoxLayout& box, double Omega_p, const EitParameters& eit,
                                          const PhysicalConstants& consts, std::uint64_t seed);

/// Evaluates h'_n and l_n for the given site positions and background atoms.
/// Exposed for testing; `sites` are the environment-coupled sites only.
void evaluate_effective_operators(std::span<const Vec3> sites, std::span<const Vec2> bg, double Omega_p,
                                  const EitParameters& eit, const PhysicalConstants& consts,
                                  Eigen::Ref<Eigen::VectorXd> h_prime, Eigen::Ref<Eigen::VectorXcd> l);

struct DephasingRates {
    Eigen::MatrixXd gamma;     // symmetric, zero diagonal, >= 0
    Eigen::MatrixXd epsilon;   // antisymmetric
};

/// gamma_nm = |l_n|^2 + |l_m|^2 - 2 Re[l_n l_m*], epsilon_nm = Im[l_n l_m*].
DephasingRates dephasing_rates(const Eigen::VectorXcd& l);
inline DephasingRates dephasing_rates(const EnvironmentRealization& env) { return dephasing_rates(env.l); }

/// Mean of gamma_nm over the unordered pairs of `sites`.
double mean_pair_rate(const Eigen::VectorXcd& l, std::span<const std::size_t> sites);

/// Drops H' and scales l by s so that the mean pair rate over `sites` equals
/// gamma_target. Throws std::domain_error when the current mean is zero.
EnvironmentRealization rescale_decoherence(const EnvironmentRealization& env, double gamma_target,
                                           std::span<const std::size_t> sites);

} // namespace rydnet
