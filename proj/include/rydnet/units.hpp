#pragma once

#include <numbers>

// Lengths are in micrometres, times in microseconds. Energies and rates are
// stored as angular frequencies in rad/us (hbar = 1). Configuration values
// quoted as frequency/2pi in MHz are converted with from_mhz().
namespace rydnet::units {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

constexpr double from_mhz(double nu_over_2pi_mhz) noexcept { return two_pi * nu_over_2pi_mhz; }
constexpr double to_mhz(double angular) noexcept { return angular / two_pi; }

} // namespace rydnet::units
