#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "rydnet/geometry.hpp"
#include "rydnet/physics.hpp"
#include "rydnet/simd/kernels.hpp"

namespace rydnet {

/// State in the single-excitation basis {|pi_n>}.
struct DensityMatrix {
    Eigen::MatrixXcd rho;

    std::size_t sites() const { return static_cast<std::size_t>(rho.rows()); }
    double trace_error() const { return std::abs(rho.trace() - std::complex<double>(1.0, 0.0)); }
    double hermiticity_error() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }
    double min_eigenvalue() const;
    double purity() const { return (rho * rho).trace().real(); }
    double population(std::size_t site) const { return rho(static_cast<Eigen::Index>(site), static_cast<Eigen::Index>(site)).real(); }
};

/// rho = |pi_1><pi_1|: the excitation starts on the input site (index 0).
DensityMatrix initial_state(std::size_t sites);

class StabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Integrator {
    rk4,       // classical fixed-step RK4 on the full generator
    exp_rk4,   // exponential RK4, diagonal environment terms integrated exactly
};

inline constexpr double kStabilityGuard = 0.1;

struct PropagationSettings {
    double dt = 1e-4;       // requested step, us
    double t_end = 0.05;    // us
    Integrator method = Integrator::rk4;

    /// Number of fixed steps; the step actually taken is t_end / steps() <= dt.
    std::size_t steps() const;
    double step() const { return steps() == 0 ? 0.0 : t_end / static_cast<double>(steps()); }
    void validate() const;
};

/// Readout time used for datasets: 0.05, 0.08, 0.10 us at L = 10, 15, 20 um,
/// piecewise-linear in between and clamped outside.
double default_t_end(double L);

/// Largest rate the integrator has to resolve: max(|W|, gamma_max, |h'|) for
/// rk4, max |W| for exp_rk4.
double stability_bound(const AggregateHamiltonian& h, const EnvironmentRealization& env, Integrator method);

/// Throws StabilityError (naming the largest admissible dt) when
/// step() * bound > kStabilityGuard.
void check_stability(const PropagationSettings& settings, double bound);

/// Reference route: dense complex matrices and the operator form
/// -i[H_agg + H', rho] + L rho L^dag - 1/2 {L^dag L, rho}, classical RK4,
/// Hermitian re-symmetrisation after every step.
DensityMatrix propagate(const DensityMatrix& rho0, const AggregateHamiltonian& h, const EnvironmentRealization& env,
                        const PropagationSettings& settings);

/// Element-wise route: integrates
/// d rho_nm/dt = sum_k i (W_km rho_nk - W_nk rho_km) + i (h'_m - h'_n + eps_nm) rho_nm - gamma_nm rho_nm / 2
/// with classical RK4.
DensityMatrix propagate_elementwise(const DensityMatrix& rho0, const AggregateHamiltonian& h,
                                    const EnvironmentRealization& env, const PropagationSettings& settings);

/// Excitation probability on an output atom: Re rho_kk clamped to [0, 1].
/// `site` must be M+1 or M+2 (zero-based indices, see NetworkRealization).
double measure_output(const DensityMatrix& rho, std::size_t site, int M);

/// Production engine: propagates many coupling matrices that share one
/// environment, kLanes at a time, through the runtime-selected SIMD kernel.
class BatchPropagator {
public:
    BatchPropagator(const EnvironmentRealization& env, PropagationSettings settings,
                    simd::Isa isa = simd::detect_isa());

    /// Final state for every coupling matrix, each started from rho0.
    /// Checks the stability guard for every matrix before running.
    std::vector<DensityMatrix> run(std::span<const AggregateHamiltonian> couplings, const DensityMatrix& rho0) const;

    /// States of a single system after each of `sample_steps` (ascending step counts).
    std::vector<DensityMatrix> sample(const AggregateHamiltonian& coupling, const DensityMatrix& rho0,
                                      std::span<const std::size_t> sample_steps) const;

    const PropagationSettings& settings() const { return settings_; }
    simd::Isa isa() const { return isa_; }

private:
    void load_chunk(std::span<const AggregateHamiltonian> chunk, const DensityMatrix& rho0, std::vector<double>& w,
                    std::vector<double>& re, std::vector<double>& im) const;
    simd::LindbladBatch batch(const std::vector<double>& w) const;

    std::size_t sites_;
    PropagationSettings settings_;
    simd::Isa isa_;
    double env_bound_;                 // gamma_max / |h'| part of the rk4 guard
    std::vector<double> gen_re_, gen_im_;
    std::vector<double> etd_;
};

/// ETD-RK4 coefficient block for one element (see simd::LindbladBatch::etd).
std::array<std::complex<double>, 6> exp_rk4_coefficients(std::complex<double> c, double h);

struct TransportTrace {
    std::vector<double> times;
    Eigen::MatrixXd populations;   // rows: times, columns: sites

    /// Plain-text table: header line, then "t p_0 ... p_{N-1}" per row.
    void write_table(std::ostream& os) const;
};

/// Site populations at the requested times (each rounded to the nearest step).
TransportTrace transport_trace(const NetworkRealization& real, const PhysicalConstants& consts,
                               const EnvironmentRealization& env, const PropagationSettings& settings,
                               std::span<const double> sample_times);

} // namespace rydnet
