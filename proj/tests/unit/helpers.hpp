#pragma once

#include <complex>
#include <cstdint>

#include <Eigen/Dense>

#include "rydnet/dynamics.hpp"
#include "rydnet/physics.hpp"
#include "rydnet/random.hpp"

namespace testutil {

inline Eigen::MatrixXd random_coupling(std::size_t n, double scale, rydnet::Rng& rng)
{
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(N, N);
    for (Eigen::Index a = 0; a < N; ++a)
        for (Eigen::Index b = a + 1; b < N; ++b)
            W(a, b) = W(b, a) = rng.uniform(-scale, scale);
    return W;
}

/// Random h' and complex l with mean pair rate of order gamma.
inline rydnet::EnvironmentRealization random_environment(std::size_t n, double h_scale, double gamma,
                                                         rydnet::Rng& rng)
{
    auto env = rydnet::EnvironmentRealization::none(n);
    env.mode = rydnet::DecoherenceMode::realistic;
    const double amp = std::sqrt(gamma / 2.0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        env.h_prime[i] = rng.uniform(-h_scale, h_scale);
        env.l[i] = std::complex<double>(rng.uniform(-amp, amp), rng.uniform(-amp, amp));
    }
    return env;
}

/// Random pure-ish state: normalised rank-2 mixture.
inline rydnet::DensityMatrix random_state(std::size_t n, rydnet::Rng& rng)
{
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXcd A(N, 2);
    for (Eigen::Index r = 0; r < N; ++r)
        for (Eigen::Index c = 0; c < 2; ++c)
            A(r, c) = std::complex<double>(rng.uniform(-1, 1), rng.uniform(-1, 1));
    Eigen::MatrixXcd rho = A * A.adjoint();
    rho /= rho.trace().real();
    return {rho};
}

} // namespace testutil
