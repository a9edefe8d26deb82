#include "rydnet/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace rydnet {

using cplx = std::complex<double>;

double DensityMatrix::min_eigenvalue() const
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(rho, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

DensityMatrix initial_state(std::size_t sites)
{
    if (sites < 2)
        throw std::invalid_argument("initial_state: need at least two sites");
    const auto n = static_cast<Eigen::Index>(sites);
    DensityMatrix d{Eigen::MatrixXcd::Zero(n, n)};
    d.rho(0, 0) = 1.0;
    return d;
}

std::size_t PropagationSettings::steps() const
{
    if (!(dt > 0.0) || !(t_end >= 0.0))
        return 0;
    return static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
}

void PropagationSettings::validate() const
{
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw std::invalid_argument("propagation: dt must be positive");
    if (!(t_end >= 0.0) || !std::isfinite(t_end))
        throw std::invalid_argument("propagation: t_end must be non-negative");
}

double default_t_end(double L)
{
    if (L <= 10.0)
        return 0.05;
    if (L <= 15.0)
        return 0.05 + (L - 10.0) / 5.0 * 0.03;
    if (L <= 20.0)
        return 0.08 + (L - 15.0) / 5.0 * 0.02;
    return 0.10;
}

double stability_bound(const AggregateHamiltonian& h, const EnvironmentRealization& env, Integrator method)
{
    double bound = h.W.size() ? h.max_abs() : 0.0;
    if (method == Integrator::rk4) {
        if (env.h_prime.size())
            bound = std::max(bound, env.h_prime.cwiseAbs().maxCoeff());
        if (env.l.size())
            bound = std::max(bound, dephasing_rates(env.l).gamma.maxCoeff());
    }
    return bound;
}

void check_stability(const PropagationSettings& settings, double bound)
{
    const double h = settings.step();
    if (h * bound > kStabilityGuard * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "stability guard violated: dt * rate = " << h * bound << " > " << kStabilityGuard
            << "; use dt <= " << kStabilityGuard / bound << " us";
        throw StabilityError(msg.str());
    }
}

namespace {

void check_dimensions(const DensityMatrix& rho0, const AggregateHamiltonian& h, const EnvironmentRealization& env)
{
    const auto n = rho0.rho.rows();
    if (rho0.rho.cols() != n || h.W.rows() != n || h.W.cols() != n || env.h_prime.size() != n || env.l.size() != n)
        throw std::invalid_argument("propagation: operator dimensions disagree");
}

void symmetrize(Eigen::MatrixXcd& rho)
{
    const Eigen::MatrixXcd adj = rho.adjoint();
    rho = 0.5 * (rho + adj);
}

template <class Rhs>
void rk4_loop(Eigen::MatrixXcd& rho, double h, std::size_t steps, Rhs&& rhs)
{
    Eigen::MatrixXcd k1, k2, k3, k4;
    for (std::size_t s = 0; s < steps; ++s) {
        k1 = rhs(rho);
        k2 = rhs(rho + 0.5 * h * k1);
        k3 = rhs(rho + 0.5 * h * k2);
        k4 = rhs(rho + h * k3);
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        symmetrize(rho);
    }
}

} // namespace

DensityMatrix propagate(const DensityMatrix& rho0, const AggregateHamiltonian& h, const EnvironmentRealization& env,
                        const PropagationSettings& settings)
{
    settings.validate();
    check_dimensions(rho0, h, env);
    if (settings.method != Integrator::rk4)
        throw std::invalid_argument("propagate: the dense reference route integrates with classical RK4 only");
    check_stability(settings, stability_bound(h, env, Integrator::rk4));

    const Eigen::MatrixXcd H = h.W.cast<cplx>() + env.h_prime.cast<cplx>().asDiagonal().toDenseMatrix();
    const Eigen::MatrixXcd Lop = env.l.asDiagonal().toDenseMatrix();
    const Eigen::MatrixXcd Ldag = Lop.adjoint();
    const Eigen::MatrixXcd LdagL = Ldag * Lop;
    const cplx minus_i(0.0, -1.0);

    auto rhs = [&](const Eigen::MatrixXcd& r) -> Eigen::MatrixXcd {
        return minus_i * (H * r - r * H) + Lop * r * Ldag - 0.5 * (LdagL * r + r * LdagL);
    };
    DensityMatrix out = rho0;
    rk4_loop(out.rho, settings.step(), settings.steps(), rhs);
    return out;
}

DensityMatrix propagate_elementwise(const DensityMatrix& rho0, const AggregateHamiltonian& h,
                                    const EnvironmentRealization& env, const PropagationSettings& settings)
{
    settings.validate();
    check_dimensions(rho0, h, env);
    if (settings.method != Integrator::rk4)
        throw std::invalid_argument("propagate_elementwise: classical RK4 only");
    check_stability(settings, stability_bound(h, env, Integrator::rk4));

    const auto n = rho0.rho.rows();
    const DephasingRates rates = dephasing_rates(env.l);
    const Eigen::MatrixXd& W = h.W;
    const cplx I(0.0, 1.0);

    auto rhs = [&](const Eigen::MatrixXcd& r) -> Eigen::MatrixXcd {
        Eigen::MatrixXcd d(n, n);
        for (Eigen::Index a = 0; a < n; ++a) {
            for (Eigen::Index b = 0; b < n; ++b) {
                cplx s = 0.0;
                for (Eigen::Index k = 0; k < n; ++k)
                    s += W(k, b) * r(a, k) - W(a, k) * r(k, b);
                d(a, b) = I * s + I * (env.h_prime[b] - env.h_prime[a] + rates.epsilon(a, b)) * r(a, b)
                          - 0.5 * rates.gamma(a, b) * r(a, b);
            }
        }
        return d;
    };
    DensityMatrix out = rho0;
    rk4_loop(out.rho, settings.step(), settings.steps(), rhs);
    return out;
}

double measure_output(const DensityMatrix& rho, std::size_t site, int M)
{
    const auto first = static_cast<std::size_t>(M) + 1;
    if (site != first && site != first + 1)
        throw std::out_of_range("measure_output: site " + std::to_string(site) + " is not an output atom for M=" + std::to_string(M));
    if (site >= rho.sites())
        throw std::out_of_range("measure_output: site index exceeds the state dimension");
    return std::clamp(rho.population(site), 0.0, 1.0);
}

namespace {

// phi_0..phi_3 of the exponential integrator.
std::array<cplx, 4> phi_functions(cplx z)
{
    std::array<cplx, 4> phi{};
    if (std::abs(z) < 1.0) {
        // phi_k(z) = sum_j z^j / (j + k)!
        for (int k = 0; k < 4; ++k) {
            double fact = 1.0;
            for (int i = 2; i <= k; ++i)
                fact *= i;
            cplx term = 1.0 / fact;
            cplx sum = term;
            for (int j = 1; j < 30; ++j) {
                term *= z / static_cast<double>(j + k);
                sum += term;
            }
            phi[static_cast<std::size_t>(k)] = sum;
        }
    } else {
        phi[0] = std::exp(z);
        phi[1] = (phi[0] - 1.0) / z;
        phi[2] = (phi[1] - 1.0) / z;
        phi[3] = (phi[2] - 0.5) / z;
    }
    return phi;
}

} // namespace

std::array<cplx, 6> exp_rk4_coefficients(cplx c, double h)
{
    const auto full = phi_functions(c * h);
    const auto half = phi_functions(c * (0.5 * h));
    return {full[0], half[0], 0.5 * h * half[1], h * (full[1] - 3.0 * full[2] + 4.0 * full[3]),
            h * (full[2] - 2.0 * full[3]), h * (4.0 * full[3] - full[2])};
}

BatchPropagator::BatchPropagator(const EnvironmentRealization& env, PropagationSettings settings, simd::Isa isa)
    : sites_(env.sites()), settings_(settings), isa_(isa)
{
    settings_.validate();
    if (sites_ < 2)
        throw std::invalid_argument("BatchPropagator: need at least two sites");
    const std::size_t n = sites_;
    const double h = settings_.step();
    gen_re_.assign(n * n, 0.0);
    gen_im_.assign(n * n, 0.0);
    etd_.assign(n * n * 12, 0.0);
    env_bound_ = 0.0;
    if (env.h_prime.size())
        env_bound_ = std::max(env_bound_, env.h_prime.cwiseAbs().maxCoeff());
    if (env.l.size())
        env_bound_ = std::max(env_bound_, dephasing_rates(env.l).gamma.maxCoeff());

    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            const auto ia = static_cast<Eigen::Index>(a);
            const auto ib = static_cast<Eigen::Index>(b);
            // c_nm = i (h'_m - h'_n) + l_n l_m^* - (|l_n|^2 + |l_m|^2) / 2
            const cplx c = cplx(0.0, env.h_prime[ib] - env.h_prime[ia]) + env.l[ia] * std::conj(env.l[ib])
                           - 0.5 * (std::norm(env.l[ia]) + std::norm(env.l[ib]));
            const std::size_t e = a * n + b;
            gen_re_[e] = c.real();
            gen_im_[e] = c.imag();
            if (settings_.method == Integrator::exp_rk4 && h > 0.0) {
                const auto co = exp_rk4_coefficients(c, h);
                for (std::size_t j = 0; j < 6; ++j) {
                    etd_[e * 12 + 2 * j] = co[j].real();
                    etd_[e * 12 + 2 * j + 1] = co[j].imag();
                }
            }
        }
    }
}

simd::LindbladBatch BatchPropagator::batch(const std::vector<double>& w) const
{
    simd::LindbladBatch op;
    op.sites = sites_;
    op.coupling = w.data();
    op.gen_re = gen_re_.data();
    op.gen_im = gen_im_.data();
    op.etd = etd_.data();
    op.dt = settings_.step();
    op.scheme = settings_.method == Integrator::rk4 ? simd::Scheme::rk4 : simd::Scheme::exp_rk4;
    return op;
}

void BatchPropagator::load_chunk(std::span<const AggregateHamiltonian> chunk, const DensityMatrix& rho0,
                                 std::vector<double>& w, std::vector<double>& re, std::vector<double>& im) const
{
    constexpr std::size_t L = simd::kLanes;
    const std::size_t n = sites_;
    w.assign(n * n * L, 0.0);
    re.assign(n * n * L, 0.0);
    im.assign(n * n * L, 0.0);
    for (std::size_t lane = 0; lane < L; ++lane) {
        // Idle lanes replay the last system; their results are discarded.
        const auto& H = chunk[std::min(lane, chunk.size() - 1)];
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t e = (a * n + b) * L + lane;
                const auto ia = static_cast<Eigen::Index>(a);
                const auto ib = static_cast<Eigen::Index>(b);
                w[e] = H.W(ia, ib);
                re[e] = rho0.rho(ia, ib).real();
                im[e] = rho0.rho(ia, ib).imag();
            }
        }
    }
}

namespace {

DensityMatrix extract_lane(std::size_t n, const std::vector<double>& re, const std::vector<double>& im, std::size_t lane)
{
    constexpr std::size_t L = simd::kLanes;
    const auto ni = static_cast<Eigen::Index>(n);
    DensityMatrix d{Eigen::MatrixXcd(ni, ni)};
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            const std::size_t e = (a * n + b) * L + lane;
            d.rho(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = cplx(re[e], im[e]);
        }
    return d;
}

} // namespace

std::vector<DensityMatrix> BatchPropagator::run(std::span<const AggregateHamiltonian> couplings,
                                                const DensityMatrix& rho0) const
{
    if (rho0.sites() != sites_)
        throw std::invalid_argument("BatchPropagator: initial state dimension differs from the environment");
    for (const auto& H : couplings) {
        if (static_cast<std::size_t>(H.W.rows()) != sites_ || static_cast<std::size_t>(H.W.cols()) != sites_)
            throw std::invalid_argument("BatchPropagator: coupling dimension differs from the environment");
        const double bound = settings_.method == Integrator::rk4 ? std::max(H.max_abs(), env_bound_) : H.max_abs();
        check_stability(settings_, bound);
    }

    std::vector<DensityMatrix> out;
    out.reserve(couplings.size());
    std::vector<double> w, re, im;
    const std::size_t steps = settings_.steps();
    for (std::size_t first = 0; first < couplings.size(); first += simd::kLanes) {
        const std::size_t count = std::min(simd::kLanes, couplings.size() - first);
        load_chunk(couplings.subspan(first, count), rho0, w, re, im);
        const auto op = batch(w);
        simd::lindblad_advance(isa_, op, re.data(), im.data(), steps);
        for (std::size_t lane = 0; lane < count; ++lane)
            out.push_back(extract_lane(sites_, re, im, lane));
    }
    return out;
}

std::vector<DensityMatrix> BatchPropagator::sample(const AggregateHamiltonian& coupling, const DensityMatrix& rho0,
                                                   std::span<const std::size_t> sample_steps) const
{
    const double bound = settings_.method == Integrator::rk4 ? std::max(coupling.max_abs(), env_bound_) : coupling.max_abs();
    check_stability(settings_, bound);
    std::vector<double> w, re, im;
    load_chunk(std::span<const AggregateHamiltonian>(&coupling, 1), rho0, w, re, im);
    const auto op = batch(w);
    std::vector<DensityMatrix> out;
    std::size_t done = 0;
    for (std::size_t target : sample_steps) {
        if (target < done)
            throw std::invalid_argument("BatchPropagator::sample: sample steps must be ascending");
        simd::lindblad_advance(isa_, op, re.data(), im.data(), target - done);
        done = target;
        out.push_back(extract_lane(sites_, re, im, 0));
    }
    return out;
}

void TransportTrace::write_table(std::ostream& os) const
{
    os << "# t_us";
    for (Eigen::Index s = 0; s < populations.cols(); ++s)
        os << " p" << s;
    os << '\n';
    os << std::setprecision(10);
    for (std::size_t r = 0; r < times.size(); ++r) {
        os << times[r];
        for (Eigen::Index s = 0; s < populations.cols(); ++s)
            os << ' ' << populations(static_cast<Eigen::Index>(r), s);
        os << '\n';
    }
}

TransportTrace transport_trace(const NetworkRealization& real, const PhysicalConstants& consts,
                               const EnvironmentRealization& env, const PropagationSettings& settings,
                               std::span<const double> sample_times)
{
    const AggregateHamiltonian H = build_hamiltonian(real, consts);
    const double h = settings.step();
    std::vector<std::size_t> steps;
    for (double t : sample_times) {
        if (t < 0.0 || t > settings.t_end * (1.0 + 1e-12))
            throw std::invalid_argument("transport_trace: sample time outside [0, t_end]");
        steps.push_back(h > 0.0 ? static_cast<std::size_t>(std::llround(t / h)) : 0);
    }
    if (!std::is_sorted(steps.begin(), steps.end()))
        throw std::invalid_argument("transport_trace: sample times must be ascending");

    const BatchPropagator engine(env, settings);
    const auto states = engine.sample(H, initial_state(real.sites()), steps);
    TransportTrace trace;
    const auto n = static_cast<Eigen::Index>(real.sites());
    trace.populations.resize(static_cast<Eigen::Index>(states.size()), n);
    for (std::size_t r = 0; r < states.size(); ++r) {
        trace.times.push_back(static_cast<double>(steps[r]) * h);
        for (Eigen::Index s = 0; s < n; ++s)
            trace.populations(static_cast<Eigen::Index>(r), s) = states[r].rho(s, s).real();
    }
    return trace;
}

} // namespace rydnet
