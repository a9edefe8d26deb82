#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "helpers.hpp"
#include "rydnet/dynamics.hpp"
#include "rydnet/units.hpp"

using namespace rydnet;
using cd = std::complex<double>;

namespace {

AggregateHamiltonian pair(double W)
{
    Eigen::MatrixXd m(2, 2);
    m << 0, W, W, 0;
    return {m};
}

std::vector<simd::Isa> available_isas()
{
    std::vector<simd::Isa> out{simd::Isa::scalar};
    for (auto isa : {simd::Isa::avx2, simd::Isa::avx512})
        if (simd::isa_supported(isa))
            out.push_back(isa);
    return out;
}

bool bitwise_equal(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b)
{
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), sizeof(cd) * static_cast<std::size_t>(a.size())) == 0;
}

} // namespace

TEST_SUITE("dynamics")
{
    TEST_CASE("initial state sits on the input site")
    {
        const auto rho = initial_state(5);
        CHECK(rho.population(0) == 1.0);
        CHECK(rho.trace_error() == 0.0);
        CHECK(rho.purity() == doctest::Approx(1.0));
    }

    TEST_CASE("two-site Rabi oscillation")
    {
        const double W = units::from_mhz(1600.0) / (2 * 125.0);
        const auto env = EnvironmentRealization::none(2);
        for (double t : {0.01, 0.025, std::numbers::pi / (2 * W), 0.05}) {
            const PropagationSettings s{1e-4, t, Integrator::rk4};
            const double expect = std::pow(std::sin(W * t), 2);
            CHECK(std::abs(propagate(initial_state(2), pair(W), env, s).population(1) - expect) < 1e-6);
            const BatchPropagator engine(env, s);
            const std::vector<AggregateHamiltonian> hs{pair(W)};
            CHECK(std::abs(engine.run(hs, initial_state(2))[0].population(1) - expect) < 1e-6);
        }
        const PropagationSettings quarter{1e-4, std::numbers::pi / (2 * W), Integrator::rk4};
        CHECK(propagate(initial_state(2), pair(W), env, quarter).population(1) == doctest::Approx(1.0).epsilon(1e-6));
    }

    TEST_CASE("operator and elementwise routes agree")
    {
        Rng rng(21);
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t n = 5 + static_cast<std::size_t>(trial % 3);
            const AggregateHamiltonian h{testutil::random_coupling(n, 50.0, rng)};
            const auto env = testutil::random_environment(n, 30.0, 40.0, rng);
            const auto rho0 = testutil::random_state(n, rng);
            const PropagationSettings s{1e-4, 0.02, Integrator::rk4};
            const auto a = propagate(rho0, h, env, s);
            const auto b = propagate_elementwise(rho0, h, env, s);
            CHECK((a.rho - b.rho).cwiseAbs().maxCoeff() <= 1e-8);
        }
    }

    TEST_CASE("batched engine matches the operator route")
    {
        Rng rng(5);
        for (auto method : {Integrator::rk4, Integrator::exp_rk4}) {
            const std::size_t n = 6;
            const auto env = testutil::random_environment(n, 30.0, 40.0, rng);
            std::vector<AggregateHamiltonian> hs;
            for (int k = 0; k < 11; ++k)
                hs.push_back({testutil::random_coupling(n, 50.0, rng)});
            const PropagationSettings s{1e-4, 0.02, method};
            const PropagationSettings ref{1e-5, 0.02, Integrator::rk4};
            const auto out = BatchPropagator(env, s).run(hs, initial_state(n));
            for (std::size_t k = 0; k < hs.size(); ++k)
                CHECK((out[k].rho - propagate(initial_state(n), hs[k], env, ref).rho).cwiseAbs().maxCoeff() <= 1e-8);
        }
    }

    TEST_CASE("state invariants across decoherence strengths")
    {
        Rng rng(77);
        for (double g : {0.0, 1.0, 1e2, 1e4}) {
            for (int trial = 0; trial < 10; ++trial) {
                const std::size_t n = 4 + static_cast<std::size_t>(trial % 4);
                const AggregateHamiltonian h{testutil::random_coupling(n, 40.0, rng)};
                const auto env = testutil::random_environment(n, g > 0 ? 20.0 : 0.0, units::from_mhz(g), rng);
                const PropagationSettings s{2e-5, 0.03, g >= 1e4 ? Integrator::exp_rk4 : Integrator::rk4};
                const std::vector<AggregateHamiltonian> hs{h};
                const auto rho = BatchPropagator(env, s).run(hs, initial_state(n))[0];
                CHECK(rho.trace_error() <= 1e-9);
                CHECK(rho.hermiticity_error() <= 1e-10);
                CHECK(rho.min_eigenvalue() >= -1e-8);
                double pop = 0;
                for (std::size_t k = 0; k < n; ++k)
                    pop += rho.population(k);
                CHECK(std::abs(pop - 1.0) <= 1e-9);
            }
        }
    }

    TEST_CASE("strong dephasing equalises a pair")
    {
        const double W = 1.0;
        auto env = EnvironmentRealization::none(2);
        env.l << cd(0, 0), cd(std::sqrt(1e3 * W), 0);   // gamma_12 = 1e3 W
        const PropagationSettings s{0.05, 3000.0, Integrator::exp_rk4};
        const std::vector<AggregateHamiltonian> hs{pair(W)};
        const auto rho = BatchPropagator(env, s).run(hs, initial_state(2))[0];
        CHECK(std::abs(rho.population(0) - 0.5) <= 1e-3);
        CHECK(std::abs(rho.population(1) - 0.5) <= 1e-3);
    }

    TEST_CASE("fourth-order convergence")
    {
        Rng rng(4);
        const std::size_t n = 5;
        const AggregateHamiltonian h{testutil::random_coupling(n, 60.0, rng)};
        const auto env = testutil::random_environment(n, 40.0, 60.0, rng);
        const auto reference = propagate(initial_state(n), h, env, {2.5e-5, 0.04, Integrator::rk4});
        for (auto method : {Integrator::rk4, Integrator::exp_rk4}) {
            const std::vector<AggregateHamiltonian> hs{h};
            const auto coarse = BatchPropagator(env, {1e-3, 0.04, method}).run(hs, initial_state(n))[0];
            const auto fine = BatchPropagator(env, {5e-4, 0.04, method}).run(hs, initial_state(n))[0];
            const double e1 = (coarse.rho - reference.rho).cwiseAbs().maxCoeff();
            const double e2 = (fine.rho - reference.rho).cwiseAbs().maxCoeff();
            const double order = std::log2(e1 / e2);
            CHECK(order > 3.6);
            CHECK(order < 4.6);
        }
    }

    TEST_CASE("stability guard")
    {
        const auto env = EnvironmentRealization::none(2);
        const std::vector<AggregateHamiltonian> hs{pair(2000.0)};
        CHECK_THROWS_AS(BatchPropagator(env, {1e-4, 0.01, Integrator::rk4}).run(hs, initial_state(2)), StabilityError);
        CHECK_NOTHROW(BatchPropagator(env, {4e-5, 0.01, Integrator::rk4}).run(hs, initial_state(2)));

        auto noisy = EnvironmentRealization::none(2);
        noisy.l << cd(0, 0), cd(300.0, 0);   // gamma = 9e4
        const std::vector<AggregateHamiltonian> weak{pair(10.0)};
        CHECK_THROWS_AS(BatchPropagator(noisy, {1e-4, 0.01, Integrator::rk4}).run(weak, initial_state(2)), StabilityError);
        CHECK_NOTHROW(BatchPropagator(noisy, {1e-4, 0.01, Integrator::exp_rk4}).run(weak, initial_state(2)));
    }

    TEST_CASE("propagation settings")
    {
        CHECK(PropagationSettings{1e-4, 0.05}.steps() == 500);
        CHECK(PropagationSettings{0.03, 0.1}.steps() == 4);
        CHECK(PropagationSettings{0.03, 0.1}.step() <= 0.03);
        CHECK_THROWS(PropagationSettings{0.0, 0.1}.validate());
        CHECK(default_t_end(10.0) == doctest::Approx(0.05));
        CHECK(default_t_end(15.0) == doctest::Approx(0.08));
        CHECK(default_t_end(20.0) == doctest::Approx(0.10));
    }

    TEST_CASE("output measurement")
    {
        DensityMatrix rho{Eigen::MatrixXcd::Zero(5, 5)};
        rho.rho(3, 3) = 0.25;
        rho.rho(4, 4) = -1e-14;
        CHECK(measure_output(rho, 3, 2) == 0.25);
        CHECK(measure_output(rho, 4, 2) == 0.0);
        CHECK_THROWS(measure_output(rho, 1, 2));
    }

    TEST_CASE("kernel variants agree bit for bit")
    {
        Rng rng(12);
        for (auto method : {Integrator::rk4, Integrator::exp_rk4}) {
            const std::size_t n = 7;
            const auto env = testutil::random_environment(n, 30.0, 200.0, rng);
            std::vector<AggregateHamiltonian> hs;
            for (int k = 0; k < 13; ++k)
                hs.push_back({testutil::random_coupling(n, 60.0, rng)});
            const PropagationSettings s{1e-4, 0.01, method};
            const auto ref = BatchPropagator(env, s, simd::Isa::scalar).run(hs, initial_state(n));
            for (auto isa : available_isas()) {
                const auto out = BatchPropagator(env, s, isa).run(hs, initial_state(n));
                for (std::size_t k = 0; k < hs.size(); ++k)
                    CHECK(bitwise_equal(out[k].rho, ref[k].rho));
            }
        }
    }

    TEST_CASE("distance kernel variants agree bit for bit")
    {
        Rng rng(2);
        for (std::size_t dim : {1u, 7u, 8u, 31u, 400u}) {
            const std::size_t rows = 19;
            std::vector<double> q(dim), x(rows * dim);
            for (auto& v : q)
                v = rng.uniform(-2, 2);
            for (auto& v : x)
                v = rng.uniform(-2, 2);
            std::vector<double> ref(rows);
            simd::squared_distances(simd::Isa::scalar, q.data(), x.data(), rows, dim, ref.data());
            for (std::size_t r = 0; r < rows; ++r) {
                double direct = 0;
                for (std::size_t j = 0; j < dim; ++j)
                    direct += (q[j] - x[r * dim + j]) * (q[j] - x[r * dim + j]);
                CHECK(ref[r] == doctest::Approx(direct).epsilon(1e-13));
            }
            for (auto isa : available_isas()) {
                std::vector<double> out(rows);
                simd::squared_distances(isa, q.data(), x.data(), rows, dim, out.data());
                CHECK(std::memcmp(out.data(), ref.data(), rows * sizeof(double)) == 0);
            }
        }
    }

    TEST_CASE("isa names round trip")
    {
        for (auto isa : {simd::Isa::scalar, simd::Isa::avx2, simd::Isa::avx512})
            CHECK(simd::isa_from_string(simd::isa_name(isa)) == isa);
        CHECK_THROWS(simd::isa_from_string("sse9"));
    }

    TEST_CASE("sampled states follow the final state")
    {
        Rng rng(31);
        const std::size_t n = 5;
        const AggregateHamiltonian h{testutil::random_coupling(n, 40.0, rng)};
        const auto env = testutil::random_environment(n, 10.0, 20.0, rng);
        const BatchPropagator engine(env, {1e-4, 0.02, Integrator::rk4});
        const std::size_t steps[] = {0, 50, 200};
        const auto states = engine.sample(h, initial_state(n), steps);
        REQUIRE(states.size() == 3);
        CHECK(states[0].population(0) == 1.0);
        const auto direct = BatchPropagator(env, {1e-4, 0.02, Integrator::rk4}).run(std::vector{h}, initial_state(n));
        CHECK((states[2].rho - direct[0].rho).cwiseAbs().maxCoeff() <= 1e-12);
    }

    TEST_CASE("transport trace table")
    {
        const auto real = assemble_realization(sample_box_layout(2, 10.0, 3), probe_trajectory(10.0)[50]);
        const auto env = EnvironmentRealization::none(real.sites());
        const double times[] = {0.0, 0.01, 0.02};
        const auto tr = transport_trace(real, PhysicalConstants::defaults(), env, {1e-4, 0.02, Integrator::rk4}, times);
        CHECK(tr.populations.rows() == 3);
        CHECK(tr.populations.cols() == 5);
        CHECK(tr.populations(0, 0) == 1.0);
        for (Eigen::Index r = 0; r < 3; ++r)
            CHECK(tr.populations.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
        std::ostringstream os;
        tr.write_table(os);
        const std::string text = os.str();
        CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    }
}
