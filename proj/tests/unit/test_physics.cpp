#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "helpers.hpp"
#include "rydnet/config.hpp"
#include "rydnet/physics.hpp"
#include "rydnet/units.hpp"

using namespace rydnet;
using cd = std::complex<double>;

TEST_SUITE("physics")
{
    TEST_CASE("axial and planar pairs")
    {
        const double C3 = 7.0;
        const Vec3 axial[] = {{0, 0, 0}, {0, 0, 2}};
        CHECK(build_hamiltonian(axial, C3).W(0, 1) == doctest::Approx(-C3 / 8.0).epsilon(1e-14));
        const Vec3 planar[] = {{0, 0, 0}, {2, 0, 0}};
        CHECK(build_hamiltonian(planar, C3).W(0, 1) == doctest::Approx(C3 / 16.0).epsilon(1e-14));
    }

    TEST_CASE("three-atom coupling matrix")
    {
        const Vec3 p[] = {{0, 0, 0}, {5, 0, 0}, {0, 5, 0}};
        const auto W = build_hamiltonian(p, units::from_mhz(1000.0)).W;
        const double w01 = 25.132741228718345, w12 = 8.88576587631673;
        CHECK(W(0, 1) == doctest::Approx(w01).epsilon(1e-13));
        CHECK(W(0, 2) == doctest::Approx(w01).epsilon(1e-13));
        CHECK(W(1, 2) == doctest::Approx(w12).epsilon(1e-13));
        CHECK((W - W.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(W.diagonal().cwiseAbs().maxCoeff() == 0.0);
    }

    TEST_CASE("magic angle coupling vanishes")
    {
        const double c = 1.0 / std::sqrt(3.0), s = std::sqrt(2.0 / 3.0);
        const Vec3 p[] = {{0, 0, 0}, {3 * s, 0, 3 * c}};
        CHECK(std::abs(build_hamiltonian(p, 1000.0).W(0, 1)) < 1e-12);
    }

    TEST_CASE("coincident atoms are rejected")
    {
        const Vec3 p[] = {{1, 1, 0}, {1, 1, 0}};
        CHECK_THROWS_AS(build_hamiltonian(p, 1.0), GeometryError);
    }

    TEST_CASE("coupling is invariant under translation and z rotation")
    {
        Rng rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<Vec3> p(6), q(6);
            const double phi = rng.uniform(0, 2 * std::numbers::pi);
            const Vec3 shift{rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20)};
            for (std::size_t k = 0; k < p.size(); ++k) {
                p[k] = {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-3, 3)};
                q[k] = Vec3{std::cos(phi) * p[k].x - std::sin(phi) * p[k].y,
                            std::sin(phi) * p[k].x + std::cos(phi) * p[k].y, p[k].z} + shift;
            }
            const auto A = build_hamiltonian(p, 100.0).W;
            const auto B = build_hamiltonian(q, 100.0).W;
            CHECK((A - B).cwiseAbs().maxCoeff() <= 1e-12 * A.cwiseAbs().maxCoeff());
        }
    }

    TEST_CASE("effective operators for a single site")
    {
        EitParameters eit = EitParameters::defaults();
        PhysicalConstants consts = PhysicalConstants::defaults();
        consts.C4 = units::from_mhz(1000.0);
        const Vec3 site[] = {{0, 0, 0}};
        const Vec2 bg[] = {{2, 0}};
        Eigen::VectorXd h(1);
        Eigen::VectorXcd l(1);
        evaluate_effective_operators(site, bg, units::from_mhz(5.0), eit, consts, h, l);
        CHECK(eit.V_c() == doctest::Approx(463.5136702017727).epsilon(1e-13));
        CHECK(h[0] == doctest::Approx(6.350215358182625).epsilon(1e-12));
        CHECK(l[0].real() == doctest::Approx(2.502784338459329).epsilon(1e-12));
        CHECK(l[0].imag() == doctest::Approx(-2.1204145089724875).epsilon(1e-12));
    }

    TEST_CASE("effective operators mix s and p shifts")
    {
        EitParameters eit = EitParameters::defaults();
        PhysicalConstants consts = PhysicalConstants::defaults();
        consts.C4 = units::from_mhz(1000.0);
        consts.C6 = units::from_mhz(50.0);
        const Vec3 sites[] = {{0, 0, 0}, {4, 0, 0}};
        const Vec2 bg[] = {{2, 1}};
        Eigen::VectorXd h(2);
        Eigen::VectorXcd l(2);
        evaluate_effective_operators(sites, bg, units::from_mhz(5.0), eit, consts, h, l);
        for (int n = 0; n < 2; ++n) {
            CHECK(h[n] == doctest::Approx(5.424303303723922).epsilon(1e-12));
            CHECK(l[n].real() == doctest::Approx(2.1378584173716466).epsilon(1e-12));
            CHECK(l[n].imag() == doctest::Approx(-1.1707862852823745).epsilon(1e-12));
        }
    }

    TEST_CASE("no or distant background atoms give vanishing operators")
    {
        const auto eit = EitParameters::defaults();
        const auto consts = PhysicalConstants::defaults();
        const Vec3 site[] = {{0, 0, 0}};
        Eigen::VectorXd h(1);
        Eigen::VectorXcd l(1);
        evaluate_effective_operators(site, std::span<const Vec2>{}, 1.0, eit, consts, h, l);
        CHECK(h[0] == 0.0);
        CHECK(l[0] == cd(0.0));
        const Vec2 far[] = {{1e4, 0}};
        evaluate_effective_operators(site, far, 1.0, eit, consts, h, l);
        CHECK(std::abs(h[0]) < 1e-12);
        CHECK(std::abs(l[0]) < 1e-12);
    }

    TEST_CASE("sampled environments")
    {
        const auto eit = EitParameters::defaults();
        const auto consts = PhysicalConstants::defaults();
        const double Omega_p = units::from_mhz(7.0);
        for (std::uint64_t s = 0; s < 10; ++s) {
            const auto box = sample_box_layout(1 + int(s % 4), 10.0, s);
            const auto env = sample_environment(box, Omega_p, eit, consts, derive_seed(s, 2));
            CHECK(env.bg_positions.size() == 1600);
            CHECK(env.sites() == static_cast<std::size_t>(box.M) + 3);
            // output sites are not coupled
            CHECK(env.h_prime.tail(2).cwiseAbs().maxCoeff() == 0.0);
            CHECK(env.l.tail(2).cwiseAbs().maxCoeff() == 0.0);
            for (const auto& x : env.bg_positions) {
                CHECK(std::abs(x.x) <= 5.0);
                CHECK(std::abs(x.y) <= 5.0);
                for (const auto& p : box.positions)
                    CHECK(distance(x, p) >= eit.bg_cutoff);
            }
            const double bound = 1600.0 * (Omega_p * Omega_p / (eit.Omega_c * eit.Omega_c)) * eit.V_c() / 2.0;
            CHECK(env.h_prime.cwiseAbs().maxCoeff() <= bound);
            const auto again = sample_environment(box, Omega_p, eit, consts, derive_seed(s, 2));
            CHECK(again.h_prime == env.h_prime);
            CHECK(again.l == env.l);
        }
    }

    TEST_CASE("background count scales with area")
    {
        const auto env = sample_environment(sample_box_layout(2, 20.0, 4), 1.0, EitParameters::defaults(),
                                            PhysicalConstants::defaults(), 9);
        CHECK(env.bg_positions.size() == 6400);
    }

    TEST_CASE("dephasing rates by hand")
    {
        Eigen::VectorXcd l(2);
        l << cd(1, 0), cd(0, 1);
        const auto r = dephasing_rates(l);
        CHECK(r.gamma(0, 1) == doctest::Approx(2.0));
        CHECK(r.epsilon(0, 1) == doctest::Approx(-1.0));
        CHECK(r.epsilon(1, 0) == doctest::Approx(1.0));
        l << cd(0.3, -0.2), cd(0.3, -0.2);
        CHECK(dephasing_rates(l).gamma(0, 1) == 0.0);
    }

    TEST_CASE("dephasing identity and structure")
    {
        Rng rng(8);
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::VectorXcd l(6);
            for (auto& v : l)
                v = cd(rng.uniform(-3, 3), rng.uniform(-3, 3));
            const auto r = dephasing_rates(l);
            for (int a = 0; a < 6; ++a) {
                CHECK(r.gamma(a, a) == 0.0);
                for (int b = 0; b < 6; ++b) {
                    if (a != b)
                        CHECK(r.gamma(a, b) == doctest::Approx(std::norm(l[a] - l[b])).epsilon(1e-12));
                    CHECK(r.gamma(a, b) >= 0.0);
                    CHECK(r.gamma(a, b) == r.gamma(b, a));
                    CHECK(r.epsilon(a, b) == -r.epsilon(b, a));
                }
            }
        }
    }

    TEST_CASE("rescaling to a target mean rate")
    {
        auto env = EnvironmentRealization::none(3);
        env.mode = DecoherenceMode::realistic;
        env.h_prime << 1.0, 2.0, 3.0;
        env.l << cd(0, 0), cd(1, 0), cd(0, 1);
        const std::vector<std::size_t> sites{0, 1, 2};
        const auto out = rescale_decoherence(env, units::from_mhz(10.0), sites);
        CHECK(out.mode == DecoherenceMode::rescaled);
        CHECK(out.h_prime.cwiseAbs().maxCoeff() == 0.0);
        CHECK(out.scale == doctest::Approx(47.1238898038469).epsilon(1e-13));
        CHECK(out.l[2].imag() == doctest::Approx(6.864684246478268).epsilon(1e-13));
        CHECK(mean_pair_rate(out.l, sites) == doctest::Approx(units::from_mhz(10.0)).epsilon(1e-12));

        const double current = mean_pair_rate(env.l, sites);
        CHECK(rescale_decoherence(env, current, sites).l.isApprox(env.l, 1e-15));
        CHECK(rescale_decoherence(env, 4 * current, sites).l.isApprox(2.0 * env.l, 1e-15));
    }

    TEST_CASE("rescaled environments hit the target over box sites")
    {
        const auto eit = EitParameters::defaults();
        const auto consts = PhysicalConstants::defaults();
        for (std::uint64_t s = 0; s < 12; ++s) {
            const int M = 2 + int(s % 3);
            const auto box = sample_box_layout(M, 10.0, s);
            const auto env = sample_environment(box, 3.0, eit, consts, s);
            std::vector<std::size_t> sites;
            for (int k = 1; k <= M; ++k)
                sites.push_back(static_cast<std::size_t>(k));
            for (double g : {1.0, 100.0, 1e4}) {
                const auto out = rescale_decoherence(env, units::from_mhz(g), sites);
                const auto rates = dephasing_rates(out);
                double sum = 0;
                int pairs = 0;
                for (std::size_t a = 0; a < sites.size(); ++a)
                    for (std::size_t b = a + 1; b < sites.size(); ++b, ++pairs)
                        sum += rates.gamma(static_cast<Eigen::Index>(sites[a]), static_cast<Eigen::Index>(sites[b]));
                CHECK(std::abs(sum / pairs - units::from_mhz(g)) <= 1e-10 * units::from_mhz(g));
            }
        }
    }

    TEST_CASE("rescaling needs distinct couplings")
    {
        auto env = EnvironmentRealization::none(3);
        env.l << cd(1, 1), cd(1, 1), cd(1, 1);
        const std::vector<std::size_t> sites{0, 1, 2};
        CHECK_THROWS_AS(rescale_decoherence(env, 1.0, sites), std::domain_error);
    }

    TEST_CASE("constants from configuration")
    {
        const auto cfg = Config::parse("C3_MHz_um3 = 1000\nC6_MHz_um6 = 2\nOmega_c_MHz = 20\n");
        const auto c = physical_constants(cfg);
        CHECK(c.C3 == doctest::Approx(units::from_mhz(1000)));
        CHECK(c.C6 == doctest::Approx(units::from_mhz(2)));
        CHECK(c.C4 == doctest::Approx(PhysicalConstants::defaults().C4));
        CHECK(eit_parameters(cfg).Omega_c == doctest::Approx(units::from_mhz(20)));
        CHECK_THROWS_AS(physical_constants(Config::parse("C3_MHz_um3 = 0\n")), std::exception);
        CHECK_THROWS_AS(physical_constants(Config::parse("C3_MHz_um3 = abc\n")), ConfigError);
    }
}
