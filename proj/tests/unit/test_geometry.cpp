#include <doctest.h>

#include <cmath>
#include <numbers>

#include <json.hpp>

#include "rydnet/geometry.hpp"
#include "rydnet/random.hpp"

using namespace rydnet;

namespace {

double min_pair_distance(const std::vector<Vec2>& p)
{
    double best = INFINITY;
    for (std::size_t a = 0; a < p.size(); ++a)
        for (std::size_t b = a + 1; b < p.size(); ++b)
            best = std::min(best, distance(p[a], p[b]));
    return best;
}

int quadrant_of(Vec2 p)
{
    if (p.x >= 0 && p.y >= 0)
        return 0;
    if (p.x < 0 && p.y >= 0)
        return 1;
    if (p.x < 0)
        return 2;
    return 3;
}

} // namespace

TEST_SUITE("geometry")
{
    TEST_CASE("single atom lies in the box")
    {
        const auto b = sample_box_layout(1, 10.0, 7);
        REQUIRE(b.positions.size() == 1);
        CHECK(std::abs(b.positions[0].x) <= 5.0);
        CHECK(std::abs(b.positions[0].y) <= 5.0);
    }

    TEST_CASE("four atoms occupy one quadrant each")
    {
        for (std::uint64_t s = 0; s < 200; ++s) {
            const auto b = sample_box_layout(4, 10.0, s);
            std::array<int, 4> seen{};
            for (const auto& p : b.positions)
                ++seen[static_cast<std::size_t>(quadrant_of(p))];
            CHECK(seen == std::array<int, 4>{1, 1, 1, 1});
            CHECK(min_pair_distance(b.positions) >= 3.1);
        }
    }

    TEST_CASE("rejected first draws still yield a valid layout")
    {
        // Find seeds whose first joint draw was rejected.
        int found = 0;
        for (std::uint64_t s = 0; s < 500 && found < 20; ++s) {
            const auto b = sample_box_layout(2, 10.0, s);
            if (b.rejections == 0)
                continue;
            ++found;
            CHECK(distance(b.positions[0], b.positions[1]) >= 3.1);
        }
        CHECK(found > 0);
    }

    TEST_CASE("layout invariants hold over many seeds")
    {
        const double Ls[] = {7.0, 10.0, 15.0, 20.0};
        for (std::uint64_t s = 0; s < 12000; ++s) {
            const int M = 1 + static_cast<int>(s % 4);
            const double L = Ls[(s / 4) % 4];
            const auto b = sample_box_layout(M, L, derive_seed(99, s));
            REQUIRE(b.positions.size() == static_cast<std::size_t>(M));
            for (const auto& p : b.positions) {
                REQUIRE(std::abs(p.x) <= L / 2);
                REQUIRE(std::abs(p.y) <= L / 2);
            }
            if (M >= 2)
                REQUIRE(min_pair_distance(b.positions) >= b.min_separation);
            const auto cells = partition_cells(M, L);
            if (M != 3) {
                for (std::size_t k = 0; k < b.positions.size(); ++k) {
                    const auto& c = cells[k];
                    const auto& p = b.positions[k];
                    REQUIRE((p.x >= c.x_lo && p.x <= c.x_hi && p.y >= c.y_lo && p.y <= c.y_hi));
                }
            } else {
                std::array<int, 4> seen{};
                for (const auto& p : b.positions)
                    ++seen[static_cast<std::size_t>(quadrant_of(p))];
                REQUIRE(*std::max_element(seen.begin(), seen.end()) == 1);
            }
            REQUIRE_NOTHROW(b.validate());
        }
    }

    TEST_CASE("sampling is deterministic per seed")
    {
        const auto a = sample_box_layout(3, 10.0, 1234);
        const auto b = sample_box_layout(3, 10.0, 1234);
        CHECK(a.positions == b.positions);
        CHECK(sample_box_layout(3, 10.0, 1235).positions != a.positions);
    }

    TEST_CASE("infeasible layouts fail with a diagnostic")
    {
        CHECK_THROWS_AS(sample_box_layout(4, 5.0, 1, 3.1), std::exception);
        CHECK_THROWS_AS(sample_box_layout(0, 10.0, 1), std::exception);
        CHECK_THROWS_AS(sample_box_layout(5, 10.0, 1), std::exception);
    }

    TEST_CASE("validate rejects broken layouts")
    {
        BoxLayout b = sample_box_layout(2, 10.0, 3);
        b.positions[1] = b.positions[0] + Vec2{1.0, 0.0};
        CHECK_THROWS_AS(b.validate(), GeometryError);
        b = sample_box_layout(1, 10.0, 3);
        b.positions[0] = {6.0, 0.0};
        CHECK_THROWS_AS(b.validate(), GeometryError);
    }

    TEST_CASE("probe trajectory layout")
    {
        const auto t = probe_trajectory(10.0);
        REQUIRE(t.size() == 200);
        // configuration 0: angle -90 deg at radius 10; configuration 9: same angle at 11.8
        CHECK(t[0].r1.x == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(t[0].r1.y == doctest::Approx(-10.0).epsilon(1e-12));
        CHECK(t[9].r1.norm() == doctest::Approx(11.8).epsilon(1e-12));
        CHECK(std::atan2(t[9].r1.y, t[9].r1.x) == doctest::Approx(-std::numbers::pi / 2).epsilon(1e-12));
        CHECK(t[199].r1.y == doctest::Approx(11.8).epsilon(1e-12));
        for (std::size_t a = 0; a < t.size(); ++a) {
            CHECK(t[a].index == a);
            CHECK(t[a].r1.z == 0.0);
            CHECK(t[a].r1.x >= -1e-12);
            const double r = t[a].r1.norm();
            CHECK(r >= 10.0 - 1e-12);
            CHECK(r <= 11.8 + 1e-12);
            CHECK(t[a].r2.y == 0.0);
            CHECK(t[a].r2.z >= 10.0 - 1e-12);
            CHECK(t[a].r2.z <= 11.8 + 1e-12);
            CHECK(std::abs(t[a].r2.x) <= 10.0 + 1e-12);
        }
        CHECK(t[0].r2.x == -10.0);
        CHECK(t[190].r2.x == doctest::Approx(10.0));
    }

    TEST_CASE("probe trajectory is a pure function of L")
    {
        const auto a = probe_trajectory(13.0);
        const auto b = probe_trajectory(13.0);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].r1 == b[i].r1);
            CHECK(a[i].r2 == b[i].r2);
        }
    }

    TEST_CASE("main-text path sweeps y at half height")
    {
        const auto t = probe_trajectory(10.0, Probe2Path::y_axis);
        for (const auto& c : t) {
            CHECK(c.r2.x == 0.0);
            CHECK(c.r2.z >= 5.0 - 1e-12);
            CHECK(c.r2.z <= 6.8 + 1e-12);
        }
    }

    TEST_CASE("assembled realization index map")
    {
        const auto t = probe_trajectory(10.0);
        const auto r1 = assemble_realization(sample_box_layout(1, 10.0, 5), t[17]);
        CHECK(r1.sites() == 4);
        CHECK(r1.output_site(1) == 2);
        CHECK(r1.output_site(2) == 3);
        const auto pos = r1.positions();
        CHECK(pos[0] == Vec3{-10.0, 0.0, 0.0});
        CHECK(pos[2] == t[17].r1);
        CHECK(pos[3] == t[17].r2);
        const auto r4 = assemble_realization(sample_box_layout(4, 10.0, 5), t[3]);
        CHECK(r4.sites() == 7);
    }

    TEST_CASE("no two atoms coincide in generated realizations")
    {
        const auto t = probe_trajectory(10.0);
        for (std::uint64_t s = 0; s < 40; ++s) {
            const auto real = assemble_realization(sample_box_layout(1 + int(s % 4), 10.0, s), t[(s * 37) % 200]);
            const auto p = real.positions();
            for (std::size_t a = 0; a < p.size(); ++a)
                for (std::size_t b = a + 1; b < p.size(); ++b)
                    CHECK(distance(p[a], p[b]) > 0.0);
        }
    }

    TEST_CASE("realization round-trips through json")
    {
        const auto real = assemble_realization(sample_box_layout(3, 10.0, 11), probe_trajectory(10.0)[123]);
        const nlohmann::json j = real;
        const auto back = nlohmann::json::parse(j.dump()).get<NetworkRealization>();
        CHECK(back.box.positions == real.box.positions);
        CHECK(back.input_pos == real.input_pos);
        CHECK(back.probe.r1 == real.probe.r1);
        CHECK(back.probe.r2 == real.probe.r2);
        CHECK(back.probe.index == real.probe.index);
    }
}
