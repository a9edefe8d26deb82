#include <doctest.h>

#include "rydnet/config.hpp"
#include "rydnet/random.hpp"

using namespace rydnet;

TEST_SUITE("config")
{
    TEST_CASE("parsing and typed access")
    {
        const auto c = Config::parse("# comment\n\nL_um = 12.5\nMs = 1, 2 4\nflag = yes\nname = rf\nL_um = 15\n");
        CHECK(c.get_double("L_um", 0) == 15.0);
        CHECK(c.get_doubles("Ms", {}) == std::vector<double>{1, 2, 4});
        CHECK(c.get_bool("flag", false));
        CHECK(c.get_string("name", "") == "rf");
        CHECK(c.get_int("absent", 7) == 7);
        CHECK_FALSE(c.has("absent"));
        CHECK(c.find("name") == std::optional<std::string>{"rf"});
        CHECK(Config::parse(c.dump()).values() == c.values());
        CHECK(Config::parse("v = [1, 2, 3]\n").get_doubles("v", {}) == std::vector<double>{1, 2, 3});
    }

    TEST_CASE("malformed values")
    {
        CHECK_THROWS_AS(Config::parse("novalue\n"), ConfigError);
        const auto c = Config::parse("x = 1.5abc\nn = 2.5\nb = maybe\n");
        CHECK_THROWS_AS(c.get_double("x", 0), ConfigError);
        CHECK_THROWS_AS(c.get_int("n", 0), ConfigError);
        CHECK_THROWS_AS(c.get_bool("b", false), ConfigError);
        CHECK_THROWS_AS(Config::load("/nonexistent/rydnet.cfg"), ConfigError);
    }

    TEST_CASE("seed derivation")
    {
        CHECK(derive_seed(1, 2) == splitmix64(1 ^ splitmix64(2)));
        CHECK(derive_seed(1, 2) != derive_seed(2, 1));
        // reference output of SplitMix64 seeded with 0
        CHECK(splitmix64(0) == 0xE220A8397B1DCDAFULL);
        Rng a(5), b(5);
        for (int i = 0; i < 100; ++i) {
            const double u = a.uniform();
            CHECK(u == b.uniform());
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
        }
        Rng c(9);
        for (int i = 0; i < 1000; ++i)
            CHECK(c.index(7) < 7);
    }
}
