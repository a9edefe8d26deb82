#include <doctest.h>

#include <sstream>

#include "rydnet/evaluate.hpp"
#include "rydnet/random.hpp"

using namespace rydnet;

TEST_SUITE("evaluate")
{
    TEST_CASE("greedy pairing and the worked example")
    {
        const std::vector<Vec2> actual{{0, 0}, {3, 0}};
        const std::vector<Vec2> pred{{1, 0}, {3, 4}};
        const auto a = assign_predictions(actual, pred);
        CHECK(a.prediction_of == std::vector<std::size_t>{0, 1});
        CHECK(a.total_distance == doctest::Approx(5.0));
        CHECK(mean_pair_distance(actual) == 3.0);
        CHECK(mre(actual, pred) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
        // order of predictions does not matter here
        const std::vector<Vec2> swapped{{3, 4}, {1, 0}};
        CHECK(mre(actual, swapped) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    }

    TEST_CASE("greedy and optimal assignment can differ")
    {
        const std::vector<Vec2> actual{{0, 0}, {2, 0}};
        const std::vector<Vec2> pred{{1.1, 0}, {-3, 0}};
        // greedy: atom 0 takes (1.1, 0), atom 1 is left with (-3, 0): 1.1 + 5
        CHECK(assign_predictions(actual, pred, AssignmentRule::greedy).total_distance == doctest::Approx(6.1));
        // optimal: 3 + 0.9
        CHECK(assign_predictions(actual, pred, AssignmentRule::optimal).total_distance == doctest::Approx(3.9));
    }

    TEST_CASE("mae and argument checks")
    {
        const std::vector<Vec2> one{{0, 0}}, off{{3, 4}};
        CHECK(mae(one, one) == 0.0);
        CHECK(mae(one, off) == 5.0);
        CHECK_THROWS_AS(mre(one, off), std::invalid_argument);
        const std::vector<Vec2> two{{0, 0}, {1, 1}};
        CHECK_THROWS_AS(mae(two, two), std::invalid_argument);
        CHECK(mre(two, two) == 0.0);
        CHECK_THROWS(mre(two, one));
    }

    TEST_CASE("mre is scale invariant")
    {
        Rng rng(3);
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t M = 2 + static_cast<std::size_t>(trial % 3);
            std::vector<Vec2> a(M), p(M), a2(M), p2(M);
            const double lambda = rng.uniform(0.01, 100.0);
            for (std::size_t k = 0; k < M; ++k) {
                a[k] = {rng.uniform(-5, 5), rng.uniform(-5, 5)};
                p[k] = {rng.uniform(-5, 5), rng.uniform(-5, 5)};
                a2[k] = lambda * a[k];
                p2[k] = lambda * p[k];
            }
            CHECK(mre(a, p) >= 0.0);
            CHECK(mre(a2, p2) == doctest::Approx(mre(a, p)).epsilon(1e-12));
        }
    }

    TEST_CASE("random-prediction ceilings")
    {
        const auto c = mre_max(2, 10.0, 1000, 7);
        CHECK(c.draws == 1000);
        CHECK(c.value > 0.3);
        CHECK(c.value < 1.5);
        const auto again = mre_max(2, 10.0, 1000, 7);
        CHECK(again.value == c.value);
        const auto big = mre_max(2, 10.0, 4000, 8);
        // four times the draws: standard error about halves
        CHECK(big.stderr_ / c.stderr_ == doctest::Approx(0.5).epsilon(0.2));
        CHECK(std::abs(big.value - c.value) < 4 * c.stderr_);

        // uniform points in an L box are on average about 0.5214 L apart
        const auto m = mae_max(10.0, 20000, 3);
        CHECK(m.value == doctest::Approx(5.214).epsilon(0.02));
        CHECK_THROWS(mre_max(1, 10.0));
    }

    TEST_CASE("position report")
    {
        const std::vector<std::vector<Vec2>> actual{{{0, 0}, {3, 0}}, {{0, 0}, {4, 0}}};
        const std::vector<std::vector<Vec2>> pred{{{1, 0}, {3, 4}}, {{0, 0}, {4, 0}}};
        const auto r = position_report(actual, pred, CeilingEstimate{1.0, 0.1, 10});
        CHECK(r.metric == "MRE");
        CHECK(r.mean == doctest::Approx(5.0 / 12.0));
        CHECK(r.d_mean == std::vector<double>{3.0, 4.0});
        std::ostringstream os;
        r.write_table(os);
        CHECK(os.str().find("ceiling") != std::string::npos);
        const std::vector<std::vector<Vec2>> single{{{0, 0}}}, single_pred{{{3, 4}}};
        const auto s = position_report(single, single_pred, CeilingEstimate{});
        CHECK(s.metric == "MAE_um");
        CHECK(s.mean == 5.0);
    }

    TEST_CASE("component errors, floors and correlation")
    {
        const std::vector<double> act{1.0, -2.0, 1e-9, 4.0};
        const std::vector<double> pred{1.5, -2.0, 5.0, 3.0};
        const auto c = operator_mre("h_prime", act, pred, 1e-6);
        CHECK(c.excluded == 1);
        CHECK(c.relative.size() == 3);
        CHECK(c.median == doctest::Approx(0.25));
        CHECK(c.mean == doctest::Approx((0.5 + 0.0 + 0.25) / 3));
        CHECK(c.scatter.size() == 4);
        CHECK(c.pearson == doctest::Approx(pearson(std::vector<double>{1.0, -2.0, 4.0}, std::vector<double>{1.5, -2.0, 3.0})));
        const std::vector<double> tiny{1e-9, 1e-10};
        CHECK_THROWS_AS(operator_mre("x", tiny, tiny, 1e-6), std::invalid_argument);

        const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{4, 3, 2, 1};
        CHECK(pearson(x, y) == doctest::Approx(1.0));
        CHECK(pearson(x, z) == doctest::Approx(-1.0));
        CHECK(median({3.0, 1.0, 2.0, 10.0}) == 2.5);

        const std::vector<double> vals{0.0, 0.01, 0.06, 0.5, 7.0};
        const auto h = histogram(vals, 0.0, 0.05, 41);
        CHECK(h.counts.size() == 41);
        CHECK(h.counts[0] == 2);
        CHECK(h.counts[1] == 1);
        CHECK(h.counts[10] == 1);
        CHECK(h.counts[40] == 1);
    }

    TEST_CASE("operator report groups")
    {
        std::vector<Eigen::VectorXd> ah, ph;
        std::vector<Eigen::VectorXcd> al, pl;
        Rng rng(5);
        for (int r = 0; r < 20; ++r) {
            Eigen::VectorXd h(5);
            Eigen::VectorXcd l(5);
            for (int k = 0; k < 3; ++k) {
                h[k] = rng.uniform(1, 2);
                l[k] = {rng.uniform(1, 2), rng.uniform(-2, -1)};
            }
            h.tail(2).setZero();
            l.tail(2).setZero();
            ah.push_back(h);
            al.push_back(l);
            ph.push_back(1.1 * h);
            pl.push_back(1.1 * l);
        }
        const auto rep = operator_report(ah, al, ph, pl, Eigen::VectorXd::Constant(15, 1e-6));
        REQUIRE(rep.components.size() == 4);
        CHECK(rep.components[0].name == "h_prime");
        CHECK(rep.components[3].name == "abs_l");
        CHECK(rep.median_all == doctest::Approx(0.1));
        CHECK(rep.included == 3 * 60);
        CHECK(rep.excluded == 3 * 40);
        for (const auto& c : rep.components)
            CHECK(c.pearson == doctest::Approx(1.0));
        std::ostringstream os;
        rep.write_table(os);
        CHECK(os.str().find("re_l") != std::string::npos);
    }
}
