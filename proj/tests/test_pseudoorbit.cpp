#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include <bishadow/pseudoorbit.hpp>

using namespace bishadow;
using Catch::Approx;

namespace {

std::vector<double> sequence(long k, double (*fn)(long))
{
    std::vector<double> d;
    for (long i = -k; i <= k; ++i)
        d.push_back(fn(i));
    return d;
}

} // namespace

TEST_CASE("generating with zero defects gives a true orbit", "[pseudoorbit]")
{
    const MapFamily f = make_cat_family({-20, 20});
    const PseudoOrbit x = generate(f, f.chart.point({0.3, 0.7}), {-20, 20}, DefectRecipe::constant(0.0), 3);
    REQUIRE(x.points.size() == 41);
    REQUIRE(x.defects.size() == 40);
    for (double d : x.defects)
        CHECK(d == 0.0);
    CHECK(x.seed == 3);
}

TEST_CASE("generated defects match the recipe", "[pseudoorbit]")
{
    const MapFamily f = make_cat_family({-40, 40});
    SECTION("constant")
    {
        const PseudoOrbit x = generate(f, f.chart.point({0.3, 0.7}), {-40, 40}, DefectRecipe::constant(1e-3), 9);
        for (double d : x.defects)
            CHECK(std::abs(d - 1e-3) <= 1e-14);
    }
    SECTION("geometric")
    {
        const PseudoOrbit x = generate(f, f.chart.point({0.3, 0.7}), {-40, 41}, DefectRecipe::geometric(1e-2, 0.5), 9);
        CHECK(std::abs(x.defect_at(40) - 1e-2 * std::pow(2.0, -40)) <= 1e-14);
        CHECK(std::abs(x.defect_at(-40) - 1e-2 * std::pow(2.0, -40)) <= 1e-14);
    }
    SECTION("harmonic")
    {
        const PseudoOrbit x = generate(f, f.chart.point({0.3, 0.7}), {-40, 40}, DefectRecipe::harmonic(1e-3), 9);
        for (long i = -40; i < 40; ++i)
            CHECK(std::abs(x.defect_at(i) - 1e-3 / (1.0 + std::abs(i))) <= 1e-14);
    }
    SECTION("a fixed direction is honoured")
    {
        DefectRecipe r = DefectRecipe::constant(1e-3);
        Tangent dir(2);
        dir << 3, 4;
        r.direction = dir;
        const PseudoOrbit x = generate(f, f.chart.point({0.3, 0.7}), {0, 3}, r, 1);
        const Tangent step = f.chart.log_point(f.evaluate(0, x.at(0)), x.at(1));
        CHECK((step - 1e-3 * dir.normalized()).norm() <= 1e-15);
    }
}

TEST_CASE("generation is deterministic given the seed", "[pseudoorbit]")
{
    const MapFamily f = make_cat_family({-10, 10});
    const PseudoOrbit a = generate(f, f.chart.point({0.3, 0.7}), {-10, 10}, DefectRecipe::constant(1e-3), 5);
    const PseudoOrbit b = generate(f, f.chart.point({0.3, 0.7}), {-10, 10}, DefectRecipe::constant(1e-3), 5);
    const PseudoOrbit c = generate(f, f.chart.point({0.3, 0.7}), {-10, 10}, DefectRecipe::constant(1e-3), 6);
    for (std::size_t j = 0; j < a.points.size(); ++j)
        CHECK(a.points[j].coords == b.points[j].coords);
    CHECK(a.points.back().coords != c.points.back().coords);
}

TEST_CASE("generation rejects magnitudes at the injectivity radius", "[pseudoorbit]")
{
    const MapFamily f = make_cat_family({0, 5});
    try {
        (void)generate(f, f.chart.point({0.3, 0.7}), {0, 5}, DefectRecipe::constant(0.5), 1);
        FAIL("expected tube-escape");
    } catch (const error& e) {
        CHECK(e.code() == errc::tube_escape);
    }
}

TEST_CASE("measured defects", "[pseudoorbit]")
{
    SECTION("scalar doubling")
    {
        const MapFamily f = make_scalar_family(2.0, {0, 2});
        const std::vector<Point> pts{f.chart.point({0.0}), f.chart.point({0.1}), f.chart.point({0.2})};
        const auto d = measure_defects(f, pts, 0);
        REQUIRE(d.size() == 2);
        CHECK(d[0] == Approx(0.1));
        CHECK(d[1] == Approx(0.0).margin(1e-16));
    }
    SECTION("a corrupted point shows up as a single nonzero defect")
    {
        const MapFamily f = make_cat_family({-10, 10});
        PseudoOrbit x = generate(f, f.chart.point({0.3, 0.7}), {-10, 10}, DefectRecipe::constant(0.0), 1);
        Tangent kick(2);
        kick << 1e-4, 0;
        x.points[15] = f.chart.exp_point(x.points[15], kick);
        const auto d = measure_defects(f, x.points, x.first);
        for (std::size_t j = 0; j < d.size(); ++j) {
            if (j == 14)
                CHECK(d[j] == Approx(1e-4).epsilon(1e-9));
            else if (j != 15)
                CHECK(d[j] <= 1e-13);
        }
        // the transition out of the corrupted point inherits the expanded kick
        CHECK(d[15] > 1e-4);
    }
    SECTION("points too far apart escape the tube")
    {
        const MapFamily f = make_scalar_family(2.0, {0, 1}, 10.0, 1.0);
        const std::vector<Point> pts{f.chart.point({0.0}), f.chart.point({5.0})};
        CHECK_THROWS_AS(measure_defects(f, pts, 0), error);
    }
}

TEST_CASE("classification examples", "[pseudoorbit]")
{
    SECTION("constant is p-bounded")
    {
        const auto d = sequence(100, [](long) { return 1e-3; });
        const DefectProfile prof = classify(d, -100, infinity);
        CHECK(prof.classification == DefectProfile::Kind::p_bounded);
        CHECK(prof.norm == 1e-3);
        CHECK_FALSE(prof.vanishing);
    }
    SECTION("harmonic is vanishing with T(N) = 1e-3/(1+N)")
    {
        const auto d = sequence(100, [](long i) { return 1e-3 / (1.0 + std::abs(i)); });
        const DefectProfile prof = classify(d, -100);
        CHECK(prof.classification == DefectProfile::Kind::vanishing);
        REQUIRE(prof.tail.size() == 101);
        for (std::size_t n = 0; n < prof.tail.size(); ++n)
            CHECK(prof.tail[n] == 1e-3 / (1.0 + static_cast<double>(n)));
    }
    SECTION("geometric reports the max-over-tail root statistic")
    {
        const auto d = sequence(60, [](long i) { return 1e-2 * std::pow(0.5, std::abs(i)); });
        const DefectProfile prof = classify(d, -60, 2.0, 10);
        CHECK(prof.classification == DefectProfile::Kind::geometric);
        CHECK(prof.rate_estimate == Approx(0.5 * std::pow(1e-2, 1.0 / 60.0)).epsilon(1e-12));
        CHECK(prof.rate_estimate <= 0.5);
        CHECK(prof.regression_estimate == Approx(0.5).epsilon(1e-9));
    }
    SECTION("a true orbit is trivially every class")
    {
        const std::vector<double> d(41, 0.0);
        const DefectProfile prof = classify(d, -20);
        CHECK(prof.norm == 0.0);
        CHECK(prof.vanishing);
        for (double t : prof.tail)
            CHECK(t == 0.0);
        CHECK(prof.rate_estimate == 0.0);
        CHECK(prof.classification == DefectProfile::Kind::geometric);
    }
}

TEST_CASE("root_rate examples", "[pseudoorbit]")
{
    const auto half = sequence(50, [](long i) { return std::pow(0.5, std::abs(i)); });
    CHECK(root_rate(half, -50, 1) == Approx(0.5).epsilon(1e-15));
    CHECK(root_rate(std::vector<double>(101, 0.0), -50, 1) == 0.0);
    const auto three = sequence(50, [](long i) { return 3.0 * std::pow(0.5, std::abs(i)); });
    CHECK(root_rate(three, -50, 10) == Approx(0.5 * std::pow(3.0, 0.1)).epsilon(1e-14));
    CHECK(root_rate(three, -50, 10) == Approx(0.55806).epsilon(1e-5));
    try {
        (void)root_rate(half, -50, 51);
        FAIL("expected empty-tail");
    } catch (const error& e) {
        CHECK(e.code() == errc::empty_tail);
    }
    CHECK_THROWS_AS(root_rate(half, -50, 0), error);
}

TEST_CASE("root_rate converges monotonically to the rate", "[pseudoorbit][property]")
{
    for (double v : {0.3, 0.5, 0.8}) {
        for (double c : {0.01, 0.5, 2.0, 100.0}) {
            std::vector<double> d;
            for (long i = -200; i <= 200; ++i)
                d.push_back(c * std::pow(v, std::abs(i)));
            double prev = root_rate(d, -200, 1);
            for (long n0 = 2; n0 <= 150; ++n0) {
                const double r = root_rate(d, -200, n0);
                if (c > 1) {
                    CHECK(r <= prev * (1 + 1e-15));
                    CHECK(r >= v * (1 - 1e-15));
                } else {
                    CHECK(r <= v * (1 + 1e-15));
                }
                prev = r;
            }
            CHECK(std::abs(root_rate(d, -200, 150) - v) <= std::abs(root_rate(d, -200, 10) - v) + 1e-15);
        }
    }
}

TEST_CASE("measurement reproduces recipe magnitudes", "[pseudoorbit][property]")
{
    const MapFamily fams[] = {make_cat_family({-30, 30}), make_sine_cat_family(0.01, {-30, 30})};
    for (const auto& f : fams)
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const PseudoOrbit x = generate(f, f.chart.point({0.1, 0.2}), {-30, 30}, DefectRecipe::harmonic(1e-2), seed);
            const auto d = measure_defects(f, x.points, x.first);
            for (long i = -30; i < 30; ++i)
                CHECK(std::abs(d[static_cast<std::size_t>(i + 30)] - 1e-2 / (1.0 + std::abs(i))) <= 1e-14);
        }
}

TEST_CASE("CSV round trip is bit-exact", "[pseudoorbit]")
{
    const MapFamily f = make_sine_cat_family(0.01, {-25, 25});
    const PseudoOrbit x = generate(f, f.chart.point({0.123, 0.456}), {-25, 25}, DefectRecipe::constant(1e-3), 17);
    std::stringstream ss;
    write_csv(ss, x);
    const std::string text = ss.str();
    CHECK(text.rfind("i,x1,x2,delta_i\n", 0) == 0);
    const PseudoOrbit y = read_csv(ss, f);
    REQUIRE(y.first == x.first);
    REQUIRE(y.points.size() == x.points.size());
    for (std::size_t j = 0; j < x.points.size(); ++j)
        CHECK(y.points[j].coords == x.points[j].coords);
    CHECK(y.defects == x.defects);
    std::stringstream again;
    write_csv(again, y);
    CHECK(again.str() == text);
}

TEST_CASE("CSV reader rejects malformed tables", "[pseudoorbit]")
{
    const MapFamily f = make_cat_family({0, 3});
    std::stringstream gap("i,x1,x2,delta_i\n0,0.1,0.2,0\n2,0.3,0.4,\n");
    CHECK_THROWS_AS(read_csv(gap, f), error);
    std::stringstream junk("i,x1,x2,delta_i\n0,abc,0.2,\n");
    CHECK_THROWS_AS(read_csv(junk, f), error);
}
