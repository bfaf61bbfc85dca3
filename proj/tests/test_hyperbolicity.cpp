#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <bishadow/hyperbolicity.hpp>
#include <bishadow/pseudoorbit.hpp>

using namespace bishadow;
using Catch::Approx;

namespace {

const double golden_u = (3.0 + std::sqrt(5.0)) / 2.0;
const double golden_s = (3.0 - std::sqrt(5.0)) / 2.0;

struct Fixture {
    MapFamily f;
    PseudoOrbit x;
    Splitting s;
};

Fixture along_orbit(MapFamily f, long k, SplittingMethod method)
{
    PseudoOrbit x = generate(f, f.chart.point({0.3, 0.7}), IndexRange::symmetric(k), DefectRecipe::constant(0.0), 1);
    Splitting s = build_splitting(f, x.points, x.first, method);
    return {std::move(f), std::move(x), std::move(s)};
}

TildeConstants sample_tilde()
{
    TildeConstants t;
    t.lambda_u = 2.5;
    t.mu_u = 0.01;
    t.lambda_s_inv = 0.4;
    t.mu_s = 0.01;
    return t;
}

} // namespace

TEST_CASE("conorm is the smallest singular value", "[hyperbolicity]")
{
    Matrix d = Matrix::Zero(2, 2);
    d.diagonal() << 2.0, 3.0;
    CHECK(conorm(d) == Approx(2.0));
    CHECK(conorm(Matrix::Identity(3, 3)) == Approx(1.0));
    Matrix a(2, 2);
    a << 2, 1, 1, 1;
    CHECK(conorm(a) == Approx(golden_s).epsilon(1e-12));
    CHECK(conorm(Matrix(0, 0)) == infinity);
    CHECK(op_norm(Matrix(0, 0)) == 0.0);
}

TEST_CASE("conorm times inverse norm is one", "[hyperbolicity][property]")
{
    std::mt19937_64 rng(21);
    std::normal_distribution<double> normal(0.0, 1.0);
    int tested = 0;
    while (tested < 200) {
        Matrix m(3, 3);
        for (long r = 0; r < 3; ++r)
            for (long c = 0; c < 3; ++c)
                m(r, c) = normal(rng);
        auto sv = Eigen::JacobiSVD<Matrix>(m).singularValues();
        if (sv(0) / sv(2) > 1e3)
            continue;
        ++tested;
        CHECK(conorm(m) * op_norm(m.inverse()) == Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("cat eigen splitting is orthogonal with h = 1", "[hyperbolicity]")
{
    const Fixture fx = along_orbit(make_cat_family({-20, 20}), 20, SplittingMethod::eigen);
    CHECK(fx.s.h() == Approx(1.0).epsilon(1e-12));
    CHECK(fx.s.dim_u() == 1);
    const LocalSplitting& loc = fx.s.at(0);
    CHECK(std::abs(loc.unstable.col(0).dot(loc.stable.col(0))) <= 1e-12);
}

TEST_CASE("coordinate splitting for the coupled family", "[hyperbolicity]")
{
    const Fixture fx = along_orbit(make_coupled_linear_family(2.0, 0.5, 0.1, 0.1, {-5, 5}), 5,
                                   SplittingMethod::coordinate);
    CHECK(fx.s.h() == 1.0);
    CHECK(fx.s.at(0).unstable == Matrix::Identity(2, 2).leftCols(1));
    CHECK(default_splitting_method(fx.f) == SplittingMethod::coordinate);
    CHECK(default_splitting_method(make_cat_family({0, 1})) == SplittingMethod::eigen);
    CHECK(default_splitting_method(make_sine_cat_family(0.01, {0, 1})) == SplittingMethod::power_iteration);
}

TEST_CASE("oblique projection norm is 1/sin(theta)", "[hyperbolicity]")
{
    for (double theta : {0.3, 0.7, 1.2, std::numbers::pi / 2}) {
        Matrix u(2, 1), s(2, 1);
        u << 1, 0;
        s << std::cos(theta), std::sin(theta);
        const LocalSplitting loc = make_local_splitting(u, s);
        double brute = 0;
        for (int k = 0; k < 20000; ++k) {
            const double a = 2 * std::numbers::pi * k / 20000.0;
            Tangent v(2);
            v << std::cos(a), std::sin(a);
            brute = std::max(brute, (loc.proj_u * v).norm());
        }
        CHECK(op_norm(loc.proj_u) == Approx(1.0 / std::sin(theta)).epsilon(1e-12));
        CHECK(brute == Approx(1.0 / std::sin(theta)).epsilon(1e-6));
    }
}

TEST_CASE("projections are complementary idempotents", "[hyperbolicity][property]")
{
    std::mt19937_64 rng(22);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        Matrix u(3, 1), s(3, 2);
        for (auto* m : {&u, &s})
            for (long r = 0; r < m->rows(); ++r)
                for (long c = 0; c < m->cols(); ++c)
                    (*m)(r, c) = normal(rng);
        const LocalSplitting loc = make_local_splitting(u, s);
        CHECK((loc.proj_s + loc.proj_u - Matrix::Identity(3, 3)).norm() <= 1e-12 * (1 + op_norm(loc.proj_u)));
        CHECK((loc.proj_s * loc.proj_s - loc.proj_s).norm() <= 1e-12 * (1 + op_norm(loc.proj_s) * op_norm(loc.proj_s)));
        CHECK((loc.proj_u * loc.proj_u - loc.proj_u).norm() <= 1e-12 * (1 + op_norm(loc.proj_u) * op_norm(loc.proj_u)));
        CHECK((loc.proj_u * u - u).norm() <= 1e-12 * u.norm() * (1 + op_norm(loc.proj_u)));
    }
}

TEST_CASE("degenerate splittings are rejected", "[hyperbolicity]")
{
    Matrix u(2, 1), s(2, 1);
    u << 1, 0;
    s << 1, 1e-14;
    try {
        (void)make_local_splitting(u, s);
        FAIL("expected degenerate-splitting");
    } catch (const error& e) {
        CHECK(e.code() == errc::degenerate_splitting);
    }
}

TEST_CASE("h bounds the projections on random vectors", "[hyperbolicity][property]")
{
    const Fixture fx = along_orbit(make_sine_cat_family(0.01, {-15, 15}), 15, SplittingMethod::power_iteration);
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<long> idx(-15, 15);
    for (int k = 0; k < 500; ++k) {
        const LocalSplitting& loc = fx.s.at(idx(rng));
        const Tangent v = random_unit(2, rng);
        CHECK((loc.proj_s * v).norm() <= fx.s.h() * (1 + 1e-14));
        CHECK((loc.proj_u * v).norm() <= fx.s.h() * (1 + 1e-14));
    }
}

TEST_CASE("power-iteration splitting is invariant under Df", "[hyperbolicity]")
{
    const Fixture fx = along_orbit(make_sine_cat_family(0.01, {-30, 30}), 30, SplittingMethod::power_iteration);
    for (long i = -30; i < 30; ++i) {
        const Matrix df = fx.f.jacobian(i, fx.x.at(i));
        const Tangent pushed = df * fx.s.at(i).unstable.col(0);
        const Tangent pulled = df * fx.s.at(i).stable.col(0);
        // image of E^u lies in E^u at the next point, likewise for E^s
        CHECK((fx.s.at(i + 1).proj_s * pushed).norm() <= 1e-10 * pushed.norm());
        CHECK((fx.s.at(i + 1).proj_u * pulled).norm() <= 1e-10 * pulled.norm());
    }
}

TEST_CASE("cat blocks in the eigenbasis are diagonal", "[hyperbolicity]")
{
    const Fixture fx = along_orbit(make_cat_family({-5, 5}), 5, SplittingMethod::eigen);
    const BlockData b = extract_blocks(fx.f, fx.s, 0, fx.x.at(0));
    CHECK(std::abs(b.b11(0, 0)) == Approx(golden_u).epsilon(1e-12));
    CHECK(std::abs(b.b22(0, 0)) == Approx(golden_s).epsilon(1e-12));
    CHECK(b.norm_b12 <= 1e-12);
    CHECK(b.norm_b21 <= 1e-12);
}

TEST_CASE("coupled blocks in the coordinate splitting are the parameters", "[hyperbolicity]")
{
    const Fixture fx = along_orbit(make_coupled_linear_family(2.0, 0.5, 0.1, 0.2, {-3, 3}), 3,
                                   SplittingMethod::coordinate);
    const BlockData b = extract_blocks(fx.f, fx.s, 0, fx.x.at(0));
    CHECK(b.b11(0, 0) == 2.0);
    CHECK(b.b12(0, 0) == 0.1);
    CHECK(b.b21(0, 0) == 0.2);
    CHECK(b.b22(0, 0) == 0.5);
}

TEST_CASE("identity map blocks", "[hyperbolicity]")
{
    Matrix u(2, 1), s(2, 1);
    u << 1, 1;
    s << 1, -0.5;
    const LocalSplitting loc = make_local_splitting(u, s);
    const BlockData b = extract_blocks(Matrix::Identity(2, 2), loc, loc);
    CHECK(b.b11(0, 0) == Approx(1.0));
    CHECK(b.b22(0, 0) == Approx(1.0));
    CHECK(std::abs(b.b12(0, 0)) <= 1e-15);
    CHECK(std::abs(b.b21(0, 0)) <= 1e-15);
}

TEST_CASE("blocks reassemble to the jacobian", "[hyperbolicity][property]")
{
    const Fixture fx = along_orbit(make_sine_cat_family(0.01, {-20, 20}), 20, SplittingMethod::power_iteration);
    for (long i = -20; i < 20; ++i) {
        const Matrix df = fx.f.jacobian(i, fx.x.at(i));
        const BlockData b = extract_blocks(df, fx.s.at(i), fx.s.at(i + 1));
        CHECK((reassemble(b, fx.s.at(i), fx.s.at(i + 1)) - df).norm() <= 1e-12 * op_norm(df));
    }
}

TEST_CASE("cat certificate is exact", "[hyperbolicity]")
{
    const Fixture fx = along_orbit(make_cat_family({-100, 100}), 100, SplittingMethod::eigen);
    const Certificate c = certify(fx.f, fx.s, fx.x.points, fx.x.first);
    CHECK(c.valid());
    CHECK(c.lambda_u_min == Approx(golden_u).epsilon(1e-12));
    CHECK(c.lambda_s_max == Approx(golden_s).epsilon(1e-12));
    CHECK(c.mu_u_max <= 1e-12);
    CHECK(c.mu_s_max <= 1e-12);
    CHECK(c.h == Approx(1.0));
    CHECK(c.margin == Approx(1.0).epsilon(1e-12));
    CHECK(c.window == IndexRange{-100, 99});
    for (const auto& ic : c.per_index)
        CHECK(ic.lambda_u == Approx(golden_u).epsilon(1e-12));
}

TEST_CASE("coupled certificates", "[hyperbolicity]")
{
    SECTION("(2.0, 0.5, 0.1, 0.1) passes with margin 0.49")
    {
        const Fixture fx = along_orbit(make_coupled_linear_family(2.0, 0.5, 0.1, 0.1, {-5, 5}), 5,
                                       SplittingMethod::coordinate);
        const Certificate c = certify(fx.f, fx.s, fx.x.points, fx.x.first);
        CHECK(c.margin == Approx(0.49).epsilon(1e-12));
    }
    SECTION("(1.2, 0.9, 0.5, 0.5) fails the product inequality")
    {
        const Fixture fx = along_orbit(make_coupled_linear_family(1.2, 0.9, 0.5, 0.5, {-5, 5}), 5,
                                       SplittingMethod::coordinate);
        try {
            (void)certify(fx.f, fx.s, fx.x.points, fx.x.first);
            FAIL("expected certification failure");
        } catch (const certification_error& e) {
            CHECK(e.code() == errc::certification_failure);
            REQUIRE(e.payload().violation);
            CHECK(e.payload().violation->inequality == "(1 - lambda_s)(lambda_u - 1) > mu_s mu_u");
            CHECK(e.payload().violation->index == -5);
            CHECK(e.payload().violation->lhs == Approx(0.02));
            CHECK(e.payload().violation->rhs == Approx(0.25));
        }
    }
}

TEST_CASE("tilde constants", "[hyperbolicity]")
{
    Certificate c;
    c.lambda_u_min = 2.618;
    c.lambda_s_max = 0.382;
    c.h = 1;
    SECTION("zero modulus leaves constants unchanged")
    {
        const TildeConstants t = tilde_constants(c, 0.5);
        CHECK(t.lambda_u == 2.618);
        CHECK(t.lambda_s_inv == 0.382);
        CHECK(t.mu_u == 0.0);
        CHECK_FALSE(t.eta_capped);
    }
    SECTION("eta = 0.05 shifts every constant by h^2 eta")
    {
        const TildeConstants t = tilde_constants_for_eta(c, 0.05);
        CHECK(t.lambda_u == Approx(2.568));
        CHECK(t.lambda_s_inv == Approx(0.432));
        CHECK(t.mu_u == Approx(0.05));
        CHECK(t.mu_s == Approx(0.05));
    }
    SECTION("large sampled modulus is capped by the safety budget")
    {
        c.eta_hat = 10.0;
        const TildeConstants t = tilde_constants(c, 0.5);
        CHECK(t.eta_capped);
        CHECK(t.eta == Approx(0.25 * (1 - 0.382)));
        CHECK(t.lambda_s_inv + t.mu_s < 1.0);
    }
    SECTION("weak expansion is infeasible")
    {
        c.lambda_u_min = 1.01;
        c.h = 2;
        CHECK_THROWS_AS(tilde_constants_for_eta(c, 0.1), error);
    }
}

TEST_CASE("shadowing constants per mode", "[hyperbolicity]")
{
    const TildeConstants t = sample_tilde();
    const ShadowingConstants fin = shadowing_constants(t, 1.0, 0.5, ConstantsMode::finite);
    CHECK(fin.L == Approx(2.0 / 0.59).epsilon(1e-12));
    CHECK(fin.L == Approx(3.3898).epsilon(1e-4));
    CHECK(fin.delta == 1e-3);

    const ShadowingConstants lim = shadowing_constants(t, 1.0, 0.5, ConstantsMode::limit);
    CHECK(lim.L == Approx(3.0 / 0.18).epsilon(1e-12));

    // (1 + 5/3) / (1 - (5/3) 0.41) = 160/19
    const ShadowingConstants asym =
        shadowing_constants(t, 1.0, 0.5, ConstantsMode::asymptotic, AsymptoticParams{0.5, 0.1, 3});
    CHECK(asym.L == Approx(160.0 / 19.0).epsilon(1e-12));
    CHECK(asym.k1 >= asym.k0);
    CHECK(std::pow(0.6, asym.k1 - asym.k0) <= asym.delta);
    CHECK(std::pow(0.6, asym.k1 - asym.k0 - 1) > asym.delta);
}

TEST_CASE("delta respects the tube radius", "[hyperbolicity]")
{
    const ShadowingConstants c = shadowing_constants(sample_tilde(), 1.0, 0.001, ConstantsMode::finite, std::nullopt, 1.0);
    CHECK(c.L * c.delta <= 0.001 * (1 + 1e-15));
}

TEST_CASE("infeasible constants name their denominator", "[hyperbolicity]")
{
    TildeConstants t = sample_tilde();
    t.lambda_u = 1.5;
    try {
        (void)shadowing_constants(t, 1.0, 0.5, ConstantsMode::limit);
        FAIL("expected infeasible-constants");
    } catch (const error& e) {
        CHECK(e.code() == errc::infeasible_constants);
        CHECK(std::string(e.what()).find("λ̃u − 2 − μ̃u") != std::string::npos);
    }
    try {
        (void)shadowing_constants(t, 1.0, 0.5, ConstantsMode::asymptotic, AsymptoticParams{0.3, 0.1, 0});
        FAIL("expected infeasible-constants");
    } catch (const error& e) {
        const std::string what = e.what();
        CHECK(what.find("λ̃u − μ̃u − (v+ε)⁻¹") != std::string::npos);
        CHECK(what.find("feasible v range") != std::string::npos);
    }
}

TEST_CASE("L is monotone in the tilde constants", "[hyperbolicity][property]")
{
    for (auto mode : {ConstantsMode::finite, ConstantsMode::limit, ConstantsMode::asymptotic}) {
        const std::optional<AsymptoticParams> ap =
            mode == ConstantsMode::asymptotic ? std::optional<AsymptoticParams>(AsymptoticParams{0.5, 0.1, 0}) : std::nullopt;
        auto L = [&](TildeConstants t) { return shadowing_constants(t, 1.0, 0.5, mode, ap).L; };
        for (double lu : {2.4, 2.6, 2.8})
            for (double mu : {0.0, 0.01, 0.02})
                for (double ls : {0.2, 0.25, 0.3}) {
                    TildeConstants t{lu, ls, mu, mu, 0, false};
                    const double base = L(t);
                    const double step = 1e-3;
                    TildeConstants a = t;
                    a.lambda_u += step;
                    CHECK(L(a) <= base);
                    TildeConstants b = t;
                    b.mu_u += step;
                    CHECK(L(b) >= base);
                    TildeConstants c = t;
                    c.mu_s += step;
                    CHECK(L(c) >= base);
                    TildeConstants d = t;
                    d.lambda_s_inv += step;
                    CHECK(L(d) >= base);
                }
    }
}

TEST_CASE("calibration samples eta only for nonlinear families", "[hyperbolicity]")
{
    const Fixture lin = along_orbit(make_cat_family({-10, 10}), 10, SplittingMethod::eigen);
    const Calibration a = calibrate(lin.f, certify(lin.f, lin.s, lin.x.points, lin.x.first), ConstantsMode::finite, 0.5, 1e-3);
    CHECK(a.certificate.eta_hat == 0.0);
    CHECK_FALSE(a.certificate.eta_estimated);

    const Fixture non = along_orbit(make_sine_cat_family(0.01, {-10, 10}), 10, SplittingMethod::power_iteration);
    const Calibration b = calibrate(non.f, certify(non.f, non.s, non.x.points, non.x.first), ConstantsMode::finite, 0.5, 1e-3);
    CHECK(b.certificate.eta_estimated);
    CHECK(b.certificate.eta_hat > 0.0);
    CHECK(b.radius >= 2.0 * b.certificate.h * b.constants.L * b.constants.delta);
    CHECK(b.tilde.lambda_u < b.certificate.lambda_u_min);
}
