#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "charts.hpp"

namespace bishadow {

/**
 * An indexed family of maps f_i : M -> M on a single flat chart, with
 * derivatives in chart coordinates.
 *
 * `linear_part` is set exactly when every f_i is affine in chart coordinates;
 * it returns the (constant) jacobian of f_i. `jacobian_lipschitz`, when set,
 * bounds ||Df_i(x) - Df_i(y)|| <= lip * d(x, y) for all i.
 */
struct MapFamily {
    std::string name;
    Chart chart;
    IndexRange window;
    std::function<Point(long, const Point&)> evaluate;
    std::function<Matrix(long, const Point&)> jacobian;
    bool analytic_jacobian = true;
    bool autonomous = true;
    std::function<Matrix(long)> linear_part;
    std::optional<double> jacobian_lipschitz;
    // the coordinate axes are the intended unstable/stable directions
    bool coordinate_splitting = false;

    bool affine() const { return static_cast<bool>(linear_part); }
    int dim() const { return chart.dim(); }
};

/// g together with the per-index gap bound gamma_i >= sup_x d(f_i(x), g_i(x)).
struct PerturbedFamily {
    MapFamily map;
    std::function<double(long)> gap;
    bool gap_exact = true;

    double gap_at(long i) const { return gap ? gap(i) : 0.0; }

    /// gamma_i for the transitions lo .. hi-1 of `window`.
    std::vector<double> gap_profile(IndexRange window) const
    {
        std::vector<double> out;
        for (long i = window.lo; i < window.hi; ++i)
            out.push_back(gap_at(i));
        return out;
    }
};

/// Tangent-space lift F_i(z) = log_{x_{i+1}} f_i(exp_{x_i} z). The family
/// must outlive the step.
class LiftedStep {
public:
    LiftedStep(const MapFamily& family, long index, Point base, Point next)
        : family_(&family)
        , index_(index)
        , base_(std::move(base))
        , next_(std::move(next))
    {
        try {
            offset_ = family.chart.log_point(next_, family.evaluate(index_, base_));
        } catch (const error& e) {
            if (e.code() != errc::radius_exceeded)
                throw;
            throw error(errc::tube_escape, "f_i(x_i) is not within the injectivity radius of x_{i+1}", index_);
        }
        if (family.affine())
            linear_ = family.linear_part(index_);
    }

    long index() const { return index_; }
    const Point& base() const { return base_; }
    const Point& next() const { return next_; }
    const MapFamily& family() const { return *family_; }

    /// F_i(0), the defect vector of this transition.
    const Tangent& offset() const { return offset_; }

    Tangent operator()(const Tangent& z) const
    {
        const Chart& chart = family_->chart;
        if (family_->affine()) {
            Tangent v = offset_ + linear_ * z;
            if (!(v.norm() < chart.injectivity_radius()))
                throw error(errc::tube_escape, "lifted image leaves the log domain", index_);
            return v;
        }
        try {
            return chart.log_point(next_, family_->evaluate(index_, chart.exp_point(base_, z)));
        } catch (const error& e) {
            if (e.code() != errc::radius_exceeded && e.code() != errc::out_of_domain)
                throw;
            throw error(errc::tube_escape, e.what(), index_);
        }
    }

    /// DF_i(z). Flat charts make the exp/log derivatives identities.
    Matrix derivative(const Tangent& z) const
    {
        if (family_->affine())
            return linear_;
        return family_->jacobian(index_, family_->chart.exp_point(base_, z));
    }

private:
    const MapFamily* family_;
    long index_;
    Point base_;
    Point next_;
    Tangent offset_;
    Matrix linear_;
};

inline LiftedStep lift_step(const MapFamily& family, long i, const Point& x_i, const Point& x_next)
{
    return LiftedStep(family, i, x_i, x_next);
}

/// Linear map x -> A x on the given chart (mod 1 on the torus).
inline MapFamily make_linear_family(std::string name, const Matrix& a, const Chart& chart, IndexRange window)
{
    if (a.rows() != chart.dim() || a.cols() != chart.dim())
        throw error(errc::parameter_domain, "matrix does not match chart dimension");
    MapFamily f{
        .name = std::move(name),
        .chart = chart,
        .window = window,
        .evaluate = [a, chart](long, const Point& x) { return chart.point(a * x.coords, x.component); },
        .jacobian = [a](long, const Point&) { return a; },
        .linear_part = [a](long) { return a; },
        .jacobian_lipschitz = 0.0,
    };
    return f;
}

/// The Anosov cat map x -> [[2,1],[1,1]] x mod 1 at every index.
inline MapFamily make_cat_family(IndexRange window)
{
    Matrix a(2, 2);
    a << 2.0, 1.0, 1.0, 1.0;
    return make_linear_family("cat", a, Chart::torus(2), window);
}

/// x -> B x mod 1 with B = [[lambda_u, mu_u], [mu_s, lambda_s]], so the
/// coordinate splitting has blocks exactly (lambda_u, mu_u, mu_s, lambda_s).
inline MapFamily make_coupled_linear_family(double lambda_u, double lambda_s, double mu_u, double mu_s,
                                            IndexRange window)
{
    if (!(lambda_s > 0 && lambda_s < 1 && lambda_u > 1))
        throw error(errc::parameter_domain, "coupled family requires 0 < lambda_s < 1 < lambda_u");
    if (!(mu_u >= 0 && mu_s >= 0))
        throw error(errc::parameter_domain, "coupling magnitudes must be nonnegative");
    Matrix b(2, 2);
    b << lambda_u, mu_u, mu_s, lambda_s;
    if (std::abs(b.determinant()) < 1e-12)
        throw error(errc::parameter_domain, "coupled family matrix is singular");
    MapFamily f = make_linear_family("coupled", b, Chart::torus(2), window);
    f.coordinate_splitting = true;
    return f;
}

/// Scalar x -> factor * x on the box [-half_width, half_width].
inline MapFamily make_scalar_family(double factor, IndexRange window, double half_width = 10.0,
                                    double tube_radius = 1.0)
{
    if (!(std::abs(factor) > 0) || std::abs(factor) == 1.0)
        throw error(errc::parameter_domain, "scalar family needs a nonzero factor with |factor| != 1");
    Matrix a(1, 1);
    a << factor;
    return make_linear_family("scalar", a, Chart::box(1, half_width, tube_radius), window);
}

/// A displacement field c_i(x) applied after f: g_i(x) = exp_{f_i(x)} c_i(x).
struct Displacement {
    std::function<Tangent(long, const Point&)> value;
    /// Derivative in x; empty means finite differences (or zero when the
    /// field does not depend on the point).
    std::function<Matrix(long, const Point&)> jacobian;
    bool point_independent = true;
    bool index_dependent = false;
    std::optional<double> jacobian_lipschitz = 0.0;
};

inline Displacement zero_displacement(int dim)
{
    Displacement d;
    d.value = [dim](long, const Point&) { return Tangent(Tangent::Zero(dim)); };
    return d;
}

inline Displacement constant_displacement(Tangent c)
{
    Displacement d;
    d.value = [c = std::move(c)](long, const Point&) { return c; };
    return d;
}

/// c_i = magnitude(i) * direction / |direction|.
inline Displacement indexed_displacement(Tangent direction, std::function<double(long)> magnitude)
{
    if (!(direction.norm() > 0))
        throw error(errc::parameter_domain, "displacement direction must be nonzero");
    Tangent unit = direction.normalized();
    Displacement d;
    d.value = [unit, magnitude = std::move(magnitude)](long i, const Point&) { return Tangent(magnitude(i) * unit); };
    d.index_dependent = true;
    return d;
}

/// eps * (sin 2 pi x_1, ..., sin 2 pi x_d); its magnitude is at most eps * sqrt(d).
inline Displacement sine_displacement(double eps, int dim)
{
    const double two_pi = 2.0 * std::numbers::pi;
    return {
        .value = [eps, dim, two_pi](long, const Point& x) {
            Tangent v(dim);
            for (int j = 0; j < dim; ++j)
                v[j] = eps * std::sin(two_pi * x.coords[j]);
            return v;
        },
        .jacobian = [eps, dim, two_pi](long, const Point& x) {
            Matrix m = Matrix::Zero(dim, dim);
            for (int j = 0; j < dim; ++j)
                m(j, j) = eps * two_pi * std::cos(two_pi * x.coords[j]);
            return m;
        },
        .point_independent = false,
        .index_dependent = false,
        .jacobian_lipschitz = std::abs(eps) * two_pi * two_pi,
    };
}

inline Point random_point(const Chart& chart, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector v(chart.dim());
    for (auto& c : v) {
        c = unit(rng);
        if (chart.kind() == ChartKind::euclidean_box)
            c = (2.0 * c - 1.0) * chart.half_width();
    }
    return chart.point(std::move(v));
}

inline Tangent random_unit(int dim, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Tangent v(dim);
    do {
        for (auto& c : v)
            c = normal(rng);
    } while (v.norm() == 0.0);
    return v.normalized();
}

/// Central differences of evaluate, through the chart log.
inline Matrix finite_difference_jacobian(const MapFamily& f, long i, const Point& x, double step = 1e-6)
{
    const int d = f.dim();
    const Point fx = f.evaluate(i, x);
    Matrix jac(d, d);
    for (int j = 0; j < d; ++j) {
        Tangent e = Tangent::Zero(d);
        e[j] = step;
        Tangent plus = f.chart.log_point(fx, f.evaluate(i, f.chart.exp_point(x, e)));
        Tangent minus = f.chart.log_point(fx, f.evaluate(i, f.chart.exp_point(x, -e)));
        jac.col(j) = (plus - minus) / (2.0 * step);
    }
    return jac;
}

/**
 * Builds g_i(x) = exp_{f_i(x)}(c_i(x)) with gap profile gamma_i = magnitudes(i).
 * The bound |c_i(x)| <= gamma_i is checked on `samples` random points at a
 * spread of indices from the window.
 */
inline PerturbedFamily make_perturbed_family(const MapFamily& base, Displacement disp,
                                             std::function<double(long)> magnitudes, int samples = 256,
                                             std::uint64_t seed = 1)
{
    if (!disp.value)
        throw error(errc::parameter_domain, "displacement has no value function");
    std::mt19937_64 rng(seed);
    const IndexRange w = base.window;
    const long span = std::max<long>(1, w.size());
    for (int s = 0; s < samples; ++s) {
        long i = w.lo + static_cast<long>(s) * (span - 1) / std::max(1, samples - 1);
        Point x = random_point(base.chart, rng);
        double mag = disp.value(i, x).norm();
        double cap = magnitudes(i);
        if (!(cap >= 0))
            throw error(errc::parameter_domain, "gap magnitudes must be nonnegative", i);
        if (mag > cap * (1.0 + 1e-12) + 1e-300)
            throw error(errc::magnitude_violation, "displacement magnitude " + std::to_string(mag)
                                                       + " exceeds declared gap " + std::to_string(cap), i);
    }

    MapFamily g = base;
    g.name = base.name + "+displacement";
    g.autonomous = base.autonomous && !disp.index_dependent;
    const Chart chart = base.chart;
    auto f_eval = base.evaluate;
    auto value = disp.value;
    g.evaluate = [chart, f_eval, value](long i, const Point& x) {
        return chart.exp_point(f_eval(i, x), value(i, x));
    };
    if (disp.point_independent) {
        g.jacobian = base.jacobian;
    } else if (disp.jacobian) {
        auto f_jac = base.jacobian;
        auto d_jac = disp.jacobian;
        g.jacobian = [f_jac, d_jac](long i, const Point& x) { return Matrix(f_jac(i, x) + d_jac(i, x)); };
        g.linear_part = nullptr;
    } else {
        g.analytic_jacobian = false;
        g.linear_part = nullptr;
        MapFamily probe = g;
        g.jacobian = [probe](long i, const Point& x) { return finite_difference_jacobian(probe, i, x); };
    }
    if (base.jacobian_lipschitz && disp.jacobian_lipschitz)
        g.jacobian_lipschitz = *base.jacobian_lipschitz + *disp.jacobian_lipschitz;
    else
        g.jacobian_lipschitz.reset();

    return PerturbedFamily{std::move(g), std::move(magnitudes), true};
}

/// g = f, zero gap.
inline PerturbedFamily unperturbed(const MapFamily& f)
{
    return PerturbedFamily{f, [](long) { return 0.0; }, true};
}

/// Cat map composed with the sine displacement of size eps; a nonlinear
/// Anosov family with non-constant jacobian.
inline MapFamily make_sine_cat_family(double eps, IndexRange window)
{
    MapFamily cat = make_cat_family(window);
    const double bound = std::abs(eps) * std::sqrt(2.0);
    MapFamily f = make_perturbed_family(cat, sine_displacement(eps, 2), [bound](long) { return bound; }).map;
    f.name = "sine-cat";
    return f;
}

/// Empirical modulus of continuity of the jacobian: the largest sampled
/// ||Df_i(x) - Df_i(y)|| with d(x, y) <= r. Affine families return exactly 0.
inline double continuity_modulus(const MapFamily& f, double r, int n, std::uint64_t seed)
{
    if (!(r >= 0) || !(r < f.chart.injectivity_radius()))
        throw error(errc::parameter_domain, "modulus radius must lie in [0, rho)");
    if (n < 1)
        throw error(errc::parameter_domain, "modulus needs at least one sample");
    if (f.affine())
        return 0.0;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<long> index(f.window.lo, f.window.hi);
    double worst = 0.0;
    for (int s = 0; s < n; ++s) {
        const long i = index(rng);
        const Point x = random_point(f.chart, rng);
        // half the samples sit on the sphere of radius r, where smooth
        // jacobians deviate most
        const double radius = (s % 2 == 0) ? r : r * unit(rng);
        Point y;
        try {
            y = f.chart.exp_point(x, radius * random_unit(f.dim(), rng));
        } catch (const error&) {
            continue;
        }
        Matrix diff = f.jacobian(i, x) - f.jacobian(i, y);
        worst = std::max(worst, Eigen::JacobiSVD<Matrix>(diff).singularValues()(0));
    }
    return worst;
}

} // namespace bishadow
