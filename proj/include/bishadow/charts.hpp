#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace bishadow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Tangent = Eigen::VectorXd;

inline constexpr double infinity = std::numeric_limits<double>::infinity();

/// Inclusive index range [lo, hi].
struct IndexRange {
    long lo = 0;
    long hi = 0;

    long size() const { return hi - lo + 1; }
    bool contains(long i) const { return lo <= i && i <= hi; }
    static IndexRange symmetric(long k) { return {-k, k}; }
    bool operator==(const IndexRange&) const = default;
};

struct Point {
    Vector coords;
    int component = 0;

    long dim() const { return coords.size(); }
};

enum class ChartKind { flat_torus, euclidean_box };

inline const char* to_string(ChartKind kind)
{
    return kind == ChartKind::flat_torus ? "flat-torus" : "euclidean-box";
}

namespace detail {

// Shortest representative of a coordinate difference on the unit circle,
// in [-1/2, 1/2]. An exact half resolves to +1/2.
inline double wrap_half(double d)
{
    double w = d - std::floor(d + 0.5);
    if (w == -0.5)
        w = 0.5;
    return w;
}

inline double wrap_unit(double c)
{
    double w = c - std::floor(c);
    return w >= 1.0 ? 0.0 : w;
}

} // namespace detail

/**
 * A flat charted space. Exponential and logarithm maps are translations in
 * chart coordinates, taken modulo 1 on the torus.
 *
 * Torus charts have injectivity radius 1/2. Box charts have no cut locus, so
 * their radius is the configured tube radius.
 */
class Chart {
public:
    static Chart torus(int dim)
    {
        if (dim < 1)
            throw error(errc::parameter_domain, "chart dimension must be positive");
        return Chart(ChartKind::flat_torus, dim, 0.5, infinity);
    }

    static Chart box(int dim, double half_width, double tube_radius)
    {
        if (dim < 1)
            throw error(errc::parameter_domain, "chart dimension must be positive");
        if (!(half_width > 0) || !(tube_radius > 0))
            throw error(errc::parameter_domain, "box half-width and tube radius must be positive");
        return Chart(ChartKind::euclidean_box, dim, tube_radius, half_width);
    }

    ChartKind kind() const { return kind_; }
    int dim() const { return dim_; }
    double injectivity_radius() const { return rho_; }
    double half_width() const { return half_width_; }

    Point point(Vector coords, int component = 0) const
    {
        check_dim(coords.size());
        if (kind_ == ChartKind::flat_torus) {
            for (auto& c : coords)
                c = detail::wrap_unit(c);
        } else if (!inside_box(coords)) {
            throw error(errc::out_of_domain, "point outside the box chart");
        }
        return Point{std::move(coords), component};
    }

    Point point(std::initializer_list<double> coords, int component = 0) const
    {
        Vector v(static_cast<long>(coords.size()));
        long j = 0;
        for (double c : coords)
            v[j++] = c;
        return point(std::move(v), component);
    }

    Point exp_point(const Point& x, const Tangent& v) const
    {
        check_dim(x.dim());
        check_dim(v.size());
        Vector y = x.coords + v;
        if (kind_ == ChartKind::flat_torus) {
            for (auto& c : y)
                c = detail::wrap_unit(c);
        } else if (!inside_box(y)) {
            throw error(errc::out_of_domain, "exp leaves the box chart");
        }
        return Point{std::move(y), x.component};
    }

    /// Shortest tangent vector from x to y. Requires distance(x, y) < rho.
    Tangent log_point(const Point& x, const Point& y) const
    {
        Tangent v = difference(x, y);
        if (!(v.norm() < rho_))
            throw error(errc::radius_exceeded, "log requested at distance " + std::to_string(v.norm())
                                                   + " >= injectivity radius " + std::to_string(rho_));
        return v;
    }

    double distance(const Point& x, const Point& y) const { return difference(x, y).norm(); }

private:
    Chart(ChartKind kind, int dim, double rho, double half_width)
        : kind_(kind)
        , dim_(dim)
        , rho_(rho)
        , half_width_(half_width)
    {
    }

    void check_dim(long n) const
    {
        if (n != dim_)
            throw error(errc::parameter_domain, "dimension mismatch: expected " + std::to_string(dim_)
                                                    + ", got " + std::to_string(n));
    }

    bool inside_box(const Vector& v) const { return v.cwiseAbs().maxCoeff() <= half_width_; }

    Tangent difference(const Point& x, const Point& y) const
    {
        if (x.component != y.component)
            throw error(errc::component_mismatch, "points lie on different components");
        check_dim(x.dim());
        check_dim(y.dim());
        Tangent v = y.coords - x.coords;
        if (kind_ == ChartKind::flat_torus)
            for (auto& c : v)
                c = detail::wrap_half(c);
        return v;
    }

    ChartKind kind_;
    int dim_;
    double rho_;
    double half_width_;
};

/// l^p norm of a finite nonnegative sequence; p = infinity gives the max.
/// Finite p is accumulated with Neumaier summation after scaling by the max.
inline double seq_pnorm(std::span<const double> s, double p)
{
    if (!(p >= 1.0))
        throw error(errc::parameter_domain, "p must be >= 1");
    double peak = 0.0;
    for (double x : s)
        peak = std::max(peak, std::abs(x));
    if (std::isinf(p) || peak == 0.0 || std::isinf(peak))
        return peak;
    double sum = 0.0;
    double comp = 0.0;
    for (double x : s) {
        double term = std::pow(std::abs(x) / peak, p);
        double t = sum + term;
        if (std::abs(sum) >= std::abs(term))
            comp += (sum - t) + term;
        else
            comp += (term - t) + sum;
        sum = t;
    }
    return peak * std::pow(sum + comp, 1.0 / p);
}

inline double seq_pnorm(const std::vector<double>& s, double p)
{
    return seq_pnorm(std::span<const double>(s.data(), s.size()), p);
}

/// l^p norm of the sequence of Euclidean lengths of `vs`.
inline double seq_pnorm_of(const std::vector<Tangent>& vs, double p)
{
    std::vector<double> lengths;
    lengths.reserve(vs.size());
    for (const auto& v : vs)
        lengths.push_back(v.norm());
    return seq_pnorm(lengths, p);
}

} // namespace bishadow
