#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "charts.hpp"
#include "numfmt.hpp"
#include "systems.hpp"

namespace bishadow {

/// Points x_lo .. x_hi with measured defects delta_i = d(f_i(x_i), x_{i+1})
/// for the transitions lo .. hi-1.
struct PseudoOrbit {
    long first = 0;
    std::vector<Point> points;
    std::vector<double> defects;
    std::uint64_t seed = 0;

    IndexRange window() const { return {first, first + static_cast<long>(points.size()) - 1}; }
    const Point& at(long i) const
    {
        if (!window().contains(i))
            throw error(errc::out_of_domain, "pseudo-orbit has no point at index", i);
        return points[static_cast<std::size_t>(i - first)];
    }
    double defect_at(long i) const
    {
        if (i < first || i >= window().hi)
            throw error(errc::out_of_domain, "pseudo-orbit has no transition at index", i);
        return defects[static_cast<std::size_t>(i - first)];
    }

    PseudoOrbit restrict(IndexRange w) const
    {
        if (!window().contains(w.lo) || !window().contains(w.hi) || w.lo > w.hi)
            throw error(errc::out_of_domain, "restriction outside the pseudo-orbit window");
        PseudoOrbit out;
        out.first = w.lo;
        out.seed = seed;
        out.points.assign(points.begin() + (w.lo - first), points.begin() + (w.hi - first) + 1);
        out.defects.assign(defects.begin() + (w.lo - first), defects.begin() + (w.hi - first));
        return out;
    }
};

/// Defect magnitudes by index: constant m, harmonic m/(1+|i|), geometric m v^|i|.
struct DefectRecipe {
    enum class Kind { constant, harmonic, geometric };

    Kind kind = Kind::constant;
    double magnitude = 0;
    double rate = 0.5;
    // fixed direction for stress tests; isotropic random when unset
    std::optional<Tangent> direction;

    double at(long i) const
    {
        const double n = static_cast<double>(std::abs(i));
        switch (kind) {
        case Kind::constant: return magnitude;
        case Kind::harmonic: return magnitude / (1.0 + n);
        case Kind::geometric: return magnitude * std::pow(rate, n);
        }
        return magnitude;
    }

    static DefectRecipe constant(double m) { return {Kind::constant, m, 0.5, std::nullopt}; }
    static DefectRecipe harmonic(double m) { return {Kind::harmonic, m, 0.5, std::nullopt}; }
    static DefectRecipe geometric(double m, double v) { return {Kind::geometric, m, v, std::nullopt}; }
};

inline const char* to_string(DefectRecipe::Kind k)
{
    switch (k) {
    case DefectRecipe::Kind::constant: return "constant";
    case DefectRecipe::Kind::harmonic: return "harmonic";
    case DefectRecipe::Kind::geometric: return "geometric";
    }
    return "?";
}

/// delta_i = d(f_i(x_i), x_{i+1}) for consecutive points starting at `first`.
inline std::vector<double> measure_defects(const MapFamily& f, std::span<const Point> points, long first)
{
    std::vector<double> out;
    if (points.size() < 2)
        return out;
    out.reserve(points.size() - 1);
    const double rho = f.chart.injectivity_radius();
    for (std::size_t j = 0; j + 1 < points.size(); ++j) {
        const long i = first + static_cast<long>(j);
        const double d = f.chart.distance(f.evaluate(i, points[j]), points[j + 1]);
        if (!(d < rho))
            throw error(errc::tube_escape, "defect " + fmt17(d) + " reaches the injectivity radius", i);
        out.push_back(d);
    }
    return out;
}

/// Wraps given points into a pseudo-orbit; defects are always re-measured.
inline PseudoOrbit make_pseudo_orbit(const MapFamily& f, long first, std::vector<Point> points)
{
    PseudoOrbit po;
    po.first = first;
    po.points = std::move(points);
    po.defects = measure_defects(f, po.points, first);
    return po;
}

/**
 * x_lo = x0 and x_{i+1} = exp_{f_i(x_i)}(eta_i) with |eta_i| = recipe.at(i),
 * swept forward from window.lo. Directions are uniform on the sphere unless
 * the recipe fixes one.
 */
inline PseudoOrbit generate(const MapFamily& f, const Point& x0, IndexRange window, const DefectRecipe& recipe,
                            std::uint64_t seed)
{
    if (window.lo > window.hi)
        throw error(errc::parameter_domain, "empty window");
    const double rho = f.chart.injectivity_radius();
    for (long i = window.lo; i < window.hi; ++i) {
        const double m = recipe.at(i);
        if (!(m >= 0))
            throw error(errc::parameter_domain, "defect magnitudes must be nonnegative", i);
        if (!(m < rho))
            throw error(errc::tube_escape, "recipe magnitude " + fmt17(m) + " reaches the injectivity radius", i);
    }
    std::optional<Tangent> fixed;
    if (recipe.direction) {
        if (recipe.direction->size() != f.dim() || !(recipe.direction->norm() > 0))
            throw error(errc::parameter_domain, "defect direction must be a nonzero vector of the chart dimension");
        fixed = recipe.direction->normalized();
    }
    std::mt19937_64 rng(seed);
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(window.size()));
    pts.push_back(f.chart.point(x0.coords, x0.component));
    for (long i = window.lo; i < window.hi; ++i) {
        const Tangent dir = fixed ? *fixed : random_unit(f.dim(), rng);
        pts.push_back(f.chart.exp_point(f.evaluate(i, pts.back()), recipe.at(i) * dir));
    }
    PseudoOrbit po = make_pseudo_orbit(f, window.lo, std::move(pts));
    po.seed = seed;
    return po;
}

// ---------------------------------------------------------------------------
// profiles

/// Largest |i| among indices first .. first+n-1.
inline long max_abs_index(long first, std::size_t n)
{
    if (n == 0)
        return 0;
    const long last = first + static_cast<long>(n) - 1;
    return std::max(std::abs(first), std::abs(last));
}

/// T(N) = max_{|i| >= N} s_i for N = 0 .. K; the sequence starts at index `first`.
inline std::vector<double> tail_sup(std::span<const double> s, long first)
{
    const long K = max_abs_index(first, s.size());
    std::vector<double> t(static_cast<std::size_t>(K + 1), 0.0);
    for (std::size_t j = 0; j < s.size(); ++j) {
        const auto a = static_cast<std::size_t>(std::abs(first + static_cast<long>(j)));
        t[a] = std::max(t[a], s[j]);
    }
    for (long n = K - 1; n >= 0; --n)
        t[static_cast<std::size_t>(n)] = std::max(t[static_cast<std::size_t>(n)], t[static_cast<std::size_t>(n + 1)]);
    return t;
}

/// max_{|i| >= n0} d_i^{1/|i|}; zero entries contribute 0.
inline double root_rate(std::span<const double> d, long first, long n0)
{
    if (n0 < 1)
        throw error(errc::parameter_domain, "root rate needs N0 >= 1");
    bool any = false;
    double best = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        const long i = first + static_cast<long>(j);
        const long a = std::abs(i);
        if (a < n0)
            continue;
        any = true;
        if (d[j] > 0)
            best = std::max(best, std::pow(d[j], 1.0 / static_cast<double>(a)));
    }
    if (!any)
        throw error(errc::empty_tail, "no index with |i| >= " + std::to_string(n0));
    return best;
}

inline double root_rate(const std::vector<double>& d, long first, long n0)
{
    return root_rate(std::span<const double>(d.data(), d.size()), first, n0);
}

/// exp of the least-squares slope of log s_i against |i| over nonzero
/// entries with |i| >= n0; 0 if fewer than two such entries.
inline double regression_rate(std::span<const double> s, long first, long n0)
{
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    long n = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
        const double a = static_cast<double>(std::abs(first + static_cast<long>(j)));
        if (a < static_cast<double>(n0) || !(s[j] > 0))
            continue;
        const double y = std::log(s[j]);
        sx += a;
        sy += y;
        sxx += a * a;
        sxy += a * y;
        ++n;
    }
    if (n < 2)
        return 0.0;
    const double denom = static_cast<double>(n) * sxx - sx * sx;
    if (!(denom > 0))
        return 0.0;
    return std::exp((static_cast<double>(n) * sxy - sx * sy) / denom);
}

/// Vanishing on a finite window: T(ceil(3K/4)) <= T(0)/2, or T(0) = 0.
inline bool looks_vanishing(const std::vector<double>& tail)
{
    if (tail.empty() || tail.front() == 0.0)
        return true;
    const long K = static_cast<long>(tail.size()) - 1;
    const long probe = (3 * K + 3) / 4;
    return tail[static_cast<std::size_t>(probe)] <= 0.5 * tail.front();
}

struct DefectProfile {
    enum class Kind { p_bounded, vanishing, geometric };

    Kind classification = Kind::p_bounded;
    double p = 2;
    double norm = 0;                // seq_pnorm(delta, p)
    std::vector<double> tail;       // T(N), N = 0 .. K
    bool vanishing = false;
    long rate_from = 1;             // N0
    double rate_estimate = 0;       // max-over-tail root statistic
    double regression_estimate = 0; // diagnostic only
};

inline const char* to_string(DefectProfile::Kind k)
{
    switch (k) {
    case DefectProfile::Kind::p_bounded: return "p-bounded";
    case DefectProfile::Kind::vanishing: return "vanishing";
    case DefectProfile::Kind::geometric: return "geometric";
    }
    return "?";
}

/**
 * Reports all three statistics of a defect sequence and picks the most
 * specific class that fits: geometric when vanishing with regression rate at
 * most 0.95, else vanishing, else p-bounded.
 */
inline DefectProfile classify(std::span<const double> delta, long first, double p = 2.0, long n0 = 1)
{
    DefectProfile prof;
    prof.p = p;
    prof.norm = seq_pnorm(delta, p);
    prof.tail = tail_sup(delta, first);
    prof.vanishing = looks_vanishing(prof.tail);
    prof.rate_from = n0;
    const long K = max_abs_index(first, delta.size());
    prof.rate_estimate = K >= n0 ? root_rate(delta, first, n0) : 0.0;
    prof.regression_estimate = regression_rate(delta, first, n0);
    if (prof.vanishing && prof.regression_estimate <= 0.95)
        prof.classification = DefectProfile::Kind::geometric;
    else if (prof.vanishing)
        prof.classification = DefectProfile::Kind::vanishing;
    return prof;
}

inline DefectProfile classify(const std::vector<double>& delta, long first, double p = 2.0, long n0 = 1)
{
    return classify(std::span<const double>(delta.data(), delta.size()), first, p, n0);
}

// ---------------------------------------------------------------------------
// CSV: i, x_1 .. x_d, delta_i (empty on the last row, which has no transition)

inline void write_csv(std::ostream& out, const PseudoOrbit& po)
{
    const long d = po.points.empty() ? 0 : po.points.front().dim();
    out << "i";
    for (long j = 1; j <= d; ++j)
        out << ",x" << j;
    out << ",delta_i\n";
    for (std::size_t j = 0; j < po.points.size(); ++j) {
        out << po.first + static_cast<long>(j);
        for (double c : po.points[j].coords)
            out << ',' << fmt17(c);
        out << ',';
        if (j < po.defects.size())
            out << fmt17(po.defects[j]);
        out << '\n';
    }
}

/// Raw contents of a pseudo-orbit CSV, including the declared defects.
struct OrbitTable {
    long first = 0;
    std::vector<Vector> coords;
    std::vector<double> declared_defects;
};

inline OrbitTable read_orbit_table(std::istream& in)
{
    OrbitTable t;
    std::string line;
    if (!std::getline(in, line))
        throw error(errc::config, "empty pseudo-orbit CSV");
    const auto header = split(line, ',');
    if (header.size() < 3 || header.front() != "i" || header.back() != "delta_i")
        throw error(errc::config, "pseudo-orbit CSV header must be i,x1..xd,delta_i");
    const long d = static_cast<long>(header.size()) - 2;
    bool first_row = true;
    long expected = 0;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const auto cells = split(line, ',');
        if (static_cast<long>(cells.size()) != d + 2)
            throw error(errc::config, "pseudo-orbit CSV row has the wrong number of columns");
        const long i = parse_long(cells[0]);
        if (first_row) {
            t.first = i;
            expected = i;
            first_row = false;
        }
        if (i != expected)
            throw error(errc::config, "pseudo-orbit CSV indices must be consecutive");
        ++expected;
        Vector v(d);
        for (long j = 0; j < d; ++j)
            v[j] = parse_double(cells[static_cast<std::size_t>(j + 1)]);
        t.coords.push_back(std::move(v));
        if (!cells.back().empty())
            t.declared_defects.push_back(parse_double(cells.back()));
    }
    return t;
}

/// Reads a pseudo-orbit for `f`. Declared defects are ignored and re-measured.
inline PseudoOrbit read_csv(std::istream& in, const MapFamily& f)
{
    OrbitTable t = read_orbit_table(in);
    std::vector<Point> pts;
    pts.reserve(t.coords.size());
    for (auto& c : t.coords)
        pts.push_back(f.chart.point(std::move(c)));
    return make_pseudo_orbit(f, t.first, std::move(pts));
}

} // namespace bishadow
