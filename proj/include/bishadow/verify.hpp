#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "charts.hpp"
#include "hyperbolicity.hpp"
#include "io.hpp"
#include "pseudoorbit.hpp"
#include "systems.hpp"

namespace bishadow {

// Checkers here read plain sequences, so they can audit results loaded from
// files. None of them calls into the engine.

struct OracleSolution {
    long first = 0;
    std::vector<Point> orbit;
    std::vector<Tangent> z;
    std::vector<double> distances;
    std::string method = "full-linear-solve";
    double residual = 0;
};

/**
 * Exact shadowing orbit of an affine g: the stacked linear system
 *
 *   S_lo^T P^s z_lo = 0,  U_hi^T P^u z_hi = 0,  z_{i+1} - B_i z_i = c_i,
 *
 * with c_i = log_{x_{i+1}} g_i(x_i), solved in one dense factorization.
 */
inline OracleSolution linear_shadow_oracle(const MapFamily& g, const PseudoOrbit& x, const Splitting& s)
{
    if (!g.affine())
        throw error(errc::parameter_domain, "the linear oracle needs an affine family");
    const long n = static_cast<long>(x.points.size());
    const long d = g.dim();
    const long lo = x.first;
    const long hi = x.first + n - 1;
    Matrix a = Matrix::Zero(n * d, n * d);
    Vector b = Vector::Zero(n * d);
    long row = 0;
    const LocalSplitting& first = s.at(lo);
    const LocalSplitting& last = s.at(hi);
    const long ds = first.stable.cols();
    const long du = last.unstable.cols();
    a.block(row, 0, ds, d) = first.stable.transpose() * first.proj_s;
    row += ds;
    a.block(row, (n - 1) * d, du, d) = last.unstable.transpose() * last.proj_u;
    row += du;
    std::vector<Vector> c(static_cast<std::size_t>(n - 1));
    std::vector<Matrix> lin(static_cast<std::size_t>(n - 1));
    for (long j = 0; j + 1 < n; ++j) {
        const long i = lo + j;
        lin[static_cast<std::size_t>(j)] = g.linear_part(i);
        c[static_cast<std::size_t>(j)] = g.chart.log_point(x.at(i + 1), g.evaluate(i, x.at(i)));
        a.block(row, (j + 1) * d, d, d) = Matrix::Identity(d, d);
        a.block(row, j * d, d, d) = -lin[static_cast<std::size_t>(j)];
        b.segment(row, d) = c[static_cast<std::size_t>(j)];
        row += d;
    }
    Eigen::FullPivLU<Matrix> lu(a);
    if (!lu.isInvertible())
        throw error(errc::singular_system, "stacked boundary-value system is singular");
    const Vector sol = lu.solve(b);

    OracleSolution out;
    out.first = lo;
    for (long j = 0; j < n; ++j) {
        out.z.push_back(sol.segment(j * d, d));
        out.orbit.push_back(g.chart.exp_point(x.points[static_cast<std::size_t>(j)], out.z.back()));
        out.distances.push_back(out.z.back().norm());
    }
    for (long j = 0; j + 1 < n; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        out.residual = std::max(out.residual, (out.z[jj + 1] - lin[jj] * out.z[jj] - c[jj]).norm());
    }
    out.residual = std::max(out.residual, (first.proj_s * out.z.front()).norm());
    out.residual = std::max(out.residual, (last.proj_u * out.z.back()).norm());
    return out;
}

struct BoundCheck {
    bool pass = false;
    double margin = 0;
};

/// margin = L ||Delta||_p - ||d||_p; pass iff margin >= -1e-12.
inline BoundCheck check_lp_bound(std::span<const double> d, std::span<const double> delta, double L, double p)
{
    BoundCheck c;
    c.margin = L * seq_pnorm(delta, p) - seq_pnorm(d, p);
    c.pass = c.margin >= -1e-12;
    return c;
}

inline BoundCheck check_lp_bound(const std::vector<double>& d, const std::vector<double>& delta, double L, double p)
{
    return check_lp_bound(std::span<const double>(d), std::span<const double>(delta), L, p);
}

/// max_i d(g_i(y_i), y_{i+1}).
inline double check_orbit_residual(const MapFamily& g, long first, std::span<const Point> orbit)
{
    double worst = 0;
    for (std::size_t j = 0; j + 1 < orbit.size(); ++j)
        worst = std::max(worst, g.chart.distance(g.evaluate(first + static_cast<long>(j), orbit[j]), orbit[j + 1]));
    return worst;
}

struct BandCheck {
    long from = 0;
    long to = 0;
    double cap = 0;
    double max_distance = 0;
    double margin = 0;
    bool pass = true;
};

struct DecayReport {
    bool pass = true;
    std::vector<BandCheck> bands;
};

/**
 * Band n covers k_n <= |i| < k_{n+1} (the last band runs to the window edge)
 * and must satisfy max d_i <= L eps_n.
 */
inline DecayReport check_limit_decay(std::span<const double> d, long first, std::span<const long> thresholds,
                                     std::span<const double> eps, double L)
{
    if (thresholds.size() != eps.size())
        throw error(errc::parameter_domain, "need one eps per band threshold");
    DecayReport rep;
    const long K = max_abs_index(first, d.size());
    for (std::size_t n = 0; n < thresholds.size(); ++n) {
        BandCheck b;
        b.from = thresholds[n];
        b.to = n + 1 < thresholds.size() ? thresholds[n + 1] - 1 : K;
        b.cap = L * eps[n];
        for (std::size_t j = 0; j < d.size(); ++j) {
            const long a = std::abs(first + static_cast<long>(j));
            if (a >= b.from && a <= b.to)
                b.max_distance = std::max(b.max_distance, d[j]);
        }
        b.margin = b.cap - b.max_distance;
        b.pass = b.max_distance <= b.cap;
        rep.pass = rep.pass && b.pass;
        rep.bands.push_back(b);
    }
    return rep;
}

struct RateCheck {
    bool pass = false;
    double rate = 0;
};

/// v_hat = root_rate(d, k1); pass iff v_hat <= v + eps + 1e-9.
inline RateCheck check_asymptotic_rate(std::span<const double> d, long first, double v, double eps, long k1)
{
    RateCheck c;
    c.rate = root_rate(d, first, std::max<long>(1, k1));
    c.pass = c.rate <= v + eps + 1e-9;
    return c;
}

/**
 * Audits a result JSON and its orbit CSV without trusting the reported
 * norms: bound, bands and rate are recomputed from the CSV columns. When g
 * is given the orbit residual is recomputed too.
 */
inline json audit(const json& result, const OrbitRecord& rec, const MapFamily* g = nullptr,
                  double residual_tol = 1e-10)
{
    json report;
    report["mode"] = result.at("mode");
    bool all = true;
    const double p = detail::number_from(result.at("p"));
    const double L = detail::number_from(result.at("L"));

    const double dist_norm = seq_pnorm(rec.distances, p);
    const double defect_norm = seq_pnorm(rec.defects, p);
    const double gap_norm = detail::number_from(result.at("norms").at("gaps"));
    const double reported = detail::number_from(result.at("norms").at("distances"));
    const bool norm_match = std::abs(dist_norm - reported) <= 1e-12 * std::max(1.0, reported);
    report["distances_norm_matches"] = norm_match;
    all = all && norm_match;

    const std::string mode = result.at("mode").get<std::string>();
    if (mode == "finite" || mode == "infinite") {
        const double margin = L * std::max(defect_norm, gap_norm) - dist_norm;
        const bool pass = margin >= -1e-12;
        report["lp_bound"] = {{"pass", pass}, {"margin", detail::number(margin)}};
        all = all && pass;
    }
    if (result.contains("bands")) {
        std::vector<long> ks;
        std::vector<double> eps;
        for (const auto& b : result.at("bands")) {
            ks.push_back(b.at("from").get<long>());
            eps.push_back(detail::number_from(b.at("eps")));
        }
        const DecayReport dr = check_limit_decay(rec.distances, rec.first, ks, eps, L);
        json bands = json::array();
        for (const auto& b : dr.bands)
            bands.push_back({{"from", b.from}, {"to", b.to}, {"margin", detail::number(b.margin)}, {"pass", b.pass}});
        report["limit_decay"] = {{"pass", dr.pass}, {"bands", bands}};
        all = all && dr.pass;
    }
    if (result.contains("rate")) {
        const auto& r = result.at("rate");
        const RateCheck rc = check_asymptotic_rate(rec.distances, rec.first, detail::number_from(r.at("v")),
                                                   detail::number_from(r.at("eps")), r.at("k1").get<long>());
        report["asymptotic_rate"] = {{"pass", rc.pass}, {"rate", detail::number(rc.rate)}};
        all = all && rc.pass;
    }
    if (g) {
        std::vector<Point> orbit;
        for (const auto& y : rec.y)
            orbit.push_back(g->chart.point(y));
        const double res = check_orbit_residual(*g, rec.first, orbit);
        report["orbit_residual"] = {{"pass", res <= residual_tol}, {"value", detail::number(res)}};
        all = all && res <= residual_tol;
    }
    report["pass"] = all;
    return report;
}

} // namespace bishadow
