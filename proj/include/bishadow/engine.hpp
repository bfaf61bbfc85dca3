#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "charts.hpp"
#include "hyperbolicity.hpp"
#include "numfmt.hpp"
#include "pseudoorbit.hpp"
#include "systems.hpp"

namespace bishadow {

struct SolveOptions {
    double p = 2.0;
    double tol_fixed_point = 1e-12;
    long max_iterations = 10000;
    double newton_tol = 1e-13;
    int newton_max_iterations = 60;
    // abort once the change grows this many iterations in a row
    int divergence_patience = 10;
    long doubling_factor = 2;
    double agreement_tol = 1e-8;
    long max_window = 1L << 14;

    void validate() const
    {
        if (!(p >= 1))
            throw error(errc::parameter_domain, "p must be >= 1");
        if (!(tol_fixed_point > 0) || !(newton_tol > 0) || !(agreement_tol > 0))
            throw error(errc::parameter_domain, "tolerances must be positive");
        if (max_iterations < 1 || newton_max_iterations < 1 || divergence_patience < 1)
            throw error(errc::parameter_domain, "iteration limits must be positive");
        if (doubling_factor < 2 || max_window < 1)
            throw error(errc::parameter_domain, "window schedule needs factor >= 2 and a positive cap");
    }
};

// ---------------------------------------------------------------------------
// tangent sequences and envelopes

struct TangentSequence {
    long first = 0;
    std::vector<Tangent> z;
    std::vector<Tangent> stable;
    std::vector<Tangent> unstable;

    IndexRange window() const { return {first, first + static_cast<long>(z.size()) - 1}; }
    const Tangent& at(long i) const { return z[static_cast<std::size_t>(i - first)]; }
};

inline TangentSequence decompose(long first, std::vector<Tangent> z, const Splitting& s)
{
    TangentSequence t;
    t.first = first;
    t.z = std::move(z);
    for (std::size_t j = 0; j < t.z.size(); ++j) {
        const LocalSplitting& loc = s.at(first + static_cast<long>(j));
        t.stable.push_back(loc.proj_s * t.z[j]);
        t.unstable.push_back(loc.proj_u * t.z[j]);
    }
    return t;
}

/// Phi(r): sup_i |P^s z_i| <= r and sup_i |P^u z_i| <= r.
inline bool in_ball(const TangentSequence& t, double radius)
{
    return seq_pnorm_of(t.stable, infinity) <= radius && seq_pnorm_of(t.unstable, infinity) <= radius;
}

/// Phi_p(r): the l^p norms of both component sequences are at most r.
inline bool in_lp_ball(const TangentSequence& t, double p, double radius)
{
    return seq_pnorm_of(t.stable, p) <= radius && seq_pnorm_of(t.unstable, p) <= radius;
}

/// Per-index cap on |z_i|.
using Envelope = std::function<double(long)>;

inline std::optional<long> first_violation(const TangentSequence& t, const Envelope& cap)
{
    for (std::size_t j = 0; j < t.z.size(); ++j) {
        const long i = t.first + static_cast<long>(j);
        const double c = cap(i);
        if (t.z[j].norm() > c * (1.0 + 1e-12))
            return i;
    }
    return std::nullopt;
}

/// |z_i| <= L delta for |i| <= k1 and L delta q^(|i| - k1) beyond.
inline Envelope geometric_envelope(double L, double delta, double q, long k1)
{
    return [=](long i) {
        const long a = std::abs(i);
        return a <= k1 ? L * delta : L * delta * std::pow(q, static_cast<double>(a - k1));
    };
}

/**
 * Thresholds k_n for the halving ladder eps_0 = L delta, eps_n = eps_{n-1}/2:
 * k_n is the least k with sup_{|i| >= k} m_i < eps_n. Band n is
 * k_n <= |i| < k_{n+1}; the last band runs to the window edge K. The ladder
 * stops once L eps_n would fall below `floor`.
 */
struct BandLadder {
    double L = 0;
    double delta = 0;
    long K = 0;
    std::vector<double> eps;
    std::vector<long> thresholds;

    int band_of(long i) const
    {
        const long a = std::abs(i);
        int n = -1;
        for (std::size_t j = 0; j < thresholds.size(); ++j)
            if (thresholds[j] <= a)
                n = static_cast<int>(j);
        return n;
    }

    long band_end(int n) const
    {
        return static_cast<std::size_t>(n + 1) < thresholds.size() ? thresholds[static_cast<std::size_t>(n + 1)] - 1 : K;
    }

    double cap_of_band(int n) const
    {
        return n < 0 ? L * delta : std::min(L * delta, L * eps[static_cast<std::size_t>(n)]);
    }

    double cap(long i) const { return cap_of_band(band_of(i)); }
};

inline BandLadder band_ladder(std::span<const double> m, long first, double L, double delta, int max_bands = 64,
                              double floor = 1e-13)
{
    BandLadder lad;
    lad.L = L;
    lad.delta = delta;
    const std::vector<double> tail = tail_sup(m, first);
    lad.K = max_abs_index(first, m.size());
    double eps = L * delta;
    for (int n = 0; n < max_bands; ++n, eps *= 0.5) {
        if (n > 0 && L * eps < floor)
            break; // caps below coordinate resolution are not checkable
        long k = 0;
        while (k <= lad.K && !(tail[static_cast<std::size_t>(k)] < eps))
            ++k;
        if (k > lad.K)
            break;
        if (!lad.thresholds.empty() && k == lad.thresholds.back() && tail[static_cast<std::size_t>(k)] == 0.0)
            break; // every later band is empty
        lad.eps.push_back(eps);
        lad.thresholds.push_back(k);
    }
    return lad;
}

// ---------------------------------------------------------------------------
// tube map and its inverse on E^u

/// F_z(w) = P^u_{i+1}(F_i(P^s z + w) - F_i(P^s z)) for w in E^u at x_i.
class TubeMap {
public:
    TubeMap(const LiftedStep& step, const LocalSplitting& here, const LocalSplitting& next, const Tangent& z)
        : step_(&step)
        , here_(&here)
        , next_(&next)
        , zs_(here.proj_s * z)
        , f_zs_(step(zs_))
    {
    }

    const Tangent& stable_base() const { return zs_; }
    const Tangent& lifted_stable_base() const { return f_zs_; }

    Tangent operator()(const Tangent& w) const { return next_->proj_u * ((*step_)(zs_ + w) - f_zs_); }

    /// Derivative of F_z in the orthonormal coordinates of E^u and E^u'.
    Matrix block(const Tangent& w) const
    {
        return next_->unstable.transpose() * next_->proj_u * step_->derivative(zs_ + w) * here_->unstable;
    }

    const LiftedStep& step() const { return *step_; }
    const LocalSplitting& here() const { return *here_; }
    const LocalSplitting& next() const { return *next_; }

private:
    const LiftedStep* step_;
    const LocalSplitting* here_;
    const LocalSplitting* next_;
    Tangent zs_;
    Tangent f_zs_;
};

/**
 * Q_z(target): the w in E^u with F_z(w) = target. Affine steps solve
 * exactly; otherwise Newton from B11^{-1} target. Targets above
 * lambda_u~ * radius are refused.
 */
inline Tangent invert_unstable(const TubeMap& tm, const Tangent& target, double lambda_u_tilde, double radius,
                               const SolveOptions& opts)
{
    const long index = tm.step().index();
    const double size = target.norm();
    if (size > lambda_u_tilde * radius * (1.0 + 1e-9))
        throw error(errc::target_out_of_range,
                    "|target| = " + fmt17(size) + " exceeds lambda_u~ L delta = " + fmt17(lambda_u_tilde * radius),
                    index);
    const Matrix& u = tm.here().unstable;
    if (u.cols() == 0 || size == 0.0)
        return Tangent::Zero(target.size());
    const Matrix& u_next = tm.next().unstable;
    const Vector goal = u_next.transpose() * target;
    Eigen::PartialPivLU<Matrix> lu0(tm.block(Tangent::Zero(target.size())));
    Vector a = lu0.solve(goal);
    if (!a.allFinite())
        throw error(errc::newton_divergence, "unstable block is singular", index);
    if (tm.step().family().affine())
        return u * a;

    double best = infinity;
    int growth = 0;
    for (int it = 0; it < opts.newton_max_iterations; ++it) {
        const Tangent w = u * a;
        const Vector res = u_next.transpose() * tm(w) - goal;
        const double r = res.norm();
        if (!std::isfinite(r))
            break;
        if (r <= opts.newton_tol)
            return w;
        if (r >= best) {
            if (++growth >= 3) {
                // rounding floor: accept if already close
                if (best <= 100.0 * opts.newton_tol)
                    return w;
                break;
            }
        } else {
            growth = 0;
            best = r;
        }
        Eigen::PartialPivLU<Matrix> lu(tm.block(w));
        const Vector step = lu.solve(res);
        if (!step.allFinite())
            break;
        a -= step;
    }
    throw error(errc::newton_divergence, "Newton did not converge for Q_z", index);
}

// ---------------------------------------------------------------------------
// the operator H

/**
 * H on tangent sequences over the pseudo-orbit window [lo, hi]:
 *
 *   P^s w_lo = 0,  P^u w_hi = 0,
 *   P^s w_{i+1} = P^s G_i(z_i),
 *   P^u w_i = Q_{z_i}(P^u(-G_i(z_i) + F_i(z_i) - F_i(P^s z_i) + z_{i+1})).
 *
 * Every row reads the old z, so a fixed point satisfies z_{i+1} = G_i(z_i).
 */
class ShadowingOperator {
public:
    ShadowingOperator(const MapFamily& f, const MapFamily& g, const PseudoOrbit& x, const Splitting& s,
                      double lambda_u_tilde, double radius, SolveOptions opts)
        : splitting_(&s)
        , first_(x.first)
        , n_(static_cast<long>(x.points.size()))
        , lambda_u_(lambda_u_tilde)
        , radius_(radius)
        , opts_(opts)
    {
        if (n_ < 2)
            throw error(errc::parameter_domain, "window needs at least two points");
        const IndexRange w = x.window();
        if (!s.window().contains(w.lo) || !s.window().contains(w.hi))
            throw error(errc::parameter_domain, "splitting does not cover the pseudo-orbit window");
        for (long i = w.lo; i < w.hi; ++i) {
            f_steps_.push_back(lift_step(f, i, x.at(i), x.at(i + 1)));
            g_steps_.push_back(lift_step(g, i, x.at(i), x.at(i + 1)));
        }
    }

    IndexRange window() const { return {first_, first_ + n_ - 1}; }
    double radius() const { return radius_; }
    double lambda_u_tilde() const { return lambda_u_; }
    const Splitting& splitting() const { return *splitting_; }
    const LiftedStep& F(long i) const { return f_steps_[static_cast<std::size_t>(i - first_)]; }
    const LiftedStep& G(long i) const { return g_steps_[static_cast<std::size_t>(i - first_)]; }

    TubeMap tube(long i, const Tangent& z) const
    {
        return TubeMap(F(i), splitting_->at(i), splitting_->at(i + 1), z);
    }

    std::vector<Tangent> apply(const std::vector<Tangent>& z) const
    {
        const long d = z.front().size();
        std::vector<Tangent> w(z.size(), Tangent::Zero(d));
        for (long j = 0; j + 1 < n_; ++j) {
            const long i = first_ + j;
            const auto jj = static_cast<std::size_t>(j);
            const LocalSplitting& next = splitting_->at(i + 1);
            const Tangent gz = G(i)(z[jj]);
            w[jj + 1] += next.proj_s * gz;
            const TubeMap tm = tube(i, z[jj]);
            const Tangent target = next.proj_u * (-gz + F(i)(z[jj]) - tm.lifted_stable_base() + z[jj + 1]);
            w[jj] += invert_unstable(tm, target, lambda_u_, radius_, opts_);
        }
        return w;
    }

    /// max_i |z_{i+1} - G_i(z_i)|.
    double orbit_defect(const std::vector<Tangent>& z) const
    {
        double worst = 0;
        for (long j = 0; j + 1 < n_; ++j) {
            const auto jj = static_cast<std::size_t>(j);
            worst = std::max(worst, (z[jj + 1] - G(first_ + j)(z[jj])).norm());
        }
        return worst;
    }

private:
    const Splitting* splitting_;
    long first_;
    long n_;
    double lambda_u_;
    double radius_;
    SolveOptions opts_;
    std::vector<LiftedStep> f_steps_;
    std::vector<LiftedStep> g_steps_;
};

struct IterationLog {
    long iterations = 0;
    double last_change = 0;
    std::vector<double> contraction;
};

/// Called on every iterate; throws to reject it.
using IterateGuard = std::function<void(const TangentSequence&)>;

/// z <- H(z) from z = 0 until sup_i |dz_i| <= tol.
inline std::vector<Tangent> iterate_to_fixed_point(const ShadowingOperator& H, const SolveOptions& opts,
                                                   const IterateGuard& guard, IterationLog& log)
{
    const IndexRange w = H.window();
    const long d = H.F(w.lo).offset().size();
    std::vector<Tangent> z(static_cast<std::size_t>(w.size()), Tangent::Zero(d));
    double previous = 0;
    int growing = 0;
    for (long it = 1; it <= opts.max_iterations; ++it) {
        std::vector<Tangent> next = H.apply(z);
        double change = 0;
        for (std::size_t j = 0; j < z.size(); ++j)
            change = std::max(change, (next[j] - z[j]).norm());
        if (guard)
            guard(decompose(w.lo, next, H.splitting()));
        z = std::move(next);
        log.iterations = it;
        log.last_change = change;
        if (it > 1 && previous > 0) {
            const double factor = change / previous;
            log.contraction.push_back(factor);
            growing = factor > 1.0 ? growing + 1 : 0;
        }
        if (change <= opts.tol_fixed_point)
            return z;
        if (growing >= opts.divergence_patience) {
            std::ostringstream msg;
            msg << "contraction factor above 1 for " << growing << " consecutive iterations; recent factors:";
            const std::size_t from = log.contraction.size() > 10 ? log.contraction.size() - 10 : 0;
            for (std::size_t j = from; j < log.contraction.size(); ++j)
                msg << ' ' << fmt17(log.contraction[j]);
            throw error(errc::non_convergence, msg.str());
        }
        previous = change;
    }
    throw error(errc::non_convergence, "no fixed point after " + std::to_string(opts.max_iterations)
                                           + " iterations; last change " + fmt17(log.last_change));
}

// ---------------------------------------------------------------------------
// results

struct BandReport {
    int band = 0;
    long from = 0; // |i| range, inclusive
    long to = 0;
    double eps = 0;
    double cap = 0;
    double max_distance = 0;
    bool pass = true;
};

struct RateReport {
    double v = 0;
    double eps = 0;
    long k0 = 0;
    long k1 = 0;
    double rate_estimate = 0;    // root rate of the distances from k1
    double defect_rate = 0;      // root rate of the defects from k1
    double gap_rate = 0;         // root rate of the gaps from k1
    double envelope_margin = 0;  // min over |i| >= k1 of 2 L delta q^(|i|-k1) - d_i
    bool envelope_ok = true;
    bool rate_ok = true;
};

struct ShadowingResult {
    std::string mode;
    IndexRange window;
    double p = 2;
    double L = 0;
    double delta = 0;
    std::vector<Point> pseudo;
    std::vector<Point> orbit;
    std::vector<Tangent> z;
    std::vector<double> distances;
    std::vector<double> defects;
    std::vector<double> gaps;
    double achieved_norm = 0;
    double defect_norm = 0;
    double gap_norm = 0;
    double bound = 0;
    bool bound_ok = true;
    bool within_hypothesis = true;
    long iterations = 0;
    double fixed_point_residual = 0;
    double orbit_identity_defect = 0;
    double orbit_residual = 0;
    std::vector<double> contraction;
    std::vector<BandReport> bands;
    std::optional<RateReport> rate;
    // window doubling
    std::vector<long> windows;
    std::vector<double> agreement;
    std::optional<IndexRange> central;
    double central_norm = 0;

    double distance_at(long i) const { return distances[static_cast<std::size_t>(i - window.lo)]; }
    const Point& orbit_at(long i) const { return orbit[static_cast<std::size_t>(i - window.lo)]; }
};

using shadowing_error = error_with<ShadowingResult>;

namespace detail {

inline std::vector<double> max_profile(const std::vector<double>& a, const std::vector<double>& b)
{
    std::vector<double> m(a.size());
    for (std::size_t j = 0; j < a.size(); ++j)
        m[j] = std::max(a[j], j < b.size() ? b[j] : 0.0);
    return m;
}

inline ShadowingResult assemble(std::string mode, const MapFamily& f, const PerturbedFamily& g, const PseudoOrbit& x,
                                const ShadowingOperator& H, std::vector<Tangent> z, const ShadowingConstants& sc,
                                const SolveOptions& opts, IterationLog log)
{
    ShadowingResult r;
    r.mode = std::move(mode);
    r.window = x.window();
    r.p = opts.p;
    r.L = sc.L;
    r.delta = sc.delta;
    r.pseudo = x.points;
    r.defects = x.defects;
    r.gaps = g.gap_profile(r.window);
    for (std::size_t j = 0; j < z.size(); ++j) {
        r.orbit.push_back(f.chart.exp_point(x.points[j], z[j]));
        r.distances.push_back(f.chart.distance(x.points[j], r.orbit.back()));
    }
    r.orbit_identity_defect = H.orbit_defect(z);
    r.z = std::move(z);
    for (std::size_t j = 0; j + 1 < r.orbit.size(); ++j) {
        const long i = r.window.lo + static_cast<long>(j);
        r.orbit_residual = std::max(r.orbit_residual, g.map.chart.distance(g.map.evaluate(i, r.orbit[j]), r.orbit[j + 1]));
    }
    r.achieved_norm = seq_pnorm(r.distances, opts.p);
    r.defect_norm = seq_pnorm(r.defects, opts.p);
    r.gap_norm = seq_pnorm(r.gaps, opts.p);
    r.bound = sc.L * std::max(r.defect_norm, r.gap_norm);
    r.bound_ok = r.achieved_norm <= r.bound + 1e-12;
    r.within_hypothesis = r.defect_norm <= sc.delta && r.gap_norm <= sc.delta;
    r.iterations = log.iterations;
    r.fixed_point_residual = log.last_change;
    r.contraction = std::move(log.contraction);
    if (!(r.orbit_identity_defect <= 10.0 * opts.tol_fixed_point))
        throw shadowing_error(errc::non_convergence,
                              "fixed point violates z_{i+1} = G_i(z_i) by " + fmt17(r.orbit_identity_defect), r);
    return r;
}

inline void require_mode(const ShadowingConstants& sc, ConstantsMode mode)
{
    if (sc.mode != mode)
        throw error(errc::parameter_domain, std::string("constants were computed for ") + to_string(sc.mode)
                                                + " mode, not " + to_string(mode));
}

} // namespace detail

/**
 * Finite-window solve. Returns y_i = exp_{x_i}(z_i) at the fixed point of H,
 * with ||{d_i}||_p checked against L max(||Delta||_p, ||gamma||_p).
 */
inline ShadowingResult solve_finite(const MapFamily& f, const PerturbedFamily& g, const PseudoOrbit& x,
                                    const Splitting& s, const TildeConstants& tc, const ShadowingConstants& sc,
                                    const SolveOptions& opts)
{
    opts.validate();
    detail::require_mode(sc, ConstantsMode::finite);
    const ShadowingOperator H(f, g.map, x, s, tc.lambda_u, sc.L * sc.delta, opts);
    IterationLog log;
    auto z = iterate_to_fixed_point(H, opts, nullptr, log);
    ShadowingResult r = detail::assemble("finite", f, g, x, H, std::move(z), sc, opts, std::move(log));
    if (!r.bound_ok)
        throw shadowing_error(errc::bound_violation, "||d||_p = " + fmt17(r.achieved_norm) + " exceeds L max(||Delta||_p, ||gamma||_p) = "
                                                         + fmt17(r.bound), r);
    return r;
}

/**
 * Solves on [-k, k], [-2k, 2k], ... inside the pseudo-orbit window until two
 * consecutive solutions agree within agreement_tol on |i| <= central.
 */
inline ShadowingResult solve_infinite(const MapFamily& f, const PerturbedFamily& g, const PseudoOrbit& x,
                                      const Splitting& s, const TildeConstants& tc, const ShadowingConstants& sc,
                                      const SolveOptions& opts, long k_start, long central)
{
    opts.validate();
    const IndexRange full = x.window();
    const long K = std::min(-full.lo, full.hi);
    if (k_start < 1 || central < 0 || central > k_start)
        throw error(errc::parameter_domain, "need k_start >= 1 and 0 <= central <= k_start");
    std::optional<ShadowingResult> prev;
    std::vector<long> windows;
    std::vector<double> agreement;
    for (long k = k_start;; k *= opts.doubling_factor) {
        if (k > K || k > opts.max_window)
            throw error(errc::schedule_exhaustion, "no agreement on |i| <= " + std::to_string(central)
                                                       + " before the window cap " + std::to_string(std::min(K, opts.max_window)));
        const IndexRange w = IndexRange::symmetric(k);
        ShadowingResult cur = solve_finite(f, g, x.restrict(w), s.restrict(w), tc, sc, opts);
        windows.push_back(k);
        if (prev) {
            double change = 0;
            for (long i = -central; i <= central; ++i)
                change = std::max(change, f.chart.distance(prev->orbit_at(i), cur.orbit_at(i)));
            agreement.push_back(change);
            if (change <= opts.agreement_tol) {
                cur.mode = "infinite";
                cur.windows = std::move(windows);
                cur.agreement = std::move(agreement);
                cur.central = IndexRange::symmetric(central);
                std::vector<double> mid(cur.distances.begin() + (k - central), cur.distances.begin() + (k + central) + 1);
                cur.central_norm = seq_pnorm(mid, opts.p);
                return cur;
            }
        }
        prev = std::move(cur);
    }
}

/// sup_{|i|>=k} max(delta_i, gamma_i) < q^|i| for all |i| >= k0; the least such k0.
inline long asymptotic_k0(std::span<const double> m, long first, double q)
{
    long k0 = 0;
    for (std::size_t j = 0; j < m.size(); ++j) {
        const long a = std::abs(first + static_cast<long>(j));
        if (!(m[j] < std::pow(q, static_cast<double>(a))))
            k0 = std::max(k0, a + 1);
    }
    return k0;
}

/**
 * Limit mode: requires a vanishing defect/gap profile, builds the band
 * ladder, rejects any iterate leaving its band cap, and checks
 * d_i <= L eps_n on every band of the solution. `bands` = l restricts the
 * solve to [-k_l, k_l].
 */
inline ShadowingResult solve_limit(const MapFamily& f, const PerturbedFamily& g, const PseudoOrbit& x_full,
                                   const Splitting& s, const TildeConstants& tc, const ShadowingConstants& sc,
                                   const SolveOptions& opts, std::optional<int> bands = std::nullopt)
{
    opts.validate();
    detail::require_mode(sc, ConstantsMode::limit);
    const std::vector<double> m = detail::max_profile(x_full.defects, g.gap_profile(x_full.window()));
    if (!looks_vanishing(tail_sup(m, x_full.first)))
        throw error(errc::precondition, "defect/gap profile is not vanishing on the window");
    const BandLadder ladder = band_ladder(m, x_full.first, sc.L, sc.delta);

    PseudoOrbit x = x_full;
    if (bands) {
        if (*bands < 1)
            throw error(errc::parameter_domain, "band count must be positive");
        if (static_cast<std::size_t>(*bands) < ladder.thresholds.size()) {
            const long kl = ladder.thresholds[static_cast<std::size_t>(*bands)];
            if (kl < 1)
                throw error(errc::precondition, "band threshold k_l is zero; window would be a single point");
            x = x_full.restrict(IndexRange::symmetric(kl));
        }
    }

    const ShadowingOperator H(f, g.map, x, s, tc.lambda_u, sc.L * sc.delta, opts);
    auto guard = [&ladder](const TangentSequence& t) {
        if (auto bad = first_violation(t, [&](long i) { return ladder.cap(i); }))
            throw error(errc::envelope_violation,
                        "iterate leaves band " + std::to_string(ladder.band_of(*bad)) + " cap "
                            + fmt17(ladder.cap(*bad)) + " (|z_i| = " + fmt17(t.at(*bad).norm()) + ")",
                        *bad);
    };
    IterationLog log;
    auto z = iterate_to_fixed_point(H, opts, guard, log);
    ShadowingResult r = detail::assemble("limit", f, g, x, H, std::move(z), sc, opts, std::move(log));

    const long Kr = max_abs_index(r.window.lo, r.distances.size());
    for (std::size_t n = 0; n < ladder.thresholds.size(); ++n) {
        BandReport b;
        b.band = static_cast<int>(n);
        b.from = ladder.thresholds[n];
        b.to = std::min(ladder.band_end(static_cast<int>(n)), Kr);
        if (b.from > b.to)
            continue;
        b.eps = ladder.eps[n];
        b.cap = sc.L * b.eps;
        for (long i = r.window.lo; i <= r.window.hi; ++i)
            if (std::abs(i) >= b.from && std::abs(i) <= b.to)
                b.max_distance = std::max(b.max_distance, r.distance_at(i));
        b.pass = b.max_distance <= b.cap;
        r.bands.push_back(b);
    }
    for (const auto& b : r.bands)
        if (!b.pass)
            throw shadowing_error(errc::envelope_violation,
                                  "band " + std::to_string(b.band) + " max distance " + fmt17(b.max_distance)
                                      + " exceeds L eps_n = " + fmt17(b.cap),
                                  r);
    return r;
}

/**
 * Asymptotic mode with rate q = v + eps: rejects iterates outside the
 * envelope L delta q^(|i|-k1), then checks d_i <= 2 L delta q^(|i|-k1) for
 * |i| >= k1 and root_rate(d, k1) <= q + 1e-9.
 */
inline ShadowingResult solve_asymptotic(const MapFamily& f, const PerturbedFamily& g, const PseudoOrbit& x,
                                        const Splitting& s, const TildeConstants& tc, const ShadowingConstants& sc,
                                        const SolveOptions& opts)
{
    opts.validate();
    detail::require_mode(sc, ConstantsMode::asymptotic);
    const double q = sc.rate();
    const long K = max_abs_index(x.first, x.points.size());
    const std::vector<double> gaps = g.gap_profile(x.window());
    const std::vector<double> m = detail::max_profile(x.defects, gaps);
    const long k0 = asymptotic_k0(m, x.first, q);
    if (k0 > sc.k0)
        throw error(errc::precondition, "defects/gaps stay above (v+eps)^|i| until |i| = " + std::to_string(k0)
                                            + ", beyond the k0 = " + std::to_string(sc.k0) + " used for the constants");
    if (!(sc.k1 < K))
        throw error(errc::precondition, "window edge " + std::to_string(K) + " does not exceed k1 = " + std::to_string(sc.k1));

    const Envelope env = geometric_envelope(sc.L, sc.delta, q, sc.k1);
    const ShadowingOperator H(f, g.map, x, s, tc.lambda_u, sc.L * sc.delta, opts);
    auto guard = [&env](const TangentSequence& t) {
        if (auto bad = first_violation(t, env))
            throw error(errc::envelope_violation,
                        "iterate leaves the geometric envelope " + fmt17(env(*bad)) + " (|z_i| = " + fmt17(t.at(*bad).norm()) + ")",
                        *bad);
    };
    IterationLog log;
    auto z = iterate_to_fixed_point(H, opts, guard, log);
    ShadowingResult r = detail::assemble("asymptotic", f, g, x, H, std::move(z), sc, opts, std::move(log));

    RateReport rr;
    rr.v = sc.v;
    rr.eps = sc.eps;
    rr.k0 = sc.k0;
    rr.k1 = sc.k1;
    rr.envelope_margin = infinity;
    for (long i = r.window.lo; i <= r.window.hi; ++i) {
        const long a = std::abs(i);
        if (a < sc.k1)
            continue;
        const double cap = 2.0 * env(i);
        rr.envelope_margin = std::min(rr.envelope_margin, cap - r.distance_at(i));
    }
    rr.envelope_ok = rr.envelope_margin >= 0;
    const long n0 = std::max<long>(1, sc.k1);
    rr.rate_estimate = root_rate(r.distances, r.window.lo, n0);
    rr.defect_rate = r.defects.empty() ? 0.0 : root_rate(r.defects, r.window.lo, n0);
    rr.gap_rate = gaps.empty() ? 0.0 : root_rate(gaps, r.window.lo, n0);
    rr.rate_ok = rr.rate_estimate <= q + 1e-9;
    r.rate = rr;
    if (!rr.envelope_ok)
        throw shadowing_error(errc::envelope_violation,
                              "d_i exceeds 2 L delta (v+eps)^(|i|-k1) by " + fmt17(-rr.envelope_margin), r);
    if (!rr.rate_ok)
        throw shadowing_error(errc::envelope_violation,
                              "root rate " + fmt17(rr.rate_estimate) + " exceeds v + eps = " + fmt17(q), r);
    return r;
}

} // namespace bishadow
