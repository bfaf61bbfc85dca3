#pragma once

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "charts.hpp"
#include "systems.hpp"

namespace bishadow {

/// Operator 2-norm; 0 for empty matrices.
inline double op_norm(const Matrix& m)
{
    if (m.size() == 0)
        return 0.0;
    return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

/// Minimal expansion min_{|v|=1} |M v|, i.e. the smallest singular value.
/// A map from the zero space has conorm +inf; a map with more columns than
/// rows has a kernel and conorm 0.
inline double conorm(const Matrix& m)
{
    if (m.cols() == 0)
        return infinity;
    if (m.rows() < m.cols())
        return 0.0;
    auto sv = Eigen::JacobiSVD<Matrix>(m).singularValues();
    return sv(sv.size() - 1);
}

// ---------------------------------------------------------------------------
// splittings

/// Orthonormal bases of E^u and E^s at one point, with the oblique
/// projections onto each along the other.
struct LocalSplitting {
    Matrix unstable;
    Matrix stable;
    Matrix proj_u;
    Matrix proj_s;
};

namespace detail {

inline Matrix orthonormal_columns(const Matrix& m)
{
    if (m.cols() == 0)
        return Matrix(m.rows(), 0);
    Eigen::HouseholderQR<Matrix> qr(m);
    Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
    // fix the sign of each column so the representation is deterministic
    for (long j = 0; j < q.cols(); ++j) {
        Eigen::Index at = 0;
        q.col(j).cwiseAbs().maxCoeff(&at);
        if (q(at, j) < 0)
            q.col(j) *= -1.0;
    }
    return q;
}

} // namespace detail

inline LocalSplitting make_local_splitting(const Matrix& unstable, const Matrix& stable)
{
    const long d = std::max(unstable.rows(), stable.rows());
    if (unstable.cols() + stable.cols() != d)
        throw error(errc::degenerate_splitting, "basis sizes do not add up to the dimension");
    LocalSplitting out;
    out.unstable = detail::orthonormal_columns(unstable.rows() == d ? unstable : Matrix(d, 0));
    out.stable = detail::orthonormal_columns(stable.rows() == d ? stable : Matrix(d, 0));
    Matrix v(d, d);
    v << out.unstable, out.stable;
    auto sv = Eigen::JacobiSVD<Matrix>(v).singularValues();
    const double smallest = sv(sv.size() - 1);
    if (!(smallest > 0) || sv(0) / smallest > 1e12)
        throw error(errc::degenerate_splitting, "combined basis is numerically singular");
    Matrix inv = v.inverse();
    const long du = out.unstable.cols();
    out.proj_u = out.unstable * inv.topRows(du);
    out.proj_s = out.stable * inv.bottomRows(d - du);
    return out;
}

/// Per-index splittings over a window, plus the projection bound h.
class Splitting {
public:
    Splitting(long first, std::vector<LocalSplitting> local)
        : first_(first)
        , local_(std::move(local))
    {
        if (local_.empty())
            throw error(errc::degenerate_splitting, "empty splitting");
        dim_u_ = static_cast<int>(local_.front().unstable.cols());
        dim_s_ = static_cast<int>(local_.front().stable.cols());
        h_ = 1.0;
        for (std::size_t j = 0; j < local_.size(); ++j) {
            if (local_[j].unstable.cols() != dim_u_ || local_[j].stable.cols() != dim_s_)
                throw error(errc::degenerate_splitting, "splitting dimensions change along the window",
                            first_ + static_cast<long>(j));
            h_ = std::max({h_, op_norm(local_[j].proj_u), op_norm(local_[j].proj_s)});
        }
    }

    IndexRange window() const { return {first_, first_ + static_cast<long>(local_.size()) - 1}; }
    const LocalSplitting& at(long i) const
    {
        if (!window().contains(i))
            throw error(errc::out_of_domain, "splitting not defined at index", i);
        return local_[static_cast<std::size_t>(i - first_)];
    }
    double h() const { return h_; }
    int dim_u() const { return dim_u_; }
    int dim_s() const { return dim_s_; }

    Splitting restrict(IndexRange w) const
    {
        if (!window().contains(w.lo) || !window().contains(w.hi))
            throw error(errc::out_of_domain, "restriction outside the splitting window");
        return Splitting(w.lo, std::vector<LocalSplitting>(local_.begin() + (w.lo - first_),
                                                           local_.begin() + (w.hi - first_) + 1));
    }

private:
    long first_;
    std::vector<LocalSplitting> local_;
    int dim_u_ = 0;
    int dim_s_ = 0;
    double h_ = 1.0;
};

enum class SplittingMethod { eigen, coordinate, power_iteration };

inline const char* to_string(SplittingMethod m)
{
    switch (m) {
    case SplittingMethod::eigen: return "eigen";
    case SplittingMethod::coordinate: return "coordinate";
    case SplittingMethod::power_iteration: return "power-iteration";
    }
    return "?";
}

inline SplittingMethod default_splitting_method(const MapFamily& f)
{
    if (f.coordinate_splitting)
        return SplittingMethod::coordinate;
    return f.affine() && f.autonomous ? SplittingMethod::eigen : SplittingMethod::power_iteration;
}

namespace detail {

inline int count_expanding(const Matrix& jac)
{
    Eigen::EigenSolver<Matrix> es(jac, false);
    int n = 0;
    for (long j = 0; j < es.eigenvalues().size(); ++j) {
        double mod = std::abs(es.eigenvalues()[j]);
        if (std::abs(mod - 1.0) < 1e-12)
            throw error(errc::degenerate_splitting, "jacobian has an eigenvalue on the unit circle");
        if (mod > 1.0)
            ++n;
    }
    return n;
}

// Real eigendirections split by modulus; nullopt if the spectrum is complex.
inline std::optional<std::pair<Matrix, Matrix>> eigen_bases(const Matrix& jac, int du)
{
    Eigen::EigenSolver<Matrix> es(jac);
    const long d = jac.rows();
    std::vector<long> up, down;
    for (long j = 0; j < d; ++j) {
        auto lam = es.eigenvalues()[j];
        if (std::abs(lam.imag()) > 1e-12 * std::max(1.0, std::abs(lam)))
            return std::nullopt;
        (std::abs(lam.real()) > 1.0 ? up : down).push_back(j);
    }
    if (static_cast<int>(up.size()) != du)
        throw error(errc::degenerate_splitting, "unstable dimension changes along the window");
    // order by decreasing modulus so bases are reproducible
    auto by_modulus = [&](long a, long b) {
        return std::abs(es.eigenvalues()[a].real()) > std::abs(es.eigenvalues()[b].real());
    };
    std::sort(up.begin(), up.end(), by_modulus);
    std::sort(down.begin(), down.end(), by_modulus);
    Matrix vu(d, static_cast<long>(up.size()));
    Matrix vs(d, static_cast<long>(down.size()));
    for (std::size_t j = 0; j < up.size(); ++j)
        vu.col(static_cast<long>(j)) = es.eigenvectors().col(up[j]).real();
    for (std::size_t j = 0; j < down.size(); ++j)
        vs.col(static_cast<long>(j)) = es.eigenvectors().col(down[j]).real();
    return std::make_pair(vu, vs);
}

inline std::pair<Matrix, Matrix> coordinate_bases(long d, int du)
{
    Matrix id = Matrix::Identity(d, d);
    return {id.leftCols(du), id.rightCols(d - du)};
}

} // namespace detail

/**
 * Splitting at each point of `points` (indexed from `first`).
 *
 * - eigen: real eigendirections of Df_i(x_i), split by modulus.
 * - coordinate: the first d_u axes span E^u, the rest E^s.
 * - power_iteration: E^u pushed forward by Df from the first point, E^s
 *   pulled back by Df^{-1} from the last point; both seeded from the local
 *   eigendirections when those are real.
 *
 * d_u defaults to the number of expanding eigenvalues of Df at the first point.
 */
inline Splitting build_splitting(const MapFamily& f, std::span<const Point> points, long first,
                                 SplittingMethod method, std::optional<int> unstable_dim = std::nullopt)
{
    if (points.empty())
        throw error(errc::degenerate_splitting, "no points to split at");
    const long d = f.dim();
    const long n = static_cast<long>(points.size());
    std::vector<Matrix> jac;
    jac.reserve(points.size());
    for (long j = 0; j < n; ++j)
        jac.push_back(f.jacobian(first + j, points[static_cast<std::size_t>(j)]));
    const int du = unstable_dim ? *unstable_dim : detail::count_expanding(jac.front());
    if (du < 0 || du > d)
        throw error(errc::parameter_domain, "invalid unstable dimension");

    std::vector<LocalSplitting> local;
    local.reserve(points.size());
    switch (method) {
    case SplittingMethod::coordinate: {
        auto [u, s] = detail::coordinate_bases(d, du);
        for (long j = 0; j < n; ++j)
            local.push_back(make_local_splitting(u, s));
        break;
    }
    case SplittingMethod::eigen: {
        for (long j = 0; j < n; ++j) {
            auto bases = detail::eigen_bases(jac[static_cast<std::size_t>(j)], du);
            if (!bases)
                throw error(errc::degenerate_splitting, "complex spectrum; eigen splitting unavailable",
                            first + j);
            local.push_back(make_local_splitting(bases->first, bases->second));
        }
        break;
    }
    case SplittingMethod::power_iteration: {
        auto seed = [&](const Matrix& j0) {
            auto b = detail::eigen_bases(j0, du);
            return b ? *b : detail::coordinate_bases(d, du);
        };
        std::vector<Matrix> u(points.size()), s(points.size());
        u.front() = detail::orthonormal_columns(seed(jac.front()).first);
        for (long j = 0; j + 1 < n; ++j)
            u[static_cast<std::size_t>(j + 1)] = detail::orthonormal_columns(jac[static_cast<std::size_t>(j)]
                                                                            * u[static_cast<std::size_t>(j)]);
        s.back() = detail::orthonormal_columns(seed(jac.back()).second);
        for (long j = n - 2; j >= 0; --j) {
            Eigen::PartialPivLU<Matrix> lu(jac[static_cast<std::size_t>(j)]);
            s[static_cast<std::size_t>(j)] = detail::orthonormal_columns(lu.solve(s[static_cast<std::size_t>(j + 1)]));
        }
        for (long j = 0; j < n; ++j) {
            try {
                local.push_back(make_local_splitting(u[static_cast<std::size_t>(j)], s[static_cast<std::size_t>(j)]));
            } catch (const error& e) {
                throw error(e.code(), e.what(), first + j);
            }
        }
        break;
    }
    }
    return Splitting(first, std::move(local));
}

// ---------------------------------------------------------------------------
// blocks and certification

/// Df_i written from the splitting at x_i to the splitting at x_{i+1}, in the
/// orthonormal coordinates of each subspace.
struct BlockData {
    Matrix b11; // E^u -> E^u
    Matrix b12; // E^s -> E^u
    Matrix b21; // E^u -> E^s
    Matrix b22; // E^s -> E^s
    double conorm_b11 = 0;
    double norm_b12 = 0;
    double norm_b21 = 0;
    double norm_b22 = 0;
};

inline BlockData extract_blocks(const Matrix& df, const LocalSplitting& here, const LocalSplitting& next)
{
    BlockData b;
    const Matrix to_u = next.unstable.transpose() * next.proj_u * df;
    const Matrix to_s = next.stable.transpose() * next.proj_s * df;
    b.b11 = to_u * here.unstable;
    b.b12 = to_u * here.stable;
    b.b21 = to_s * here.unstable;
    b.b22 = to_s * here.stable;
    b.conorm_b11 = conorm(b.b11);
    b.norm_b12 = op_norm(b.b12);
    b.norm_b21 = op_norm(b.b21);
    b.norm_b22 = op_norm(b.b22);
    return b;
}

inline BlockData extract_blocks(const MapFamily& f, const Splitting& splitting, long i, const Point& x_i)
{
    return extract_blocks(f.jacobian(i, x_i), splitting.at(i), splitting.at(i + 1));
}

/// Rebuilds Df from its blocks; the inverse of extract_blocks.
inline Matrix reassemble(const BlockData& b, const LocalSplitting& here, const LocalSplitting& next)
{
    const long d = here.unstable.rows();
    const long du = here.unstable.cols();
    Matrix blocks(d, d);
    blocks.topLeftCorner(du, du) = b.b11;
    blocks.topRightCorner(du, d - du) = b.b12;
    blocks.bottomLeftCorner(d - du, du) = b.b21;
    blocks.bottomRightCorner(d - du, d - du) = b.b22;
    Matrix v_here(d, d), v_next(d, d);
    v_here << here.unstable, here.stable;
    v_next << next.unstable, next.stable;
    return v_next * blocks * v_here.inverse();
}

struct IndexConstants {
    long index = 0;
    double lambda_s = 0;
    double lambda_u = 0;
    double mu_s = 0;
    double mu_u = 0;

    double product_margin() const { return (1.0 - lambda_s) * (lambda_u - 1.0) - mu_s * mu_u; }
};

struct Violation {
    std::string inequality;
    long index = 0;
    double lhs = 0;
    double rhs = 0;
};

struct Certificate {
    std::string family;
    IndexRange window;
    std::vector<IndexConstants> per_index;
    double lambda_s_max = 0;
    double lambda_u_min = infinity;
    double mu_u_max = 0;
    double mu_s_max = 0;
    double h = 1;
    double eta_hat = 0;
    bool eta_estimated = false;
    double eta_radius = 0;
    double margin = infinity;
    std::optional<Violation> violation;

    bool valid() const { return !violation.has_value(); }
};

using certification_error = error_with<Certificate>;

/**
 * Semi-hyperbolicity constants along the transitions first .. first+n-2 of
 * `points`: lambda_ui = m(B11), lambda_si = |B22|, mu_ui = |B12|,
 * mu_si = |B21|. Checks lambda_si < 1 < lambda_ui and
 * (1 - lambda_si)(lambda_ui - 1) > mu_si mu_ui at every index and throws
 * certification_error naming the first violation.
 */
inline Certificate certify(const MapFamily& f, const Splitting& splitting, std::span<const Point> points, long first,
                           double eta_hat = 0.0, bool eta_estimated = false, double eta_radius = 0.0)
{
    if (points.size() < 2)
        throw error(errc::parameter_domain, "certification needs at least one transition");
    Certificate cert;
    cert.family = f.name;
    cert.window = {first, first + static_cast<long>(points.size()) - 2};
    cert.h = splitting.h();
    cert.eta_hat = eta_hat;
    cert.eta_estimated = eta_estimated;
    cert.eta_radius = eta_radius;
    for (long i = cert.window.lo; i <= cert.window.hi; ++i) {
        BlockData b = extract_blocks(f, splitting, i, points[static_cast<std::size_t>(i - first)]);
        IndexConstants c{i, b.norm_b22, b.conorm_b11, b.norm_b21, b.norm_b12};
        cert.per_index.push_back(c);
        cert.lambda_s_max = std::max(cert.lambda_s_max, c.lambda_s);
        cert.lambda_u_min = std::min(cert.lambda_u_min, c.lambda_u);
        cert.mu_u_max = std::max(cert.mu_u_max, c.mu_u);
        cert.mu_s_max = std::max(cert.mu_s_max, c.mu_s);
        if (!cert.violation) {
            if (!(c.lambda_s < 1.0))
                cert.violation = Violation{"lambda_s < 1", i, c.lambda_s, 1.0};
            else if (!(c.lambda_u > 1.0))
                cert.violation = Violation{"lambda_u > 1", i, c.lambda_u, 1.0};
            else if (!(c.product_margin() > 0.0))
                cert.violation = Violation{"(1 - lambda_s)(lambda_u - 1) > mu_s mu_u", i,
                                           (1.0 - c.lambda_s) * (c.lambda_u - 1.0), c.mu_s * c.mu_u};
        }
        cert.margin = std::min(cert.margin, c.product_margin());
    }
    if (cert.violation) {
        const Violation& v = *cert.violation;
        std::ostringstream msg;
        msg << "inequality " << v.inequality << " fails at index " << v.index << " (" << v.lhs
            << " vs " << v.rhs << ")";
        throw certification_error(errc::certification_failure, msg.str(), cert, v.index);
    }
    return cert;
}

// ---------------------------------------------------------------------------
// derived constants

/// Inflated constants: each block bound moved by h^2 eta toward the
/// non-hyperbolic side.
struct TildeConstants {
    double lambda_u = 0;     // expansion lower bound
    double lambda_s_inv = 0; // contraction upper bound
    double mu_u = 0;
    double mu_s = 0;
    double eta = 0;
    bool eta_capped = false;
};

inline TildeConstants tilde_constants_for_eta(const Certificate& cert, double eta)
{
    if (!(eta >= 0))
        throw error(errc::parameter_domain, "eta must be nonnegative");
    const double inflate = cert.h * cert.h * eta;
    TildeConstants tc;
    tc.eta = eta;
    tc.lambda_u = cert.lambda_u_min - inflate;
    tc.lambda_s_inv = cert.lambda_s_max + inflate;
    tc.mu_u = cert.mu_u_max + inflate;
    tc.mu_s = cert.mu_s_max + inflate;
    if (!(tc.lambda_u > 1.0)) {
        std::ostringstream msg;
        msg << "inflated expansion λ̃u = " << tc.lambda_u << " <= 1";
        throw error(errc::infeasible_constants, msg.str());
    }
    if (!(tc.lambda_s_inv + tc.mu_s < 1.0)) {
        std::ostringstream msg;
        msg << "inflated contraction λ̃s + μ̃s = " << tc.lambda_s_inv + tc.mu_s << " >= 1";
        throw error(errc::infeasible_constants, msg.str());
    }
    return tc;
}

/// eta = min(eta_hat, safety * slack / h^2) with
/// slack = min(lambda_u - 1, (1 - lambda_s - mu_s) / 2); the stable half keeps
/// lambda_s + mu_s + 2 h^2 eta below 1 for every safety < 1.
inline TildeConstants tilde_constants(const Certificate& cert, double safety)
{
    if (!(safety > 0 && safety < 1))
        throw error(errc::parameter_domain, "safety factor must lie in (0, 1)");
    const double slack = std::min(cert.lambda_u_min - 1.0, 0.5 * (1.0 - cert.lambda_s_max - cert.mu_s_max));
    const double budget = safety * slack / (cert.h * cert.h);
    TildeConstants tc = tilde_constants_for_eta(cert, std::min(cert.eta_hat, budget));
    tc.eta_capped = cert.eta_hat > budget;
    return tc;
}

enum class ConstantsMode { finite, limit, asymptotic };

inline const char* to_string(ConstantsMode m)
{
    switch (m) {
    case ConstantsMode::finite: return "finite";
    case ConstantsMode::limit: return "limit";
    case ConstantsMode::asymptotic: return "asymptotic";
    }
    return "?";
}

struct AsymptoticParams {
    double v = 0;
    double eps = 0;
    long k0 = 0;
};

struct ShadowingConstants {
    ConstantsMode mode = ConstantsMode::finite;
    double L = 0;
    double delta = 0;
    double h = 1;
    double unstable_denominator = 0;
    double stable_denominator = 0;
    // asymptotic mode only
    double v = 0;
    double eps = 0;
    long k0 = 0;
    long k1 = 0;

    double rate() const { return v + eps; }
};

/// Interval of rates q = v + eps for which both asymptotic denominators are
/// positive and q < 1: q in (lower, 1).
inline double asymptotic_rate_floor(const TildeConstants& tc)
{
    const double diff = tc.lambda_u - tc.mu_u;
    const double from_unstable = diff > 0 ? 1.0 / diff : infinity;
    return std::max(from_unstable, tc.lambda_s_inv + tc.mu_s);
}

/// Smallest n >= 1 with q^n <= delta.
inline long steps_to_reach(double q, double delta)
{
    if (!(q > 0 && q < 1) || !(delta > 0 && delta < 1))
        throw error(errc::parameter_domain, "need 0 < q < 1 and 0 < delta < 1");
    long n = std::max<long>(1, static_cast<long>(std::ceil(std::log(delta) / std::log(q))) - 1);
    while (std::pow(q, static_cast<double>(n)) > delta)
        ++n;
    while (n > 1 && std::pow(q, static_cast<double>(n - 1)) <= delta)
        --n;
    return n;
}

/**
 * The shadowing constant L for `mode` and delta = min(delta_cap, rho / L).
 *
 *   finite:     L = max{ 2h/(lu - 1 - mu_u), 2h/(1 - ls - mu_s) }
 *   limit:      L = max{ 3h/(lu - 2 - mu_u), 3h/(1 - 2(ls + mu_s)) }
 *   asymptotic: L = max{ h(1+a)/(lu - mu_u - a), h(1+a)/(1 - a(ls + mu_s)) },  a = 1/(v+eps)
 *
 * with lu, ls, mu the tilde constants. Asymptotic mode also sets k1 >= k0
 * minimal with (v+eps)^(k1-k0) <= delta.
 */
inline ShadowingConstants shadowing_constants(const TildeConstants& tc, double h, double rho, ConstantsMode mode,
                                              std::optional<AsymptoticParams> asym = std::nullopt,
                                              double delta_cap = 1e-3)
{
    if (!(h >= 1) || !(rho > 0) || !(delta_cap > 0))
        throw error(errc::parameter_domain, "need h >= 1, rho > 0, delta_cap > 0");
    ShadowingConstants sc;
    sc.mode = mode;
    sc.h = h;
    double numerator = 0;
    std::string du_name, ds_name;
    switch (mode) {
    case ConstantsMode::finite:
        numerator = 2.0 * h;
        sc.unstable_denominator = tc.lambda_u - 1.0 - tc.mu_u;
        sc.stable_denominator = 1.0 - tc.lambda_s_inv - tc.mu_s;
        du_name = "λ̃u − 1 − μ̃u";
        ds_name = "1 − λ̃s − μ̃s";
        break;
    case ConstantsMode::limit:
        numerator = 3.0 * h;
        sc.unstable_denominator = tc.lambda_u - 2.0 - tc.mu_u;
        sc.stable_denominator = 1.0 - 2.0 * (tc.lambda_s_inv + tc.mu_s);
        du_name = "λ̃u − 2 − μ̃u";
        ds_name = "1 − 2(λ̃s + μ̃s)";
        break;
    case ConstantsMode::asymptotic: {
        if (!asym)
            throw error(errc::parameter_domain, "asymptotic mode needs (v, eps, k0)");
        const double q = asym->v + asym->eps;
        if (!(asym->v > 0 && asym->eps > 0 && q < 1))
            throw error(errc::parameter_domain, "asymptotic mode needs v > 0, eps > 0, v + eps < 1");
        const double a = 1.0 / q;
        numerator = h * (1.0 + a);
        sc.unstable_denominator = tc.lambda_u - tc.mu_u - a;
        sc.stable_denominator = 1.0 - a * (tc.lambda_s_inv + tc.mu_s);
        du_name = "λ̃u − μ̃u − (v+ε)⁻¹";
        ds_name = "1 − (v+ε)⁻¹(λ̃s + μ̃s)";
        sc.v = asym->v;
        sc.eps = asym->eps;
        sc.k0 = asym->k0;
        break;
    }
    }
    auto infeasible = [&](const std::string& name, double value) {
        std::ostringstream msg;
        msg << to_string(mode) << " mode requires " << name << " > 0, got " << value;
        if (mode == ConstantsMode::asymptotic) {
            const double floor = asymptotic_rate_floor(tc);
            msg << "; feasible v range for ε = " << sc.eps << ": (" << std::max(0.0, floor - sc.eps) << ", "
                << 1.0 - sc.eps << ")";
            if (floor >= 1.0)
                msg << " (empty)";
        }
        throw error(errc::infeasible_constants, msg.str());
    };
    if (!(sc.unstable_denominator > 0))
        infeasible(du_name, sc.unstable_denominator);
    if (!(sc.stable_denominator > 0))
        infeasible(ds_name, sc.stable_denominator);
    sc.L = std::max(numerator / sc.unstable_denominator, numerator / sc.stable_denominator);
    sc.delta = std::min(delta_cap, rho / sc.L);
    if (mode == ConstantsMode::asymptotic)
        sc.k1 = sc.k0 + steps_to_reach(sc.rate(), std::min(sc.delta, 0.999999));
    return sc;
}

/// Constants for one run, with eta_hat sampled on the tube when the family
/// is not affine.
struct Calibration {
    Certificate certificate;
    TildeConstants tilde;
    ShadowingConstants constants;
    double radius = 0; // sampling radius used for eta_hat
};

/**
 * Affine families have eta_hat = 0. Otherwise eta_hat is the sampled
 * jacobian modulus at r = 2 h L delta; since L depends on eta, the estimate
 * is repeated with 5% headroom until r covers it (at most four rounds).
 */
inline Calibration calibrate(const MapFamily& f, Certificate cert, ConstantsMode mode, double safety,
                             double delta_cap, std::optional<AsymptoticParams> asym = std::nullopt,
                             int samples = 2000, std::uint64_t seed = 7)
{
    const double rho = f.chart.injectivity_radius();
    Calibration out;
    cert.eta_hat = 0.0;
    cert.eta_estimated = false;
    cert.eta_radius = 0.0;
    out.tilde = tilde_constants(cert, safety);
    out.constants = shadowing_constants(out.tilde, cert.h, rho, mode, asym, delta_cap);
    if (!f.affine()) {
        double r = 0.0;
        for (int round = 0; round < 4; ++round) {
            const double need = std::min(2.0 * cert.h * out.constants.L * out.constants.delta, 0.99 * rho);
            if (need <= r)
                break;
            r = std::min(1.05 * need, 0.99 * rho);
            cert.eta_hat = continuity_modulus(f, r, samples, seed);
            cert.eta_estimated = true;
            cert.eta_radius = r;
            out.tilde = tilde_constants(cert, safety);
            out.constants = shadowing_constants(out.tilde, cert.h, rho, mode, asym, delta_cap);
        }
        out.radius = r;
    }
    out.certificate = std::move(cert);
    return out;
}

} // namespace bishadow
