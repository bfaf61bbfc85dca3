#pragma once

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "engine.hpp"
#include "hyperbolicity.hpp"
#include "numfmt.hpp"

namespace bishadow {

using json = nlohmann::ordered_json;

namespace detail {

// JSON has no infinity; encode it as a string so it survives a round trip.
inline json number(double x)
{
    if (std::isfinite(x))
        return x;
    return fmt17(x);
}

inline double number_from(const json& j)
{
    if (j.is_string())
        return parse_double(j.get<std::string>());
    return j.get<double>();
}

inline json range(IndexRange r) { return json::array({r.lo, r.hi}); }

} // namespace detail

inline json to_json(const Certificate& c)
{
    json j;
    j["family"] = c.family;
    j["window"] = detail::range(c.window);
    j["valid"] = c.valid();
    j["lambda_s"] = detail::number(c.lambda_s_max);
    j["lambda_u"] = detail::number(c.lambda_u_min);
    j["mu_s"] = detail::number(c.mu_s_max);
    j["mu_u"] = detail::number(c.mu_u_max);
    j["h"] = detail::number(c.h);
    j["eta_hat"] = detail::number(c.eta_hat);
    j["eta_estimated"] = c.eta_estimated;
    j["eta_radius"] = detail::number(c.eta_radius);
    j["margin"] = detail::number(c.margin);
    if (c.violation) {
        j["violation"] = {{"inequality", c.violation->inequality},
                          {"index", c.violation->index},
                          {"lhs", detail::number(c.violation->lhs)},
                          {"rhs", detail::number(c.violation->rhs)}};
    }
    return j;
}

/// Aggregates, derived constants (when given) and the per-index table.
inline std::string certificate_report(const Certificate& c, const Calibration* cal = nullptr)
{
    std::ostringstream out;
    out << "family        " << c.family << '\n';
    out << "window        [" << c.window.lo << ", " << c.window.hi << "]\n";
    out << "status        " << (c.valid() ? "certified" : "FAILED") << '\n';
    out << "lambda_u      " << fmt17(c.lambda_u_min) << '\n';
    out << "lambda_s      " << fmt17(c.lambda_s_max) << '\n';
    out << "mu_u          " << fmt17(c.mu_u_max) << '\n';
    out << "mu_s          " << fmt17(c.mu_s_max) << '\n';
    out << "h             " << fmt17(c.h) << '\n';
    out << "eta_hat       " << fmt17(c.eta_hat) << (c.eta_estimated ? " (sampled)" : "") << '\n';
    out << "margin        " << fmt17(c.margin) << '\n';
    if (c.violation)
        out << "violated      " << c.violation->inequality << " at index " << c.violation->index << ": "
            << fmt17(c.violation->lhs) << " vs " << fmt17(c.violation->rhs) << '\n';
    if (cal) {
        const TildeConstants& t = cal->tilde;
        const ShadowingConstants& k = cal->constants;
        out << "\nderived (" << to_string(k.mode) << " mode)\n";
        out << "eta           " << fmt17(t.eta) << (t.eta_capped ? " (capped)" : "") << '\n';
        out << "lambda_u~     " << fmt17(t.lambda_u) << '\n';
        out << "lambda_s~     " << fmt17(t.lambda_s_inv) << '\n';
        out << "mu_u~         " << fmt17(t.mu_u) << '\n';
        out << "mu_s~         " << fmt17(t.mu_s) << '\n';
        out << "L             " << fmt17(k.L) << '\n';
        out << "delta         " << fmt17(k.delta) << '\n';
    }
    out << "\n" << std::setw(8) << "i" << std::setw(26) << "lambda_s" << std::setw(26) << "lambda_u"
        << std::setw(26) << "mu_s" << std::setw(26) << "mu_u" << std::setw(26) << "product_margin" << '\n';
    for (const auto& ic : c.per_index)
        out << std::setw(8) << ic.index << std::setw(26) << fmt17(ic.lambda_s) << std::setw(26) << fmt17(ic.lambda_u)
            << std::setw(26) << fmt17(ic.mu_s) << std::setw(26) << fmt17(ic.mu_u) << std::setw(26)
            << fmt17(ic.product_margin()) << '\n';
    return out.str();
}

inline json to_json(const TildeConstants& t)
{
    return {{"lambda_u", detail::number(t.lambda_u)}, {"lambda_s", detail::number(t.lambda_s_inv)},
            {"mu_u", detail::number(t.mu_u)},         {"mu_s", detail::number(t.mu_s)},
            {"eta", detail::number(t.eta)},           {"eta_capped", t.eta_capped}};
}

inline json to_json(const ShadowingConstants& c)
{
    json j = {{"mode", to_string(c.mode)},
              {"L", detail::number(c.L)},
              {"delta", detail::number(c.delta)},
              {"h", detail::number(c.h)},
              {"unstable_denominator", detail::number(c.unstable_denominator)},
              {"stable_denominator", detail::number(c.stable_denominator)}};
    if (c.mode == ConstantsMode::asymptotic) {
        j["v"] = detail::number(c.v);
        j["eps"] = detail::number(c.eps);
        j["k0"] = c.k0;
        j["k1"] = c.k1;
    }
    return j;
}

inline json to_json(const ShadowingResult& r)
{
    json j;
    j["mode"] = r.mode;
    j["window"] = detail::range(r.window);
    j["p"] = detail::number(r.p);
    j["L"] = detail::number(r.L);
    j["delta"] = detail::number(r.delta);
    j["norms"] = {{"distances", detail::number(r.achieved_norm)},
                  {"defects", detail::number(r.defect_norm)},
                  {"gaps", detail::number(r.gap_norm)},
                  {"bound", detail::number(r.bound)}};
    j["bound_ok"] = r.bound_ok;
    j["within_hypothesis"] = r.within_hypothesis;
    j["iterations"] = r.iterations;
    j["residual"] = {{"fixed_point", detail::number(r.fixed_point_residual)},
                     {"orbit_identity", detail::number(r.orbit_identity_defect)},
                     {"orbit", detail::number(r.orbit_residual)}};
    json factors = json::array();
    for (double f : r.contraction)
        factors.push_back(detail::number(f));
    j["contraction"] = factors;
    if (!r.bands.empty()) {
        json bands = json::array();
        for (const auto& b : r.bands)
            bands.push_back({{"band", b.band},
                             {"from", b.from},
                             {"to", b.to},
                             {"eps", detail::number(b.eps)},
                             {"cap", detail::number(b.cap)},
                             {"max_distance", detail::number(b.max_distance)},
                             {"pass", b.pass}});
        j["bands"] = bands;
    }
    if (r.rate) {
        const RateReport& q = *r.rate;
        j["rate"] = {{"v", detail::number(q.v)},
                     {"eps", detail::number(q.eps)},
                     {"k0", q.k0},
                     {"k1", q.k1},
                     {"rate_estimate", detail::number(q.rate_estimate)},
                     {"defect_rate", detail::number(q.defect_rate)},
                     {"gap_rate", detail::number(q.gap_rate)},
                     {"envelope_margin", detail::number(q.envelope_margin)},
                     {"envelope_ok", q.envelope_ok},
                     {"rate_ok", q.rate_ok}};
    }
    if (!r.windows.empty()) {
        json w = json::array();
        for (long k : r.windows)
            w.push_back(k);
        json a = json::array();
        for (double x : r.agreement)
            a.push_back(detail::number(x));
        j["schedule"] = {{"windows", w}, {"agreement", a}};
        if (r.central) {
            j["schedule"]["central"] = detail::range(*r.central);
            j["schedule"]["central_norm"] = detail::number(r.central_norm);
        }
    }
    return j;
}

/// i, x_1..x_d, y_1..y_d, dist_i, delta_i (delta empty on the last row).
inline void write_orbit_csv(std::ostream& out, const ShadowingResult& r)
{
    const long d = r.pseudo.empty() ? 0 : r.pseudo.front().dim();
    out << "i";
    for (long j = 1; j <= d; ++j)
        out << ",x" << j;
    for (long j = 1; j <= d; ++j)
        out << ",y" << j;
    out << ",dist_i,delta_i\n";
    for (std::size_t j = 0; j < r.pseudo.size(); ++j) {
        out << r.window.lo + static_cast<long>(j);
        for (double c : r.pseudo[j].coords)
            out << ',' << fmt17(c);
        for (double c : r.orbit[j].coords)
            out << ',' << fmt17(c);
        out << ',' << fmt17(r.distances[j]) << ',';
        if (j < r.defects.size())
            out << fmt17(r.defects[j]);
        out << '\n';
    }
}

struct OrbitRecord {
    long first = 0;
    std::vector<Vector> x;
    std::vector<Vector> y;
    std::vector<double> distances;
    std::vector<double> defects;
};

inline OrbitRecord read_orbit_csv(std::istream& in)
{
    OrbitRecord rec;
    std::string line;
    if (!std::getline(in, line))
        throw error(errc::config, "empty orbit CSV");
    const auto header = split(line, ',');
    if (header.size() < 5 || header.front() != "i" || (header.size() - 3) % 2 != 0)
        throw error(errc::config, "orbit CSV header must be i,x..,y..,dist_i,delta_i");
    const long d = static_cast<long>(header.size() - 3) / 2;
    bool first_row = true;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size())
            throw error(errc::config, "orbit CSV row has the wrong number of columns");
        if (first_row) {
            rec.first = parse_long(cells[0]);
            first_row = false;
        }
        Vector x(d), y(d);
        for (long j = 0; j < d; ++j) {
            x[j] = parse_double(cells[static_cast<std::size_t>(1 + j)]);
            y[j] = parse_double(cells[static_cast<std::size_t>(1 + d + j)]);
        }
        rec.x.push_back(std::move(x));
        rec.y.push_back(std::move(y));
        rec.distances.push_back(parse_double(cells[static_cast<std::size_t>(1 + 2 * d)]));
        if (!cells.back().empty())
            rec.defects.push_back(parse_double(cells.back()));
    }
    return rec;
}

} // namespace bishadow
