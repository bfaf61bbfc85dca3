#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "engine.hpp"
#include "hyperbolicity.hpp"
#include "io.hpp"
#include "pseudoorbit.hpp"
#include "systems.hpp"
#include "verify.hpp"

namespace bishadow::cli {

enum exit_code : int {
    ok = 0,
    constants_failure = 1,
    convergence_failure = 2,
    bound_failure = 3,
    config_failure = 64,
    precondition_failure = 65,
};

inline int exit_code_for(errc code)
{
    switch (code) {
    case errc::certification_failure:
    case errc::infeasible_constants:
    case errc::degenerate_splitting:
    case errc::target_out_of_range:
        return constants_failure;
    case errc::non_convergence:
    case errc::newton_divergence:
    case errc::schedule_exhaustion:
        return convergence_failure;
    case errc::bound_violation:
    case errc::envelope_violation:
        return bound_failure;
    case errc::config:
    case errc::parameter_domain:
        return config_failure;
    default:
        return precondition_failure;
    }
}

// ---------------------------------------------------------------------------
// configuration

/// Flat `key = value` text; `#` starts a comment. Unknown and repeated keys
/// are errors.
class ExperimentConfig {
public:
    static const std::set<std::string>& known_keys()
    {
        static const std::set<std::string> keys = {
            "family", "lambda_u", "lambda_s", "mu_u", "mu_s", "factor", "sine_eps",
            "splitting", "window", "x0", "seed",
            "defects", "defect_magnitude", "defect_rate", "defect_direction",
            "perturbation", "perturbation_magnitude", "perturbation_rate", "perturbation_direction",
            "mode", "p", "v", "eps", "bands", "k_start", "central",
            "safety", "delta_cap", "tol", "max_iterations", "agreement_tol",
            "bench_lambda_u", "bench_lambda_s", "bench_mu_u", "bench_mu_s",
            "out",
        };
        return keys;
    }

    static ExperimentConfig parse(std::istream& in)
    {
        ExperimentConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos)
                line.erase(hash);
            const std::string t = trim(line);
            if (t.empty())
                continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw error(errc::config, "line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (!known_keys().count(key))
                throw error(errc::config, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
            if (value.empty())
                throw error(errc::config, "line " + std::to_string(lineno) + ": empty value for '" + key + "'");
            if (!cfg.values_.emplace(key, value).second)
                throw error(errc::config, "line " + std::to_string(lineno) + ": repeated key '" + key + "'");
        }
        return cfg;
    }

    static ExperimentConfig parse_file(const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
            throw error(errc::config, "cannot open config '" + path + "'");
        return parse(in);
    }

    static ExperimentConfig parse_string(const std::string& text)
    {
        std::istringstream in(text);
        return parse(in);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string str(const std::string& key) const
    {
        auto it = values_.find(key);
        if (it == values_.end())
            throw error(errc::config, "missing required key '" + key + "'");
        return it->second;
    }
    std::string str(const std::string& key, const std::string& fallback) const
    {
        return has(key) ? str(key) : fallback;
    }
    double num(const std::string& key) const { return parse_real(key, str(key)); }
    double num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }
    long integer(const std::string& key) const
    {
        try {
            return parse_long(str(key));
        } catch (const error&) {
            throw error(errc::config, "key '" + key + "' must be an integer");
        }
    }
    long integer(const std::string& key, long fallback) const { return has(key) ? integer(key) : fallback; }

    std::vector<double> list(const std::string& key) const
    {
        std::vector<double> out;
        for (const auto& part : split(str(key), ','))
            out.push_back(parse_real(key, trim(part)));
        return out;
    }

private:
    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos)
            return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    static double parse_real(const std::string& key, const std::string& v)
    {
        if (v == "inf" || v == "infinity")
            return infinity;
        try {
            return parse_double(v);
        } catch (const error&) {
            throw error(errc::config, "key '" + key + "' must be a number, got '" + v + "'");
        }
    }

    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// pipeline pieces

inline Tangent vector_of(const std::vector<double>& v)
{
    Tangent t(static_cast<long>(v.size()));
    for (std::size_t j = 0; j < v.size(); ++j)
        t[static_cast<long>(j)] = v[j];
    return t;
}

inline MapFamily family_from(const ExperimentConfig& cfg, IndexRange window)
{
    const std::string name = cfg.str("family");
    if (name == "cat")
        return make_cat_family(window);
    if (name == "sine-cat")
        return make_sine_cat_family(cfg.num("sine_eps", 0.01), window);
    if (name == "coupled")
        return make_coupled_linear_family(cfg.num("lambda_u"), cfg.num("lambda_s"), cfg.num("mu_u", 0.0),
                                          cfg.num("mu_s", 0.0), window);
    if (name == "scalar")
        return make_scalar_family(cfg.num("factor"), window);
    throw error(errc::config, "unknown family '" + name + "'");
}

inline SplittingMethod splitting_from(const ExperimentConfig& cfg, const MapFamily& f)
{
    const std::string m = cfg.str("splitting", "auto");
    if (m == "auto")
        return default_splitting_method(f);
    if (m == "eigen")
        return SplittingMethod::eigen;
    if (m == "coordinate")
        return SplittingMethod::coordinate;
    if (m == "power-iteration")
        return SplittingMethod::power_iteration;
    throw error(errc::config, "unknown splitting method '" + m + "'");
}

inline std::function<double(long)> profile(const std::string& kind, double magnitude, double rate)
{
    if (kind == "constant")
        return [magnitude](long) { return magnitude; };
    if (kind == "harmonic")
        return [magnitude](long i) { return magnitude / (1.0 + static_cast<double>(std::abs(i))); };
    if (kind == "geometric")
        return [magnitude, rate](long i) { return magnitude * std::pow(rate, static_cast<double>(std::abs(i))); };
    throw error(errc::config, "unknown profile '" + kind + "'");
}

inline DefectRecipe recipe_from(const ExperimentConfig& cfg, const MapFamily& f)
{
    const std::string kind = cfg.str("defects", "constant");
    DefectRecipe r;
    if (kind == "constant")
        r.kind = DefectRecipe::Kind::constant;
    else if (kind == "harmonic")
        r.kind = DefectRecipe::Kind::harmonic;
    else if (kind == "geometric")
        r.kind = DefectRecipe::Kind::geometric;
    else
        throw error(errc::config, "unknown defect recipe '" + kind + "'");
    r.magnitude = cfg.num("defect_magnitude", 0.0);
    r.rate = cfg.num("defect_rate", 0.5);
    if (cfg.has("defect_direction")) {
        r.direction = vector_of(cfg.list("defect_direction"));
        if (r.direction->size() != f.dim())
            throw error(errc::config, "defect_direction has the wrong dimension");
    }
    return r;
}

inline PerturbedFamily perturbation_from(const ExperimentConfig& cfg, const MapFamily& f)
{
    const std::string kind = cfg.str("perturbation", "none");
    if (kind == "none")
        return unperturbed(f);
    const double mag = cfg.num("perturbation_magnitude");
    if (kind == "sine") {
        const double bound = std::abs(mag) * std::sqrt(static_cast<double>(f.dim()));
        return make_perturbed_family(f, sine_displacement(mag, f.dim()), [bound](long) { return bound; });
    }
    Tangent dir = cfg.has("perturbation_direction") ? vector_of(cfg.list("perturbation_direction"))
                                                    : Tangent(Tangent::Unit(f.dim(), 0));
    if (dir.size() != f.dim())
        throw error(errc::config, "perturbation_direction has the wrong dimension");
    auto mags = profile(kind, mag, cfg.num("perturbation_rate", 0.5));
    if (kind == "constant")
        return make_perturbed_family(f, constant_displacement(mag * dir.normalized()), mags);
    return make_perturbed_family(f, indexed_displacement(dir, mags), mags);
}

inline Point start_point(const ExperimentConfig& cfg, const MapFamily& f, std::uint64_t seed)
{
    if (cfg.has("x0")) {
        Vector v = vector_of(cfg.list("x0"));
        if (v.size() != f.dim())
            throw error(errc::config, "x0 has the wrong dimension");
        return f.chart.point(v);
    }
    if (f.chart.kind() == ChartKind::euclidean_box)
        return f.chart.point(Vector(Vector::Zero(f.dim())));
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    return random_point(f.chart, rng);
}

inline SolveOptions options_from(const ExperimentConfig& cfg)
{
    SolveOptions o;
    o.p = cfg.num("p", 2.0);
    o.tol_fixed_point = cfg.num("tol", o.tol_fixed_point);
    o.max_iterations = cfg.integer("max_iterations", o.max_iterations);
    o.agreement_tol = cfg.num("agreement_tol", o.agreement_tol);
    o.validate();
    return o;
}

/// Everything built from a config before solving.
struct Setup {
    long k = 0;
    std::uint64_t seed = 0;
    MapFamily f;
    PerturbedFamily g;
    PseudoOrbit x;
    Splitting splitting;
    Certificate certificate;
    SolveOptions options;
    double safety = 0.5;
    double delta_cap = 1e-3;
};

inline Setup prepare(const ExperimentConfig& cfg, std::optional<std::uint64_t> seed_override)
{
    const long k = cfg.integer("window");
    if (k < 1)
        throw error(errc::config, "window must be positive");
    const IndexRange w = IndexRange::symmetric(k);
    const std::uint64_t seed = seed_override ? *seed_override : static_cast<std::uint64_t>(cfg.integer("seed", 1));
    MapFamily f = family_from(cfg, w);
    PerturbedFamily g = perturbation_from(cfg, f);
    PseudoOrbit x = generate(f, start_point(cfg, f, seed), w, recipe_from(cfg, f), seed);
    Splitting s = build_splitting(f, x.points, x.first, splitting_from(cfg, f));
    Certificate cert = certify(f, s, x.points, x.first);
    const std::vector<double> m = detail::max_profile(x.defects, g.gap_profile(x.window()));
    const double sup = m.empty() ? 0.0 : *std::max_element(m.begin(), m.end());
    const double safety = cfg.num("safety", 0.5);
    const double cap = std::max(cfg.num("delta_cap", 1e-3), sup);
    return Setup{k, seed, std::move(f), std::move(g), std::move(x), std::move(s), std::move(cert),
                 options_from(cfg), safety, cap};
}

// ---------------------------------------------------------------------------
// output

inline std::filesystem::path out_dir(const ExperimentConfig& cfg, const std::optional<std::string>& flag)
{
    std::filesystem::path p = flag ? *flag : cfg.str("out", ".");
    std::filesystem::create_directories(p);
    return p;
}

inline void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out)
        throw error(errc::precondition, "cannot write '" + p.string() + "'");
}

inline void write_json(const std::filesystem::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline json error_json(const error& e)
{
    json j = {{"error", to_string(e.code())}, {"message", e.what()}};
    if (e.index())
        j["index"] = *e.index();
    return j;
}

struct Invocation {
    std::string config_path;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
};

/// Writes result.json, orbit.csv, verification.json; returns the exit code.
inline int emit_result(const std::filesystem::path& dir, const Setup& st, const ShadowingResult& r,
                       const Calibration& cal, std::ostream& log)
{
    json j = to_json(r);
    j["seed"] = st.seed;
    j["family"] = st.f.name;
    j["certificate"] = to_json(cal.certificate);
    j["tilde"] = to_json(cal.tilde);
    j["constants"] = to_json(cal.constants);
    write_json(dir / "result.json", j);
    std::ostringstream csv;
    write_orbit_csv(csv, r);
    write_text(dir / "orbit.csv", csv.str());

    std::istringstream back(csv.str());
    const json verdict = audit(j, read_orbit_csv(back), &st.g.map,
                               std::max(1e-10, 10.0 * st.options.tol_fixed_point));
    write_json(dir / "verification.json", verdict);
    log << r.mode << ": L = " << fmt17(r.L) << ", ||d||_p = " << fmt17(r.achieved_norm) << ", bound = "
        << fmt17(r.bound) << ", iterations = " << r.iterations << ", verification "
        << (verdict.at("pass").get<bool>() ? "passed" : "FAILED") << '\n';
    return verdict.at("pass").get<bool>() ? ok : bound_failure;
}

template<typename Body>
int guarded(const Invocation& inv, std::ostream& log, Body body)
{
    ExperimentConfig cfg;
    try {
        cfg = ExperimentConfig::parse_file(inv.config_path);
    } catch (const error& e) {
        log << e.what() << '\n';
        return config_failure;
    }
    std::filesystem::path dir;
    try {
        dir = out_dir(cfg, inv.out);
    } catch (const std::exception& e) {
        log << "cannot create output directory: " << e.what() << '\n';
        return config_failure;
    }
    try {
        return body(cfg, dir);
    } catch (const shadowing_error& e) {
        log << e.what() << '\n';
        json j = error_json(e);
        j["result"] = to_json(e.payload());
        write_json(dir / "error.json", j);
        return exit_code_for(e.code());
    } catch (const certification_error& e) {
        log << e.what() << '\n';
        write_text(dir / "certificate.txt", certificate_report(e.payload()));
        json j = error_json(e);
        j["certificate"] = to_json(e.payload());
        write_json(dir / "error.json", j);
        return exit_code_for(e.code());
    } catch (const error& e) {
        log << e.what() << '\n';
        write_json(dir / "error.json", error_json(e));
        return exit_code_for(e.code());
    }
}

// ---------------------------------------------------------------------------
// subcommands

inline int cmd_certify(const Invocation& inv, std::ostream& log = std::cerr)
{
    return guarded(inv, log, [&](const ExperimentConfig& cfg, const std::filesystem::path& dir) {
        ExperimentConfig c = cfg;
        if (!c.has("window"))
            c.set("window", "10");
        const Setup st = prepare(c, inv.seed);
        const Calibration cal = calibrate(st.f, st.certificate, ConstantsMode::finite, st.safety, st.delta_cap);
        const std::string report = certificate_report(cal.certificate, &cal);
        write_text(dir / "certificate.txt", report);
        json j = to_json(cal.certificate);
        j["tilde"] = to_json(cal.tilde);
        j["constants"] = to_json(cal.constants);
        write_json(dir / "certificate.json", j);
        log << "certified " << st.f.name << " on [" << cal.certificate.window.lo << ", " << cal.certificate.window.hi
            << "]: lambda_u = " << fmt17(cal.certificate.lambda_u_min) << ", lambda_s = "
            << fmt17(cal.certificate.lambda_s_max) << ", h = " << fmt17(cal.certificate.h) << ", L = "
            << fmt17(cal.constants.L) << '\n';
        return static_cast<int>(ok);
    });
}

inline int cmd_shadow(const Invocation& inv, std::ostream& log = std::cerr)
{
    return guarded(inv, log, [&](const ExperimentConfig& cfg, const std::filesystem::path& dir) {
        const std::string mode = cfg.str("mode", "finite");
        if (mode != "finite" && mode != "infinite")
            throw error(errc::config, "shadow runs mode finite or infinite, not '" + mode + "'");
        const Setup st = prepare(cfg, inv.seed);
        const Calibration cal = calibrate(st.f, st.certificate, ConstantsMode::finite, st.safety, st.delta_cap);
        if (mode == "finite") {
            const ShadowingResult r = solve_finite(st.f, st.g, st.x, st.splitting, cal.tilde, cal.constants, st.options);
            return emit_result(dir, st, r, cal, log);
        }
        const long k_start = cfg.integer("k_start", std::max<long>(1, st.k / 8));
        const long central = cfg.integer("central", k_start / 2);
        const ShadowingResult r = solve_infinite(st.f, st.g, st.x, st.splitting, cal.tilde, cal.constants, st.options,
                                                 k_start, central);
        return emit_result(dir, st, r, cal, log);
    });
}

inline int cmd_limit(const Invocation& inv, std::ostream& log = std::cerr)
{
    return guarded(inv, log, [&](const ExperimentConfig& cfg, const std::filesystem::path& dir) {
        const Setup st = prepare(cfg, inv.seed);
        const Calibration cal = calibrate(st.f, st.certificate, ConstantsMode::limit, st.safety, st.delta_cap);
        std::optional<int> bands;
        if (cfg.has("bands"))
            bands = static_cast<int>(cfg.integer("bands"));
        const ShadowingResult r = solve_limit(st.f, st.g, st.x, st.splitting, cal.tilde, cal.constants, st.options, bands);
        return emit_result(dir, st, r, cal, log);
    });
}

inline int cmd_asym(const Invocation& inv, std::ostream& log = std::cerr)
{
    return guarded(inv, log, [&](const ExperimentConfig& cfg, const std::filesystem::path& dir) {
        const Setup st = prepare(cfg, inv.seed);
        const double v = cfg.num("v");
        const double eps = cfg.num("eps");
        const std::vector<double> m = detail::max_profile(st.x.defects, st.g.gap_profile(st.x.window()));
        const long k0 = asymptotic_k0(m, st.x.first, v + eps);
        if (k0 >= st.k)
            throw error(errc::precondition, "defects/gaps never fall below (v+eps)^|i| inside the window");
        const Calibration cal = calibrate(st.f, st.certificate, ConstantsMode::asymptotic, st.safety, st.delta_cap,
                                          AsymptoticParams{v, eps, k0});
        const ShadowingResult r = solve_asymptotic(st.f, st.g, st.x, st.splitting, cal.tilde, cal.constants, st.options);
        return emit_result(dir, st, r, cal, log);
    });
}

/// Grid parameters until certification succeeds, then the certified aggregates.
struct BenchRow {
    std::string family;
    double lambda_u = 0, lambda_s = 0, mu_u = 0, mu_s = 0;
    std::string status = "ok";
    double L = 0, delta = 0, sup_d = 0, sup_defect = 0, ratio = 0, ratio_to_L = 0, residual = 0;
    std::string message;
};

inline BenchRow bench_cell(ExperimentConfig cfg, std::optional<std::uint64_t> seed)
{
    BenchRow row;
    row.family = cfg.str("family");
    row.lambda_u = cfg.num("lambda_u", 0.0);
    row.lambda_s = cfg.num("lambda_s", 0.0);
    row.mu_u = cfg.num("mu_u", 0.0);
    row.mu_s = cfg.num("mu_s", 0.0);
    try {
        const Setup st = prepare(cfg, seed);
        row.lambda_u = st.certificate.lambda_u_min;
        row.lambda_s = st.certificate.lambda_s_max;
        row.mu_u = st.certificate.mu_u_max;
        row.mu_s = st.certificate.mu_s_max;
        const Calibration cal = calibrate(st.f, st.certificate, ConstantsMode::finite, st.safety, st.delta_cap);
        SolveOptions o = st.options;
        o.p = infinity;
        const ShadowingResult r = solve_finite(st.f, st.g, st.x, st.splitting, cal.tilde, cal.constants, o);
        row.L = r.L;
        row.delta = r.delta;
        row.sup_d = r.achieved_norm;
        row.sup_defect = std::max(r.defect_norm, r.gap_norm);
        row.ratio = row.sup_defect > 0 ? row.sup_d / row.sup_defect : 0.0;
        row.ratio_to_L = row.ratio / r.L;
        row.residual = r.orbit_residual;
        if (!(r.orbit_residual <= 1e-10)) {
            row.status = "residual";
            row.message = "orbit residual above 1e-10 (map discontinuous across the torus seam)";
        }
    } catch (const error& e) {
        row.status = to_string(e.code());
        row.message = e.what();
    }
    return row;
}

inline std::string csv_cell(const std::string& s)
{
    std::string out = "\"";
    for (char c : s)
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

inline int cmd_bench(const Invocation& inv, std::ostream& log = std::cerr)
{
    return guarded(inv, log, [&](const ExperimentConfig& cfg, const std::filesystem::path& dir) {
        auto grid = [&](const std::string& key, const std::string& base) {
            if (cfg.has(key))
                return cfg.list(key);
            return cfg.has(base) ? std::vector<double>{cfg.num(base)} : std::vector<double>{0.0};
        };
        std::vector<ExperimentConfig> cells;
        if (cfg.str("family") == "coupled") {
            for (double lu : grid("bench_lambda_u", "lambda_u"))
                for (double ls : grid("bench_lambda_s", "lambda_s"))
                    for (double mu : grid("bench_mu_u", "mu_u"))
                        for (double ms : grid("bench_mu_s", "mu_s")) {
                            ExperimentConfig c = cfg;
                            c.set("lambda_u", fmt17(lu));
                            c.set("lambda_s", fmt17(ls));
                            c.set("mu_u", fmt17(mu));
                            c.set("mu_s", fmt17(ms));
                            cells.push_back(std::move(c));
                        }
        } else {
            cells.push_back(cfg);
        }
        std::vector<std::future<BenchRow>> jobs;
        for (const auto& c : cells)
            jobs.push_back(std::async(std::launch::async, bench_cell, c, inv.seed));
        std::ostringstream out;
        out << "cell,family,lambda_u,lambda_s,mu_u,mu_s,status,L,delta,sup_d,sup_defect,ratio,ratio_to_L,residual,message\n";
        for (std::size_t n = 0; n < jobs.size(); ++n) {
            const BenchRow r = jobs[n].get();
            out << n << ',' << r.family << ',' << fmt17(r.lambda_u) << ',' << fmt17(r.lambda_s) << ','
                << fmt17(r.mu_u) << ',' << fmt17(r.mu_s) << ',' << r.status << ',' << fmt17(r.L) << ','
                << fmt17(r.delta) << ',' << fmt17(r.sup_d) << ',' << fmt17(r.sup_defect) << ',' << fmt17(r.ratio)
                << ',' << fmt17(r.ratio_to_L) << ',' << fmt17(r.residual) << ',' << csv_cell(r.message) << '\n';
        }
        write_text(dir / "bench.csv", out.str());
        log << "bench: " << jobs.size() << " cells\n";
        return static_cast<int>(ok);
    });
}

} // namespace bishadow::cli
