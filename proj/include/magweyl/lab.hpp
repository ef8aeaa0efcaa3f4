#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "magop.hpp"
#include "semiclassics.hpp"
#include "spectral.hpp"

extern char** environ;

namespace magweyl {

using json = nlohmann::json;

inline constexpr const char* version_string = "0.1.0";

struct PsiSpec {
    std::string kind = "one";   // one | bump
    double radius = 0;          // bump radius; <= 0 means L/4
};

struct SolverSpec {
    std::string mode = "auto";  // auto | full | lowest_k
    std::size_t dense_limit = 6000;
    int max_iter = 400;
    double tol = 1e-8;
};

struct GridConfig {
    int n = 32;
    double L = 2 * pi;
    // refine with h: n = n * h_ref / h rounded up to even
    bool refine = false;
    double h_ref = 0.1;
    // quadrature grid for the semiclassical integrals; 0 means max(n, 1024) in 2D, max(n, 96) in 3D
    int quad_n = 0;
};

struct StudyConfig {
    std::string scenario = "landau_flat";
    ParamMap params;
    GridConfig grid;
    std::vector<std::pair<double, double>> pairs;   // (mu, h)
    std::optional<double> alpha;                    // rule mu = h^-alpha over h_values
    std::vector<double> h_values;
    double tau = 0;
    double tau_margin = 0.05;                       // fraction of the level spacing 2 mu h F
    PsiSpec psi;
    std::vector<std::string> expressions = {"W", "MW", "MW+corr"};
    std::string fit_variable = "auto";              // auto | inv_h | mu
    std::string csv_path, json_path;
    SolverSpec solver;
    std::uint64_t seed = 12345;
    int threads = 1;
    bool no_timing = false;

    // explicit pairs, or the alpha rule expanded
    std::vector<std::pair<double, double>> resolved_pairs() const {
        if (!pairs.empty()) return pairs;
        std::vector<std::pair<double, double>> out;
        if (alpha)
            for (double h : h_values) out.emplace_back(std::pow(h, -*alpha), h);
        return out;
    }
    bool wants(const std::string& e) const {
        return std::find(expressions.begin(), expressions.end(), e) != expressions.end();
    }
};

inline void to_json(json& j, const StudyConfig& c) {
    j = json::object();
    j["scenario"] = c.scenario;
    j["params"] = c.params;
    j["grid"] = {{"n", c.grid.n}, {"L", c.grid.L}, {"refine", c.grid.refine}, {"h_ref", c.grid.h_ref},
                 {"quad_n", c.grid.quad_n}};
    json p = json::array();
    for (auto& [mu, h] : c.pairs) p.push_back({mu, h});
    j["pairs"] = p;
    if (c.alpha) j["alpha"] = *c.alpha;
    j["h_values"] = c.h_values;
    j["tau"] = c.tau;
    j["tau_margin"] = c.tau_margin;
    j["psi"] = {{"kind", c.psi.kind}, {"radius", c.psi.radius}};
    j["expressions"] = c.expressions;
    j["fit_variable"] = c.fit_variable;
    j["output"] = {{"csv", c.csv_path}, {"json", c.json_path}};
    j["solver"] = {{"mode", c.solver.mode},
                   {"dense_limit", c.solver.dense_limit},
                   {"max_iter", c.solver.max_iter},
                   {"tol", c.solver.tol}};
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["no_timing"] = c.no_timing;
}

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError("unknown config key '" + where + it.key() + "'");
    }
}

} // namespace detail

inline void from_json(const json& j, StudyConfig& c) {
    using detail::read_opt;
    detail::check_keys(j,
                       {"scenario", "params", "grid", "pairs", "alpha", "h_values", "tau", "tau_margin", "psi",
                        "expressions", "fit_variable", "output", "solver", "seed", "threads", "no_timing"},
                       "");
    read_opt(j, "scenario", c.scenario);
    read_opt(j, "params", c.params);
    if (j.contains("grid")) {
        const json& g = j["grid"];
        detail::check_keys(g, {"n", "L", "refine", "h_ref", "quad_n"}, "grid.");
        read_opt(g, "n", c.grid.n);
        read_opt(g, "L", c.grid.L);
        read_opt(g, "refine", c.grid.refine);
        read_opt(g, "h_ref", c.grid.h_ref);
        read_opt(g, "quad_n", c.grid.quad_n);
    }
    if (j.contains("pairs")) {
        c.pairs.clear();
        for (const auto& p : j["pairs"]) {
            if (p.is_array() && p.size() == 2)
                c.pairs.emplace_back(p[0].get<double>(), p[1].get<double>());
            else if (p.is_object())
                c.pairs.emplace_back(p.at("mu").get<double>(), p.at("h").get<double>());
            else
                throw ConfigError("each (mu, h) pair must be [mu, h] or {\"mu\":..,\"h\":..}");
        }
    }
    if (j.contains("alpha") && !j["alpha"].is_null()) c.alpha = j["alpha"].get<double>();
    read_opt(j, "h_values", c.h_values);
    read_opt(j, "tau", c.tau);
    read_opt(j, "tau_margin", c.tau_margin);
    if (j.contains("psi")) {
        detail::check_keys(j["psi"], {"kind", "radius"}, "psi.");
        read_opt(j["psi"], "kind", c.psi.kind);
        read_opt(j["psi"], "radius", c.psi.radius);
    }
    read_opt(j, "expressions", c.expressions);
    read_opt(j, "fit_variable", c.fit_variable);
    if (j.contains("output")) {
        detail::check_keys(j["output"], {"csv", "json"}, "output.");
        read_opt(j["output"], "csv", c.csv_path);
        read_opt(j["output"], "json", c.json_path);
    }
    if (j.contains("solver")) {
        const json& s = j["solver"];
        detail::check_keys(s, {"mode", "dense_limit", "max_iter", "tol"}, "solver.");
        read_opt(s, "mode", c.solver.mode);
        read_opt(s, "dense_limit", c.solver.dense_limit);
        read_opt(s, "max_iter", c.solver.max_iter);
        read_opt(s, "tol", c.solver.tol);
    }
    read_opt(j, "seed", c.seed);
    read_opt(j, "threads", c.threads);
    read_opt(j, "no_timing", c.no_timing);
}

inline void validate(const StudyConfig& c) {
    make_scenario(c.scenario, c.params);   // unknown scenario / parameter -> ConfigError
    if (c.grid.n < 4) throw ConfigError("grid.n must be >= 4");
    if (!(c.grid.L > 0)) throw ConfigError("grid.L must be positive");
    if (c.grid.quad_n < 0) throw ConfigError("grid.quad_n must be >= 0");
    if (c.psi.kind != "one" && c.psi.kind != "bump") throw ConfigError("psi.kind must be 'one' or 'bump'");
    if (c.solver.mode != "auto" && c.solver.mode != "full" && c.solver.mode != "lowest_k")
        throw ConfigError("solver.mode must be auto, full or lowest_k");
    if (c.fit_variable != "auto" && c.fit_variable != "inv_h" && c.fit_variable != "mu")
        throw ConfigError("fit_variable must be auto, inv_h or mu");
    for (const auto& e : c.expressions)
        if (e != "W" && e != "MW" && e != "MW+corr") throw ConfigError("unknown expression '" + e + "'");
    if (c.threads < 1) throw ConfigError("threads must be >= 1");
    if (!(c.tau_margin >= 0 && c.tau_margin < 0.5)) throw ConfigError("tau_margin must lie in [0, 0.5)");
    for (auto& [mu, h] : c.resolved_pairs()) {
        if (!(h > 0)) throw ConfigError("every h must be positive");
        if (mu < 0) throw ConfigError("every mu must be nonnegative");
        ParamMap p = c.params;
        p["mu"] = mu;
        p["h"] = h;
        p["L"] = c.grid.L;
        try {
            make_scenario(c.scenario, p);
        } catch (const FluxError& e) {
            throw ConfigError("pair (mu=" + std::to_string(mu) + ", h=" + std::to_string(h) + "): " + e.what());
        }
    }
}

// MAGWEYL_A__B=value sets key a.b; values parse as JSON when possible, else as strings
inline void apply_env_overrides(json& j, char** env = environ) {
    const std::string prefix = "MAGWEYL_";
    for (char** e = env; e && *e; ++e) {
        const std::string kv = *e;
        if (kv.rfind(prefix, 0) != 0) continue;
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        std::string path = kv.substr(prefix.size(), eq - prefix.size());
        const std::string raw = kv.substr(eq + 1);
        std::transform(path.begin(), path.end(), path.begin(), [](unsigned char ch) { return std::tolower(ch); });
        json* node = &j;
        std::size_t pos = 0;
        while (true) {
            const auto sep = path.find("__", pos);
            const std::string key = path.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos);
            if (key.empty()) throw ConfigError("malformed override variable " + kv.substr(0, eq));
            if (sep == std::string::npos) {
                json v = json::parse(raw, nullptr, false);
                (*node)[key] = v.is_discarded() ? json(raw) : v;
                break;
            }
            node = &(*node)[key];
            pos = sep + 2;
        }
    }
}

inline StudyConfig parse_config(const std::string& text, bool env = true) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("configuration is not valid JSON");
    if (env) apply_env_overrides(j);
    StudyConfig c = j.get<StudyConfig>();
    validate(c);
    return c;
}

inline StudyConfig load_config(const std::string& path, bool env = true) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), env);
}

// ---------------------------------------------------------------------------
// single comparison

struct Row {
    double mu = 0, h = 0, mu_snapped = 0;
    double N_psi = 0;
    double E_W = 0, E_MW = 0, E_corr = 0;
    double R_W = 0, R_MW = 0, R_corr = 0;
    double seconds = 0;
    // recorded alongside
    double tau_used = 0;
    bool tau_nudged = false;
    int n = 0;
    std::string regime;
    std::string note;
};

namespace detail {

inline bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

// rethrow with a stage tag, keeping the error type
template <class Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
    auto tag = [stage](const std::exception& e) { return std::string(stage) + ": " + e.what(); };
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(tag(e));
    } catch (const DomainError& e) {
        throw DomainError(tag(e));
    } catch (const FluxError& e) {
        throw FluxError(tag(e));
    } catch (const GridMismatch& e) {
        throw GridMismatch(tag(e));
    } catch (const Unsupported& e) {
        throw Unsupported(tag(e));
    } catch (const SolverError& e) {
        throw SolverError(tag(e));
    }
}

inline int refined_n(const GridConfig& g, double h) {
    if (!g.refine) return g.n;
    int n = static_cast<int>(std::ceil(g.n * g.h_ref / h));
    return n + (n % 2);
}

inline GridSpec quadrature_grid(const GridConfig& g, const GridSpec& op) {
    int q = g.quad_n > 0 ? g.quad_n : std::max(op.n, op.d == 2 ? 1024 : 96);
    q = std::max(q, op.n);
    return GridSpec(op.d, q, op.L);
}

// constant V and F on the grid: Landau levels are V0 + (2n+1) mu h F
inline std::optional<std::pair<double, double>> constant_levels(const ProblemSpec& s) {
    const auto& c = s.coeffs;
    const Vec3 x0 = s.grid.point(0);
    const double V0 = c.V(x0), F0 = c.intensity(x0);
    for (std::size_t i = 0; i < s.grid.size(); ++i) {
        const Vec3 x = s.grid.point(i);
        if (std::abs(c.V(x) - V0) > 1e-12 || std::abs(c.intensity(x) - F0) > 1e-12) return std::nullopt;
    }
    return std::make_pair(V0, F0);
}

} // namespace detail

// nudge tau to the midpoint of the nearest Landau gap when it sits within margin * spacing of a level
inline double place_tau(const ProblemSpec& s, double tau, double margin, bool* nudged = nullptr) {
    if (nudged) *nudged = false;
    if (!(s.mu > 0) || s.coeffs.d != 2) return tau;
    auto lv = detail::constant_levels(s);
    if (!lv) return tau;
    const double b = s.mu * s.h * lv->second, V0 = lv->first;
    if (!(b > 0)) return tau;
    const double t = (tau - V0) / b;   // levels at odd integers
    if (t < 1 - 2 * margin) return tau;
    const double nearest = 2 * std::floor((t - 1) / 2 + 0.5) + 1;
    if (std::abs(t - nearest) >= 2 * margin) return tau;
    if (nudged) *nudged = true;
    // gap above the level when tau is on or above it, gap below otherwise
    const double mid = t >= nearest ? nearest + 1 : nearest - 1;
    return V0 + mid * b;
}

inline Row compare_once(const StudyConfig& cfg, double mu, double h) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    Row row;
    row.mu = mu;
    row.h = h;

    ProblemSpec s = detail::staged("scenario", [&] {
        ParamMap p = cfg.params;
        p["mu"] = mu;
        p["h"] = h;
        p["L"] = cfg.grid.L;
        p["n"] = detail::refined_n(cfg.grid, h);
        return make_scenario(cfg.scenario, p);
    });
    row.mu_snapped = s.mu;
    row.n = s.grid.n;
    row.tau_used = place_tau(s, cfg.tau, cfg.tau_margin, &row.tau_nudged);
    const double tau = row.tau_used;
    if (s.mu >= 1 && h < std::exp(-1.0) && (s.coeffs.d == 2 || s.coeffs.d == 3))
        row.regime = to_string(classify_regime(s.coeffs.d, s.mu, h).regime);

    const GridSpec qg = detail::quadrature_grid(cfg.grid, s.grid);
    auto make_psi = [&](const GridSpec& g) {
        return cfg.psi.kind == "one" ? CutoffPsi::one(g)
                                     : CutoffPsi::bump(g, cfg.psi.radius > 0 ? cfg.psi.radius : g.L / 4);
    };
    const CutoffPsi psi = detail::staged("cutoff", [&] { return make_psi(s.grid); });
    const CutoffPsi qpsi = detail::staged("cutoff", [&] { return make_psi(qg); });

    const DiscreteOperator op = detail::staged("assemble", [&] { return assemble(s); });

    row.N_psi = detail::staged("eigensolve", [&]() -> double {
        const long m = count_by_inertia(op, tau);
        if (psi.unit) return static_cast<double>(m);
        EigenOptions o;
        o.seed = cfg.seed;
        o.tol = cfg.solver.tol;
        o.max_iter = cfg.solver.max_iter;
        o.dense_limit = cfg.solver.dense_limit;
        const bool full = cfg.solver.mode == "full" || (cfg.solver.mode == "auto" && op.dim() <= o.dense_limit);
        SpectralData sd;
        if (full) {
            sd = eigensolve_full(op, o);
        } else {
            // stop at a count edge: k from the inertia half a Landau spacing (or 0.05) above tau
            const double Fmax = magnetic_intensity(s.coeffs, s.grid).maxCoeff();
            const double step = std::max(s.mu * s.h * Fmax, 0.05);
            long k = std::max(count_by_inertia(op, tau + step), m + 1);
            o.k = static_cast<int>(std::min<long>(k, static_cast<long>(op.dim()) - 1));
            sd = eigensolve_lowest(op, o);
        }
        return weighted_counting(sd, tau, psi);
    });

    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.E_W = row.E_MW = row.E_corr = row.R_W = row.R_MW = row.R_corr = nan;
    if (cfg.wants("W")) {
        row.E_W = detail::staged("weyl", [&] { return integrate_expression(weyl_density(s, tau, &qg), qpsi); });
        row.R_W = row.N_psi - row.E_W;
    }
    const bool magnetic = s.mu > 0 && magnetic_intensity(s.coeffs, qg).minCoeff() > 0;
    if (magnetic && (cfg.wants("MW") || cfg.wants("MW+corr"))) {
        row.E_MW = detail::staged("magnetic_weyl", [&] { return integrate_expression(magnetic_weyl_density(s, tau, nullptr, &qg), qpsi); });
        row.R_MW = row.N_psi - row.E_MW;
    }
    if (magnetic && cfg.wants("MW+corr")) {
        try {
            const double corr = detail::staged("correction", [&] {
                std::deque<Eigen::VectorXd> levels;
                auto Wn = [&](int n) -> const Eigen::VectorXd& {
                    while (static_cast<int>(levels.size()) <= n)
                        levels.push_back(corrected_potential(s, static_cast<int>(levels.size()), -1, {}, &qg).W);
                    return levels[n];
                };
                return integrate_expression(correction_term(s, tau, Wn, Wn(0), &qg), qpsi);
            });
            row.E_corr = row.E_MW + corr;
            row.R_corr = row.N_psi - row.E_corr;
        } catch (const DomainError& e) {
            // e.g. orbit radius beyond L/8 at weak fields
            row.note = e.what();
        }
    }
    row.seconds = cfg.no_timing ? 0.0 : std::chrono::duration<double>(clock::now() - t0).count();
    return row;
}

inline Row compare_once(const StudyConfig& cfg) {
    const auto pairs = cfg.resolved_pairs();
    if (pairs.empty()) throw ConfigError("compare needs one (mu, h) pair");
    return compare_once(cfg, pairs.front().first, pairs.front().second);
}

// ---------------------------------------------------------------------------
// scaling study

struct SlopeFit {
    std::string quantity;     // R_W | R_MW | R_corr
    std::string variable;     // inv_h | mu
    int points = 0;
    double slope = 0, intercept = 0, residual = 0, stderr_slope = 0;
    double band_lo = 0, band_hi = 0;   // slope +- 2 stderr
    double loo_max_change = 0;         // largest slope change from dropping one row
    std::optional<double> predicted;
    bool consistent = true;            // slope <= predicted + 0.3
    std::string note;
};

struct ScalingStudyResult {
    StudyConfig config;
    std::vector<Row> rows;
    std::vector<SlopeFit> fits;
};

struct LineFit {
    double slope = 0, intercept = 0, residual = 0, stderr_slope = 0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2) throw ConfigError("line fit needs at least two points");
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd b(n);
    for (std::size_t i = 0; i < n; ++i) {
        A(i, 0) = x[i];
        A(i, 1) = 1;
        b[i] = y[i];
    }
    const Eigen::Vector2d c = A.colPivHouseholderQr().solve(b);
    LineFit f;
    f.slope = c[0];
    f.intercept = c[1];
    const Eigen::VectorXd r = A * c - b;
    f.residual = r.norm();
    if (n > 2) {
        double mx = 0;
        for (double v : x) mx += v / n;
        double sxx = 0;
        for (double v : x) sxx += (v - mx) * (v - mx);
        f.stderr_slope = sxx > 0 ? std::sqrt(r.squaredNorm() / (n - 2) / sxx) : 0;
    }
    return f;
}

namespace detail {

inline std::optional<double> predicted_exponent(const std::string& q, const std::string& var, int d,
                                                std::optional<double> alpha) {
    if (var == "inv_h") {
        if (q == "R_W") return d - 1.0;
        if (d == 3) return 2.0;
        // 2D: mu^-1 h^-1 with mu = h^-alpha
        return 1.0 - alpha.value_or(0.0);
    }
    if (q == "R_W") return std::nullopt;
    return d == 2 ? -1.0 : 0.0;
}

inline SlopeFit fit_quantity(const std::vector<Row>& rows, const std::string& q, const std::string& var, int d,
                             std::optional<double> alpha) {
    SlopeFit f;
    f.quantity = q;
    f.variable = var;
    f.predicted = predicted_exponent(q, var, d, alpha);
    std::vector<double> x, y;
    int skipped = 0;
    for (const auto& r : rows) {
        const double v = q == "R_W" ? r.R_W : q == "R_MW" ? r.R_MW : r.R_corr;
        if (std::isnan(v)) continue;
        if (v == 0) {
            ++skipped;
            continue;
        }
        x.push_back(std::log(var == "inv_h" ? 1 / r.h : r.mu_snapped));
        y.push_back(std::log(std::abs(v)));
    }
    f.points = static_cast<int>(x.size());
    if (skipped) f.note = std::to_string(skipped) + " rows with zero remainder left out; ";
    if (f.points < 4) {
        f.note += "fit skipped: fewer than 4 points";
        return f;
    }
    const auto lf = fit_line(x, y);
    f.slope = lf.slope;
    f.intercept = lf.intercept;
    f.residual = lf.residual;
    f.stderr_slope = lf.stderr_slope;
    f.band_lo = f.slope - 2 * f.stderr_slope;
    f.band_hi = f.slope + 2 * f.stderr_slope;
    if (f.points >= 3) {
        for (int drop = 0; drop < f.points; ++drop) {
            std::vector<double> xs, ys;
            for (int i = 0; i < f.points; ++i)
                if (i != drop) {
                    xs.push_back(x[i]);
                    ys.push_back(y[i]);
                }
            f.loo_max_change = std::max(f.loo_max_change, std::abs(fit_line(xs, ys).slope - f.slope));
        }
    }
    if (f.predicted) f.consistent = f.slope <= *f.predicted + 0.3;
    return f;
}

} // namespace detail

inline std::vector<SlopeFit> fit_rows(const StudyConfig& cfg, const std::vector<Row>& rows) {
    std::string var = cfg.fit_variable;
    if (var == "auto") {
        bool one_h = true;
        for (const auto& r : rows) one_h = one_h && r.h == rows.front().h;
        var = one_h && rows.size() > 1 ? "mu" : "inv_h";
    }
    const int d = make_scenario(cfg.scenario, cfg.params).coeffs.d;
    std::vector<SlopeFit> fits;
    if (cfg.wants("W")) fits.push_back(detail::fit_quantity(rows, "R_W", var, d, cfg.alpha));
    if (cfg.wants("MW") || cfg.wants("MW+corr")) fits.push_back(detail::fit_quantity(rows, "R_MW", var, d, cfg.alpha));
    if (cfg.wants("MW+corr")) fits.push_back(detail::fit_quantity(rows, "R_corr", var, d, cfg.alpha));
    return fits;
}

// parallel map over pairs; rows merged in (h, mu) order
inline ScalingStudyResult run_scaling_study(const StudyConfig& cfg) {
    validate(cfg);
    const auto pairs = cfg.resolved_pairs();
    if (pairs.empty()) throw ConfigError("scaling study needs at least one (mu, h) pair");
    std::vector<Row> rows(pairs.size());
    std::vector<std::exception_ptr> errs(pairs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < pairs.size();) {
            try {
                rows[i] = compare_once(cfg, pairs[i].first, pairs[i].second);
            } catch (...) {
                errs[i] = std::current_exception();
            }
        }
    };
    const int nt = std::max(1, std::min<int>(cfg.threads, static_cast<int>(pairs.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.h != b.h ? a.h < b.h : a.mu < b.mu; });
    ScalingStudyResult res;
    res.config = cfg;
    res.rows = std::move(rows);
    res.fits = fit_rows(cfg, res.rows);
    return res;
}

// ---------------------------------------------------------------------------
// export

inline const char* csv_header = "mu,h,mu_snapped,N_psi,E_W,E_MW,E_corr,R_W,R_MW,R_corr,seconds";

inline void write_csv(const std::vector<Row>& rows, std::ostream& os) {
    os << csv_header << '\n';
    os.precision(17);
    for (const auto& r : rows)
        os << r.mu << ',' << r.h << ',' << r.mu_snapped << ',' << r.N_psi << ',' << r.E_W << ',' << r.E_MW << ','
           << r.E_corr << ',' << r.R_W << ',' << r.R_MW << ',' << r.R_corr << ',' << r.seconds << '\n';
}

namespace detail {
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double num_back(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }
} // namespace detail

inline json result_to_json(const ScalingStudyResult& r) {
    using detail::num;
    json rows = json::array();
    for (const auto& x : r.rows)
        rows.push_back({{"mu", x.mu},           {"h", x.h},           {"mu_snapped", x.mu_snapped},
                        {"N_psi", num(x.N_psi)}, {"E_W", num(x.E_W)},   {"E_MW", num(x.E_MW)},
                        {"E_corr", num(x.E_corr)}, {"R_W", num(x.R_W)}, {"R_MW", num(x.R_MW)},
                        {"R_corr", num(x.R_corr)}, {"seconds", x.seconds}, {"tau_used", x.tau_used},
                        {"tau_nudged", x.tau_nudged}, {"n", x.n},       {"regime", x.regime},
                        {"note", x.note}});
    json fits = json::array();
    for (const auto& f : r.fits)
        fits.push_back({{"quantity", f.quantity},
                        {"variable", f.variable},
                        {"points", f.points},
                        {"slope", f.slope},
                        {"intercept", f.intercept},
                        {"residual", f.residual},
                        {"stderr", f.stderr_slope},
                        {"band", {f.band_lo, f.band_hi}},
                        {"loo_max_change", f.loo_max_change},
                        {"predicted", f.predicted ? json(*f.predicted) : json(nullptr)},
                        {"consistent", f.consistent},
                        {"note", f.note}});
    return {{"config", json(r.config)},
            {"rows", rows},
            {"fits", fits},
            {"versions",
             {{"magweyl", version_string},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                           "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}}};
}

inline ScalingStudyResult result_from_json(const json& j) {
    using detail::num_back;
    ScalingStudyResult r;
    r.config = j.at("config").get<StudyConfig>();
    for (const auto& x : j.at("rows")) {
        Row w;
        w.mu = x.at("mu");
        w.h = x.at("h");
        w.mu_snapped = x.at("mu_snapped");
        w.N_psi = num_back(x.at("N_psi"));
        w.E_W = num_back(x.at("E_W"));
        w.E_MW = num_back(x.at("E_MW"));
        w.E_corr = num_back(x.at("E_corr"));
        w.R_W = num_back(x.at("R_W"));
        w.R_MW = num_back(x.at("R_MW"));
        w.R_corr = num_back(x.at("R_corr"));
        w.seconds = x.at("seconds");
        w.tau_used = x.at("tau_used");
        w.tau_nudged = x.at("tau_nudged");
        w.n = x.at("n");
        w.regime = x.at("regime");
        w.note = x.at("note");
        r.rows.push_back(w);
    }
    for (const auto& x : j.at("fits")) {
        SlopeFit f;
        f.quantity = x.at("quantity");
        f.variable = x.at("variable");
        f.points = x.at("points");
        f.slope = x.at("slope");
        f.intercept = x.at("intercept");
        f.residual = x.at("residual");
        f.stderr_slope = x.at("stderr");
        f.band_lo = x.at("band")[0];
        f.band_hi = x.at("band")[1];
        f.loo_max_change = x.at("loo_max_change");
        if (!x.at("predicted").is_null()) f.predicted = x.at("predicted").get<double>();
        f.consistent = x.at("consistent");
        f.note = x.at("note");
        r.fits.push_back(f);
    }
    return r;
}

inline bool operator==(const Row& a, const Row& b) {
    using detail::same;
    return same(a.mu, b.mu) && same(a.h, b.h) && same(a.mu_snapped, b.mu_snapped) && same(a.N_psi, b.N_psi) &&
           same(a.E_W, b.E_W) && same(a.E_MW, b.E_MW) && same(a.E_corr, b.E_corr) && same(a.R_W, b.R_W) &&
           same(a.R_MW, b.R_MW) && same(a.R_corr, b.R_corr) && same(a.seconds, b.seconds) &&
           same(a.tau_used, b.tau_used) && a.tau_nudged == b.tau_nudged && a.n == b.n && a.regime == b.regime &&
           a.note == b.note;
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write to " + path + " failed");
}

inline void export_result(const ScalingStudyResult& r, const std::string& format, const std::string& path) {
    std::ostringstream os;
    if (format == "csv")
        write_csv(r.rows, os);
    else if (format == "json")
        os << result_to_json(r).dump(2) << '\n';
    else
        throw ConfigError("export format must be csv or json");
    write_file(path, os.str());
}

} // namespace magweyl
