#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "fft.hpp"
#include "grid.hpp"

namespace magweyl {

// ---------------------------------------------------------------------------
// regularity classes C^{l,sigma}

struct Regularity {
    double l = 2;
    double sigma = 0;
    double barl = 2;      // regularity of g^{jk}, F
    double barsigma = 0;

    void validate() const {
        if (!(l >= 1)) throw ConfigError("regularity order l must be >= 1");
        if (!(barl >= 1)) throw ConfigError("regularity order barl must be >= 1");
    }
};

// theta(t) = t^l |log t|^{-sigma}, t in (0, 1/e]
inline double theta_modulus(const Regularity& reg, double t) {
    if (!(t > 0) || t > std::exp(-1.0) * (1 + 1e-15))
        throw DomainError("theta_modulus: t must lie in (0, 1/e], got " + std::to_string(t));
    return std::pow(t, reg.l) * std::pow(std::abs(std::log(t)), -reg.sigma);
}

// ---------------------------------------------------------------------------
// coefficients

struct CoefficientSet {
    int d = 2;
    MetricFn g;             // g^{jk}(x), upper indices
    VectorFn A;             // vector potential
    ScalarFn V;             // electric potential
    double Bbar = 0;        // mean field; A minus (0, Bbar*x1, 0) must be periodic

    // optional analytic derivatives
    VectorFn gradV;
    ScalarFn curlA;         // d1 A2 - d2 A1

    bool numeric_gradV() const { return !gradV; }
    bool numeric_curl() const { return !curlA; }

    Vec3 grad_V(const Vec3& x) const {
        if (gradV) return gradV(x);
        return detail::grad4(V, x, d);
    }
    double curl(const Vec3& x) const {
        if (curlA) return curlA(x);
        Vec3 d1 = detail::diff4_vec(A, x, 0);
        Vec3 d2 = detail::diff4_vec(A, x, 1);
        return d1[1] - d2[0];
    }
    // transverse 2x2 block of g^{jk}
    Eigen::Matrix2d g_perp(const Vec3& x) const { return g(x).topLeftCorner<2, 2>(); }

    // F = (g^{11}g^{22} - g^{12}g^{21})^{1/2} |d1 A2 - d2 A1|
    double intensity(const Vec3& x) const {
        if (d < 2) return 0;
        return std::sqrt(g_perp(x).determinant()) * std::abs(curl(x));
    }
    // sqrt(det g_{jk}) of the full lower-index metric
    double sqrt_g(const Vec3& x) const {
        return 1.0 / std::sqrt(g(x).topLeftCorner(d, d).determinant());
    }
};

inline Eigen::VectorXd magnetic_intensity(const CoefficientSet& c, const GridSpec& grid) {
    if (c.d == 3) {
        // the field must already be straightened along x3
        const Vec3 x = grid.center();
        if (std::abs(c.A(x)[2]) > 1e-12 || detail::diff4_vec(c.A, x, 2).norm() > 1e-8)
            throw Unsupported("d=3 requires A3 = 0 and A independent of x3");
    }
    return sample(grid, [&](const Vec3& x) { return c.intensity(x); });
}

// ---------------------------------------------------------------------------
// mollification

struct MollifierConfig {
    Vec3 eps = Vec3::Constant(0.1);
    int quad_points = 16;

    static MollifierConfig uniform(double e) {
        MollifierConfig m;
        m.eps = Vec3::Constant(e);
        return m;
    }
};

// normalised bump c_d (1-|u|^2)^4 on the unit ball
inline double mollifier_kernel(double r2, int d) {
    if (r2 >= 1) return 0;
    static const double mass[4] = {0, 256.0 / 315.0, pi / 5.0, 1536.0 * pi / 10395.0};
    const double s = 1 - r2;
    return s * s * s * s / mass[d];
}

namespace detail {
inline void check_scale(const MollifierConfig& cfg, int d, double L) {
    for (int k = 0; k < d; ++k) {
        if (!(cfg.eps[k] > 0)) throw DomainError("mollifier scale must be positive");
        if (cfg.eps[k] >= L / 2) throw DomainError("mollifier scale must be below half the period");
    }
}
} // namespace detail

// Convolution of a callable field; tensor Gauss quadrature with the discrete mass normalised to 1.
inline ScalarFn mollify(const ScalarFn& f, const MollifierConfig& cfg, int d, double period) {
    detail::check_scale(cfg, d, period);
    Eigen::VectorXd z, w;
    detail::gauss_legendre(cfg.quad_points, z, w);
    struct Node {
        Vec3 off;
        double w;
    };
    std::vector<Node> nodes;
    double mass = 0;
    const int q = cfg.quad_points;
    const int total = d == 1 ? q : (d == 2 ? q * q : q * q * q);
    for (int t = 0; t < total; ++t) {
        int idx[3] = {t % q, (t / q) % q, t / (q * q)};
        Vec3 u = Vec3::Zero(), off = Vec3::Zero();
        double wt = 1;
        for (int k = 0; k < d; ++k) {
            u[k] = z[idx[k]];
            off[k] = cfg.eps[k] * z[idx[k]];
            wt *= w[idx[k]];
        }
        const double kv = mollifier_kernel(u.squaredNorm(), d) * wt;
        if (kv <= 0) continue;
        nodes.push_back({off, kv});
        mass += kv;
    }
    for (auto& nd : nodes) nd.w /= mass;
    return [f, nodes](const Vec3& x) {
        double s = 0;
        for (const auto& nd : nodes) s += nd.w * f(x - nd.off);
        return s;
    };
}

// Grid version: periodic FFT convolution with the kernel sampled on the grid.
inline Eigen::VectorXd mollify_grid(const GridSpec& g, const Eigen::VectorXd& f, const MollifierConfig& cfg) {
    detail::check_scale(cfg, g.d, g.L);
    if (static_cast<std::size_t>(f.size()) != g.size()) throw GridMismatch("mollify_grid: field size differs from grid");
    Eigen::VectorXd k(g.size());
    double mass = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        Vec3 x = g.point(i);
        double r2 = 0;
        for (int a = 0; a < g.d; ++a) {
            const double u = wrap_delta(x[a], g.L) / cfg.eps[a];
            r2 += u * u;
        }
        k[i] = mollifier_kernel(r2, g.d);
        mass += k[i];
    }
    if (mass <= 0) return f; // scale below the grid spacing
    k /= mass;
    return detail::periodic_convolve(g, f, k);
}

// sup over samples of |f(x+t w) + f(x-t w) - 2 f(x)|, w in {e1, e2, (e1+e2)/sqrt2}
inline double second_difference_modulus(const ScalarFn& f, double t, const std::vector<Vec3>& samples, int d) {
    std::vector<Vec3> dirs;
    dirs.push_back(Vec3::UnitX());
    if (d >= 2) {
        dirs.push_back(Vec3::UnitY());
        dirs.push_back(Vec3(1, 1, 0).normalized());
    }
    double m = 0;
    for (const auto& x : samples)
        for (const auto& w : dirs) m = std::max(m, std::abs(f(x + t * w) + f(x - t * w) - 2 * f(x)));
    return m;
}

// ---------------------------------------------------------------------------
// magnetic flux on the torus

struct FluxInfo {
    long N_phi = 0;
    double mu_snapped = 0;
    double relative_snap = 0;
};

// N_phi = round(mu F L^2 / (2 pi h)), mu_snapped = 2 pi h N_phi / (F L^2)
inline FluxInfo admissible_flux(double mu, double h, double L, double Fbar) {
    if (!(mu > 0) || !(h > 0) || !(L > 0) || !(Fbar > 0))
        throw ConfigError("admissible_flux: mu, h, L and mean field must be positive");
    FluxInfo r;
    r.N_phi = std::lround(mu * Fbar * L * L / (2 * pi * h));
    if (r.N_phi == 0) throw FluxError("degenerate flux: mu*F*L^2/(2 pi h) rounds to 0");
    r.mu_snapped = 2 * pi * h * r.N_phi / (Fbar * L * L);
    r.relative_snap = std::abs(r.mu_snapped - mu) / mu;
    return r;
}

// ---------------------------------------------------------------------------
// problem specification and scenarios

using ParamMap = std::map<std::string, double>;

struct ProblemSpec {
    std::string scenario;
    ParamMap params;
    CoefficientSet coeffs;
    GridSpec grid;
    double mu = 0;
    double mu_requested = 0;
    double h = 0.1;
    long N_phi = 0;
    bool torus_compatible = true;
    Regularity reg;
    MollifierConfig moll;

    int d() const { return coeffs.d; }
};

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names = {"landau_flat",     "linear_drift",   "nondegenerate_well",
                                                   "degenerate_well", "variable_metric", "separable_x3",
                                                   "holder_perturbed"};
    return names;
}

namespace detail {

inline ParamMap scenario_defaults(const std::string& name) {
    ParamMap p = {{"d", 2}, {"n", 32}, {"L", 2 * pi}, {"mu", 1}, {"h", 0.1}, {"F", 1}};
    if (name == "landau_flat") {
        p["V0"] = 0;
    } else if (name == "linear_drift") {
        p["beta"] = 1;
        p["V0"] = 0;
    } else if (name == "nondegenerate_well") {
        p["V0"] = -1;
        p["slope"] = 0.25;
    } else if (name == "degenerate_well") {
        p["V0"] = -1;
        p["a"] = 0.25;
    } else if (name == "variable_metric") {
        p["V0"] = -1;
        p["slope"] = 0;
        p["a"] = 0.3;   // metric modulation
        p["b"] = 0.3;   // field modulation
    } else if (name == "separable_x3") {
        p["d"] = 3;
        p["n"] = 16;
        p["V0"] = 0;
        p["a"] = 1;
    } else if (name == "holder_perturbed") {
        p["V0"] = -1;
        p["slope"] = 0.25;
        p["l"] = 1;
        p["sigma"] = 2;
        p["terms"] = 12;
        p["amp"] = 1;
    }
    return p;
}

inline Mat3 identity3(const Vec3&) { return Mat3::Identity(); }

// V0 + slope (L/pi) [sin th - sin(2 th)/8], th = 2 pi (x1 - L/2)/L; |dV| in [slope/2, 3 slope/2] for |x1-L/2| <= L/4
inline void well_profile(double V0, double slope, double L, ScalarFn& V, VectorFn& gradV) {
    V = [=](const Vec3& x) {
        const double th = 2 * pi * (x[0] - L / 2) / L;
        return V0 + slope * (L / pi) * (std::sin(th) - std::sin(2 * th) / 8);
    };
    gradV = [=](const Vec3& x) {
        const double th = 2 * pi * (x[0] - L / 2) / L;
        return Vec3(2 * slope * (std::cos(th) - std::cos(2 * th) / 4), 0, 0);
    };
}

} // namespace detail

// lacunary series amp * sum_{j=1}^{J} 2^{-j l} j^{-sigma} cos(2^j (2pi/L) w_j . x)
inline ScalarFn lacunary_perturbation(double amp, double l, double sigma, int terms, double L) {
    return [=](const Vec3& x) {
        static const double w[3][2] = {{1, 0}, {0, 1}, {1, 1}};
        double s = 0;
        for (int j = 1; j <= terms; ++j) {
            const double* o = w[(j - 1) % 3];
            const double k = std::ldexp(2 * pi / L, j);
            s += std::pow(2.0, -j * l) * std::pow(double(j), -sigma) * std::cos(k * (o[0] * x[0] + o[1] * x[1]));
        }
        return amp * s;
    };
}

inline ProblemSpec make_scenario(const std::string& name, const ParamMap& user = {}) {
    const auto& names = scenario_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        std::string msg = "unknown scenario '" + name + "'; valid scenarios:";
        for (const auto& s : names) msg += " " + s;
        throw ConfigError(msg);
    }
    ParamMap p = detail::scenario_defaults(name);
    for (const auto& [k, v] : user) {
        if (!p.count(k)) throw ConfigError("scenario '" + name + "' has no parameter '" + k + "'");
        p[k] = v;
    }

    ProblemSpec s;
    s.scenario = name;
    s.params = p;
    const int d = static_cast<int>(p["d"]);
    if (d != 2 && d != 3) throw ConfigError("scenario dimension must be 2 or 3");
    s.grid = GridSpec(d, static_cast<int>(p["n"]), p["L"]);
    s.h = p["h"];
    s.mu_requested = p["mu"];
    if (!(s.h > 0)) throw ConfigError("h must be positive");
    if (s.mu_requested < 0) throw ConfigError("mu must be nonnegative");
    const double L = s.grid.L;
    const double F = p["F"];

    CoefficientSet& c = s.coeffs;
    c.d = d;
    c.g = detail::identity3;
    c.Bbar = F;
    c.A = [F](const Vec3& x) { return Vec3(0, F * x[0], 0); };
    c.curlA = [F](const Vec3&) { return F; };

    if (name == "landau_flat") {
        const double V0 = p["V0"];
        c.V = [V0](const Vec3&) { return V0; };
        c.gradV = [](const Vec3&) { return Vec3::Zero().eval(); };
    } else if (name == "linear_drift") {
        const double beta = p["beta"], V0 = p["V0"];
        c.V = [=](const Vec3& x) { return V0 + beta * x[1]; };
        c.gradV = [=](const Vec3&) { return Vec3(0, beta, 0); };
        s.torus_compatible = false;
    } else if (name == "nondegenerate_well") {
        detail::well_profile(p["V0"], p["slope"], L, c.V, c.gradV);
    } else if (name == "degenerate_well") {
        const double V0 = p["V0"], a = p["a"], k = 2 * pi / L;
        c.V = [=](const Vec3& x) { return V0 - a * (std::cos(k * (x[0] - L / 2)) + std::cos(k * (x[1] - L / 2))); };
        c.gradV = [=](const Vec3& x) {
            return Vec3(a * k * std::sin(k * (x[0] - L / 2)), a * k * std::sin(k * (x[1] - L / 2)), 0);
        };
    } else if (name == "variable_metric") {
        // conformal metric c(x) delta^{jk}, field modulated along x1
        const double a = p["a"], b = p["b"], k = 2 * pi / L;
        if (std::abs(a) >= 1) throw ConfigError("variable_metric: |a| must be < 1");
        if (std::abs(b) >= F) throw ConfigError("variable_metric: |b| must be < F");
        c.g = [=](const Vec3& x) {
            const double cf = 1 + a * std::cos(k * x[0]) * std::cos(k * x[1]);
            return Mat3(Mat3::Identity() * cf);
        };
        c.A = [=](const Vec3& x) { return Vec3(0, F * x[0] + (b / k) * std::sin(k * x[0]), 0); };
        c.curlA = [=](const Vec3& x) { return F + b * std::cos(k * x[0]); };
        detail::well_profile(p["V0"], p["slope"], L, c.V, c.gradV);
    } else if (name == "separable_x3") {
        const double V0 = p["V0"], a = p["a"], k = 2 * pi / L;
        c.V = [=](const Vec3& x) { return V0 + a * std::cos(k * x[2]); };
        c.gradV = [=](const Vec3& x) { return Vec3(0, 0, -a * k * std::sin(k * x[2])); };
    } else if (name == "holder_perturbed") {
        ScalarFn base;
        VectorFn gb;
        detail::well_profile(p["V0"], p["slope"], L, base, gb);
        ScalarFn pert = lacunary_perturbation(p["amp"], p["l"], p["sigma"], static_cast<int>(p["terms"]), L);
        c.V = [base, pert](const Vec3& x) { return base(x) + pert(x); };
        s.reg.l = p["l"];
        s.reg.sigma = p["sigma"];
        s.reg.validate();
    }

    if (s.mu_requested > 0 && s.torus_compatible && F > 0) {
        FluxInfo fi = admissible_flux(s.mu_requested, s.h, L, F);
        s.mu = fi.mu_snapped;
        s.N_phi = fi.N_phi;
    } else {
        s.mu = s.mu_requested;
    }
    return s;
}

// ---------------------------------------------------------------------------
// assumption report

struct AssumptionConstants {
    double c_ellip = 10;     // c^{-1} <= eigenvalues of g^{jk} <= c
    double c_field = 10;     // F >= c^{-1}
    double nondeg = 0.1;     // nondeg_min >= this
    double c_negative = 10;  // V <= -c^{-1}
};

struct AssumptionReport {
    double ellipticity_min = 0, ellipticity_max = 0;
    double F_min = 0;
    double nondeg_min = 0;
    double V_max = 0;
    bool elliptic = false, field_positive = false, nondegenerate = false, negative_potential = false;
    bool numeric_derivatives = false;
    std::optional<int> nbar;
    std::size_t points_checked = 0;
};

// margins over grid points (restricted to psi > 0 when psi is given)
inline AssumptionReport validate_assumptions(const ProblemSpec& s, const Eigen::VectorXd* psi = nullptr,
                                             double tau = 0, const AssumptionConstants& k = {}) {
    AssumptionReport r;
    const auto& c = s.coeffs;
    const GridSpec& g = s.grid;
    r.numeric_derivatives = c.numeric_gradV() || c.numeric_curl();
    r.ellipticity_min = std::numeric_limits<double>::infinity();
    r.ellipticity_max = 0;
    r.F_min = std::numeric_limits<double>::infinity();
    r.nondeg_min = std::numeric_limits<double>::infinity();
    r.V_max = -std::numeric_limits<double>::infinity();
    const double b = s.mu * s.h;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (psi && (*psi)[i] <= 0) continue;
        ++r.points_checked;
        const Vec3 x = g.point(i);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.g(x).topLeftCorner(g.d, g.d));
        r.ellipticity_min = std::min(r.ellipticity_min, es.eigenvalues().minCoeff());
        r.ellipticity_max = std::max(r.ellipticity_max, es.eigenvalues().maxCoeff());
        const double V = c.V(x);
        r.V_max = std::max(r.V_max, V);
        const double F = c.intensity(x);
        r.F_min = std::min(r.F_min, F);
        // |grad(V/F)| + min_n |V + (2n+1) F mu h - tau|
        double gnorm = 0;
        if (F > 0) {
            ScalarFn Ff = [&](const Vec3& y) { return c.intensity(y); };
            Vec3 gr = c.grad_V(x) / F - V * detail::grad4(Ff, x, std::min(g.d, 2)) / (F * F);
            gr[2] = 0;
            gnorm = gr.norm();
        }
        double lev = std::abs(V - tau);
        if (b > 0 && F > 0) {
            const double m = (tau - V) / (F * b);
            const double nn = std::max(0.0, std::round((m - 1) / 2));
            lev = std::abs(V + (2 * nn + 1) * F * b - tau);
        }
        r.nondeg_min = std::min(r.nondeg_min, gnorm + lev);
    }
    r.elliptic = r.ellipticity_min >= 1 / k.c_ellip && r.ellipticity_max <= k.c_ellip;
    r.field_positive = r.F_min >= 1 / k.c_field;
    r.nondegenerate = r.nondeg_min >= k.nondeg;
    r.negative_potential = r.V_max <= -1 / k.c_negative;
    if (b >= 1) r.nbar = static_cast<int>(std::max(0.0, std::round(((tau - r.V_max) / b - 1) / 2)));
    return r;
}

} // namespace magweyl
