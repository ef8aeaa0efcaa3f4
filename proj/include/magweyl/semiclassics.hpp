#pragma once

#include <optional>
#include <ostream>
#include <vector>

#include "expression.hpp"
#include "fields.hpp"

namespace magweyl {

// x1,...,xd,value rows
inline void write_expression_csv(const SemiclassicalExpression& e, std::ostream& os) {
    const GridSpec& g = e.grid;
    for (int k = 0; k < g.d; ++k) os << 'x' << k + 1 << ',';
    os << "value\n";
    os.precision(17);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec3 x = g.point(i);
        for (int k = 0; k < g.d; ++k) os << x[k] << ',';
        os << e.values[i] << '\n';
    }
}

// ---------------------------------------------------------------------------
// Weyl and magnetic Weyl densities

// d=2: (1/4pi) h^-2 (tau-V)_+ sqrt g;  d=3: (1/6pi^2) h^-3 (tau-V)_+^{3/2} sqrt g
inline double weyl_point(int d, double h, double tau, double V, double sqrtg) {
    const double e = detail::positive(tau - V);
    if (d == 2) return e / (4 * pi * h * h) * sqrtg;
    return std::pow(e, 1.5) / (6 * pi * pi * h * h * h) * sqrtg;
}

inline SemiclassicalExpression weyl_density(const ProblemSpec& s, double tau, const GridSpec* grid = nullptr) {
    const GridSpec& g = grid ? *grid : s.grid;
    if (g.d != 2 && g.d != 3) throw ConfigError("Weyl density needs d = 2 or 3");
    SemiclassicalExpression e;
    e.kind = ExprKind::weyl;
    e.grid = g;
    e.tau = tau;
    e.provenance = "standard Weyl";
    e.values.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec3 x = g.point(i);
        e.values[i] = weyl_point(g.d, s.h, tau, s.coeffs.V(x), s.coeffs.sqrt_g(x));
    }
    return e;
}

// optional xi3 window for the d=3 density; an empty q means the indicator of [lo, hi]
struct Xi3Window {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    std::function<double(double)> q;
};

namespace detail {

// int theta(a - xi^2) q(xi) dxi
inline double xi3_integral(double a, const Xi3Window* w) {
    if (a <= 0) return 0;
    const double r = std::sqrt(a);
    if (!w) return 2 * r;
    const double lo = std::max(-r, w->lo), hi = std::min(r, w->hi);
    if (hi <= lo) return 0;
    if (!w->q) return hi - lo;
    const int N = 512;
    const double dx = (hi - lo) / (N - 1);
    double s = 0;
    for (int i = 0; i < N; ++i) s += (i == 0 || i == N - 1 ? 0.5 : 1.0) * w->q(lo + i * dx);
    return s * dx;
}

// Landau sum at one point: d=2 -> #levels below, d=3 -> (1/2) sum int theta(.) q
inline double landau_sum(int d, double e, double b, const Xi3Window* w) {
    if (b <= 0) throw ConfigError("magnetic Weyl sum needs mu h F > 0");
    double s = 0;
    for (long n = 0;; ++n) {
        const double a = e - (2 * n + 1) * b;
        if (a < 0) break;   // theta(0) = 1
        s += d == 2 ? 1.0 : xi3_integral(a, w);
    }
    return s;
}

} // namespace detail

// d=2: (1/2pi) sum_n theta(tau - V - (2n+1) mu h F) mu h^-1 F sqrt g
// d=3: (1/4pi^2) sum_n int theta(tau - V - (2n+1) mu h F - xi3^2) q(xi3) dxi3 mu h^-2 F sqrt g
inline double magnetic_weyl_point(int d, double mu, double h, double tau, double V, double F, double sqrtg,
                                  const Xi3Window* w = nullptr) {
    if (!(F > 0)) throw DomainError("magnetic Weyl density needs F > 0");
    const double s = detail::landau_sum(d, tau - V, mu * h * F, w);
    if (d == 2) return s * mu * F * sqrtg / (2 * pi * h);
    return s * mu * F * sqrtg / (4 * pi * pi * h * h);
}

inline SemiclassicalExpression magnetic_weyl_density(const ProblemSpec& s, double tau,
                                                     const Xi3Window* window = nullptr,
                                                     const GridSpec* grid = nullptr) {
    const GridSpec& g = grid ? *grid : s.grid;
    if (!(s.mu > 0)) throw ConfigError("magnetic Weyl density needs mu > 0");
    SemiclassicalExpression e;
    e.kind = ExprKind::magnetic_weyl;
    e.grid = g;
    e.tau = tau;
    e.provenance = window ? "magnetic Weyl, xi3-windowed" : "magnetic Weyl";
    e.values.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec3 x = g.point(i);
        const double F = s.coeffs.intensity(x);
        if (!(F > 0)) throw DomainError("magnetic Weyl density: F <= 0 at a grid point");
        e.values[i] = magnetic_weyl_point(g.d, s.mu, s.h, tau, s.coeffs.V(x), F, s.coeffs.sqrt_g(x), window);
    }
    return e;
}

// ---------------------------------------------------------------------------
// orbit averages and corrected potential

struct OrbitBox {
    Vec3 lo, hi;
};

// Average of f over {y : (y-c)^T G (y-c) = rho^2} in the x1,x2 plane (G = g_{jk}, identity for a circle),
// parametrised c + rho L^{-T}(cos t, sin t) with G = L L^T; trapezoid in t.
inline double orbit_average(const ScalarFn& f, const Vec3& c, double rho, const Eigen::Matrix2d* G = nullptr,
                            int npoints = 64, const OrbitBox* box = nullptr) {
    if (npoints < 16) throw ConfigError("orbit_average needs at least 16 points");
    Eigen::Matrix2d M = Eigen::Matrix2d::Identity();
    if (G) {
        Eigen::LLT<Eigen::Matrix2d> llt(*G);
        if (llt.info() != Eigen::Success) throw ConfigError("orbit metric is not positive definite");
        M = Eigen::Matrix2d(llt.matrixL()).transpose().inverse();
    }
    double s = 0;
    for (int k = 0; k < npoints; ++k) {
        const double t = 2 * pi * k / npoints;
        const Eigen::Vector2d u = rho * M * Eigen::Vector2d(std::cos(t), std::sin(t));
        Vec3 y = c;
        y[0] += u[0];
        y[1] += u[1];
        if (box)
            for (int a = 0; a < 2; ++a)
                if (y[a] < box->lo[a] || y[a] > box->hi[a]) throw DomainError("orbit leaves the domain");
        s += f(y);
    }
    return s / npoints;
}

struct CorrectedPotential {
    double rho = 0;               // orbit radius
    Eigen::VectorXd V, W0, W1, W2, W;
};

struct CorrectedOptions {
    int npoints = 64;
    bool second_order = false;    // W2 diagnostic
};

// classical cyclotron radius at Landau level n: ((2n+1) mu h F)^{1/2} / (mu F)
inline double level_radius(int n, double mu, double h, double F) {
    return std::sqrt((2 * n + 1) * mu * h * F) / (mu * F);
}

// W = orbit average of V at radius rho (ellipse in g_{jk}) + W1, W1 = -1/4 mu^-2 F^-2 g^{jk} dV_j dV_k.
// rho < 0 means: use the level radius of level n with the local F.
inline CorrectedPotential corrected_potential(const ProblemSpec& s, int n, double rho = -1,
                                              const CorrectedOptions& opt = {}, const GridSpec* grid = nullptr) {
    const GridSpec& g = grid ? *grid : s.grid;
    const auto& c = s.coeffs;
    if (!(s.mu > 0)) throw ConfigError("corrected potential needs mu > 0");
    CorrectedPotential out;
    const std::size_t N = g.size();
    out.V.resize(N);
    out.W0.resize(N);
    out.W1.resize(N);
    out.W2 = Eigen::VectorXd::Zero(N);
    double rmax = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const Vec3 x = g.point(i);
        const double F = c.intensity(x);
        if (!(F > 0)) throw DomainError("corrected potential needs F > 0");
        const double r = rho >= 0 ? rho : level_radius(n, s.mu, s.h, F);
        rmax = std::max(rmax, r);
        if (r > g.L / 8) throw DomainError("orbit radius exceeds the injectivity scale L/8");
        const Eigen::Matrix2d Gl = c.g_perp(x).inverse();
        out.V[i] = c.V(x);
        out.W0[i] = orbit_average(c.V, x, r, &Gl, opt.npoints);
        const Vec3 gv = c.grad_V(x);
        const Eigen::Vector2d gp = gv.head<2>();
        out.W1[i] = -0.25 * gp.dot(c.g_perp(x) * gp) / (s.mu * s.mu * F * F);
        if (opt.second_order && r > 0) {
            // 1/4 mu^-2 r^-1 d_r M_r((V - W0)^2), centred difference in r
            const double w0 = out.W0[i];
            ScalarFn sq = [&](const Vec3& y) {
                const double v = c.V(y) - w0;
                return v * v;
            };
            const double dr = 1e-3 * r;
            const double dM = (orbit_average(sq, x, r + dr, &Gl, opt.npoints) -
                               orbit_average(sq, x, r - dr, &Gl, opt.npoints)) / (2 * dr);
            out.W2[i] = 0.25 / (s.mu * s.mu * r) * dM;
        }
    }
    out.rho = rmax;
    out.W = out.W0 + out.W1 + out.W2;
    return out;
}

// Conformal metric g^{jk} F^{-1} = alpha^2 delta: kappa = 2 Lap log alpha,
// W' = -(1/12) kappa (4 nbar^2 F + 4 nbar + 3) + F^{1/2} sum_j d_j (g^{jk} d_k F^{-1/2}).
inline Eigen::VectorXd curvature_correction(const ProblemSpec& s, int nbar, const GridSpec* grid = nullptr) {
    const GridSpec& g = grid ? *grid : s.grid;
    const auto& c = s.coeffs;
    const int dd = 2;
    ScalarFn F = [&](const Vec3& x) { return c.intensity(x); };
    ScalarFn log_alpha = [&](const Vec3& x) { return 0.5 * std::log(c.g(x)(0, 0) / F(x)); };
    ScalarFn Fmh = [&](const Vec3& x) { return 1 / std::sqrt(F(x)); };
    Eigen::VectorXd out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec3 x = g.point(i);
        const Mat3 gm = c.g(x);
        if (std::abs(gm(0, 1)) > 1e-12 * gm(0, 0) || std::abs(gm(0, 0) - gm(1, 1)) > 1e-12 * gm(0, 0))
            throw Unsupported("curvature correction needs a conformal metric");
        double lap = 0;
        for (int k = 0; k < dd; ++k) {
            ScalarFn dk = [&, k](const Vec3& y) { return detail::diff4(log_alpha, y, k); };
            lap += detail::diff4(dk, x, k);
        }
        const double kappa = 2 * lap;
        double div = 0;
        for (int j = 0; j < dd; ++j) {
            ScalarFn flux = [&, j](const Vec3& y) {
                const Mat3 gy = c.g(y);
                double v = 0;
                for (int k = 0; k < dd; ++k) v += gy(j, k) * detail::diff4(Fmh, y, k);
                return v;
            };
            div += detail::diff4(flux, x, j);
        }
        const double Fx = F(x);
        out[i] = -kappa * (4.0 * nbar * nbar * Fx + 4.0 * nbar + 3) / 12 + std::sqrt(Fx) * div;
    }
    return out;
}

// Corrected potential per level: W_of_level(n) gives the field used inside the theta-sum for level n
// (returned references must stay valid for the whole call),
// W_smooth enters the compensating smooth term.
using LevelPotential = std::function<const Eigen::VectorXd&(int)>;

// corr = [E^MW(W) - E^MW(V)] - [E^W(W) - E^W(V)]
inline SemiclassicalExpression correction_term(const ProblemSpec& s, double tau, const LevelPotential& W_of_level,
                                               const Eigen::VectorXd& W_smooth, const GridSpec* grid = nullptr) {
    const GridSpec& g = grid ? *grid : s.grid;
    if (static_cast<std::size_t>(W_smooth.size()) != g.size()) throw GridMismatch("correction: W differs from grid");
    if (!(s.mu > 0)) throw ConfigError("correction term needs mu > 0");
    const int d = g.d;
    SemiclassicalExpression e;
    e.kind = ExprKind::correction;
    e.grid = g;
    e.tau = tau;
    e.provenance = "Landau sum with W minus with V, minus Weyl difference";
    e.values.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec3 x = g.point(i);
        const double V = s.coeffs.V(x), F = s.coeffs.intensity(x), sg = s.coeffs.sqrt_g(x);
        const double b = s.mu * s.h * F;
        double sum = 0;
        for (long n = 0;; ++n) {
            const Eigen::VectorXd& Wn = W_of_level(static_cast<int>(n));
            if (static_cast<std::size_t>(Wn.size()) != g.size()) throw GridMismatch("correction: W differs from grid");
            const double aW = tau - Wn[i] - (2 * n + 1) * b, aV = tau - V - (2 * n + 1) * b;
            if (aW < 0 && aV < 0) {
                // both inactive; stop once far beyond any active level
                if (tau - std::min(V, Wn[i]) < (2 * n - 1) * b) break;
                continue;
            }
            if (d == 2)
                sum += (aW >= 0 ? 1.0 : 0.0) - (aV >= 0 ? 1.0 : 0.0);
            else
                sum += 2 * (std::sqrt(detail::positive(aW)) - std::sqrt(detail::positive(aV)));
        }
        const double pref = d == 2 ? s.mu * F * sg / (2 * pi * s.h) : s.mu * F * sg / (4 * pi * pi * s.h * s.h);
        const double smooth = weyl_point(d, s.h, tau, W_smooth[i], sg) - weyl_point(d, s.h, tau, V, sg);
        e.values[i] = pref * sum - smooth;
    }
    return e;
}

inline SemiclassicalExpression correction_term(const ProblemSpec& s, double tau, const Eigen::VectorXd& W,
                                               const GridSpec* grid = nullptr) {
    return correction_term(s, tau, [&W](int) -> const Eigen::VectorXd& { return W; }, W, grid);
}

// ---------------------------------------------------------------------------
// mollification gap

struct GapReport {
    double gap = 0;           // int psi |E~ - E|
    double theta = 0;         // theta(eps)
    double bound = 0;         // (1 + mu h) h^-d theta(eps)
    double ratio = 0;         // gap / bound
};

// Compare a density computed from mollified (V, F, sqrt g) against the raw one on a fine periodic grid.
inline GapReport mollification_gap(const ProblemSpec& s, double eps, ExprKind kind, double tau, int n_fine = 1024,
                                   double psi_radius = -1) {
    GridSpec g(s.grid.d, n_fine, s.grid.L);
    const auto& c = s.coeffs;
    Eigen::VectorXd V = sample(g, c.V);
    Eigen::VectorXd F = s.mu > 0 ? sample(g, [&](const Vec3& x) { return c.intensity(x); })
                                 : Eigen::VectorXd(Eigen::VectorXd::Zero(g.size()));
    Eigen::VectorXd sg = sample(g, [&](const Vec3& x) { return c.sqrt_g(x); });
    MollifierConfig m = MollifierConfig::uniform(eps);
    Eigen::VectorXd Vm = mollify_grid(g, V, m);
    Eigen::VectorXd Fm = s.mu > 0 ? mollify_grid(g, F, m) : F;
    Eigen::VectorXd sgm = mollify_grid(g, sg, m);
    const double rad = psi_radius > 0 ? psi_radius : g.L / 4;
    CutoffPsi psi = CutoffPsi::bump(g, rad);
    double gap = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (psi.values[i] == 0) continue;
        double a, b;
        if (kind == ExprKind::weyl) {
            a = weyl_point(g.d, s.h, tau, Vm[i], sgm[i]);
            b = weyl_point(g.d, s.h, tau, V[i], sg[i]);
        } else if (kind == ExprKind::magnetic_weyl) {
            a = magnetic_weyl_point(g.d, s.mu, s.h, tau, Vm[i], Fm[i], sgm[i]);
            b = magnetic_weyl_point(g.d, s.mu, s.h, tau, V[i], F[i], sg[i]);
        } else {
            throw ConfigError("mollification gap supports weyl and magnetic_weyl");
        }
        gap += psi.values[i] * std::abs(a - b);
    }
    GapReport r;
    r.gap = gap * g.cell_volume();
    r.theta = theta_modulus(s.reg, eps);
    r.bound = (1 + s.mu * s.h) * std::pow(s.h, -g.d) * r.theta;
    r.ratio = r.gap / r.bound;
    return r;
}

// ---------------------------------------------------------------------------
// regimes

enum class Regime { weak, strong, extra_strong };

inline const char* to_string(Regime r) {
    switch (r) {
    case Regime::weak: return "weak";
    case Regime::strong: return "strong";
    case Regime::extra_strong: return "extra_strong";
    }
    return "?";
}

struct RegimeOptions {
    double C1 = 1, C2 = 1, eps0 = 1;   // threshold constants
    double V_ref = -1;
    double tau = 0;
};

struct RegimeReport {
    int d = 2;
    double mu = 0, h = 0;
    double mu1 = 0, mu2 = 0;
    Regime regime = Regime::weak;
    double eps = 0;
    std::optional<int> nbar;
    // d = 3 zones
    double rho1 = 0, rho2 = 0, inner_edge = 0;

    // outer-zone variable scale h|log h| / |xi3|
    double eps_outer(double xi3) const { return h * std::abs(std::log(h)) / std::abs(xi3); }
};

inline RegimeReport classify_regime(int d, double mu, double h, const RegimeOptions& o = {}) {
    if (d != 2 && d != 3) throw ConfigError("classify_regime: d must be 2 or 3");
    if (!(h > 0) || h >= std::exp(-1.0)) throw DomainError("classify_regime: need 0 < h < 1/e");
    if (!(mu >= 1)) throw DomainError("classify_regime: need mu >= 1");
    RegimeReport r;
    r.d = d;
    r.mu = mu;
    r.h = h;
    const double lg = std::abs(std::log(h));
    r.mu1 = o.C1 * std::pow(h, -1.0 / 3) * std::pow(lg, -1.0 / 3);
    r.mu2 = o.C2 / (h * lg);
    const double top = std::min(r.mu2, 1 / h);
    if (mu <= r.mu1)
        r.regime = Regime::weak;
    else if (mu < top)
        r.regime = Regime::strong;
    else
        r.regime = Regime::extra_strong;
    r.eps = r.regime == Regime::weak ? mu * h * lg : std::sqrt(h * lg / mu);
    if (mu * h >= 1) {
        const double target = o.tau - o.V_ref;
        r.nbar = static_cast<int>(std::max(0.0, std::round((target / (mu * h) - 1) / 2)));
    }
    if (d == 3) {
        r.rho1 = std::sqrt(mu * h * lg);
        r.rho2 = 1 / mu;
        r.inner_edge = o.eps0 * std::min(std::sqrt(mu * h), 1.0);
    }
    return r;
}

// ---------------------------------------------------------------------------
// scaling atlas

enum class AtlasRecipe { potential, modulus, field };

struct ScalingAtlas {
    AtlasRecipe recipe = AtlasRecipe::potential;
    GridSpec grid;
    Eigen::VectorXd gamma, rho, zeta;
    double gamma0 = 0;
    bool temperate = true;
    double worst_temperance = 0;   // max over neighbour pairs of |dgamma| - (|dx|/2 + gamma0)
};

struct AtlasOptions {
    double eps = 0.5;
    double C = 1;
    std::optional<double> gamma0;
};

// floor: gamma0 theta(gamma0)^{1/2} = C h, bisection on (0, 1]
inline double atlas_floor(const std::function<double(double)>& theta, double C, double h) {
    double lo = 1e-300, hi = 1;
    auto f = [&](double g) { return g * std::sqrt(theta(g)) - C * h; };
    if (f(hi) < 0) return hi;
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        (f(mid) < 0 ? lo : hi) = mid;
        if (hi / lo - 1 < 1e-14) break;
    }
    return 0.5 * (lo + hi);
}

inline ScalingAtlas scaling_atlas(const ProblemSpec& s, AtlasRecipe recipe,
                                  const std::function<double(double)>& theta, const AtlasOptions& o = {},
                                  const GridSpec* grid = nullptr) {
    const GridSpec& g = grid ? *grid : s.grid;
    if (recipe == AtlasRecipe::modulus && !theta) throw ConfigError("modulus recipe needs a continuity modulus");
    ScalingAtlas a;
    a.recipe = recipe;
    a.grid = g;
    if (o.gamma0)
        a.gamma0 = *o.gamma0;
    else if (theta)
        a.gamma0 = atlas_floor(theta, o.C, s.h);
    else
        a.gamma0 = std::sqrt(s.h);
    if (!(a.gamma0 > 0)) throw ConfigError("atlas floor must be positive");
    const std::size_t N = g.size();
    a.gamma.resize(N);
    a.rho.resize(N);
    a.zeta.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        const Vec3 x = g.point(i);
        double gam;
        if (recipe == AtlasRecipe::potential) {
            gam = o.eps * std::abs(s.coeffs.V(x)) + a.gamma0;
        } else if (recipe == AtlasRecipe::field) {
            gam = o.eps * std::abs(s.coeffs.intensity(x)) + a.gamma0;
        } else {
            // smallest eta with |V| <= C theta(eta) and |grad V| <= C theta(eta)/eta
            const double v = std::abs(s.coeffs.V(x));
            const double gv = s.coeffs.grad_V(x).head(g.d).norm();
            auto ok = [&](double eta) { return v <= o.C * theta(eta) && gv * eta <= o.C * theta(eta); };
            double lo = 0, hi = 1;
            while (!ok(hi) && hi < 1e12) hi *= 2;
            if (!ok(hi)) throw DomainError("modulus recipe: no admissible scale");
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                (ok(mid) ? hi : lo) = mid;
            }
            gam = std::max(hi, a.gamma0);
        }
        a.gamma[i] = gam;
        a.rho[i] = recipe == AtlasRecipe::modulus ? std::sqrt(theta(gam)) : std::sqrt(gam);
        a.zeta[i] = s.h / (a.rho[i] * gam);
    }
    // temperateness on nearest-neighbour pairs
    a.worst_temperance = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < N; ++i) {
        auto m = g.multi(i);
        for (int k = 0; k < g.d; ++k) {
            auto mk = m;
            mk[k] += 1;
            const double slack = std::abs(a.gamma[i] - a.gamma[g.index(mk)]) - (0.5 * g.dx() + a.gamma0);
            a.worst_temperance = std::max(a.worst_temperance, slack);
        }
    }
    a.temperate = a.worst_temperance <= 0;
    return a;
}

} // namespace magweyl
