#pragma once

#include <ostream>
#include <vector>

#include "fft.hpp"
#include "spectral.hpp"

namespace magweyl {

// ---------------------------------------------------------------------------
// Hermite functions

// All of u_0..u_N at t, where u_n(t) = (2^n n! sqrt(pi))^{-1/2} H_n(t) e^{-t^2/2}.
// The recurrence runs without the Gaussian and is rescaled whenever it grows; the
// accumulated log scale is folded back together with -t^2/2 at the end.
inline std::vector<double> hermite_all(int N, double t) {
    if (N < 0) throw ConfigError("hermite: negative index");
    if (N > 500) throw DomainError("hermite: index above 500 is outside the stable range");
    std::vector<double> u(N + 1);
    std::vector<double> logscale(N + 1);
    double a = std::pow(pi, -0.25), b = 0, ls = 0;
    u[0] = a;
    logscale[0] = 0;
    for (int n = 0; n < N; ++n) {
        const double next = std::sqrt(2.0 / (n + 1)) * t * a - std::sqrt(double(n) / (n + 1)) * b;
        b = a;
        a = next;
        const double m = std::max(std::abs(a), std::abs(b));
        if (m > 1e100) {
            a /= m;
            b /= m;
            ls += std::log(m);
        }
        u[n + 1] = a;
        logscale[n + 1] = ls;
    }
    const double g = -0.5 * t * t;
    for (int n = 0; n <= N; ++n) {
        const double e = logscale[n] + g;
        u[n] = e < -745 ? 0.0 : u[n] * std::exp(e);
    }
    return u;
}

// Y_n(x) = s^{-1/2} u_n(x/s)
inline double hermite_function(int n, double x, double s = 1) {
    if (!(s > 0)) throw ConfigError("hermite: scale must be positive");
    return hermite_all(n, x / s)[n] / std::sqrt(s);
}

struct HermiteBasis {
    double s = 1;
    int N = 0;
    std::vector<double> x;
    Eigen::MatrixXd values;   // values(i, n) = Y_n(x_i)

    // quadrature Gram matrix with uniform weight dx
    Eigen::MatrixXd gram(double dx) const { return values.transpose() * values * dx; }
};

inline HermiteBasis hermite_basis(int N, double s, const std::vector<double>& x) {
    HermiteBasis b;
    b.s = s;
    b.N = N;
    b.x = x;
    b.values.resize(static_cast<Eigen::Index>(x.size()), N + 1);
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto u = hermite_all(N, x[i] / s);
        for (int n = 0; n <= N; ++n) b.values(static_cast<Eigen::Index>(i), n) = u[n] / std::sqrt(s);
    }
    return b;
}

// ---------------------------------------------------------------------------
// level radii

struct LevelInfo {
    int n = 0;
    double r = 0;      // ((2n+1) mu h)^{1/2}
    bool active = false;
};

// r_n^2 + V_ref <= tau marks a level active; the list stops `margin` levels past the first inactive one
inline std::vector<LevelInfo> landau_radii(double mu, double h, double tau, double V_ref, int margin = 2) {
    if (!(mu * h > 0)) throw ConfigError("landau_radii needs mu h > 0");
    std::vector<LevelInfo> out;
    int inactive = 0;
    for (int n = 0;; ++n) {
        LevelInfo l;
        l.n = n;
        l.r = std::sqrt((2 * n + 1) * mu * h);
        l.active = l.r * l.r + V_ref <= tau;
        out.push_back(l);
        if (!l.active && ++inactive > margin) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// effective one-dimensional operators

struct EffectiveGrid {
    int M = 128;          // points on the periodic line
    double L = 2 * pi;    // period
    double x0 = 0;        // left end; nodes x0 + j L/M
    double xi_ref = 1;    // characteristic momentum used in the resolution check

    double dx() const { return L / M; }
    double node(int j) const { return x0 + j * dx(); }
};

struct EffectiveOperator {
    int n = 0;
    int d = 2;
    double r = 0;
    double hbar = 0;      // mu^{-1} h for d=2, h for d=3
    EffectiveGrid grid;
    Eigen::MatrixXcd matrix;

    Eigen::VectorXd eigenvalues() const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(matrix, Eigen::EigenvaluesOnly);
        return es.eigenvalues();
    }
};

using PhaseSymbol = std::function<double(double x, double xi)>;

// d=2: r_n^2 + Op_W(W) with Planck constant hbar = h/mu, midpoint Weyl rule on a periodic grid.
// K_{jk} = (1/M) sum_m W((x_j+x_k)/2, xi_m) exp(i xi_m (x_j-x_k)/hbar), xi_m = hbar 2 pi m'/L, minimal image
// for x_j - x_k; at the antipodal separation both midpoints are averaged.
inline EffectiveOperator effective_operator(const PhaseSymbol& W, int n, double mu, double h, const EffectiveGrid& eg) {
    if (!(mu > 0 && h > 0)) throw ConfigError("effective operator needs mu, h > 0");
    const double hbar = h / mu;
    const int M = eg.M;
    const double dx = eg.dx();
    const double ppw = 2 * pi * hbar / (eg.xi_ref * dx);
    if (ppw < 6)
        throw DomainError("symbol grid too coarse: " + std::to_string(ppw) +
                          " points per effective wavelength, need 6; raise M to " +
                          std::to_string(static_cast<int>(std::ceil(M * 6 / ppw))));
    EffectiveOperator op;
    op.n = n;
    op.d = 2;
    op.r = std::sqrt((2 * n + 1) * mu * h);
    op.hbar = hbar;
    op.grid = eg;
    op.matrix = Eigen::MatrixXcd::Zero(M, M);
    std::vector<double> xi(M);
    for (int m = 0; m < M; ++m) {
        const int mm = m < (M + 1) / 2 ? m : m - M;
        xi[m] = hbar * 2 * pi * mm / eg.L;
    }
    auto kernel = [&](double mid, int sep) {
        cplx s = 0;
        for (int m = 0; m < M; ++m) s += W(mid, xi[m]) * std::polar(1.0, xi[m] * sep * dx / hbar);
        return s / double(M);
    };
    for (int j = 0; j < M; ++j)
        for (int k = 0; k < M; ++k) {
            int sep = j - k;
            if (sep > M / 2) sep -= M;
            if (sep < -M / 2) sep += M;
            const double xk = eg.node(k);
            if (2 * std::abs(sep) == M) {
                const double m1 = xk + 0.5 * sep * dx, m2 = xk - 0.5 * sep * dx;
                op.matrix(j, k) = 0.5 * (kernel(m1, sep) + kernel(m2, -sep));
            } else {
                op.matrix(j, k) = kernel(xk + 0.5 * sep * dx, sep);
            }
        }
    op.matrix = 0.5 * (op.matrix + op.matrix.adjoint()).eval();
    op.matrix.diagonal().array() += op.r * op.r;
    return op;
}

// d=3 model: h^2 D3^2 (three-point periodic) + r_n^2 + W(x3), r_n^2 = (2n+1) mu h F
inline EffectiveOperator effective_operator_x3(const std::function<double(double)>& W, int n, double mu, double h,
                                               double F, const EffectiveGrid& eg) {
    if (!(mu > 0 && h > 0 && F > 0)) throw ConfigError("effective operator needs mu, h, F > 0");
    const int M = eg.M;
    const double dx = eg.dx(), c = h * h / (dx * dx);
    EffectiveOperator op;
    op.n = n;
    op.d = 3;
    op.r = std::sqrt((2 * n + 1) * mu * h * F);
    op.hbar = h;
    op.grid = eg;
    op.matrix = Eigen::MatrixXcd::Zero(M, M);
    for (int j = 0; j < M; ++j) {
        op.matrix(j, j) = 2 * c + op.r * op.r + W(eg.node(j));
        op.matrix(j, (j + 1) % M) -= c;
        op.matrix(j, (j + M - 1) % M) -= c;
    }
    return op;
}

// Full 3D count below tau versus the effective-operator multiset {eig(A_n)} with multiplicity N_phi.
struct SeparableCheck {
    long full = 0;
    long effective = 0;
    double relative_error = 0;
    std::vector<int> per_level;
};

inline SeparableCheck separable_cross_check(const ProblemSpec& s, double tau) {
    if (s.grid.d != 3) throw ConfigError("separable check needs d = 3");
    const GridSpec& g = s.grid;
    const Vec3 probe = g.center();
    const double F = s.coeffs.intensity(probe);
    SeparableCheck r;
    r.full = count_by_inertia(assemble(s), tau);
    EffectiveGrid eg;
    eg.M = g.n;
    eg.L = g.L;
    eg.x0 = 0;
    auto W = [&](double x3) { return s.coeffs.V(Vec3(probe[0], probe[1], x3)); };
    for (int n = 0;; ++n) {
        auto op = effective_operator_x3(W, n, s.mu, s.h, F, eg);
        const auto ev = op.eigenvalues();
        const int c = static_cast<int>((ev.array() <= tau).count());
        if (c == 0) break;
        r.per_level.push_back(c);
        r.effective += c * s.N_phi;
    }
    r.relative_error = r.full > 0 ? std::abs(double(r.full - r.effective)) / r.full : double(r.effective != 0);
    return r;
}

// ---------------------------------------------------------------------------
// flat-case decomposition

struct DecompositionTable {
    int nmax = 0;
    Eigen::MatrixXd weights;   // weights(j, n): squared projection of vector j onto level n

    double total(int j) const { return weights.row(j).sum(); }
    int dominant(int j) const {
        Eigen::Index k;
        weights.row(j).maxCoeff(&k);
        return static_cast<int>(k);
    }
    double concentration(int j, int n) const { return weights(j, n) / total(j); }
};

namespace detail {

inline void require_flat(const ProblemSpec& s) {
    const auto& c = s.coeffs;
    const GridSpec& g = s.grid;
    if (g.d != 2) throw Unsupported("decomposition check needs d = 2");
    if (!(c.Bbar > 0)) throw Unsupported("decomposition check needs a positive mean field");
    const double v0 = c.V(g.point(0));
    for (std::size_t i = 0; i < g.size(); i += 7) {
        const Vec3 x = g.point(i);
        const bool metric = (c.g(x).topLeftCorner<2, 2>() - Eigen::Matrix2d::Identity()).norm() < 1e-12;
        const Vec3 a = c.A(x);
        const bool gauge = std::abs(a[0]) < 1e-12 && std::abs(a[1] - c.Bbar * x[0]) < 1e-12;
        if (!metric || !gauge || std::abs(c.V(x) - v0) > 1e-12)
            throw Unsupported("decomposition check is exact only for the flat Landau-gauge model");
    }
}

// Landau state coordinates: for centre m in [0, N_phi) at x0 = m L / N_phi, each x1 uses the image
// y = x1 + qL closest to x0, which lives in x2-fibre (m - q N_phi) mod n.
struct FibreMap {
    int n = 0;
    long Nphi = 0;
    double L = 0, dx = 0, s = 0;
    int nmax = 0;
    // basis(m, i1) -> (fibre index, Hermite values for levels 0..nmax)
    std::vector<std::vector<int>> fibre;
    std::vector<std::vector<std::vector<double>>> herm;
};

inline FibreMap fibre_map(const ProblemSpec& s, double mu, int nmax) {
    FibreMap f;
    const GridSpec& g = s.grid;
    f.n = g.n;
    f.Nphi = s.N_phi;
    f.L = g.L;
    f.dx = g.dx();
    f.s = std::sqrt(s.h / (mu * s.coeffs.Bbar));
    f.nmax = nmax;
    if (2 * f.Nphi > f.n) throw Unsupported("decomposition check needs 2 N_phi <= n");
    f.fibre.assign(f.Nphi, std::vector<int>(f.n));
    f.herm.assign(f.Nphi, std::vector<std::vector<double>>(f.n));
    for (long m = 0; m < f.Nphi; ++m) {
        const double x0 = m * f.L / f.Nphi;
        for (int i = 0; i < f.n; ++i) {
            const double x1 = i * f.dx;
            const long q = std::lround((x0 - x1) / f.L);
            const double y = x1 + q * f.L;
            f.fibre[m][i] = static_cast<int>(((m - q * f.Nphi) % f.n + f.n) % f.n);
            auto u = hermite_all(nmax, (y - x0) / f.s);
            for (auto& v : u) v /= std::sqrt(f.s);
            f.herm[m][i] = std::move(u);
        }
    }
    return f;
}

// c_m(x1) = dx sum_{x2} v exp(-i k_m x2) / sqrt(L), rows = x1, cols = m
inline Eigen::MatrixXcd fibre_coefficients(const GridSpec& g, const Eigen::VectorXcd& v) {
    const int n = g.n;
    Eigen::MatrixXcd c(n, n);
    Eigen::FFT<double> fft;
    std::vector<cplx> row(n), out;
    for (int i1 = 0; i1 < n; ++i1) {
        for (int i2 = 0; i2 < n; ++i2) row[i2] = v[i1 + n * i2];
        fft.fwd(out, row);
        for (int m = 0; m < n; ++m) c(i1, m) = out[m] * g.dx() / std::sqrt(g.L);
    }
    return c;
}

} // namespace detail

// Landau-level coefficients a(m, level) of a grid vector; also usable as the analysis map for Parseval checks.
inline Eigen::MatrixXcd landau_coefficients(const ProblemSpec& s, const Eigen::VectorXcd& v, int nmax) {
    detail::require_flat(s);
    auto f = detail::fibre_map(s, s.mu, nmax);
    auto c = detail::fibre_coefficients(s.grid, v);
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(f.Nphi, nmax + 1);
    for (long m = 0; m < f.Nphi; ++m)
        for (int i = 0; i < f.n; ++i) {
            const cplx cm = c(i, f.fibre[m][i]);
            for (int k = 0; k <= nmax; ++k) a(m, k) += f.herm[m][i][k] * cm * f.dx;
        }
    return a;
}

// Adjoint of landau_coefficients: grid vector with the given Landau-level coefficients.
inline Eigen::VectorXcd landau_synthesis(const ProblemSpec& s, const Eigen::MatrixXcd& a) {
    detail::require_flat(s);
    const int nmax = static_cast<int>(a.cols()) - 1;
    auto f = detail::fibre_map(s, s.mu, nmax);
    const int n = f.n;
    Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(n, n);
    for (long m = 0; m < f.Nphi; ++m)
        for (int i = 0; i < n; ++i) {
            cplx acc = 0;
            for (int k = 0; k <= nmax; ++k) acc += f.herm[m][i][k] * a(m, k);
            c(i, f.fibre[m][i]) += acc;
        }
    // inverse of the fibre transform (adjoint w.r.t. the grid inner product)
    Eigen::VectorXcd v(s.grid.size());
    Eigen::FFT<double> fft;
    std::vector<cplx> row(n), out;
    for (int i1 = 0; i1 < n; ++i1) {
        for (int m = 0; m < n; ++m) row[m] = c(i1, m);
        fft.inv(out, row);
        for (int i2 = 0; i2 < n; ++i2) v[i1 + n * i2] = out[i2] * double(n) / std::sqrt(s.grid.L);
    }
    return v;
}

// Per-vector weights on levels 0..nmax for the first `count` eigenvectors (all if count < 0).
inline DecompositionTable decomposition_check(const SpectralData& sd, const ProblemSpec& s, int nmax, int count = -1) {
    detail::require_flat(s);
    if (!sd.has_vectors()) throw ConfigError("decomposition check needs eigenvectors");
    if (!(sd.grid == s.grid)) throw GridMismatch("spectral data and scenario grids differ");
    const int J = count < 0 ? static_cast<int>(sd.vectors.cols()) : std::min<int>(count, sd.vectors.cols());
    DecompositionTable t;
    t.nmax = nmax;
    t.weights.resize(J, nmax + 1);
    for (int j = 0; j < J; ++j) {
        auto a = landau_coefficients(s, sd.vectors.col(j), nmax);
        t.weights.row(j) = a.cwiseAbs2().colwise().sum();
    }
    return t;
}

inline void write_weights_csv(const DecompositionTable& t, std::ostream& os) {
    os << "eigenindex,n,weight\n";
    os.precision(17);
    for (Eigen::Index j = 0; j < t.weights.rows(); ++j)
        for (Eigen::Index n = 0; n < t.weights.cols(); ++n) os << j << ',' << n << ',' << t.weights(j, n) << '\n';
}

} // namespace magweyl
