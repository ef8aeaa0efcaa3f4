#pragma once

#include <fstream>
#include <ostream>
#include <vector>

#include <Eigen/Sparse>

#include "fields.hpp"

namespace magweyl {

using SparseMatC = Eigen::SparseMatrix<cplx>;

struct DiscreteOperator {
    GridSpec grid;
    SparseMatC matrix;              // Hermitian, acts on grid-ordered values
    double mu = 0, h = 0;
    long N_phi = 0;
    double mu_snapped = 0;
    double V_min = 0;
    // links[axis][point]: parallel transport from point+e_axis back to point
    std::vector<std::vector<cplx>> links;
    bool real_valued = false;       // all entries real (mu = 0 or trivial links)

    std::size_t dim() const { return grid.size(); }
};

namespace detail {

// exp(-i mu/h int_edge A_axis) along the unwrapped edge [x, x + dx e_axis], 5-point Gauss-Legendre
inline cplx peierls_link(const CoefficientSet& c, const Vec3& x, int axis, double dx, double mu, double h) {
    static const double z[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                0.9061798459386640};
    static const double w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                                0.2369268850561891};
    double integral = 0;
    for (int q = 0; q < 5; ++q) {
        Vec3 y = x;
        y[axis] += 0.5 * dx * (1 + z[q]);
        integral += w[q] * c.A(y)[axis];
    }
    integral *= 0.5 * dx;
    return std::polar(1.0, -mu / h * integral);
}

inline void check_periodic_remainder(const CoefficientSet& c, const GridSpec& g) {
    auto landau = [&](const Vec3& x) { return Vec3(0, c.Bbar * x[0], 0); };
    const double L = g.L;
    const Vec3 probes[3] = {Vec3(0.1234 * L, 0.3711 * L, 0.2718 * L), Vec3(0.77 * L, 0.05 * L, 0.6 * L),
                            Vec3(0.42 * L, 0.91 * L, 0.13 * L)};
    for (const auto& x : probes) {
        const Vec3 r0 = c.A(x) - landau(x);
        for (int k = 0; k < g.d; ++k) {
            Vec3 y = x;
            y[k] += L;
            const Vec3 r1 = c.A(y) - landau(y);
            if ((r1 - r0).norm() > 1e-9 * (1 + r0.norm()))
                throw Unsupported("vector potential minus the Landau part (0, Bbar x1) is not periodic");
        }
    }
}

} // namespace detail

// Divergence-form Peierls discretisation of sum_jk P_j g^{jk} P_k + V, P = hD - mu A.
// Kinetic form h^2 2^{-d} sum_{s in {+,-}^d} sum_x sum_jk g^{jk}(x) conj(D_j^{s_j} u) D_k^{s_k} u.
inline DiscreteOperator assemble(const ProblemSpec& spec, const GridSpec& grid) {
    grid.validate();
    const CoefficientSet& c = spec.coeffs;
    const int d = grid.d;
    if (c.d != d) throw GridMismatch("grid dimension differs from coefficient dimension");
    const double mu = spec.mu, h = spec.h, dx = grid.dx(), L = grid.L;
    if (!(h > 0)) throw ConfigError("h must be positive");

    DiscreteOperator op;
    op.grid = grid;
    op.mu = mu;
    op.h = h;
    op.mu_snapped = mu;

    const bool magnetic = mu != 0 && d >= 2;
    if (magnetic) {
        if (c.Bbar != 0) {
            const double flux = mu * c.Bbar * L * L / (2 * pi * h);
            if (std::abs(flux - std::round(flux)) > 1e-9 * std::max(1.0, std::abs(flux)))
                throw FluxError("inadmissible flux " + std::to_string(flux) +
                                "; snap mu with admissible_flux before assembly");
            op.N_phi = std::lround(flux);
        }
        detail::check_periodic_remainder(c, grid);
        if (d == 3) {
            const Vec3 x = grid.center();
            if (std::abs(c.A(x)[2]) > 1e-12) throw Unsupported("d=3 requires A3 = 0");
        }
    }

    const std::size_t N = grid.size();
    op.links.assign(d, std::vector<cplx>(N, cplx(1, 0)));
    if (magnetic) {
        for (int ax = 0; ax < d; ++ax)
            for (std::size_t i = 0; i < N; ++i) {
                const Vec3 x = grid.point(i);
                cplx u = detail::peierls_link(c, x, ax, dx, mu, h);
                // magnetic boundary condition u(x1+L, x2) = exp(i mu Bbar L x2 / h) u(x1, x2)
                if (ax == 0 && grid.multi(i)[0] == grid.n - 1 && c.Bbar != 0)
                    u *= std::polar(1.0, mu * c.Bbar * L * x[1] / h);
                op.links[ax][i] = u;
            }
    }

    // ellipticity check
    for (std::size_t i = 0; i < N; ++i) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.g(grid.point(i)).topLeftCorner(d, d));
        if (!(es.eigenvalues().minCoeff() > 0)) throw ConfigError("metric g^{jk} is not elliptic at a grid node");
    }

    std::vector<Eigen::Triplet<cplx>> trip;
    const int nsign = 1 << d;
    const double w = h * h / nsign / (dx * dx);
    trip.reserve(N * (nsign * d * d * 4 + 1));
    op.V_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < N; ++i) {
        const auto m = grid.multi(i);
        const Vec3 x = grid.point(i);
        const Mat3 g = c.g(x);
        // D_j^+ u(x) = U_j(x) u(x+e_j) - u(x);  D_j^- u(x) = u(x) - conj(U_j(x-e_j)) u(x-e_j)   (times 1/dx)
        std::size_t nb_idx[3][2];
        cplx nb_val[3][2];
        for (int j = 0; j < d; ++j) {
            auto mp = m, mm = m;
            mp[j] += 1;
            mm[j] -= 1;
            nb_idx[j][0] = grid.index(mp);
            nb_idx[j][1] = grid.index(mm);
            nb_val[j][0] = op.links[j][i];
            nb_val[j][1] = -std::conj(op.links[j][nb_idx[j][1]]);
        }
        for (int s = 0; s < nsign; ++s) {
            // row r_j: entries {(i, a_j), (nb, b_j)}
            std::size_t ridx[3][2];
            cplx rval[3][2];
            for (int j = 0; j < d; ++j) {
                const bool plus = !((s >> j) & 1);
                ridx[j][0] = i;
                rval[j][0] = plus ? cplx(-1) : cplx(1);
                ridx[j][1] = plus ? nb_idx[j][0] : nb_idx[j][1];
                rval[j][1] = plus ? nb_val[j][0] : nb_val[j][1];
            }
            for (int j = 0; j < d; ++j)
                for (int k = 0; k < d; ++k) {
                    const double gjk = g(j, k);
                    if (gjk == 0) continue;
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            trip.emplace_back(static_cast<int>(ridx[j][a]), static_cast<int>(ridx[k][b]),
                                              w * gjk * std::conj(rval[j][a]) * rval[k][b]);
                }
        }
        const double V = c.V(x);
        op.V_min = std::min(op.V_min, V);
        trip.emplace_back(static_cast<int>(i), static_cast<int>(i), cplx(V, 0));
    }
    op.matrix.resize(static_cast<int>(N), static_cast<int>(N));
    op.matrix.setFromTriplets(trip.begin(), trip.end());
    op.matrix.makeCompressed();

    op.real_valued = true;
    for (int k = 0; k < op.matrix.outerSize() && op.real_valued; ++k)
        for (SparseMatC::InnerIterator it(op.matrix, k); it; ++it)
            if (it.value().imag() != 0) {
                op.real_valued = false;
                break;
            }
    return op;
}

inline DiscreteOperator assemble(const ProblemSpec& spec) { return assemble(spec, spec.grid); }

inline Eigen::VectorXcd apply(const DiscreteOperator& op, const Eigen::VectorXcd& v) {
    if (static_cast<std::size_t>(v.size()) != op.dim())
        throw GridMismatch("apply: vector has size " + std::to_string(v.size()) + ", operator dimension " +
                           std::to_string(op.dim()));
    return op.matrix * v;
}

inline double hermiticity_defect(const DiscreteOperator& op) {
    SparseMatC diff = SparseMatC(op.matrix.adjoint()) - op.matrix;
    double m = 0;
    for (int k = 0; k < diff.outerSize(); ++k)
        for (SparseMatC::InnerIterator it(diff, k); it; ++it) m = std::max(m, std::abs(it.value()));
    return m;
}

// Phase angle of the product of links around each (axis0, axis1) plaquette, in (-pi, pi].
inline std::vector<double> plaquette_phases(const DiscreteOperator& op, int a0 = 0, int a1 = 1) {
    const GridSpec& g = op.grid;
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto m = g.multi(i);
        auto m0 = m, m1 = m;
        m0[a0] += 1;
        m1[a1] += 1;
        // loop x -> x+e0 -> x+e0+e1 -> x+e1 -> x, written as products of forward transports
        const cplx loop = op.links[a0][i] * op.links[a1][g.index(m0)] * std::conj(op.links[a0][g.index(m1)]) *
                          std::conj(op.links[a1][i]);
        out[i] = std::arg(loop);
    }
    return out;
}

// (row, col, re, im) CSV triplets, 0-based
inline void write_triplets(const DiscreteOperator& op, std::ostream& os) {
    os << "row,col,re,im\n";
    os.precision(17);
    for (int k = 0; k < op.matrix.outerSize(); ++k)
        for (SparseMatC::InnerIterator it(op.matrix, k); it; ++it)
            os << it.row() << ',' << it.col() << ',' << it.value().real() << ',' << it.value().imag() << '\n';
}

} // namespace magweyl
