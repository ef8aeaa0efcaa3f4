#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include <Eigen/SparseCholesky>

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include "expression.hpp"
#include "magop.hpp"

namespace magweyl {

enum class SolveMode { full, lowest_k };

struct SpectralData {
    GridSpec grid;
    std::vector<double> values;         // ascending
    Eigen::MatrixXcd vectors;           // columns, grid-normalised; empty for values-only solves
    std::vector<double> residuals;      // ||A phi - lambda phi|| / ||phi||
    int k = 0;                          // number of converged pairs
    bool complete = false;              // whole spectrum known
    double ceiling = std::numeric_limits<double>::infinity();

    bool has_vectors() const { return vectors.cols() > 0; }

    // eigenvalues <= tau (right-continuous convention)
    int count_below(double tau) const {
        return static_cast<int>(std::upper_bound(values.begin(), values.end(), tau) - values.begin());
    }
};

struct EigenOptions {
    bool vectors = true;
    int k = 0;                      // lowest-k mode: number of pairs
    double tol = 1e-8;
    int max_iter = 400;
    int chebyshev_degree = 24;
    std::uint64_t seed = 12345;
    std::size_t dense_limit = 6000;
};

namespace detail {

inline Eigen::MatrixXcd to_dense(const SparseMatC& m) { return Eigen::MatrixXcd(m); }

inline double gershgorin_upper(const SparseMatC& m) {
    Eigen::VectorXd rad = Eigen::VectorXd::Zero(m.rows()), diag = Eigen::VectorXd::Zero(m.rows());
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseMatC::InnerIterator it(m, k); it; ++it) {
            if (it.row() == it.col())
                diag[it.row()] += it.value().real();
            else
                rad[it.row()] += std::abs(it.value());
        }
    return (diag + rad).maxCoeff();
}

inline void fill_residuals(const DiscreteOperator& op, SpectralData& sd) {
    sd.residuals.resize(sd.values.size());
    for (int j = 0; j < sd.vectors.cols(); ++j) {
        Eigen::VectorXcd r = op.matrix * sd.vectors.col(j) - sd.values[j] * sd.vectors.col(j);
        sd.residuals[j] = r.norm() / sd.vectors.col(j).norm();
    }
}

} // namespace detail

// Dense LAPACK solve of the whole spectrum (dsyevr when all entries are real, zheevr otherwise).
inline SpectralData eigensolve_full(const DiscreteOperator& op, const EigenOptions& opt = {}) {
    const std::size_t n = op.dim();
    if (n > opt.dense_limit)
        throw SolverError("full mode limited to " + std::to_string(opt.dense_limit) + " unknowns, got " +
                          std::to_string(n));
    SpectralData sd;
    sd.grid = op.grid;
    sd.values.resize(n);
    const char jobz = opt.vectors ? 'V' : 'N';
    const lapack_int N = static_cast<lapack_int>(n);
    lapack_int m = 0;
    std::vector<lapack_int> isuppz(2 * n);
    lapack_int info = 0;
    if (op.real_valued) {
        Eigen::MatrixXd a = Eigen::MatrixXcd(op.matrix).real();
        Eigen::MatrixXd z(opt.vectors ? n : 1, opt.vectors ? n : 1);
        info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, jobz, 'A', 'L', N, a.data(), N, 0, 0, 0, 0, 0, &m, sd.values.data(),
                              z.data(), opt.vectors ? N : 1, isuppz.data());
        if (opt.vectors) sd.vectors = z.cast<cplx>();
    } else {
        Eigen::MatrixXcd a(op.matrix);
        Eigen::MatrixXcd z(opt.vectors ? n : 1, opt.vectors ? n : 1);
        info = LAPACKE_zheevr(LAPACK_COL_MAJOR, jobz, 'A', 'L', N, a.data(), N, 0, 0, 0, 0, 0, &m, sd.values.data(),
                              z.data(), opt.vectors ? N : 1, isuppz.data());
        if (opt.vectors) sd.vectors = std::move(z);
    }
    if (info != 0) throw SolverError("LAPACK eigensolver failed with info=" + std::to_string(info));
    sd.k = static_cast<int>(n);
    sd.complete = true;
    if (opt.vectors) {
        sd.vectors /= std::sqrt(op.grid.cell_volume());
        detail::fill_residuals(op, sd);
    }
    return sd;
}

// Lowest k pairs by block Chebyshev-filtered subspace iteration from a seeded random block.
// A block method is used because torus Landau clusters are exactly degenerate.
inline SpectralData eigensolve_lowest(const DiscreteOperator& op, const EigenOptions& opt) {
    const Eigen::Index n = static_cast<Eigen::Index>(op.dim());
    const int k = opt.k;
    if (k <= 0 || k >= n) throw ConfigError("lowest-k mode needs 0 < k < dimension");
    const int p = static_cast<int>(std::min<Eigen::Index>(n, k + std::max(10, k / 5)));
    const SparseMatC& A = op.matrix;

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXcd X(n, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = cplx(nd(rng), nd(rng));

    auto orth = [](Eigen::MatrixXcd& Y) {
        Eigen::HouseholderQR<Eigen::MatrixXcd> qr(Y);
        Y = qr.householderQ() * Eigen::MatrixXcd::Identity(Y.rows(), Y.cols());
    };
    orth(X);
    const double upper = detail::gershgorin_upper(A);
    Eigen::VectorXd theta;
    Eigen::MatrixXcd AX;
    std::vector<double> res(k);
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        AX = A * X;
        Eigen::MatrixXcd H = X.adjoint() * AX;
        H = 0.5 * (H + H.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
        theta = es.eigenvalues();
        X = X * es.eigenvectors();
        AX = AX * es.eigenvectors();
        bool done = true;
        for (int j = 0; j < k; ++j) {
            res[j] = (AX.col(j) - theta[j] * X.col(j)).norm();
            if (res[j] > opt.tol * std::max(1.0, std::abs(theta[j]))) done = false;
        }
        if (done) break;
        // damp [cut, upper] with a scaled Chebyshev polynomial
        const double cut = theta[p - 1], a0 = theta[0];
        const double e = (upper - cut) / 2, c = (upper + cut) / 2;
        if (!(e > 0)) throw SolverError("lowest-k: degenerate filter interval");
        double sigma = e / (a0 - c);
        const double tau2 = 2 / sigma;
        Eigen::MatrixXcd Y = (AX - c * X) * (sigma / e);
        Eigen::MatrixXcd Xo = X;
        for (int deg = 2; deg <= opt.chebyshev_degree; ++deg) {
            const double s1 = 1 / (tau2 - sigma);
            Eigen::MatrixXcd Yn = (A * Y - c * Y) * (2 * s1 / e) - (sigma * s1) * Xo;
            Xo = std::move(Y);
            Y = std::move(Yn);
            sigma = s1;
        }
        X = std::move(Y);
        orth(X);
    }
    if (it == opt.max_iter) {
        double worst = *std::max_element(res.begin(), res.end());
        throw SolverError("lowest-k solver did not converge in " + std::to_string(opt.max_iter) +
                          " iterations; worst residual " + std::to_string(worst));
    }
    SpectralData sd;
    sd.grid = op.grid;
    sd.k = k;
    sd.values.assign(theta.data(), theta.data() + k);
    sd.ceiling = theta[k - 1];
    if (opt.vectors) {
        sd.vectors = X.leftCols(k) / std::sqrt(op.grid.cell_volume());
        detail::fill_residuals(op, sd);
    }
    return sd;
}

inline SpectralData eigensolve(const DiscreteOperator& op, SolveMode mode, const EigenOptions& opt = {}) {
    return mode == SolveMode::full ? eigensolve_full(op, opt) : eigensolve_lowest(op, opt);
}

// Number of eigenvalues <= tau from the inertia of a sparse LDL^T factorisation of A - tau I.
inline long count_by_inertia(const DiscreteOperator& op, double tau) {
    const double shift = tau + 1e-10 * (1 + std::abs(tau));
    SparseMatC I(op.matrix.rows(), op.matrix.cols());
    I.setIdentity();
    SparseMatC M = op.matrix - shift * I;
    Eigen::SimplicialLDLT<SparseMatC, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(M);
    if (ldlt.info() != Eigen::Success) throw SolverError("LDL^T factorisation failed at tau=" + std::to_string(tau));
    const auto D = ldlt.vectorD();
    long neg = 0;
    for (Eigen::Index i = 0; i < D.size(); ++i) {
        if (!std::isfinite(D[i].real())) throw SolverError("LDL^T produced a non-finite pivot");
        if (D[i].real() < 0) ++neg;
    }
    return neg;
}

namespace detail {
inline void check_ceiling(const SpectralData& sd, double tau) {
    if (sd.complete) return;
    if (!(tau < sd.ceiling)) {
        throw SolverError("tau=" + std::to_string(tau) + " is not below the reliable ceiling " +
                          std::to_string(sd.ceiling) + "; request more than k=" + std::to_string(sd.k) +
                          " eigenpairs");
    }
}
} // namespace detail

// N_psi(tau) = sum_{lambda_k <= tau} dx^d sum_x psi(x) |phi_k(x)|^2
inline double weighted_counting(const SpectralData& sd, double tau, const CutoffPsi& psi) {
    detail::check_ceiling(sd, tau);
    if (!(psi.grid == sd.grid)) throw GridMismatch("cutoff and spectral data live on different grids");
    const int m = sd.count_below(tau);
    if (psi.unit) return m;
    if (!sd.has_vectors()) throw ConfigError("weighted counting with psi != 1 needs eigenvectors");
    double s = 0;
    for (int j = 0; j < m; ++j) s += sd.vectors.col(j).cwiseAbs2().dot(psi.values);
    return s * sd.grid.cell_volume();
}

// e(x,x,tau) = sum_{lambda <= tau} |phi(x)|^2
inline Eigen::VectorXd local_density(const SpectralData& sd, double tau) {
    detail::check_ceiling(sd, tau);
    if (!sd.has_vectors()) throw ConfigError("local density needs eigenvectors");
    const int m = sd.count_below(tau);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(sd.vectors.rows());
    for (int j = 0; j < m; ++j) e += sd.vectors.col(j).cwiseAbs2();
    return e;
}

// R = N_psi(tau) - dx^d sum expr psi
inline double remainder(const SpectralData& sd, const SemiclassicalExpression& expr, double tau,
                        const CutoffPsi& psi) {
    if (!(expr.grid == sd.grid)) throw GridMismatch("expression and spectrum live on different grids");
    return weighted_counting(sd, tau, psi) - integrate_expression(expr, psi);
}

inline void write_eigenvalues_csv(const SpectralData& sd, std::ostream& os) {
    os << "index,value,residual\n";
    os.precision(17);
    for (std::size_t i = 0; i < sd.values.size(); ++i)
        os << i << ',' << sd.values[i] << ',' << (i < sd.residuals.size() ? sd.residuals[i] : 0.0) << '\n';
}

} // namespace magweyl
