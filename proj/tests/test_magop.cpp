#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "magweyl/spectral.hpp"

using namespace magweyl;

namespace {

ProblemSpec free_1d(int n, double h) {
    ProblemSpec s;
    s.coeffs.d = 1;
    s.coeffs.g = [](const Vec3&) { return Mat3(Mat3::Identity()); };
    s.coeffs.A = [](const Vec3&) { return Vec3(Vec3::Zero()); };
    s.coeffs.V = [](const Vec3&) { return 0.0; };
    s.grid = GridSpec(1, n, 2 * pi);
    s.h = h;
    return s;
}

std::vector<double> dense_values(const DiscreteOperator& op) {
    EigenOptions o;
    o.vectors = false;
    return eigensolve_full(op, o).values;
}

} // namespace

TEST(AdmissibleFlux, Examples) {
    auto a = admissible_flux(1, 0.1, 2 * pi, 1);
    EXPECT_EQ(a.N_phi, 63);
    EXPECT_NEAR(a.mu_snapped, 2 * pi * 0.1 * 63 / (4 * pi * pi), 1e-15);
    EXPECT_NEAR(a.mu_snapped, 1.00268, 1e-5);
    EXPECT_NEAR(a.relative_snap, 0.002676, 1e-5);

    auto b = admissible_flux(1, 2 * pi / 50, 2 * pi, 1);
    EXPECT_EQ(b.N_phi, 50);
    EXPECT_NEAR(b.mu_snapped, 1.0, 1e-14);

    EXPECT_THROW(admissible_flux(1e-9, 1, 2 * pi, 1), FluxError);
}

TEST(Assemble, FreeCircleClosedForm) {
    const int n = 8;
    const double h = 1, dx = 2 * pi / n;
    auto op = assemble(free_1d(n, h));
    auto ev = dense_values(op);
    std::vector<double> oracle;
    for (int k = 0; k < n; ++k) oracle.push_back(2 * h * h / (dx * dx) * (1 - std::cos(2 * pi * k / n)));
    std::sort(oracle.begin(), oracle.end());
    ASSERT_EQ(ev.size(), oracle.size());
    for (int k = 0; k < n; ++k) EXPECT_NEAR(ev[k], oracle[k], 1e-12);
    EXPECT_NEAR(ev[1], 0.9496, 1e-4);
}

TEST(Assemble, LandauFlatHermitianAndFluxClosure) {
    auto s = make_scenario("landau_flat", {{"mu", 1}, {"h", 0.1}, {"n", 24}});
    auto op = assemble(s);
    EXPECT_LE(hermiticity_defect(op), 1e-12);
    EXPECT_EQ(op.N_phi, 63);
    auto ph = plaquette_phases(op);
    const double dx = s.grid.dx();
    const double expect = -s.mu * dx * dx / s.h;   // each plaquette carries mu B dx^2 / h
    double total = 0;
    for (double p : ph) {
        EXPECT_NEAR(std::remainder(p - expect, 2 * pi), 0.0, 1e-10);
        total += p;
    }
    // sum of plaquette phases is -2 pi N_phi mod 2 pi
    EXPECT_NEAR(std::remainder(total, 2 * pi), 0.0, 1e-8);
    // product of all plaquette loops equals exp(-2 pi i N_phi) = 1
    cplx prod = 1;
    for (double p : ph) prod *= std::polar(1.0, p);
    EXPECT_NEAR(std::abs(prod - cplx(1)), 0.0, 1e-9);
}

TEST(Assemble, FreePlaneCountsDiscreteMomenta) {
    auto s = make_scenario("landau_flat", {{"mu", 0}, {"h", 0.3}, {"n", 12}});
    auto op = assemble(s);
    EXPECT_TRUE(op.real_valued);
    auto ev = dense_values(op);
    const int n = 12;
    const double dx = s.grid.dx(), h = s.h;
    std::vector<double> sym;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            sym.push_back(2 * h * h / (dx * dx) * (2 - std::cos(2 * pi * a / n) - std::cos(2 * pi * b / n)));
    for (double tau : {1e-9, 0.05, 0.2, 0.37, 1.1}) {
        long c_sym = std::count_if(sym.begin(), sym.end(), [&](double v) { return v <= tau; });
        long c_op = std::count_if(ev.begin(), ev.end(), [&](double v) { return v <= tau + 1e-12; });
        EXPECT_EQ(c_sym, c_op) << "tau=" << tau;
    }
}

TEST(Assemble, InadmissibleFluxAndEllipticity) {
    auto s = make_scenario("landau_flat", {{"mu", 1}, {"h", 0.1}, {"n", 12}});
    s.mu = 1.0;   // undo the snap
    EXPECT_THROW(assemble(s), FluxError);

    auto t = make_scenario("landau_flat", {{"mu", 0}, {"n", 12}});
    t.coeffs.g = [](const Vec3& x) { return Mat3(Mat3::Identity() * (x[0] > 3 ? -1.0 : 1.0)); };
    EXPECT_THROW(assemble(t), ConfigError);

    auto u = make_scenario("landau_flat", {{"mu", 1}, {"h", 0.1}, {"n", 12}});
    u.coeffs.A = [](const Vec3& x) { return Vec3(-x[1] / 2, x[0] / 2, 0); };
    EXPECT_THROW(assemble(u), Unsupported);
}

TEST(Apply, ConstantKernelAndFormBounds) {
    auto s = make_scenario("landau_flat", {{"mu", 0}, {"n", 12}});
    auto op = assemble(s);
    Eigen::VectorXcd one = Eigen::VectorXcd::Ones(op.dim());
    EXPECT_LT(magweyl::apply(op, one).norm(), 1e-12);
    EXPECT_THROW(magweyl::apply(op, Eigen::VectorXcd::Ones(5)), GridMismatch);

    auto sm = make_scenario("landau_flat", {{"mu", 1}, {"h", 0.2}, {"n", 12}, {"V0", -1}});
    auto opm = assemble(sm);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXcd v(opm.dim()), w(opm.dim());
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            v[i] = cplx(nd(rng), nd(rng));
            w[i] = cplx(nd(rng), nd(rng));
        }
        const cplx q = v.dot(magweyl::apply(opm, v));
        EXPECT_NEAR(q.imag(), 0, 1e-10 * std::abs(q));
        EXPECT_GE(q.real(), -1.0 * v.squaredNorm() - 1e-10);
        // adjoint symmetry
        EXPECT_NEAR(std::abs(magweyl::apply(opm, w).dot(v) - w.dot(magweyl::apply(opm, v))), 0, 1e-10 * v.norm() * w.norm());
    }
}

TEST(Apply, TwiceMatchesDenseSquare) {
    auto s = make_scenario("variable_metric", {{"mu", 1}, {"h", 0.5}, {"n", 8}});
    auto op = assemble(s);
    Eigen::MatrixXcd A(op.matrix);
    Eigen::MatrixXcd A2 = A * A;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    Eigen::VectorXcd v(op.dim());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cplx(nd(rng), nd(rng));
    EXPECT_LT((magweyl::apply(op, magweyl::apply(op, v)) - A2 * v).norm(), 1e-12 * (A2 * v).norm());
}

TEST(Assemble, GaugeCovariance) {
    auto s = make_scenario("variable_metric", {{"mu", 1}, {"h", 0.5}, {"n", 12}});
    auto s2 = s;
    // periodic gauge function chi = sin(x1) cos(x2) + 0.5 cos(2 x2)
    s2.coeffs.A = [A = s.coeffs.A](const Vec3& x) {
        return Vec3(A(x) + Vec3(std::cos(x[0]) * std::cos(x[1]), -std::sin(x[0]) * std::sin(x[1]) - std::sin(2 * x[1]), 0));
    };
    auto op1 = assemble(s), op2 = assemble(s2);
    auto e1 = dense_values(op1), e2 = dense_values(op2);
    for (std::size_t i = 0; i < e1.size(); ++i) EXPECT_NEAR(e1[i], e2[i], 1e-10);
    // links transform as U'(x) = U(x) exp(-i mu/h (chi(x+e) - chi(x)))
    auto chi = [](const Vec3& x) { return std::sin(x[0]) * std::cos(x[1]) + 0.5 * std::cos(2 * x[1]); };
    const GridSpec& g = s.grid;
    for (std::size_t i = 0; i < g.size(); i += 7)
        for (int ax = 0; ax < 2; ++ax) {
            Vec3 x = g.point(i), y = x;
            y[ax] += g.dx();
            const cplx expect = op1.links[ax][i] * std::polar(1.0, -s.mu / s.h * (chi(y) - chi(x)));
            EXPECT_NEAR(std::abs(op2.links[ax][i] - expect), 0, 1e-10);
        }
}

TEST(Assemble, SecondOrderConvergence) {
    // lowest eigenvalue of a smooth variable-metric problem under grid refinement
    std::vector<double> lam;
    for (int n : {20, 40, 80}) {
        auto s = make_scenario("variable_metric", {{"mu", 1}, {"h", 0.5}, {"n", n}, {"slope", 0.2}});
        auto op = assemble(s);
        EigenOptions o;
        o.k = 3;
        o.vectors = false;
        lam.push_back(eigensolve_lowest(op, o).values[0]);
    }
    const double order = std::log2(std::abs(lam[0] - lam[1]) / std::abs(lam[1] - lam[2]));
    EXPECT_GE(order, 1.8) << lam[0] << " " << lam[1] << " " << lam[2];
}

TEST(Assemble, SpectrumBoundedBelowByVmin) {
    auto s = make_scenario("nondegenerate_well", {{"mu", 1}, {"h", 0.3}, {"n", 16}, {"slope", 0.4}});
    auto op = assemble(s);
    auto ev = dense_values(op);
    EXPECT_GE(ev.front(), op.V_min - 1e-12);
}

TEST(Assemble, TripletExport) {
    auto s = make_scenario("landau_flat", {{"mu", 1}, {"h", 0.5}, {"n", 8}});
    auto op = assemble(s);
    std::ostringstream os;
    write_triplets(op, os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "row,col,re,im");
    SparseMatC back(op.dim(), op.dim());
    std::vector<Eigen::Triplet<cplx>> t;
    long rows = 0;
    while (std::getline(is, line)) {
        int r, c;
        double re, im;
        ASSERT_EQ(std::sscanf(line.c_str(), "%d,%d,%lf,%lf", &r, &c, &re, &im), 4);
        t.emplace_back(r, c, cplx(re, im));
        ++rows;
    }
    back.setFromTriplets(t.begin(), t.end());
    EXPECT_EQ(rows, op.matrix.nonZeros());
    EXPECT_LT(Eigen::MatrixXcd(back - op.matrix).norm(), 1e-13);
}
