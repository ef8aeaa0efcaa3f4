#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "magweyl/landau.hpp"

using namespace magweyl;

TEST(Hermite, Values) {
    EXPECT_NEAR(hermite_function(0, 0.0), std::pow(pi, -0.25), 1e-15);
    EXPECT_NEAR(hermite_function(0, 0.0), 0.751126, 1e-6);
    EXPECT_NEAR(hermite_function(1, 0.0), 0.0, 1e-15);
    // u_2(t) = pi^{-1/4} (2t^2 - 1)/sqrt(2) e^{-t^2/2}
    for (double t : {-1.3, 0.2, 2.7}) {
        const double oracle = std::pow(pi, -0.25) * (2 * t * t - 1) / std::sqrt(2.0) * std::exp(-t * t / 2);
        EXPECT_NEAR(hermite_function(2, t), oracle, 1e-14);
    }
    // scaled version
    EXPECT_NEAR(hermite_function(0, 0.0, 0.25), std::pow(pi, -0.25) / 0.5, 1e-14);
    EXPECT_THROW(hermite_function(501, 0.0), DomainError);
    EXPECT_THROW(hermite_function(3, 0.0, 0.0), ConfigError);
}

TEST(Hermite, LargeIndexStaysFinite) {
    for (double t : {0.0, 5.0, 20.0, 31.0, 40.0}) {
        auto u = hermite_all(500, t);
        for (double v : u) EXPECT_TRUE(std::isfinite(v));
        for (double v : u) EXPECT_LE(std::abs(v), 1.0);
    }
    // Gram over a fine line grid for high indices
    const double dx = 0.02;
    std::vector<double> x;
    for (double t = -45; t <= 45; t += dx) x.push_back(t);
    auto b = hermite_basis(400, 1.0, x);
    const double d = (b.gram(dx) - Eigen::MatrixXd::Identity(401, 401)).cwiseAbs().maxCoeff();
    EXPECT_LE(d, 1e-8);
}

TEST(Hermite, OrthogonalityAndGram) {
    const double s = 0.3, dx = s / 8;
    std::vector<double> x;
    for (double t = -12; t <= 12; t += dx) x.push_back(t);
    auto b = hermite_basis(40, s, x);
    const Eigen::MatrixXd G = b.gram(dx);
    EXPECT_LE((G - Eigen::MatrixXd::Identity(41, 41)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(G(2, 3), 0.0, 1e-10);
}

TEST(LandauRadii, Examples) {
    auto r = landau_radii(1, 0.2, 0.0, -1);
    ASSERT_GE(r.size(), 3u);
    EXPECT_NEAR(r[0].r, 0.44721, 1e-5);
    EXPECT_NEAR(r[1].r, 0.77460, 1e-5);
    EXPECT_NEAR(r[2].r, 1.0, 1e-12);
    // tau = 0, V_ref = -1: r_2^2 - 1 = 0 (within rounding), use the off-grid tau just below
    auto a = landau_radii(1, 0.2, -1e-9, -1);
    std::vector<int> active;
    for (auto& l : a)
        if (l.active) active.push_back(l.n);
    EXPECT_EQ(active, (std::vector<int>{0, 1}));
    for (auto& l : landau_radii(1, 0.2, -2, -1)) EXPECT_FALSE(l.active);
    EXPECT_THROW(landau_radii(0, 0.2, 0, -1), ConfigError);
}

TEST(EffectiveOperator, ConstantSymbol) {
    EffectiveGrid eg;
    eg.M = 64;
    auto op = effective_operator([](double, double) { return -0.4; }, 2, 1, 0.2, eg);
    auto ev = op.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) EXPECT_NEAR(ev[i], 5 * 0.2 - 0.4, 1e-12);
}

TEST(EffectiveOperator, PositionSymbolIsMultiplication) {
    EffectiveGrid eg;
    eg.M = 64;
    auto op = effective_operator([](double x, double) { return std::sin(x); }, 0, 1, 0.2, eg);
    Eigen::MatrixXcd off = op.matrix;
    off.diagonal().setZero();
    EXPECT_LT(off.cwiseAbs().maxCoeff(), 1e-12);
    for (int j = 0; j < eg.M; ++j) EXPECT_NEAR(op.matrix(j, j).real(), 0.2 + std::sin(eg.node(j)), 1e-12);
}

TEST(EffectiveOperator, HarmonicOscillator) {
    EffectiveGrid eg;
    eg.M = 128;
    eg.L = 5;
    eg.x0 = -2.5;
    const double mu = 1, h = 0.05;
    auto op = effective_operator([](double x, double xi) { return x * x + xi * xi; }, 0, mu, h, eg);
    EXPECT_LE((op.matrix - op.matrix.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
    auto ev = op.eigenvalues();
    for (int m = 0; m <= 5; ++m) {
        const double oracle = h + (2 * m + 1) * 0.05;
        EXPECT_NEAR(ev[m], oracle, 0.01 * oracle) << m;
    }
}

TEST(EffectiveOperator, ShiftAndHermitian) {
    EffectiveGrid eg;
    eg.M = 96;
    PhaseSymbol W = [](double x, double xi) { return std::cos(x) * (1 + 0.3 * xi * xi) + 0.2 * std::sin(2 * x) * xi; };
    PhaseSymbol W2 = [W](double x, double xi) { return W(x, xi) + 0.37; };
    auto a = effective_operator(W, 1, 1, 0.1, eg), b = effective_operator(W2, 1, 1, 0.1, eg);
    EXPECT_EQ((a.matrix - a.matrix.adjoint()).cwiseAbs().maxCoeff(), 0.0);
    auto ea = a.eigenvalues(), eb = b.eigenvalues();
    for (Eigen::Index i = 0; i < ea.size(); ++i) EXPECT_NEAR(eb[i] - ea[i], 0.37, 1e-12);
}

TEST(EffectiveOperator, ResolutionError) {
    EffectiveGrid eg;
    eg.M = 16;
    eg.L = 2 * pi;
    EXPECT_THROW(effective_operator([](double, double) { return 0.0; }, 0, 10, 0.1, eg), DomainError);
}

TEST(EffectiveOperator, MathieuCrossCheck) {
    // FD operator h^2 D^2 + cos x on a fine grid against a plane-wave (Fourier) dense solve
    const double h = 0.5, mu = 1, F = 1;
    EffectiveGrid eg;
    eg.M = 512;
    auto op = effective_operator_x3([](double x) { return std::cos(x); }, 0, mu, h, F, eg);
    auto ev = op.eigenvalues();
    const int K = 40;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * K + 1, 2 * K + 1);
    for (int a = -K; a <= K; ++a) {
        H(a + K, a + K) = h * h * a * a + mu * h * F;
        if (a + 1 <= K) H(a + K, a + 1 + K) = H(a + 1 + K, a + K) = 0.5;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(ev[i], es.eigenvalues()[i], 1e-3) << i;
}

TEST(EffectiveOperator, SeparableThreeDimensional) {
    auto s = make_scenario("separable_x3", {{"mu", 1}, {"h", pi / 2}, {"n", 12}, {"V0", 0}, {"a", 1}});
    ASSERT_EQ(s.N_phi, 4);
    auto r = separable_cross_check(s, 4.0);
    EXPECT_GT(r.full, 0);
    EXPECT_LE(r.relative_error, 0.03) << r.full << " vs " << r.effective;
}

namespace {

ProblemSpec flat_case() {
    return make_scenario("landau_flat", {{"mu", 1}, {"h", 2 * pi / 12}, {"n", 64}});
}

} // namespace

TEST(Decomposition, LowestClustersConcentrate) {
    auto s = flat_case();
    ASSERT_EQ(s.N_phi, 12);
    auto op = assemble(s);
    EigenOptions o;
    o.k = 36;
    auto sd = eigensolve(op, SolveMode::lowest_k, o);
    auto t = decomposition_check(sd, s, 6, 24);
    for (int j = 0; j < 24; ++j) {
        const int level = j / 12;
        EXPECT_EQ(t.dominant(j), level) << j;
        EXPECT_GE(t.weights(j, level), 0.99) << j;
    }
    std::ostringstream os;
    write_weights_csv(t, os);
    EXPECT_EQ(os.str().substr(0, 19), "eigenindex,n,weight");
}

TEST(Decomposition, ParsevalOnSpan) {
    // wide torus so the Hermite tails are negligible at the window edge
    auto s = make_scenario("landau_flat", {{"mu", 1}, {"L", 4 * pi}, {"h", 8 * pi / 32}, {"n", 96}});
    ASSERT_EQ(s.N_phi, 32);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    Eigen::MatrixXcd a(s.N_phi, 5);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = cplx(nd(rng), nd(rng));
    Eigen::VectorXcd v = landau_synthesis(s, a);
    const double norm2 = v.squaredNorm() * s.grid.cell_volume();
    auto back = landau_coefficients(s, v, 4);
    EXPECT_NEAR(back.cwiseAbs2().sum(), norm2, 1e-6 * norm2);
    EXPECT_LT((back - a).cwiseAbs().maxCoeff(), 1e-6 * a.cwiseAbs().maxCoeff());

    // Bessel for an arbitrary vector
    Eigen::VectorXcd r(s.grid.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = cplx(nd(rng), nd(rng));
    const double rn = r.squaredNorm() * s.grid.cell_volume();
    EXPECT_LE(landau_coefficients(s, r, 10).cwiseAbs2().sum(), rn * (1 + 1e-9));
}

TEST(Decomposition, RejectsNonFlat) {
    auto s = make_scenario("nondegenerate_well", {{"n", 16}});
    Eigen::VectorXcd v = Eigen::VectorXcd::Ones(s.grid.size());
    EXPECT_THROW(landau_coefficients(s, v, 2), Unsupported);
}
