#include <gtest/gtest.h>

#include <random>

#include "magweyl/fields.hpp"

using namespace magweyl;

TEST(ThetaModulus, Examples) {
    EXPECT_DOUBLE_EQ(theta_modulus({1, 0}, 0.25), 0.25);
    EXPECT_NEAR(theta_modulus({2, 0}, 0.1), 0.01, 1e-15);
    EXPECT_NEAR(theta_modulus({1, 2}, std::exp(-2.0)), std::exp(-2.0) / 4, 1e-15);
    EXPECT_NEAR(theta_modulus({1, 2}, std::exp(-2.0)), 0.033834, 1e-6);
}

TEST(ThetaModulus, DomainErrors) {
    EXPECT_THROW(theta_modulus({1, 0}, 0.0), DomainError);
    EXPECT_THROW(theta_modulus({1, 0}, -0.1), DomainError);
    EXPECT_THROW(theta_modulus({1, 0}, 0.5), DomainError);
    EXPECT_NO_THROW(theta_modulus({1, 0}, std::exp(-1.0)));
}

TEST(ThetaModulus, MonotoneOnDomain) {
    Regularity r{1.5, 2.0};
    double prev = 0;
    for (double t = 1e-6; t <= std::exp(-1.0); t *= 1.1) {
        const double v = theta_modulus(r, t);
        EXPECT_GT(v, prev);
        prev = v;
    }
}

TEST(Mollify, ConstantAndLinearUnchanged) {
    auto cfg = MollifierConfig::uniform(0.3);
    ScalarFn c = [](const Vec3&) { return 2.5; };
    ScalarFn lin = [](const Vec3& x) { return 0.7 * x[0] - 1.3 * x[1]; };
    auto mc = mollify(c, cfg, 2, 2 * pi);
    auto ml = mollify(lin, cfg, 2, 2 * pi);
    for (Vec3 x : {Vec3(1, 2, 0), Vec3(3.1, 0.4, 0)}) {
        EXPECT_NEAR(mc(x), 2.5, 1e-12);
        EXPECT_NEAR(ml(x), lin(x), 1e-12);
    }
}

TEST(Mollify, SineDampingMatchesDirectConvolution) {
    const double eps = 0.3;
    auto m = mollify([](const Vec3& x) { return std::sin(x[0]); }, MollifierConfig::uniform(eps), 1, 2 * pi);
    // oracle: composite Simpson of (315/256)(1-u^2)^4 cos(eps u) over [-1,1]
    const int N = 20000;
    double s = 0;
    for (int i = 0; i <= N; ++i) {
        const double u = -1 + 2.0 * i / N;
        const double f = 315.0 / 256.0 * std::pow(1 - u * u, 4) * std::cos(eps * u);
        s += f * ((i == 0 || i == N) ? 1 : (i % 2 ? 4 : 2));
    }
    const double factor = s * (2.0 / N) / 3;
    EXPECT_LT(factor, 1.0);
    for (double x0 : {0.3, 1.2, 2.0}) EXPECT_NEAR(m(Vec3(x0, 0, 0)), factor * std::sin(x0), 1e-10);
}

TEST(Mollify, KernelUnitMassAndEven) {
    for (int d = 1; d <= 3; ++d) {
        // mass of the discrete quadrature before normalisation, and first moments
        Eigen::VectorXd z, w;
        detail::gauss_legendre(24, z, w);
        double mass = 0, m1 = 0;
        const int q = 24;
        const int total = d == 1 ? q : (d == 2 ? q * q : q * q * q);
        for (int t = 0; t < total; ++t) {
            int idx[3] = {t % q, (t / q) % q, t / (q * q)};
            double r2 = 0, wt = 1;
            for (int k = 0; k < d; ++k) {
                r2 += z[idx[k]] * z[idx[k]];
                wt *= w[idx[k]];
            }
            mass += wt * mollifier_kernel(r2, d);
            m1 += wt * mollifier_kernel(r2, d) * z[idx[0]];
        }
        // the ball boundary cuts tensor cells, so the unnormalised mass is only accurate to a few digits
        EXPECT_NEAR(mass, 1.0, 2e-3) << "d=" << d;
        EXPECT_NEAR(m1, 0.0, 1e-12) << "d=" << d;
    }
}

TEST(Mollify, InvalidScale) {
    ScalarFn f = [](const Vec3&) { return 1.0; };
    EXPECT_THROW(mollify(f, MollifierConfig::uniform(pi), 2, 2 * pi), DomainError);
    GridSpec g(2, 32, 2 * pi);
    EXPECT_THROW(mollify_grid(g, Eigen::VectorXd::Ones(g.size()), MollifierConfig::uniform(3.2)), DomainError);
}

TEST(Mollify, GridLinearityAndContraction) {
    GridSpec g(2, 64, 2 * pi);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::VectorXd f(g.size()), h(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        f[i] = u(rng);
        h[i] = u(rng);
    }
    auto cfg = MollifierConfig::uniform(0.4);
    const double a = 0.7, b = -1.9;
    Eigen::VectorXd lhs = mollify_grid(g, a * f + b * h, cfg);
    Eigen::VectorXd rhs = a * mollify_grid(g, f, cfg) + b * mollify_grid(g, h, cfg);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(mollify_grid(g, f, cfg).cwiseAbs().maxCoeff(), f.cwiseAbs().maxCoeff() + 1e-14);
    // constants pass through
    Eigen::VectorXd c = Eigen::VectorXd::Constant(g.size(), 3.0);
    EXPECT_LT((mollify_grid(g, c, cfg) - c).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mollify, ApproximationConstantStableUnderRefinement) {
    // smooth scenario field (C^2): ||f_eps - f|| / theta(eps) with theta(t) = t^2
    auto s = make_scenario("nondegenerate_well", {{"slope", 1.0}});
    const double eps = 0.2;
    Regularity r{2, 0};
    std::vector<double> C;
    for (int n : {128, 256, 512}) {
        GridSpec g(2, n, s.grid.L);
        Eigen::VectorXd f = sample(g, s.coeffs.V);
        Eigen::VectorXd m = mollify_grid(g, f, MollifierConfig::uniform(eps));
        C.push_back((m - f).cwiseAbs().maxCoeff() / theta_modulus(r, eps));
    }
    EXPECT_NEAR(C[1] / C[2], 1.0, 0.05);
    EXPECT_NEAR(C[0] / C[2], 1.0, 0.1);
}

TEST(Intensity, Examples) {
    CoefficientSet c;
    c.d = 2;
    c.g = [](const Vec3&) { return Mat3(Mat3::Identity()); };
    c.A = [](const Vec3& x) { return Vec3(0, x[0], 0); };
    c.V = [](const Vec3&) { return 0.0; };
    GridSpec g(2, 16, 2 * pi);
    EXPECT_LT((magnetic_intensity(c, g).array() - 1).abs().maxCoeff(), 1e-10);

    c.A = [](const Vec3& x) { return Vec3(-x[1] / 2, x[0] / 2, 0); };
    EXPECT_LT((magnetic_intensity(c, g).array() - 1).abs().maxCoeff(), 1e-10);
    EXPECT_TRUE(c.numeric_curl());

    c.A = [](const Vec3& x) { return Vec3(0, x[0], 0); };
    c.g = [](const Vec3&) { return Mat3(Vec3(4, 1, 1).asDiagonal()); };
    EXPECT_LT((magnetic_intensity(c, g).array() - 2).abs().maxCoeff(), 1e-10);
}

TEST(Intensity, GaugeInvariant) {
    auto s = make_scenario("variable_metric");
    CoefficientSet c = s.coeffs;
    c.curlA = nullptr;
    CoefficientSet c2 = c;
    // A + grad chi, chi = sin(x1) cos(2 x2) + 0.3 x1 x2
    c2.A = [A = c.A](const Vec3& x) {
        return Vec3(A(x) + Vec3(std::cos(x[0]) * std::cos(2 * x[1]) + 0.3 * x[1],
                                -2 * std::sin(x[0]) * std::sin(2 * x[1]) + 0.3 * x[0], 0));
    };
    GridSpec g(2, 16, s.grid.L);
    EXPECT_LT((magnetic_intensity(c, g) - magnetic_intensity(c2, g)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Scenario, UnknownNameListsValid) {
    try {
        make_scenario("nope");
        FAIL();
    } catch (const ConfigError& e) {
        std::string m = e.what();
        for (const auto& n : scenario_names()) EXPECT_NE(m.find(n), std::string::npos);
    }
    EXPECT_THROW(make_scenario("landau_flat", {{"bogus", 1}}), ConfigError);
}

TEST(Scenario, LandauFlat) {
    auto s = make_scenario("landau_flat", {{"mu", 1}, {"h", 0.1}});
    EXPECT_EQ(s.N_phi, 63);
    const Vec3 x(1.1, 2.2, 0);
    EXPECT_TRUE(s.coeffs.g(x).isIdentity());
    EXPECT_DOUBLE_EQ(s.coeffs.intensity(x), 1.0);
    EXPECT_DOUBLE_EQ(s.coeffs.V(x), 0.0);
}

TEST(Scenario, NondegenerateWellGradient) {
    auto s = make_scenario("nondegenerate_well", {{"slope", 1}, {"n", 64}});
    auto psi_support = Eigen::VectorXd(s.grid.size());
    for (std::size_t i = 0; i < s.grid.size(); ++i)
        psi_support[i] = (s.grid.point(i) - s.grid.center()).head<2>().norm() < s.grid.L / 4 ? 1 : 0;
    auto rep = validate_assumptions(s, &psi_support);
    // independent oracle on the support: |dV/dx1| = 2|cos th - cos(2 th)/4|
    double gmin = 1e9;
    for (std::size_t i = 0; i < s.grid.size(); ++i) {
        if (psi_support[i] == 0) continue;
        const double th = 2 * pi * (s.grid.point(i)[0] - s.grid.L / 2) / s.grid.L;
        gmin = std::min(gmin, 2 * std::abs(std::cos(th) - std::cos(2 * th) / 4));
    }
    EXPECT_GE(gmin, 0.5 - 1e-12);
    EXPECT_GE(rep.nondeg_min, 0.5 - 1e-9);
    EXPECT_TRUE(rep.nondegenerate);
}

TEST(Scenario, HolderModulusWithinFactorFour) {
    auto s = make_scenario("holder_perturbed", {{"l", 1}, {"sigma", 2}, {"terms", 12}, {"amp", 1}});
    std::vector<Vec3> pts;
    GridSpec g(2, 48, s.grid.L);
    for (std::size_t i = 0; i < g.size(); ++i) pts.push_back(g.point(i));
    for (int k = 2; k <= 10; ++k) {
        const double t = std::ldexp(1.0, -k);
        const double m = second_difference_modulus(s.coeffs.V, t, pts, 2);
        const double th = theta_modulus(s.reg, t);
        EXPECT_LE(m, 4 * th) << "t=" << t;
        EXPECT_GE(m, th / 4) << "t=" << t;
    }
}

TEST(Assumptions, LandauFlatNegativePotential) {
    auto s = make_scenario("landau_flat", {{"V0", -1}, {"mu", 1}, {"h", 0.2}, {"n", 16}});
    auto r = validate_assumptions(s);
    EXPECT_NEAR(r.F_min, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(r.V_max, -1.0);
    // oracle: min_n |-1 + (2n+1) mu h|
    double m = 1e9;
    for (int n = 0; n < 50; ++n) m = std::min(m, std::abs(-1 + (2 * n + 1) * s.mu * s.h));
    EXPECT_NEAR(r.nondeg_min, m, 1e-12);
    EXPECT_EQ(r.nondegenerate, m >= AssumptionConstants{}.nondeg);
    EXPECT_TRUE(r.negative_potential);
    EXPECT_TRUE(r.elliptic);
}

TEST(Assumptions, ZeroPotentialFailsNegativity) {
    auto s = make_scenario("landau_flat", {{"V0", 0}, {"n", 16}});
    EXPECT_FALSE(validate_assumptions(s).negative_potential);
}

TEST(Assumptions, LinearDrift) {
    auto s = make_scenario("linear_drift", {{"beta", 1}, {"n", 16}, {"mu", 0}});
    auto r = validate_assumptions(s);
    EXPECT_GE(r.nondeg_min, 1.0 - 1e-12);
    EXPECT_FALSE(s.torus_compatible);
}
