#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace magweyl {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using ScalarFn = std::function<double(const Vec3&)>;
using VectorFn = std::function<Vec3(const Vec3&)>;
using MetricFn = std::function<Mat3(const Vec3&)>;

inline constexpr double pi = std::numbers::pi;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// bad input the caller can fix (maps to CLI exit code 2)
struct ConfigError : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct FluxError : Error {
    using Error::Error;
};
struct GridMismatch : Error {
    using Error::Error;
};
struct Unsupported : Error {
    using Error::Error;
};
// eigensolver / integrator failures (exit code 3)
struct SolverError : Error {
    using Error::Error;
};

namespace detail {

// 4th order central difference of f along axis k
inline double diff4(const ScalarFn& f, const Vec3& x, int k, double dh = 1e-3) {
    Vec3 e = Vec3::Zero();
    e[k] = dh;
    return (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * dh);
}

inline Vec3 diff4_vec(const VectorFn& f, const Vec3& x, int k, double dh = 1e-3) {
    Vec3 e = Vec3::Zero();
    e[k] = dh;
    return (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * dh);
}

inline Vec3 grad4(const ScalarFn& f, const Vec3& x, int d, double dh = 1e-3) {
    Vec3 g = Vec3::Zero();
    for (int k = 0; k < d; ++k) g[k] = diff4(f, x, k, dh);
    return g;
}

// Gauss-Legendre nodes/weights on [-1,1] by Newton on P_n
inline void gauss_legendre(int n, Eigen::VectorXd& x, Eigen::VectorXd& w) {
    x.resize(n);
    w.resize(n);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 1;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = z;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1;
            dp = n * (z * p1 - p0) / (z * z - 1);
            double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        x[i] = z;
        w[i] = 2 / ((1 - z * z) * dp * dp);
    }
}

inline double positive(double v) { return v > 0 ? v : 0; }

} // namespace detail
} // namespace magweyl
