#pragma once

#include <cstddef>
#include <vector>

#include "common.hpp"

namespace magweyl {

// Uniform periodic grid on [0,L)^d, points x = i*dx.
struct GridSpec {
    int d = 2;
    int n = 32;
    double L = 2 * pi;

    GridSpec() = default;
    GridSpec(int d_, int n_, double L_) : d(d_), n(n_), L(L_) { validate(); }

    void validate() const {
        if (d < 1 || d > 3) throw ConfigError("grid dimension must be 1, 2 or 3");
        if (n < 8) throw ConfigError("grid needs at least 8 points per axis");
        if (!(L > 0)) throw ConfigError("grid side length must be positive");
    }

    double dx() const { return L / n; }
    double cell_volume() const { return std::pow(dx(), d); }
    std::size_t size() const {
        std::size_t s = 1;
        for (int k = 0; k < d; ++k) s *= static_cast<std::size_t>(n);
        return s;
    }

    std::array<int, 3> multi(std::size_t idx) const {
        std::array<int, 3> m{0, 0, 0};
        for (int k = 0; k < d; ++k) {
            m[k] = static_cast<int>(idx % n);
            idx /= n;
        }
        return m;
    }
    std::size_t index(const std::array<int, 3>& m) const {
        std::size_t idx = 0;
        for (int k = d - 1; k >= 0; --k) idx = idx * n + static_cast<std::size_t>(((m[k] % n) + n) % n);
        return idx;
    }
    Vec3 point(std::size_t idx) const {
        auto m = multi(idx);
        Vec3 x = Vec3::Zero();
        for (int k = 0; k < d; ++k) x[k] = m[k] * dx();
        return x;
    }
    Vec3 center() const {
        Vec3 c = Vec3::Zero();
        for (int k = 0; k < d; ++k) c[k] = L / 2;
        return c;
    }

    bool operator==(const GridSpec& o) const { return d == o.d && n == o.n && L == o.L; }
};

inline Eigen::VectorXd sample(const GridSpec& g, const ScalarFn& f) {
    Eigen::VectorXd v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) v[i] = f(g.point(i));
    return v;
}

// minimal image of a displacement on the torus
inline double wrap_delta(double dx, double L) {
    return dx - L * std::round(dx / L);
}

} // namespace magweyl
