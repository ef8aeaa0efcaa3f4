#pragma once

#include <string>

#include "grid.hpp"

namespace magweyl {

enum class ExprKind { weyl, magnetic_weyl, correction };

inline const char* to_string(ExprKind k) {
    switch (k) {
    case ExprKind::weyl: return "weyl";
    case ExprKind::magnetic_weyl: return "magnetic_weyl";
    case ExprKind::correction: return "correction";
    }
    return "?";
}

// pointwise density on a grid; integrate with cell volume weights
struct SemiclassicalExpression {
    ExprKind kind = ExprKind::weyl;
    GridSpec grid;
    Eigen::VectorXd values;
    double tau = 0;
    std::string provenance;
};

// smooth cutoff 0 <= psi <= 1 on the grid
struct CutoffPsi {
    GridSpec grid;
    Eigen::VectorXd values;
    bool unit = false;   // psi == 1

    static CutoffPsi one(const GridSpec& g) {
        CutoffPsi p;
        p.grid = g;
        p.values = Eigen::VectorXd::Ones(g.size());
        p.unit = true;
        return p;
    }

    // exp(-s^2/(1-s^2)), s = |x - c|/radius (minimal image), radius <= L/4
    static CutoffPsi bump(const GridSpec& g, double radius, const Vec3* centre = nullptr) {
        if (!(radius > 0) || radius > g.L / 4 * (1 + 1e-12))
            throw ConfigError("cutoff radius must lie in (0, L/4]");
        const Vec3 c = centre ? *centre : g.center();
        CutoffPsi p;
        p.grid = g;
        p.values.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const Vec3 x = g.point(i);
            double r2 = 0;
            for (int k = 0; k < g.d; ++k) {
                const double dk = wrap_delta(x[k] - c[k], g.L);
                r2 += dk * dk;
            }
            const double s2 = r2 / (radius * radius);
            p.values[i] = s2 < 1 ? std::exp(-s2 / (1 - s2)) : 0.0;
        }
        return p;
    }
};

inline double integrate_expression(const SemiclassicalExpression& e, const CutoffPsi& psi) {
    if (!(e.grid == psi.grid)) throw GridMismatch("expression and cutoff live on different grids");
    return e.grid.cell_volume() * e.values.dot(psi.values);
}

} // namespace magweyl
