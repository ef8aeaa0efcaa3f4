#pragma once

#include <future>
#include <ostream>
#include <vector>

#include "fields.hpp"

namespace magweyl {

struct PhasePoint {
    Vec3 x = Vec3::Zero();
    Vec3 xi = Vec3::Zero();
};

struct Trajectory {
    int d = 2;
    double mu = 0;
    std::vector<double> t;
    std::vector<PhasePoint> z;
    std::vector<double> H;
    std::vector<Eigen::Vector2d> Q;

    double energy_drift() const {
        double m = 0;
        const double scale = std::max(1.0, std::abs(H.front()));
        for (double e : H) m = std::max(m, std::abs(e - H.front()) / scale);
        return m;
    }
};

struct FlowOptions {
    double T_max = 1e5;
    double newton_tol = 1e-13;
    int newton_max = 50;
    int store_every = 1;
};

namespace detail {

using State = Eigen::Matrix<double, 6, 1>;

inline State pack(const PhasePoint& p) {
    State s;
    s << p.x, p.xi;
    return s;
}
inline PhasePoint unpack(const State& s) {
    return {s.head<3>(), s.tail<3>()};
}

// kinetic momenta p = xi - mu A(x)
inline Vec3 momenta(const CoefficientSet& c, double mu, const PhasePoint& z) {
    Vec3 p = z.xi - mu * c.A(z.x);
    for (int k = c.d; k < 3; ++k) p[k] = 0;
    return p;
}

inline double hamiltonian(const CoefficientSet& c, double mu, const PhasePoint& z) {
    const Vec3 p = momenta(c, mu, z);
    return p.dot(c.g(z.x) * p) + c.V(z.x);
}

// xdot = 2 g p,  xidot = -(d_x g^{jk}) p_j p_k - dV + 2 mu sum_j (g p)_j d_x A_j
inline State vector_field(const CoefficientSet& c, double mu, const State& s) {
    const PhasePoint z = unpack(s);
    const int d = c.d;
    const Vec3 p = momenta(c, mu, z);
    const Mat3 g = c.g(z.x);
    const Vec3 gp = g * p;
    State f = State::Zero();
    const Vec3 dV = c.grad_V(z.x);
    for (int k = 0; k < d; ++k) {
        f[k] = 2 * gp[k];
        ScalarFn pgp = [&](const Vec3& y) { return p.dot(c.g(y) * p); };
        const double dg = diff4(pgp, z.x, k);
        const Vec3 dA = diff4_vec(c.A, z.x, k);
        f[3 + k] = -dg - dV[k] + 2 * mu * gp.dot(dA);
    }
    return f;
}

inline Eigen::Matrix<double, 6, 6> jacobian_fd(const std::function<State(const State&)>& F, const State& s, int d,
                                                double step = 1e-6) {
    Eigen::Matrix<double, 6, 6> J = Eigen::Matrix<double, 6, 6>::Identity();
    for (int a = 0; a < 6; ++a) {
        if ((a % 3) >= d) continue;
        State sp = s, sm = s;
        sp[a] += step;
        sm[a] -= step;
        J.col(a) = (F(sp) - F(sm)) / (2 * step);
    }
    return J;
}

} // namespace detail

inline double hamiltonian(const ProblemSpec& s, const PhasePoint& z) { return detail::hamiltonian(s.coeffs, s.mu, z); }

inline double max_intensity(const ProblemSpec& s) {
    double F = 0;
    for (std::size_t i = 0; i < s.grid.size(); ++i) F = std::max(F, s.coeffs.intensity(s.grid.point(i)));
    return F;
}

// one implicit-midpoint step z1 = z0 + dt f((z0+z1)/2), simplified Newton with a finite-difference Jacobian
inline PhasePoint midpoint_step(const ProblemSpec& s, const PhasePoint& z0, double dt, const FlowOptions& o = {}) {
    using detail::State;
    const auto& c = s.coeffs;
    const int d = c.d;
    const State y0 = detail::pack(z0);
    auto f = [&](const State& y) { return detail::vector_field(c, s.mu, y); };
    auto G = [&](const State& y) { State r = y - y0 - dt * f(0.5 * (y0 + y)); return r; };
    State y = y0 + dt * f(y0);
    Eigen::Matrix<double, 6, 6> J = detail::jacobian_fd(G, y, d);
    Eigen::PartialPivLU<Eigen::Matrix<double, 6, 6>> lu(J);
    double last = std::numeric_limits<double>::infinity();
    for (int it = 0; it < o.newton_max; ++it) {
        State r = G(y);
        for (int k = d; k < 3; ++k) r[k] = r[3 + k] = 0;
        const State dy = lu.solve(r);
        y -= dy;
        const double step = dy.norm(), scale = 1 + y.norm();
        if (step <= o.newton_tol * scale) return detail::unpack(y);
        // finite-difference noise floor: accept once the update stops shrinking
        if (step <= 1e-11 * scale && step >= 0.5 * last) return detail::unpack(y);
        last = step;
    }
    throw SolverError("implicit midpoint: Newton iteration did not converge; reduce dt");
}

inline Eigen::Vector2d guiding_center_at(const ProblemSpec& s, const PhasePoint& z) {
    const double F = s.coeffs.intensity(z.x);
    if (!(F > 1e-12)) throw DomainError("guiding centre: magnetic intensity vanishes on the trajectory");
    const Vec3 p = detail::momenta(s.coeffs, s.mu, z);
    return {z.x[0] + p[1] / (s.mu * F), z.x[1] - p[0] / (s.mu * F)};
}

// Q1 = x1 + p2/(mu F), Q2 = x2 - p1/(mu F)
inline std::vector<Eigen::Vector2d> guiding_center(const Trajectory& tr, const ProblemSpec& s) {
    std::vector<Eigen::Vector2d> Q;
    Q.reserve(tr.z.size());
    for (const auto& z : tr.z) Q.push_back(guiding_center_at(s, z));
    return Q;
}

inline Trajectory integrate_flow(const ProblemSpec& s, const PhasePoint& start, double T, double dt,
                                 const FlowOptions& o = {}) {
    if (!(dt > 0) || !(T >= 0)) throw ConfigError("integrate_flow needs dt > 0 and T >= 0");
    if (T > o.T_max) throw ConfigError("integrate_flow: T exceeds the configured maximum");
    const double Fmax = s.mu > 0 ? max_intensity(s) : 0;
    if (s.mu > 0 && Fmax > 0 && dt > 0.1 / (s.mu * Fmax) * (1 + 1e-12))
        throw DomainError("integrate_flow: step too large; need dt <= " + std::to_string(0.1 / (s.mu * Fmax)));
    Trajectory tr;
    tr.d = s.coeffs.d;
    tr.mu = s.mu;
    const long steps = std::lround(T / dt);
    PhasePoint z = start;
    const bool gc = s.coeffs.d >= 2 && s.mu > 0;
    auto record = [&](double t) {
        tr.t.push_back(t);
        tr.z.push_back(z);
        tr.H.push_back(hamiltonian(s, z));
        if (gc) tr.Q.push_back(guiding_center_at(s, z));
    };
    record(0);
    for (long k = 1; k <= steps; ++k) {
        z = midpoint_step(s, z, dt, o);
        if (k % o.store_every == 0 || k == steps) record(k * dt);
    }
    return tr;
}

// several starts in parallel, each integration single-threaded
inline std::vector<Trajectory> integrate_ensemble(const ProblemSpec& s, const std::vector<PhasePoint>& starts,
                                                  double T, double dt, const FlowOptions& o = {}) {
    std::vector<std::future<Trajectory>> fut;
    for (const auto& z : starts) fut.push_back(std::async(std::launch::async, [&, z] { return integrate_flow(s, z, T, dt, o); }));
    std::vector<Trajectory> out;
    for (auto& f : fut) out.push_back(f.get());
    return out;
}

// mu^{-1} L_{(V - tau)/F}, L_v = (-d2 v, d1 v)
inline Eigen::Vector2d liouvillean_drift(const Vec3& x, const ProblemSpec& s, double tau) {
    const auto& c = s.coeffs;
    const double F = c.intensity(x);
    if (!(F > 0)) throw DomainError("Liouvillean drift needs F > 0");
    if (!(s.mu > 0)) throw ConfigError("Liouvillean drift needs mu > 0");
    ScalarFn Fn = [&](const Vec3& y) { return c.intensity(y); };
    const Vec3 dV = c.grad_V(x);
    const Vec3 dF = detail::grad4(Fn, x, 2);
    const double v = c.V(x) - tau;
    const double d1 = dV[0] / F - v * dF[0] / (F * F), d2 = dV[1] / F - v * dF[1] / (F * F);
    return Eigen::Vector2d(-d2, d1) / s.mu;
}

// time average of dQ/dt over [t0, t1] from the stored series (least-squares line)
inline Eigen::Vector2d measured_drift(const Trajectory& tr) {
    const std::size_t n = tr.Q.size();
    if (n < 2) throw ConfigError("drift measurement needs at least two samples");
    double mt = 0;
    Eigen::Vector2d mq = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        mt += tr.t[i] / n;
        mq += tr.Q[i] / double(n);
    }
    double stt = 0;
    Eigen::Vector2d stq = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        stt += (tr.t[i] - mt) * (tr.t[i] - mt);
        stq += (tr.t[i] - mt) * (tr.Q[i] - mq);
    }
    return stq / stt;
}

// max_t |Q(t) - Q(0) - drift(Q(0)) t|
inline double q_conservation_error(const Trajectory& tr, const ProblemSpec& s, double tau = 0) {
    const Eigen::Vector2d Q0 = tr.Q.front();
    const Eigen::Vector2d v = liouvillean_drift(Vec3(Q0[0], Q0[1], 0), s, tau);
    double m = 0;
    for (std::size_t i = 0; i < tr.Q.size(); ++i) m = std::max(m, (tr.Q[i] - Q0 - v * tr.t[i]).norm());
    return m;
}

struct X3Report {
    double measured = 0;    // mean dx3/dt over the first cyclotron period
    double predicted = 0;   // 2 g^{33} xi3 at the start
    double deviation = 0;   // |measured - predicted| / max(|predicted|, 1e-300)
    double period = 0;
};

inline X3Report x3_transport_check(const Trajectory& tr, const ProblemSpec& s) {
    if (tr.d != 3) throw ConfigError("x3 transport check needs a d = 3 trajectory");
    const PhasePoint& z0 = tr.z.front();
    const double F = s.coeffs.intensity(z0.x);
    X3Report r;
    r.period = 2 * pi / (2 * s.mu * F);
    std::size_t k = 0;
    while (k + 1 < tr.t.size() && tr.t[k + 1] <= r.period * (1 + 1e-12)) ++k;
    if (k == 0) throw ConfigError("x3 transport check: trajectory shorter than one cyclotron period");
    r.measured = (tr.z[k].x[2] - z0.x[2]) / tr.t[k];
    r.predicted = 2 * s.coeffs.g(z0.x)(2, 2) * z0.xi[2];
    r.deviation = std::abs(r.measured - r.predicted) / std::max(std::abs(r.predicted), 1e-300);
    return r;
}

// first time the kinetic momentum completes a full turn (linear interpolation of the unwrapped angle)
inline double cyclotron_period(const Trajectory& tr, const ProblemSpec& s) {
    double prev = 0, acc = 0;
    for (std::size_t i = 0; i < tr.z.size(); ++i) {
        const Vec3 p = detail::momenta(s.coeffs, s.mu, tr.z[i]);
        const double a = std::atan2(p[1], p[0]);
        if (i > 0) {
            double da = a - prev;
            while (da > pi) da -= 2 * pi;
            while (da < -pi) da += 2 * pi;
            const double before = acc;
            acc += da;
            if (std::abs(acc) >= 2 * pi) {
                const double frac = (2 * pi - std::abs(before)) / std::abs(da);
                return tr.t[i - 1] + frac * (tr.t[i] - tr.t[i - 1]);
            }
        }
        prev = a;
    }
    throw ConfigError("cyclotron period: trajectory shorter than one turn");
}

// determinant of the finite-difference Jacobian of one step
inline double step_jacobian_determinant(const ProblemSpec& s, const PhasePoint& z, double dt, double fd = 1e-5) {
    const int d = s.coeffs.d;
    const int D = 2 * d;
    Eigen::MatrixXd J(D, D);
    auto comp = [d](const PhasePoint& p, int a) { return a < d ? p.x[a] : p.xi[a - d]; };
    for (int b = 0; b < D; ++b) {
        PhasePoint zp = z, zm = z;
        if (b < d) {
            zp.x[b] += fd;
            zm.x[b] -= fd;
        } else {
            zp.xi[b - d] += fd;
            zm.xi[b - d] -= fd;
        }
        const PhasePoint a = midpoint_step(s, zp, dt), c = midpoint_step(s, zm, dt);
        for (int r = 0; r < D; ++r) J(r, b) = (comp(a, r) - comp(c, r)) / (2 * fd);
    }
    return J.determinant();
}

inline void write_trajectory_csv(const Trajectory& tr, std::ostream& os) {
    const int d = tr.d;
    os << 't';
    for (int k = 0; k < d; ++k) os << ",x" << k + 1;
    for (int k = 0; k < d; ++k) os << ",xi" << k + 1;
    os << ",H";
    if (!tr.Q.empty()) os << ",Q1,Q2";
    os << '\n';
    os.precision(17);
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
        os << tr.t[i];
        for (int k = 0; k < d; ++k) os << ',' << tr.z[i].x[k];
        for (int k = 0; k < d; ++k) os << ',' << tr.z[i].xi[k];
        os << ',' << tr.H[i];
        if (!tr.Q.empty()) os << ',' << tr.Q[i][0] << ',' << tr.Q[i][1];
        os << '\n';
    }
}

} // namespace magweyl
