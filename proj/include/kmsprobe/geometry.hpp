#pragma once

// Trajectories, Fermi-Walker frames, the second-order Fermi normal coordinate
// (FNC) metric and the Rindler-wedge coordinate maps.
//
// Conventions: signature (-,+,+,+), natural units c = hbar = k_B = 1, events in
// an inertial Cartesian chart (t, x, y, z) of Minkowski spacetime. Curvature
// never gets computed here; callers hand in FW-frame components along the curve.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include "kmsprobe/core.hpp"

namespace kmsprobe::geometry {

using Vec3 = std::array<double, 3>;
using Vec4 = std::array<double, 4>;

inline constexpr std::array<double, 4> kEta{-1.0, 1.0, 1.0, 1.0};

inline double minkowski_dot(const Vec4& u, const Vec4& v) {
    return -u[0] * v[0] + u[1] * v[1] + u[2] * v[2] + u[3] * v[3];
}

inline double euclid_norm(const Vec4& v) {
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
}

inline double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

/// FW-frame Riemann components along the curve at one proper time.
/// Index layout follows the component names: r0i0j[i][j] = R_{0i0j},
/// r0kil[k][i][l] = R_{0kil}, rikjl[i][k][j][l] = R_{ikjl}; spatial indices 0..2.
struct Curvature {
    std::array<std::array<double, 3>, 3> r0i0j{};
    std::array<std::array<std::array<double, 3>, 3>, 3> r0kil{};
    std::array<std::array<std::array<std::array<double, 3>, 3>, 3>, 3> rikjl{};

    double max_abs() const {
        double m = 0.0;
        for (const auto& row : r0i0j)
            for (double v : row) m = std::max(m, std::abs(v));
        for (const auto& a : r0kil)
            for (const auto& b : a)
                for (double v : b) m = std::max(m, std::abs(v));
        for (const auto& a : rikjl)
            for (const auto& b : a)
                for (const auto& c : b)
                    for (double v : c) m = std::max(m, std::abs(v));
        return m;
    }
};

/// A proper-time parametrized curve given by callables (exact input).
struct Trajectory {
    std::function<Vec4(double)> position;
    std::function<Vec4(double)> velocity;
    std::function<Vec4(double)> acceleration;
};

/// Sampled curve; the columnar-table representation of a trajectory.
struct CurveData {
    std::string units = "natural";
    std::vector<double> tau;
    std::vector<Vec4> events;
    std::vector<Vec4> velocity;
    std::vector<Vec4> acceleration;
    std::vector<Vec3> accel_frame;      // a_i(tau) in the FW frame; may be empty
    std::vector<Curvature> curvature;   // empty means flat along the curve

    std::size_t size() const { return tau.size(); }

    /// Checks u.u = -1, u.a = 0 and strictly increasing tau.
    void validate(double tol = 1e-8) const {
        const std::size_t n = tau.size();
        if (events.size() != n || velocity.size() != n || acceleration.size() != n)
            throw PreconditionError("CurveData: column lengths differ");
        if (!accel_frame.empty() && accel_frame.size() != n)
            throw PreconditionError("CurveData: accel_frame length differs");
        if (!curvature.empty() && curvature.size() != n)
            throw PreconditionError("CurveData: curvature length differs");
        for (std::size_t k = 0; k < n; ++k) {
            if (k > 0 && !(tau[k] > tau[k - 1]))
                throw PreconditionError("CurveData: tau grid not strictly increasing at sample " +
                                        std::to_string(k));
            const double uu = minkowski_dot(velocity[k], velocity[k]);
            if (std::abs(uu + 1.0) > tol)
                throw PreconditionError("CurveData: u.u != -1 at sample " + std::to_string(k));
            const double ua = minkowski_dot(velocity[k], acceleration[k]);
            const double scale = std::max(1.0, euclid_norm(velocity[k]) * euclid_norm(acceleration[k]));
            if (std::abs(ua) > tol * scale)
                throw PreconditionError("CurveData: u.a != 0 at sample " + std::to_string(k));
        }
    }
};

inline CurveData sample(const Trajectory& traj, std::span<const double> tau_grid) {
    CurveData c;
    for (double t : tau_grid) {
        c.tau.push_back(t);
        c.events.push_back(traj.position(t));
        c.velocity.push_back(traj.velocity(t));
        c.acceleration.push_back(traj.acceleration(t));
    }
    return c;
}

/// Inertial observer at rest at spatial position x0.
inline Trajectory inertial_trajectory(const Vec3& x0 = {0, 0, 0}) {
    return {[x0](double t) { return Vec4{t, x0[0], x0[1], x0[2]}; },
            [](double) { return Vec4{1, 0, 0, 0}; },
            [](double) { return Vec4{0, 0, 0, 0}; }};
}

/// Uniform proper acceleration a along +x through the inertial origin.
inline Trajectory uniformly_accelerated_trajectory(double a) {
    if (!(a > 0)) throw PreconditionError("uniformly_accelerated_trajectory: a must be > 0");
    return {[a](double t) { return Vec4{std::sinh(a * t) / a, (std::cosh(a * t) - 1.0) / a, 0, 0}; },
            [a](double t) { return Vec4{std::cosh(a * t), std::sinh(a * t), 0, 0}; },
            [a](double t) { return Vec4{a * std::sinh(a * t), a * std::cosh(a * t), 0, 0}; }};
}

/// Circular motion of radius r and angular velocity w in the x-y plane.
/// Rotating frames make FW transport non-trivial (Thomas precession).
inline Trajectory circular_trajectory(double r, double w) {
    const double v = r * w;
    if (!(std::abs(v) < 1.0)) throw PreconditionError("circular_trajectory: speed must be < 1");
    const double g = 1.0 / std::sqrt(1.0 - v * v);
    return {[=](double s) {
                const double t = g * s;
                return Vec4{t, r * std::cos(w * t), r * std::sin(w * t), 0};
            },
            [=](double s) {
                const double t = g * s;
                return Vec4{g, -g * v * std::sin(w * t), g * v * std::cos(w * t), 0};
            },
            [=](double s) {
                const double t = g * s;
                return Vec4{0, -g * g * v * w * std::cos(w * t), -g * g * v * w * std::sin(w * t), 0};
            }};
}

// ---------------------------------------------------------------------------
// Fermi-Walker transport

/// Tetrad e_I^mu, I = 0..3; e[0] is the four-velocity.
struct Tetrad {
    std::array<Vec4, 4> e{};
};

inline Tetrad standard_tetrad() {
    Tetrad t;
    for (int i = 0; i < 4; ++i) t.e[i][i] = 1.0;
    return t;
}

/// Max over (I, J) of |g(e_I, e_J) - eta_IJ|, scaled by max(1, |e_I||e_J|)
/// (Euclidean component norms) so that boosted tetrads are measured relative
/// to the size of their components.
inline double orthonormality_error(const Tetrad& t) {
    double worst = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) {
            const double target = (i == j) ? kEta[i] : 0.0;
            const double scale = std::max(1.0, euclid_norm(t.e[i]) * euclid_norm(t.e[j]));
            worst = std::max(worst, std::abs(minkowski_dot(t.e[i], t.e[j]) - target) / scale);
        }
    return worst;
}

struct Frame {
    std::vector<double> tau;
    std::vector<Tetrad> tetrads;
    double max_drift = 0.0;
    std::size_t worst_sample = 0;
};

struct FwOptions {
    double tolerance = 1e-10;
    bool reorthonormalize = false;
    /// Drift above this raises NumericalError.
    double failure_drift = 1e-6;
    double initial_tolerance = 1e-9;
};

namespace detail {

inline void gram_schmidt(Tetrad& t) {
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < i; ++j) {
            const double c = minkowski_dot(t.e[i], t.e[j]) / kEta[j];
            for (int m = 0; m < 4; ++m) t.e[i][m] -= c * t.e[j][m];
        }
        const double n = std::sqrt(std::abs(minkowski_dot(t.e[i], t.e[i])));
        for (int m = 0; m < 4; ++m) t.e[i][m] /= n;
    }
}

}  // namespace detail

/// Fermi-Walker transports `initial` along `traj` and reports it on `tau_grid`.
/// Solves de_I/dtau = -(a^mu u_nu - u^mu a_nu) e_I^nu in the flat ambient chart.
inline Frame fermi_walker_transport(const Trajectory& traj, std::span<const double> tau_grid,
                                    const Tetrad& initial, const FwOptions& opt = {}) {
    if (tau_grid.empty()) throw PreconditionError("fermi_walker_transport: empty tau grid");
    for (std::size_t k = 1; k < tau_grid.size(); ++k)
        if (!(tau_grid[k] > tau_grid[k - 1]))
            throw PreconditionError("fermi_walker_transport: tau grid not strictly increasing");
    if (orthonormality_error(initial) > opt.initial_tolerance)
        throw PreconditionError("fermi_walker_transport: initial tetrad is not orthonormal");
    const Vec4 u0 = traj.velocity(tau_grid.front());
    for (int m = 0; m < 4; ++m)
        if (std::abs(initial.e[0][m] - u0[m]) > opt.initial_tolerance * std::max(1.0, euclid_norm(u0)))
            throw PreconditionError("fermi_walker_transport: e_0 differs from u(tau_0)");

    using State = std::array<double, 16>;
    auto rhs = [&traj](const State& x, State& dxdt, double t) {
        const Vec4 u = traj.velocity(t);
        const Vec4 a = traj.acceleration(t);
        for (int i = 0; i < 4; ++i) {
            Vec4 e{x[4 * i], x[4 * i + 1], x[4 * i + 2], x[4 * i + 3]};
            const double ue = minkowski_dot(u, e);
            const double ae = minkowski_dot(a, e);
            for (int m = 0; m < 4; ++m) dxdt[4 * i + m] = -(a[m] * ue - u[m] * ae);
        }
    };

    Frame out;
    State x{};
    for (int i = 0; i < 4; ++i)
        for (int m = 0; m < 4; ++m) x[4 * i + m] = initial.e[i][m];

    auto record = [&](const State& s, double t) {
        Tetrad te;
        for (int i = 0; i < 4; ++i)
            for (int m = 0; m < 4; ++m) te.e[i][m] = s[4 * i + m];
        out.tau.push_back(t);
        out.tetrads.push_back(te);
    };

    namespace odeint = boost::numeric::odeint;
    auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(opt.tolerance, opt.tolerance);
    const double span = tau_grid.back() - tau_grid.front();
    const double dt0 = span > 0 ? span * 1e-3 : 1e-3;
    if (!opt.reorthonormalize) {
        std::vector<double> times(tau_grid.begin(), tau_grid.end());
        odeint::integrate_times(stepper, rhs, x, times.begin(), times.end(), dt0, record);
    } else {
        record(x, tau_grid.front());
        for (std::size_t k = 1; k < tau_grid.size(); ++k) {
            odeint::integrate_adaptive(stepper, rhs, x, tau_grid[k - 1], tau_grid[k], dt0);
            Tetrad te;
            for (int i = 0; i < 4; ++i)
                for (int m = 0; m < 4; ++m) te.e[i][m] = x[4 * i + m];
            detail::gram_schmidt(te);
            for (int i = 0; i < 4; ++i)
                for (int m = 0; m < 4; ++m) x[4 * i + m] = te.e[i][m];
            out.tau.push_back(tau_grid[k]);
            out.tetrads.push_back(te);
        }
    }

    for (std::size_t k = 0; k < out.tetrads.size(); ++k) {
        const double d = orthonormality_error(out.tetrads[k]);
        if (d > out.max_drift) {
            out.max_drift = d;
            out.worst_sample = k;
        }
    }
    if (!(out.max_drift <= opt.failure_drift))
        throw NumericalError("fermi_walker_transport: orthonormality drift at sample " +
                                 std::to_string(out.worst_sample),
                             out.max_drift);
    return out;
}

/// Transport along sampled data. The curve between samples is the cubic
/// Hermite interpolant of u with a as its derivative.
inline Frame fermi_walker_transport(const CurveData& curve, const Tetrad& initial,
                                    const FwOptions& opt = {}) {
    curve.validate();
    if (curve.size() < 2) throw PreconditionError("fermi_walker_transport: need at least two samples");
    auto locate = [&curve](double t) {
        auto it = std::upper_bound(curve.tau.begin(), curve.tau.end(), t);
        std::size_t k = (it == curve.tau.begin()) ? 0 : static_cast<std::size_t>(it - curve.tau.begin()) - 1;
        return std::min(k, curve.size() - 2);
    };
    auto hermite = [&curve, locate](double t, bool derivative) {
        const std::size_t k = locate(t);
        const double h = curve.tau[k + 1] - curve.tau[k];
        const double s = (t - curve.tau[k]) / h;
        Vec4 r{};
        for (int m = 0; m < 4; ++m) {
            const double p0 = curve.velocity[k][m], p1 = curve.velocity[k + 1][m];
            const double m0 = curve.acceleration[k][m] * h, m1 = curve.acceleration[k + 1][m] * h;
            if (!derivative) {
                const double s2 = s * s, s3 = s2 * s;
                r[m] = (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * p1 +
                       (s3 - s2) * m1;
            } else {
                const double s2 = s * s;
                r[m] = ((6 * s2 - 6 * s) * p0 + (3 * s2 - 4 * s + 1) * m0 + (-6 * s2 + 6 * s) * p1 +
                        (3 * s2 - 2 * s) * m1) /
                       h;
            }
        }
        return r;
    };
    Trajectory interp{[](double) { return Vec4{}; }, [hermite](double t) { return hermite(t, false); },
                      [hermite](double t) { return hermite(t, true); }};
    return fermi_walker_transport(interp, curve.tau, initial, opt);
}

/// Fills curve.accel_frame with a_i = g(a, e_i) using the transported frame.
inline void project_acceleration(CurveData& curve, const Frame& frame) {
    if (frame.tetrads.size() != curve.size())
        throw PreconditionError("project_acceleration: frame and curve sizes differ");
    curve.accel_frame.resize(curve.size());
    for (std::size_t k = 0; k < curve.size(); ++k)
        for (int i = 0; i < 3; ++i)
            curve.accel_frame[k][i] = minkowski_dot(curve.acceleration[k], frame.tetrads[k].e[i + 1]);
}

// ---------------------------------------------------------------------------
// FNC metric expansion

struct FncConfig {
    /// Allowed value of |xi| * max(|a|, sqrt(max|R|)).
    double validity_factor = 0.1;
};

/// Largest |xi| accepted for the given acceleration and curvature.
inline double validity_radius(const Vec3& a, const Curvature& R, const FncConfig& cfg = {}) {
    const double scale = std::max(norm3(a), std::sqrt(R.max_abs()));
    return scale > 0 ? cfg.validity_factor / scale : kInf;
}

struct FncMetric {
    double g00 = -1.0;
    Vec3 g0i{};
    std::array<Vec3, 3> gij{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

    /// sqrt(-det g) of the full 4x4 metric.
    double sqrt_minus_det() const {
        Eigen::Matrix4d g;
        g(0, 0) = g00;
        for (int i = 0; i < 3; ++i) {
            g(0, i + 1) = g(i + 1, 0) = g0i[i];
            for (int j = 0; j < 3; ++j) g(i + 1, j + 1) = gij[i][j];
        }
        return std::sqrt(-g.determinant());
    }
};

namespace detail {
inline void check_validity(const Vec3& a, const Curvature& R, const Vec3& xi, const FncConfig& cfg,
                           const char* who) {
    const double r = norm3(xi);
    const double rmax = validity_radius(a, R, cfg);
    if (r > rmax)
        throw OutOfDomainError(std::string(who) + ": |xi| = " + std::to_string(r) +
                               " exceeds validity radius " + std::to_string(rmax));
}
}  // namespace detail

/// Second-order FNC metric around the curve.
inline FncMetric fnc_metric(const Vec3& a, const Curvature& R, const Vec3& xi, const FncConfig& cfg = {}) {
    detail::check_validity(a, R, xi, cfg, "fnc_metric");
    FncMetric g;
    double ax = 0.0;
    for (int i = 0; i < 3; ++i) ax += a[i] * xi[i];
    double rxx = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rxx += R.r0i0j[i][j] * xi[i] * xi[j];
    g.g00 = -(1.0 + ax) * (1.0 + ax) - rxx;
    for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 3; ++l) s += R.r0kil[k][i][l] * xi[k] * xi[l];
        g.g0i[i] = -2.0 / 3.0 * s;
    }
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) s += R.rikjl[i][k][j][l] * xi[k] * xi[l];
            g.gij[i][j] = (i == j ? 1.0 : 0.0) - s / 3.0;
        }
    return g;
}

/// d tau_0 / d tau for the curve at fixed FNC position xi, to second order.
inline double redshift_factor(const Vec3& a, const Curvature& R, const Vec3& xi, const FncConfig& cfg = {}) {
    detail::check_validity(a, R, xi, cfg, "redshift_factor");
    double ax = 0.0, rxx = 0.0;
    for (int i = 0; i < 3; ++i) ax += a[i] * xi[i];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rxx += R.r0i0j[i][j] * xi[i] * xi[j];
    return 1.0 + ax + 0.5 * rxx;
}

/// Max relative variation over tau_grid of sqrt(-g) at each xi sample.
/// Zero means the FNC volume element is tau-independent on the samples.
inline double volume_element_variation(const std::function<Vec3(double)>& accel,
                                       const std::function<Curvature(double)>& curvature,
                                       std::span<const Vec3> xi_samples, std::span<const double> tau_grid,
                                       const FncConfig& cfg = {}) {
    double worst = 0.0;
    for (const Vec3& xi : xi_samples) {
        double lo = kInf, hi = -kInf;
        for (double t : tau_grid) {
            const double v = fnc_metric(accel(t), curvature(t), xi, cfg).sqrt_minus_det();
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi > lo) worst = std::max(worst, (hi - lo) / std::abs(hi));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Rindler wedge

/// Rindler coordinates (tau, X, y, z); tau is the proper time of the X = 0 curve.
struct RindlerPoint {
    double tau = 0, X = 0, y = 0, z = 0;
};

/// (tau, X, y, z) -> (t, x, y, z) with t = (X + 1/a) sinh(a tau),
/// x = (X + 1/a) cosh(a tau) - 1/a. The wedge is X > -1/a.
inline Vec4 rindler_map(const RindlerPoint& p, double a) {
    if (!(a > 0)) throw PreconditionError("rindler_map: a must be > 0");
    if (!(p.X > -1.0 / a)) throw OutOfDomainError("rindler_map: X <= -1/a lies outside the wedge");
    const double rho = p.X + 1.0 / a;
    // cosh(a tau) - 1 written as 2 sinh^2 keeps x accurate near the origin.
    const double sh = std::sinh(0.5 * a * p.tau);
    return {rho * std::sinh(a * p.tau), p.X + 2.0 * rho * sh * sh, p.y, p.z};
}

inline RindlerPoint rindler_inverse(const Vec4& ev, double a) {
    if (!(a > 0)) throw PreconditionError("rindler_inverse: a must be > 0");
    const double s = ev[1] + 1.0 / a;
    if (!(s > std::abs(ev[0]))) throw OutOfDomainError("rindler_inverse: event outside the wedge");
    const double rho = std::sqrt((s - ev[0]) * (s + ev[0]));
    RindlerPoint p;
    p.tau = std::atanh(ev[0] / s) / a;
    p.X = rho - 1.0 / a;
    p.y = ev[2];
    p.z = ev[3];
    return p;
}

/// Rindler frame at Rindler time tau (FW frame of every X = const curve).
inline Tetrad rindler_frame(double a, double tau) {
    Tetrad t = standard_tetrad();
    const double c = std::cosh(a * tau), s = std::sinh(a * tau);
    t.e[0] = {c, s, 0, 0};
    t.e[1] = {s, c, 0, 0};
    return t;
}

/// Tensor signature: number of contravariant and covariant slots.
struct TensorRank {
    int contravariant = 1;
    int covariant = 0;
    int order() const { return contravariant + covariant; }
};

namespace detail {
inline Eigen::MatrixXd kron(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

inline void check_rank(const TensorRank& r) {
    if (r.contravariant < 0 || r.covariant < 0 || r.order() > 4)
        throw PreconditionError("boost_pushforward: tensor rank must have 0..4 non-negative slots");
}
}  // namespace detail

/// Boost generator S^{01} in the given tensor representation, normalized so
/// that the pushforward along the Rindler flow is exp((a tau / 2) S^{01}).
inline Eigen::MatrixXd boost_generator(const TensorRank& rank) {
    detail::check_rank(rank);
    Eigen::Matrix4d k = Eigen::Matrix4d::Zero();
    k(0, 1) = k(1, 0) = 2.0;
    // Covariant slots transform with the inverse transpose.
    const Eigen::Matrix4d kc = -k.transpose();
    const int n = rank.order();
    const Eigen::Index dim = static_cast<Eigen::Index>(std::pow(4, n));
    Eigen::MatrixXd gen = Eigen::MatrixXd::Zero(dim, dim);
    for (int slot = 0; slot < n; ++slot) {
        Eigen::MatrixXd term = Eigen::MatrixXd::Identity(1, 1);
        for (int s = 0; s < n; ++s) {
            Eigen::MatrixXd f = Eigen::Matrix4d::Identity();
            if (s == slot) f = (s < rank.contravariant) ? Eigen::MatrixXd(k) : Eigen::MatrixXd(kc);
            term = detail::kron(term, f);
        }
        gen += term;
    }
    return gen;
}

/// Pushforward (Phi_tau)_* on FW-frame tensor components: the boost of
/// rapidity a*tau along the acceleration, in closed form.
inline Eigen::MatrixXd boost_pushforward(double a, double tau, const TensorRank& rank) {
    detail::check_rank(rank);
    const double eta = a * tau;
    Eigen::Matrix4d L = Eigen::Matrix4d::Identity();
    L(0, 0) = L(1, 1) = std::cosh(eta);
    L(0, 1) = L(1, 0) = std::sinh(eta);
    const Eigen::Matrix4d Lc = L.inverse().transpose();
    Eigen::MatrixXd out = Eigen::MatrixXd::Identity(1, 1);
    for (int s = 0; s < rank.order(); ++s)
        out = detail::kron(out, s < rank.contravariant ? Eigen::MatrixXd(L) : Eigen::MatrixXd(Lc));
    return out;
}

}  // namespace kmsprobe::geometry
