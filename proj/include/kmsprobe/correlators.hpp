#pragma once

// Stationary pulled-back two-point kernels of a massless scalar in 3+1
// Minkowski spacetime, their spectra and their smearing over extended
// detectors.
//
// A kernel is stored as an analytic function f(z) of the complex proper-time
// difference. The Wightman distribution is the boundary value
// w(s) = lim f(s - i eps), eps -> 0+, f is analytic in the strip
// -strip_depth < Im z < 0 and, for KMS kernels, also in 0 < Im z < beta.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "kmsprobe/core.hpp"
#include "kmsprobe/geometry.hpp"
#include "kmsprobe/quadrature.hpp"
#include "kmsprobe/smearing.hpp"

namespace kmsprobe::correlators {

using geometry::Vec3;
using geometry::Vec4;
using AnalyticFn = std::function<cplx(cplx)>;
using SpectrumFn = std::function<cplx(double)>;

inline constexpr cplx kI{0.0, 1.0};

struct CorrelatorKernel {
    AnalyticFn analytic;
    double strip_depth = kInf;
    bool has_continuation = false;
    /// Closed-form w~(omega) = int dtau e^{-i omega tau} w(tau); empty if unknown.
    SpectrumFn spectrum;
    /// w~(omega) vanishes for omega above this value.
    std::optional<double> spectral_upper;
    /// f''(z) in closed form; empty if unknown.
    AnalyticFn second_derivative;
    /// Replaces `analytic` above the real axis when set.
    AnalyticFn continuation;
    /// Real points where the boundary value is singular.
    std::vector<double> real_singularities;
    double beta_nominal = kInf;
    /// Field state and time flow the kernel belongs to; empty for the zero kernel.
    std::string domain;
    std::string label;
    bool hermitian = true;
    bool is_zero = false;

    /// w(dtau - i eps).
    cplx eval(double dtau, double eps) const { return analytic(cplx{dtau, -eps}); }
    cplx at(cplx z) const { return analytic(z); }
    bool has_spectrum() const { return static_cast<bool>(spectrum); }
};

/// The four smeared correlators <OO>, <OO+>, <O+O>, <O+O+>.
struct CorrelatorSet {
    CorrelatorKernel w_uu, w_ud, w_du, w_dd;
};

// ---------------------------------------------------------------------------
// Spectral helpers

namespace detail {

/// omega / (2 pi (e^{beta omega} - 1)), continuous at omega = 0.
inline double planck(double omega, double beta) {
    if (omega == 0.0) return 1.0 / (kTwoPi * beta);
    const double x = beta * omega;
    if (x > 700.0) return omega * std::exp(-x) / kTwoPi;
    return omega / (kTwoPi * std::expm1(x));
}

/// 1 / sinh^2(z) via e^{-2|Re z|}, finite where sinh^2 itself overflows.
inline cplx inv_sinh2(cplx z) {
    const cplx q = std::exp(z.real() > 0 ? -2.0 * z : 2.0 * z);
    const cplx d = 1.0 - q;
    return 4.0 * q / (d * d);
}

/// -A / sinh^2(b z) and its second derivative.
inline cplx sinh2_kernel(cplx z, double A, double b) { return -A * inv_sinh2(b * z); }
inline cplx sinh2_kernel_dd(cplx z, double A, double b) {
    const cplx is2 = inv_sinh2(b * z);
    return -2.0 * A * b * b * is2 * (3.0 * is2 + 2.0);
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Catalog

inline CorrelatorKernel zero_kernel() {
    CorrelatorKernel k;
    k.analytic = [](cplx) { return cplx{}; };
    k.second_derivative = [](cplx) { return cplx{}; };
    k.spectrum = [](double) { return cplx{}; };
    k.has_continuation = true;
    k.is_zero = true;
    k.label = "zero";
    return k;
}

/// Massless Minkowski vacuum on an inertial worldline: -1/(4 pi^2 z^2).
inline CorrelatorKernel vacuum_kernel_inertial() {
    CorrelatorKernel k;
    k.analytic = [](cplx z) { return -1.0 / (4.0 * kPi * kPi * z * z); };
    k.second_derivative = [](cplx z) { return -6.0 / (4.0 * kPi * kPi * z * z * z * z); };
    k.spectrum = [](double w) { return cplx{w < 0 ? -w / kTwoPi : 0.0}; };
    k.spectral_upper = 0.0;
    k.has_continuation = true;
    k.real_singularities = {0.0};
    k.domain = "vacuum/inertial";
    k.label = "vacuum_inertial";
    return k;
}

/// Minkowski vacuum on a worldline of proper acceleration a:
/// -a^2 / (16 pi^2 sinh^2(a z / 2)); KMS at beta = 2 pi / a.
inline CorrelatorKernel vacuum_kernel_accelerated(double a) {
    if (!(a > 0)) throw PreconditionError("vacuum_kernel_accelerated: a must be > 0");
    const double A = a * a / (16.0 * kPi * kPi), b = 0.5 * a, beta = kTwoPi / a;
    CorrelatorKernel k;
    k.analytic = [A, b](cplx z) { return detail::sinh2_kernel(z, A, b); };
    k.second_derivative = [A, b](cplx z) { return detail::sinh2_kernel_dd(z, A, b); };
    k.spectrum = [beta](double w) { return cplx{detail::planck(w, beta)}; };
    k.strip_depth = beta;
    k.has_continuation = true;
    k.real_singularities = {0.0};
    k.beta_nominal = beta;
    k.domain = "vacuum/rindler(a=" + detail::fmt(a) + ")";
    k.label = "vacuum_accelerated(a=" + detail::fmt(a) + ")";
    return k;
}

/// Inertial worldline in a thermal state: resummed image sum
/// sum_n -1/(4 pi^2 (z + i n beta)^2) = -1/(4 beta^2 sinh^2(pi z / beta)).
inline CorrelatorKernel thermal_kernel_inertial(double beta) {
    if (!(beta > 0)) throw PreconditionError("thermal_kernel_inertial: beta must be > 0");
    const double A = 1.0 / (4.0 * beta * beta), b = kPi / beta;
    CorrelatorKernel k;
    k.analytic = [A, b](cplx z) { return detail::sinh2_kernel(z, A, b); };
    k.second_derivative = [A, b](cplx z) { return detail::sinh2_kernel_dd(z, A, b); };
    k.spectrum = [beta](double w) { return cplx{detail::planck(w, beta)}; };
    k.strip_depth = beta;
    k.has_continuation = true;
    k.real_singularities = {0.0};
    k.beta_nominal = beta;
    k.domain = "thermal(beta=" + detail::fmt(beta) + ")/inertial";
    k.label = "thermal_inertial(beta=" + detail::fmt(beta) + ")";
    return k;
}

/// Upper bound on the dropped images |n| > N of the thermal sum.
inline double image_sum_tail_bound(double beta, long n_images) {
    // sum_{n>N} n^-2 < 1/N
    return 4.0 / (4.0 * kPi * kPi) / (beta * beta) / static_cast<double>(std::max(1L, n_images));
}

/// Thermal kernel as a truncated image sum |n| <= N, N chosen so the tail
/// bound stays under `tolerance`. Continuation and spectrum use the resummed form.
inline CorrelatorKernel thermal_kernel_image_sum(double beta, double tolerance = 1e-6,
                                                 long max_images = 2'000'000) {
    if (!(beta > 0)) throw PreconditionError("thermal_kernel_image_sum: beta must be > 0");
    const long n = static_cast<long>(std::ceil(4.0 / (4.0 * kPi * kPi * beta * beta * tolerance)));
    if (n > max_images)
        throw NumericalError("thermal_kernel_image_sum: tail bound needs " + std::to_string(n) +
                                 " images, above the limit",
                             image_sum_tail_bound(beta, max_images));
    CorrelatorKernel k = thermal_kernel_inertial(beta);
    k.analytic = [beta, n](cplx z) {
        cplx s = 1.0 / (z * z);
        for (long m = n; m >= 1; --m) {
            const cplx zp = z + kI * (m * beta), zm = z - kI * (m * beta);
            s += 1.0 / (zp * zp) + 1.0 / (zm * zm);
        }
        return -s / (4.0 * kPi * kPi);
    };
    k.continuation = thermal_kernel_inertial(beta).analytic;
    k.second_derivative = {};
    k.label = "thermal_image_sum(beta=" + detail::fmt(beta) + ",N=" + std::to_string(n) + ")";
    return k;
}

inline long image_count_for(double beta, double tolerance) {
    return static_cast<long>(std::ceil(4.0 / (4.0 * kPi * kPi * beta * beta * tolerance)));
}

// ---------------------------------------------------------------------------
// Algebra on kernels

/// sum_j c_j k_j. Closed forms survive only when every term has them.
inline CorrelatorKernel linear_combination(const std::vector<std::pair<cplx, CorrelatorKernel>>& terms,
                                           std::string label = "combination") {
    std::vector<std::pair<cplx, CorrelatorKernel>> live;
    for (const auto& t : terms)
        if (t.first != cplx{} && !t.second.is_zero) live.push_back(t);
    if (live.empty()) return zero_kernel();
    CorrelatorKernel k;
    k.label = std::move(label);
    k.strip_depth = kInf;
    k.has_continuation = true;
    k.hermitian = true;
    bool spectra = true, dd = true, upper = true;
    double up = -kInf;
    for (const auto& [c, ker] : live) {
        k.strip_depth = std::min(k.strip_depth, ker.strip_depth);
        k.has_continuation = k.has_continuation && ker.has_continuation;
        k.hermitian = k.hermitian && ker.hermitian && c.imag() == 0.0;
        spectra = spectra && ker.has_spectrum();
        dd = dd && static_cast<bool>(ker.second_derivative);
        if (ker.spectral_upper) up = std::max(up, *ker.spectral_upper);
        else upper = false;
        k.real_singularities.insert(k.real_singularities.end(), ker.real_singularities.begin(),
                                    ker.real_singularities.end());
    }
    k.beta_nominal = live.front().second.beta_nominal;
    k.domain = live.front().second.domain;
    for (const auto& t : live)
        if (t.second.domain != k.domain) {
            k.domain = "mixed";
            k.beta_nominal = kInf;
        }
    std::sort(k.real_singularities.begin(), k.real_singularities.end());
    k.real_singularities.erase(std::unique(k.real_singularities.begin(), k.real_singularities.end()),
                               k.real_singularities.end());
    k.analytic = [live](cplx z) {
        cplx s{};
        for (const auto& [c, ker] : live) s += c * ker.analytic(z);
        return s;
    };
    if (spectra)
        k.spectrum = [live](double w) {
            cplx s{};
            for (const auto& [c, ker] : live) s += c * ker.spectrum(w);
            return s;
        };
    if (dd)
        k.second_derivative = [live](cplx z) {
            cplx s{};
            for (const auto& [c, ker] : live) s += c * ker.second_derivative(z);
            return s;
        };
    if (upper) k.spectral_upper = up;
    return k;
}

inline CorrelatorKernel scaled(const CorrelatorKernel& k, cplx c) {
    if (c == cplx{1.0}) return k;
    return linear_combination({{c, k}}, k.label);
}

// ---------------------------------------------------------------------------
// Kernel families: field state x worldline motion x coupled operator

enum class FieldState { Vacuum, Thermal };
enum class Motion { Inertial, Rindler };
enum class OperatorKind {
    HermitianScalar,  // O = phi
    ComplexScalar,    // O = phi_1 + i phi_2, two independent massless scalars
    Derivative        // O = n^I e_I . grad phi, n given in the FW frame
};

struct KernelFamily {
    FieldState state = FieldState::Vacuum;
    Motion motion = Motion::Rindler;
    double a = 1.0;
    double beta = kInf;
    OperatorKind op = OperatorKind::HermitianScalar;
    Vec4 direction{1.0, 0.0, 0.0, 0.0};

    void validate() const {
        if (motion == Motion::Rindler && !(a > 0))
            throw PreconditionError("kernel family: acceleration a must be > 0");
        if (state == FieldState::Thermal && !(beta > 0 && beta < kInf))
            throw PreconditionError("kernel family: thermal beta must be finite and > 0");
        if (state == FieldState::Thermal && motion == Motion::Rindler)
            throw UnsupportedError("kernel family: thermal state along the Rindler flow is not stationary-KMS");
    }
    double beta_nominal() const {
        if (state == FieldState::Thermal) return beta;
        return motion == Motion::Rindler ? kTwoPi / a : kInf;
    }
    bool timelike_direction() const { return direction[1] == 0 && direction[2] == 0 && direction[3] == 0; }
};

inline CorrelatorKernel scalar_kernel(const KernelFamily& fam) {
    fam.validate();
    if (fam.state == FieldState::Thermal) return thermal_kernel_inertial(fam.beta);
    return fam.motion == Motion::Rindler ? vacuum_kernel_accelerated(fam.a) : vacuum_kernel_inertial();
}

/// Kernel of O = n.grad(phi) for a timelike n = c e_0 on the base kernel: -c^2 w''.
inline CorrelatorKernel derivative_coupled_kernel(const CorrelatorKernel& base, const Vec4& direction = {1, 0, 0, 0}) {
    if (!base.second_derivative)
        throw UnsupportedError("derivative_coupled_kernel: base kernel '" + base.label +
                               "' has no closed-form second derivative");
    if (direction[1] != 0 || direction[2] != 0 || direction[3] != 0)
        throw UnsupportedError("derivative_coupled_kernel: spatial directions need a kernel family");
    const double c2 = direction[0] * direction[0];
    CorrelatorKernel k = base;
    auto dd = base.second_derivative;
    k.analytic = [dd, c2](cplx z) { return -c2 * dd(z); };
    k.second_derivative = {};
    if (base.spectrum) {
        auto sp = base.spectrum;
        k.spectrum = [sp, c2](double w) { return c2 * w * w * sp(w); };
    }
    k.label = "d_tau[" + base.label + "]";
    return k;
}

namespace detail {

using CVec4 = std::array<cplx, 4>;

inline cplx cdot(const CVec4& u, const CVec4& v) {
    return -u[0] * v[0] + u[1] * v[1] + u[2] * v[2] + u[3] * v[3];
}

/// n^I e_I^mu(z) for the Rindler frame boosted by rapidity a z.
inline CVec4 rindler_direction(const Vec4& n, double a, cplx z) {
    const cplx c = std::cosh(a * z), s = std::sinh(a * z);
    return {n[0] * c + n[1] * s, n[0] * s + n[1] * c, cplx{n[2]}, cplx{n[3]}};
}

/// n^mu n'^nu d_mu d'_nu of 1/(4 pi^2 Q), Q = Delta.Delta.
inline cplx derivative_contraction(const CVec4& delta, cplx Q, const CVec4& n1, const CVec4& n2) {
    const cplx q2 = Q * Q;
    return (2.0 * cdot(n1, n2) / q2 - 8.0 * cdot(delta, n1) * cdot(delta, n2) / (q2 * Q)) / (4.0 * kPi * kPi);
}

/// Geometry of one constituent pair (k at time z, l at time 0).
struct PairGeometry {
    Vec3 xi_k{}, xi_l{};
};

// Rindler pair quantities: rho = X + 1/a, transverse separation squared.
struct RindlerPair {
    double a, rho_k, rho_l, perp2;
    double alpha() const {
        const double d = (rho_k - rho_l) * (rho_k - rho_l) + perp2;
        return 2.0 * std::asinh(std::sqrt(d / (4.0 * rho_k * rho_l)));
    }
    cplx Q(cplx z) const {
        const cplx sh = std::sinh(0.5 * a * z);
        return (rho_k - rho_l) * (rho_k - rho_l) + perp2 - 4.0 * rho_k * rho_l * sh * sh;
    }
    cplx scalar(cplx z) const { return 1.0 / (4.0 * kPi * kPi * Q(z)); }
    /// sin(w alpha / a) / (w sinh alpha) with its w -> 0 and alpha -> 0 limits.
    double shape(double w) const {
        const double al = alpha();
        if (al < 1e-8) return 1.0 / a;
        const double x = w * al / a;
        const double sinc = std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
        return sinc * al / (a * std::sinh(al));
    }
    double spectrum(double w) const { return shape(w) * planck(w, kTwoPi / a) / (a * rho_k * rho_l); }
};

}  // namespace detail

/// Kernel between two constituents of an extended detector for the scalar
/// operator (no operator-kind multiplicity). xi_k is evaluated at time z,
/// xi_l at time 0.
inline CorrelatorKernel pair_kernel(const KernelFamily& fam, const Vec3& xi_k, const Vec3& xi_l) {
    fam.validate();
    CorrelatorKernel k;
    k.has_continuation = true;
    k.beta_nominal = fam.beta_nominal();
    const bool deriv = fam.op == OperatorKind::Derivative;
    const Vec4 n = fam.direction;
    const double nn = n[0] * n[0];
    const bool timelike = fam.timelike_direction();
    Vec3 d{xi_k[0] - xi_l[0], xi_k[1] - xi_l[1], xi_k[2] - xi_l[2]};
    const double r = geometry::norm3(d);

    if (fam.motion == Motion::Rindler) {
        const double a = fam.a;
        detail::RindlerPair P{a, xi_k[0] + 1.0 / a, xi_l[0] + 1.0 / a, d[1] * d[1] + d[2] * d[2]};
        if (!(P.rho_k > 0 && P.rho_l > 0)) throw OutOfDomainError("pair_kernel: constituent outside the wedge");
        k.strip_depth = kTwoPi / a;
        const double al = P.alpha();
        k.real_singularities = al > 0 ? std::vector<double>{-al / a, al / a} : std::vector<double>{0.0};
        k.domain = "vacuum/rindler(a=" + detail::fmt(a) + ")";
        if (!deriv) {
            k.analytic = [P](cplx z) { return P.scalar(z); };
            k.spectrum = [P](double w) { return cplx{P.spectrum(w)}; };
        } else {
            const Vec3 xk = xi_k, xl = xi_l;
            k.analytic = [P, n, xk, xl](cplx z) {
                const double a = P.a;
                const cplx sh = std::sinh(a * z), ch = std::cosh(a * z);
                const detail::CVec4 delta{P.rho_k * sh, P.rho_k * ch - P.rho_l, cplx{xk[1] - xl[1]},
                                          cplx{xk[2] - xl[2]}};
                const detail::CVec4 n1 = detail::rindler_direction(n, a, z);
                const detail::CVec4 n2{cplx{n[0]}, cplx{n[1]}, cplx{n[2]}, cplx{n[3]}};
                return detail::derivative_contraction(delta, P.Q(z), n1, n2);
            };
            if (timelike) {
                const double scale = nn / (a * a * P.rho_k * P.rho_l);
                k.spectrum = [P, scale](double w) { return cplx{scale * w * w * P.spectrum(w)}; };
            }
        }
    } else if (fam.state == FieldState::Vacuum) {
        k.strip_depth = kInf;
        k.spectral_upper = 0.0;
        k.domain = "vacuum/inertial";
        k.real_singularities = r > 0 ? std::vector<double>{-r, r} : std::vector<double>{0.0};
        auto scalar_spec = [r](double w) {
            if (w >= 0) return 0.0;
            return r > 0 ? std::sin(-w * r) / (kTwoPi * r) : -w / kTwoPi;
        };
        if (!deriv) {
            k.analytic = [r](cplx z) { return 1.0 / (4.0 * kPi * kPi * (r * r - z * z)); };
            k.spectrum = [scalar_spec](double w) { return cplx{scalar_spec(w)}; };
        } else {
            k.analytic = [n, d](cplx z) {
                const detail::CVec4 delta{z, cplx{d[0]}, cplx{d[1]}, cplx{d[2]}};
                const cplx Q = -z * z + (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
                const detail::CVec4 nv{cplx{n[0]}, cplx{n[1]}, cplx{n[2]}, cplx{n[3]}};
                return detail::derivative_contraction(delta, Q, nv, nv);
            };
            if (timelike) k.spectrum = [scalar_spec, nn](double w) { return cplx{nn * w * w * scalar_spec(w)}; };
        }
    } else {
        const double beta = fam.beta;
        k.strip_depth = beta;
        k.domain = "thermal(beta=" + detail::fmt(beta) + ")/inertial";
        k.real_singularities = r > 0 ? std::vector<double>{-r, r} : std::vector<double>{0.0};
        if (deriv && !(timelike && r == 0.0))
            throw UnsupportedError("pair_kernel: thermal derivative coupling is only available pointlike along e_0");
        if (r == 0.0) {
            CorrelatorKernel base = thermal_kernel_inertial(beta);
            return deriv ? derivative_coupled_kernel(base, n) : base;
        }
        const double b = kPi / beta;
        k.analytic = [r, b, beta](cplx z) {
            auto coth = [](cplx x) { return std::cosh(x) / std::sinh(x); };
            return (coth(b * (r - z)) + coth(b * (r + z))) / (8.0 * kPi * beta * r);
        };
        k.spectrum = [r, beta](double w) {
            if (w == 0.0) return cplx{1.0 / (kTwoPi * beta)};
            return cplx{std::sin(w * r) / (kTwoPi * r) * (kTwoPi * detail::planck(w, beta) / w)};
        };
    }
    k.label = "pair";
    return k;
}

/// Pointlike kernel of the family's operator (the plain Wightman of O).
inline CorrelatorKernel derivative_coupled_kernel(const KernelFamily& fam, const Vec4& direction) {
    KernelFamily f = fam;
    f.op = OperatorKind::Derivative;
    f.direction = direction;
    f.validate();
    const bool timelike = f.timelike_direction();
    if (timelike) return derivative_coupled_kernel(scalar_kernel(f), direction);
    CorrelatorKernel k = pair_kernel(f, {0, 0, 0}, {0, 0, 0});
    if (fam.motion == Motion::Inertial && fam.state == FieldState::Vacuum) {
        // n.grad pulled back on a static worldline: c / z^4 with
        // c = (2 n.n + 8 (n^0)^2) / (4 pi^2).
        const double nn = -direction[0] * direction[0] + direction[1] * direction[1] +
                          direction[2] * direction[2] + direction[3] * direction[3];
        const double c = (2.0 * nn + 8.0 * direction[0] * direction[0]) / (4.0 * kPi * kPi);
        k.spectrum = [c](double w) { return cplx{w < 0 ? c * kPi * (-w) * w * w / 3.0 : 0.0}; };
    }
    k.label = "derivative(" + std::string(fam.motion == Motion::Rindler ? "rindler" : "inertial") + ")";
    return k;
}

// ---------------------------------------------------------------------------
// Smeared correlators

/// Geometric data of the central worldline needed to smear.
struct GeometryContext {
    Vec3 acceleration{};  // a_i in the FW frame
    std::function<geometry::Curvature(double)> curvature;  // empty: flat
    geometry::FncConfig fnc{};
    std::vector<double> tau_samples{-10.0, -3.0, 0.0, 3.0, 10.0};
    double stationarity_tolerance = 1e-12;

    static GeometryContext for_family(const KernelFamily& fam) {
        GeometryContext g;
        if (fam.motion == Motion::Rindler) g.acceleration = {fam.a, 0.0, 0.0};
        return g;
    }
};

namespace detail {

using PairKey = std::array<double, 6>;

inline double quantize(double v) {
    if (v == 0.0) return 0.0;
    const double s = std::pow(10.0, std::floor(std::log10(std::abs(v))) - 11);
    return std::round(v / s) * s;
}

}  // namespace detail

/// The four smeared correlators between profile_1 (at time tau) and
/// profile_2 (at time tau'), weighted by the FNC volume factors sqrt(-g).
inline CorrelatorSet smeared_correlator(const KernelFamily& fam, const detector::SmearingProfile& p1,
                                        const detector::SmearingProfile& p2, const GeometryContext& ctx) {
    fam.validate();
    const geometry::Curvature flat{};
    auto curv = ctx.curvature ? ctx.curvature : [flat](double) { return flat; };
    const double radius = geometry::validity_radius(ctx.acceleration, curv(0.0), ctx.fnc);
    for (const auto* p : {&p1, &p2})
        if (p->support_radius > radius)
            throw OutOfDomainError("smeared_correlator: profile '" + p->label + "' support radius " +
                                   detail::fmt(p->support_radius) + " exceeds validity radius " +
                                   detail::fmt(radius));

    std::vector<Vec3> xs;
    for (const auto* p : {&p1, &p2})
        for (const auto& nd : p->nodes) xs.push_back(nd.xi);
    const Vec3 acc = ctx.acceleration;
    const double variation = geometry::volume_element_variation([acc](double) { return acc; }, curv, xs,
                                                                ctx.tau_samples, ctx.fnc);
    if (variation > ctx.stationarity_tolerance)
        throw AssumptionViolation("smeared_correlator: FNC volume element depends on tau (relative variation " +
                                  detail::fmt(variation) + ")");

    auto volume = [&](const Vec3& xi) { return geometry::fnc_metric(acc, curv(0.0), xi, ctx.fnc).sqrt_minus_det(); };

    // Accumulate pair coefficients per distinct geometry, for each arrow pair.
    // Index 0: F1* F2*, 1: F1* F2, 2: F1 F2*, 3: F1 F2.
    struct Entry {
        Vec3 xk, xl;
        std::array<cplx, 4> c{};
    };
    std::map<detail::PairKey, Entry> pairs;
    const bool rindler = fam.motion == Motion::Rindler;
    const bool deriv = fam.op == OperatorKind::Derivative;
    for (const auto& n1 : p1.nodes) {
        const cplx c1 = n1.value * volume(n1.xi);
        for (const auto& n2 : p2.nodes) {
            const cplx c2 = n2.value * volume(n2.xi);
            const double dx = n1.xi[0] - n2.xi[0], dy = n1.xi[1] - n2.xi[1], dz = n1.xi[2] - n2.xi[2];
            using detail::quantize;
            detail::PairKey key{};
            if (deriv)  // tensor contractions see the full separation vector
                key = {quantize(n1.xi[0]), quantize(n2.xi[0]), quantize(dx), quantize(dy), quantize(dz), 0.0};
            else if (rindler)
                key = {quantize(n1.xi[0]), quantize(n2.xi[0]), quantize(dy * dy + dz * dz), 0.0, 0.0, 0.0};
            else
                key = {quantize(dx * dx + dy * dy + dz * dz), 0.0, 0.0, 0.0, 0.0, 0.0};
            auto [it, fresh] = pairs.try_emplace(key);
            if (fresh) {
                it->second.xk = n1.xi;
                it->second.xl = n2.xi;
            }
            it->second.c[0] += std::conj(c1) * std::conj(c2);
            it->second.c[1] += std::conj(c1) * c2;
            it->second.c[2] += c1 * std::conj(c2);
            it->second.c[3] += c1 * c2;
        }
    }

    std::array<std::vector<std::pair<cplx, CorrelatorKernel>>, 4> terms;
    for (const auto& [key, e] : pairs) {
        CorrelatorKernel pk = pair_kernel(fam, e.xk, e.xl);
        for (int j = 0; j < 4; ++j) terms[j].push_back({e.c[j], pk});
    }
    std::array<double, 4> mult{1, 1, 1, 1};
    if (fam.op == OperatorKind::ComplexScalar) mult = {0, 2, 2, 0};
    static const char* names[4] = {"uu", "ud", "du", "dd"};
    std::array<CorrelatorKernel, 4> out;
    for (int j = 0; j < 4; ++j) {
        std::vector<std::pair<cplx, CorrelatorKernel>> t;
        if (mult[j] != 0)
            for (auto& [c, k] : terms[j]) t.push_back({mult[j] * c, k});
        out[j] = linear_combination(t, std::string("smeared_") + names[j] + "[" + p1.label + "," + p2.label + "]");
        if (!out[j].is_zero) out[j].beta_nominal = fam.beta_nominal();
    }
    return {out[0], out[1], out[2], out[3]};
}

/// Pointlike set for a single kernel of a Hermitian operator.
inline CorrelatorSet hermitian_set(const CorrelatorKernel& w) { return {w, w, w, w}; }

/// Pointlike set for O = phi_1 + i phi_2 built from the scalar kernel w.
inline CorrelatorSet complex_scalar_set(const CorrelatorKernel& w) {
    CorrelatorKernel two = scaled(w, 2.0);
    two.label = "2*" + w.label;
    return {zero_kernel(), two, two, zero_kernel()};
}

/// Pointlike correlator set of the family's operator.
inline CorrelatorSet pointlike_set(const KernelFamily& fam) {
    fam.validate();
    switch (fam.op) {
        case OperatorKind::HermitianScalar: return hermitian_set(scalar_kernel(fam));
        case OperatorKind::ComplexScalar: return complex_scalar_set(scalar_kernel(fam));
        case OperatorKind::Derivative: return hermitian_set(derivative_coupled_kernel(fam, fam.direction));
    }
    return {};
}

// ---------------------------------------------------------------------------
// Fourier transform and strip continuation

enum class FourierMethod { Auto, ClosedForm, DampedQuadrature, FftGrid };

struct FourierOptions {
    double tolerance = 1e-12;
    double max_half_width = 1e5;
};

namespace detail {

/// Contour offset below the real axis used for numerical transforms.
inline double contour_offset(const CorrelatorKernel& k, double w) {
    if (k.strip_depth < kInf) return 0.5 * k.strip_depth;
    return w != 0.0 ? std::min(1.0, 1.0 / std::abs(w)) : 1.0;
}

inline cplx fourier_quadrature(const CorrelatorKernel& k, double w, const FourierOptions& opt) {
    const double d = contour_offset(k, w);
    auto h = [&](double s) { return k.analytic(cplx{s, -d}); };
    auto g = [&](double s) { return std::exp(cplx{0.0, -w * s}) * h(s); };
    const double width = std::min({d, w != 0 ? kPi / std::abs(w) : kInf, 1.0});
    // Kernels without a finite strip decay algebraically; for w != 0 the
    // tails beyond |s| = L are added from their two-term asymptotic expansion
    // (integration by parts), leaving an O(h''/w^3) remainder.
    const bool algebraic = !(k.strip_depth < kInf) && w != 0.0;
    auto tail_sum = [&](double L) {
        if (!algebraic) return cplx{};
        const double e = 1e-3 * L;
        const cplx iw{0.0, w};
        cplx t{};
        for (double end : {L, -L}) {
            const double sign = end > 0 ? 1.0 : -1.0;  // outward direction
            const cplx dh = (h(end + e) - h(end - e)) / (2.0 * e);
            t += sign * std::exp(-iw * end) * (h(end) / iw + dh / (iw * iw));
        }
        return t;
    };
    auto tail_error = [&](double L) {
        const double hs = std::abs(h(L)) + std::abs(h(-L));
        if (algebraic) return 6.0 * hs / (L * L * std::pow(std::abs(w), 3));
        return hs * std::max(L, 1.0);
    };
    double L = 8.0 * std::max(d, 1.0);
    auto I = quad::integrate_panels(g, -L, L, width, {}, opt.tolerance);
    while (true) {
        const double ref = std::max(std::abs(I.value), 1e-4 * I.l1);
        const double err = tail_error(L);
        if (err <= opt.tolerance * ref) break;
        if (2.0 * L > opt.max_half_width)
            throw NumericalError("kernel_fourier: quadrature did not converge (kernel tail too heavy)",
                                 err / std::max(ref, 1e-300));
        auto right = quad::integrate_panels(g, L, 2.0 * L, width, {}, opt.tolerance);
        auto left = quad::integrate_panels(g, -2.0 * L, -L, width, {}, opt.tolerance);
        I.value += right.value + left.value;
        I.l1 += right.l1 + left.l1;
        L *= 2.0;
    }
    return std::exp(-w * d) * (I.value + tail_sum(L));
}

inline std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

inline cplx fourier_fft(const CorrelatorKernel& k, double w, const FourierOptions& opt) {
    if (!(k.strip_depth < kInf))
        throw NumericalError("kernel_fourier: FFT grid needs a kernel with exponential decay (finite strip)", kInf);
    const double d = 0.5 * k.strip_depth;
    const double f0 = std::abs(k.analytic(cplx{0.0, -d}));
    double L0 = d;
    while (std::abs(k.analytic(cplx{L0, -d})) + std::abs(k.analytic(cplx{-L0, -d})) > 1e-18 * f0) {
        L0 *= 1.5;
        if (L0 > opt.max_half_width) throw NumericalError("kernel_fourier: FFT grid tail does not decay", L0);
    }
    double h = std::min(d / 16.0, w != 0 ? kPi / (8.0 * std::abs(w)) : kInf);
    // Put omega on a grid line: omega = pi m / L.
    double L = L0;
    if (w != 0.0) {
        const double m = std::ceil(std::abs(w) * L0 / kPi);
        L = kPi * m / std::abs(w);
    }
    std::size_t N = 1;
    while (static_cast<double>(N) * h < 2.0 * L) N <<= 1;
    h = 2.0 * L / static_cast<double>(N);
    fftw_complex* buf = fftw_alloc_complex(N);
    for (std::size_t j = 0; j < N; ++j) {
        const cplx v = k.analytic(cplx{-L + static_cast<double>(j) * h, -d});
        buf[j][0] = v.real();
        buf[j][1] = v.imag();
    }
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        plan = fftw_plan_dft_1d(static_cast<int>(N), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    const long m = std::lround(w * L / kPi);
    const std::size_t bin = static_cast<std::size_t>((m % static_cast<long>(N) + static_cast<long>(N)) % static_cast<long>(N));
    const cplx dft{buf[bin][0], buf[bin][1]};
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(buf);
    return std::exp(-w * d) * h * std::exp(cplx{0.0, w * L}) * dft;
}

}  // namespace detail

/// w~(omega) = int dtau e^{-i omega tau} w(tau).
/// Numerical methods integrate along Im tau = -delta inside the analyticity
/// strip and multiply by e^{-omega delta}, which is the exact eps -> 0 limit.
inline cplx kernel_fourier(const CorrelatorKernel& k, double w, FourierMethod method = FourierMethod::Auto,
                           const FourierOptions& opt = {}) {
    if (k.is_zero) return {};
    switch (method) {
        case FourierMethod::Auto:
            return k.has_spectrum() ? k.spectrum(w) : detail::fourier_quadrature(k, w, opt);
        case FourierMethod::ClosedForm:
            if (!k.has_spectrum())
                throw UnsupportedError("kernel_fourier: no closed-form spectrum for '" + k.label + "'");
            return k.spectrum(w);
        case FourierMethod::DampedQuadrature: return detail::fourier_quadrature(k, w, opt);
        case FourierMethod::FftGrid: return detail::fourier_fft(k, w, opt);
    }
    return {};
}

/// w(tau + i sigma) for 0 < sigma <= beta_nominal.
inline cplx strip_continuation(const CorrelatorKernel& k, double tau, double sigma) {
    if (!k.has_continuation)
        throw UnsupportedError("strip_continuation: kernel '" + k.label + "' has no continuation");
    if (!(sigma > 0.0) || sigma > k.beta_nominal * (1.0 + 1e-15))
        throw UnsupportedError("strip_continuation: sigma outside the strip (0, beta]");
    return k.continuation ? k.continuation(cplx{tau, sigma}) : k.analytic(cplx{tau, sigma});
}

/// Writes (dtau, Re w, Im w, eps) rows.
inline void export_kernel_table(std::ostream& os, const CorrelatorKernel& k, const std::vector<double>& dtau,
                                double eps) {
    os << "# kernel: " << k.label << "\n# units: natural\n# dtau\tre_w\tim_w\teps\n";
    os.precision(12);
    os << std::scientific;
    for (double t : dtau) {
        const cplx v = k.eval(t, eps);
        os << t << '\t' << v.real() << '\t' << v.imag() << '\t' << eps << '\n';
    }
    os << std::defaultfloat;
}

}  // namespace kmsprobe::correlators
