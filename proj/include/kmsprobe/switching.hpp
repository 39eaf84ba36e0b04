#pragma once

// Unit-integral switching profiles chi(tau); the coupling is chi(tau / T).
//
// Fourier convention: chi~(w) = int dtau e^{-i w tau} chi(tau).

#include <cmath>
#include <string>

#include "kmsprobe/core.hpp"
#include "kmsprobe/quadrature.hpp"

namespace kmsprobe::detector {

enum class SwitchingShape { Gaussian, Bump };

inline std::string to_string(SwitchingShape s) { return s == SwitchingShape::Gaussian ? "gaussian" : "bump"; }

namespace detail {

inline double bump_raw(double t) { return std::abs(t) < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

inline double bump_norm() {
    static const double c = 1.0 / quad::integrate_gk(bump_raw, -1.0, 1.0, 1e-15, 15).value;
    return c;
}

inline double bump_fourier(double w) {
    auto f = [w](double t) { return std::cos(w * t) * bump_raw(t); };
    const double width = w != 0.0 ? std::min(0.5, kPi / std::abs(w)) : 0.5;
    return bump_norm() * quad::integrate_panels(f, -1.0, 1.0, width, {}, 1e-14).value;
}

/// int ds chi(s) chi(s - v) for the unit bump.
inline double bump_autocorrelation(double v) {
    v = std::abs(v);
    if (v >= 2.0) return 0.0;
    const double c = bump_norm();
    auto f = [v](double s) { return bump_raw(s) * bump_raw(s - v); };
    return c * c * quad::integrate_gk(f, v - 1.0, 1.0, 1e-14, 15).value;
}

/// Smallest W with |chi~(w)| / chi~(0) < 1e-6 for all scanned w >= W. The
/// envelope decays like e^{-sqrt(2 w)}, so the scan stops once a stretch of
/// 50 in w stays two decades below the threshold.
inline double bump_bandwidth() {
    static const double b = [] {
        const double c0 = bump_fourier(0.0), step = 0.25;
        double last = 0.0, quiet_since = 0.0;
        for (double w = step; w - quiet_since < 50.0; w += step) {
            const double r = std::abs(bump_fourier(w)) / c0;
            if (r >= 1e-6) last = w;
            if (r >= 1e-8) quiet_since = w;
        }
        return last + step;
    }();
    return b;
}

}  // namespace detail

struct SwitchingFunction {
    SwitchingShape shape = SwitchingShape::Gaussian;

    static SwitchingFunction gaussian() { return {SwitchingShape::Gaussian}; }
    static SwitchingFunction bump() { return {SwitchingShape::Bump}; }

    std::string name() const { return to_string(shape); }

    /// chi(tau); unit integral.
    double value(double tau) const {
        if (shape == SwitchingShape::Gaussian) return std::exp(-0.5 * tau * tau) / std::sqrt(kTwoPi);
        return detail::bump_norm() * detail::bump_raw(tau);
    }

    /// chi~(w) (real: both shapes are even).
    double fourier(double w) const {
        if (shape == SwitchingShape::Gaussian) return std::exp(-0.5 * w * w);
        return detail::bump_fourier(w);
    }

    /// log |chi~(w)|^2.
    double log_power(double w) const {
        if (shape == SwitchingShape::Gaussian) return -w * w;
        return 2.0 * std::log(std::abs(detail::bump_fourier(w)));
    }

    /// |w| beyond which |chi~(w)| / chi~(0) < 1e-6.
    double bandwidth() const {
        if (shape == SwitchingShape::Gaussian) return std::sqrt(2.0 * std::log(1e6));
        return detail::bump_bandwidth();
    }

    /// Half-width of the support of chi; infinite for the Gaussian.
    double support() const { return shape == SwitchingShape::Gaussian ? kInf : 1.0; }

    /// True when K_T extends to an entire function (closed-form complex evaluation).
    bool entire() const { return shape == SwitchingShape::Gaussian; }

    /// K_T(u) = int dtau chi(tau / T) chi((tau - u) / T).
    double autocorrelation(double u, double T) const {
        if (shape == SwitchingShape::Gaussian)
            return T / (2.0 * std::sqrt(kPi)) * std::exp(-u * u / (4.0 * T * T));
        return T * detail::bump_autocorrelation(u / T);
    }

    /// K_T at complex argument; Gaussian only.
    cplx autocorrelation(cplx u, double T) const {
        if (!entire()) throw UnsupportedError("switching: complex autocorrelation needs an entire profile");
        return T / (2.0 * std::sqrt(kPi)) * std::exp(-u * u / (4.0 * T * T));
    }

    /// |int chi - 1|.
    double normalization_error() const {
        const double lim = shape == SwitchingShape::Gaussian ? 40.0 : 1.0;
        auto f = [this](double t) { return value(t); };
        return std::abs(quad::integrate_panels(f, -lim, lim, 1.0, {}, 1e-15).value - 1.0);
    }

    /// Checks |chi~(w)| / chi~(0) < 1e-6 on a grid beyond `declared`.
    bool bandwidth_holds(double declared, double scan_to = 0.0, int samples = 400) const {
        if (scan_to <= declared) scan_to = 4.0 * declared + 10.0;
        const double c0 = std::abs(fourier(0.0));
        for (int j = 0; j <= samples; ++j) {
            const double w = declared + (scan_to - declared) * j / samples;
            if (std::abs(fourier(w)) >= 1e-6 * c0) return false;
        }
        return true;
    }
};

}  // namespace kmsprobe::detector
