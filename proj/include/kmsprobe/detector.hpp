#pragma once

// Two-level detector response at leading order in the coupling.
//
// p_up   = lambda^2 int du K_T(u) e^{-i Omega u} w_in(u)
// p_down = lambda^2 int du K_T(u) e^{+i Omega u} w_ni(u)
// with K_T the switching autocorrelation. The Fourier route evaluates the
// same numbers as (lambda^2 T / 2 pi) int dw |chi~(w)|^2 w~(+-Omega + w / T).
//
// Probabilities are carried in log space as well, since vacuum excitation
// probabilities underflow doubles for long switching times.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "kmsprobe/core.hpp"
#include "kmsprobe/correlators.hpp"
#include "kmsprobe/quadrature.hpp"
#include "kmsprobe/switching.hpp"

namespace kmsprobe::detector {

using correlators::CorrelatorKernel;
using correlators::CorrelatorSet;

struct DetectorSpec {
    double omega = 1.0;
    cplx mu_ii{0.0}, mu_in{0.0}, mu_ni{1.0}, mu_nn{0.0};
    double lambda = 0.01;

    void validate() const {
        if (!std::isfinite(omega)) throw PreconditionError("detector: omega must be finite");
        if (!std::isfinite(lambda) || lambda < 0) throw PreconditionError("detector: lambda must be >= 0");
    }
};

enum class MuPreset { Raising, Symmetric, RandomPhase };

inline std::string to_string(MuPreset p) {
    switch (p) {
        case MuPreset::Raising: return "raising";
        case MuPreset::Symmetric: return "symmetric";
        case MuPreset::RandomPhase: return "random_phase";
    }
    return "?";
}

/// Matrix elements for a preset. Random phases are drawn from a seeded engine.
inline DetectorSpec with_mu_preset(DetectorSpec d, MuPreset p, unsigned seed = 7) {
    switch (p) {
        case MuPreset::Raising: d.mu_ni = 1.0; d.mu_in = 0.0; break;
        case MuPreset::Symmetric: d.mu_ni = 1.0; d.mu_in = 1.0; break;
        case MuPreset::RandomPhase: {
            std::mt19937 eng(seed);
            std::uniform_real_distribution<double> ph(0.0, kTwoPi);
            d.mu_ni = std::polar(1.0, ph(eng));
            d.mu_in = std::polar(0.7, ph(eng));
            break;
        }
    }
    return d;
}

struct EffectiveWightman {
    CorrelatorKernel w_in, w_ni;
};

/// w_in = mu_in mu_ni w_uu + |mu_ni|^2 w_ud + |mu_in|^2 w_du + conj(mu_in mu_ni) w_dd,
/// w_ni is the same with i and n exchanged.
inline EffectiveWightman effective_wightman(const DetectorSpec& det, const CorrelatorSet& set) {
    std::string domain;
    for (const auto* k : {&set.w_uu, &set.w_ud, &set.w_du, &set.w_dd}) {
        if (k->is_zero || k->domain.empty()) continue;
        if (domain.empty()) domain = k->domain;
        else if (k->domain != domain)
            throw PreconditionError("effective_wightman: kernels from different domains ('" + domain + "' vs '" +
                                    k->domain + "')");
    }
    auto build = [&](cplx m_in, cplx m_ni, const char* name) {
        const cplx c_uu = m_in * m_ni, c_ud = std::norm(m_ni), c_du = std::norm(m_in), c_dd = std::conj(m_in * m_ni);
        auto k = correlators::linear_combination(
            {{c_uu, set.w_uu}, {c_ud, set.w_ud}, {c_du, set.w_du}, {c_dd, set.w_dd}}, name);
        // A positive-type combination stays real in frequency and Hermitian in time.
        k.hermitian = true;
        std::vector<double> betas;
        for (const auto* s : {&set.w_uu, &set.w_ud, &set.w_du, &set.w_dd})
            if (!s->is_zero) betas.push_back(s->beta_nominal);
        if (!betas.empty()) k.beta_nominal = *std::min_element(betas.begin(), betas.end());
        return k;
    };
    return {build(det.mu_in, det.mu_ni, "w_in"), build(det.mu_ni, det.mu_in, "w_ni")};
}

/// K_T(u) as a callable.
inline std::function<double(double)> switching_autocorrelation(const SwitchingFunction& chi, double T) {
    if (!(T > 0)) throw PreconditionError("switching_autocorrelation: T must be > 0");
    return [chi, T](double u) { return chi.autocorrelation(u, T); };
}

enum class Route { Direct, Fourier };

inline std::string to_string(Route r) { return r == Route::Direct ? "direct" : "fourier"; }

struct ResponseDiagnostics {
    double error_up = 0.0, error_down = 0.0;  // relative quadrature error estimates
    double imag_up = 0.0, imag_down = 0.0;    // relative imaginary residue of the integral
    double contour_up = 0.0, contour_down = 0.0;  // contour offset or regulator used
    double peak_coupling = 0.0;               // lambda^2 |w_in| T^2 at the switching scale
};

struct ResponseResult {
    double p_up = 0.0, p_down = 0.0;
    double log_p_up = -kInf, log_p_down = -kInf;
    double omega = 0.0;
    double T = 0.0;
    Route route = Route::Direct;
    ResponseDiagnostics diagnostics;
    bool perturbative_warning = false;
};

struct ResponseOptions {
    double tolerance = 1e-13;
    /// Relative size of the first regulator on the real-axis ladder, in units of T.
    double epsilon_scale = 1e-4;
    /// Fourier-route window half-width in units of the switching spectral scale.
    double fourier_window = 9.0;
    double perturbative_threshold = 0.1;
};

namespace detail {

/// lambda^-2 p = exp(log_scale) * value.
struct ScaledIntegral {
    double log_scale = 0.0;
    cplx value{};
    double error = 0.0;
    double offset = 0.0;
};

inline double combine_log(double lambda, const ScaledIntegral& s) {
    const double re = s.value.real();
    if (!(re > 0.0) || lambda == 0.0) return -kInf;
    return 2.0 * std::log(lambda) + s.log_scale + std::log(re);
}

/// int du K_T(u) e^{-i nu u} w(u) for an entire K_T: the contour moves to
/// Im u = -delta inside the kernel's strip, which takes the eps -> 0 limit exactly.
inline ScaledIntegral direct_contour(const CorrelatorKernel& w, double nu, const SwitchingFunction& chi, double T,
                                     const ResponseOptions& opt) {
    ScaledIntegral r;
    if (w.is_zero) return r;
    const double half_strip = 0.5 * w.strip_depth;
    double delta;
    if (nu > 0) delta = std::min(2.0 * nu * T * T, half_strip);
    else delta = std::min({half_strip, T, nu != 0 ? 1.0 / std::abs(nu) : kInf});
    const double kappa = delta / (2.0 * T * T) - nu;
    const double width = std::min({kappa != 0 ? kPi / std::abs(kappa) : kInf, delta, T});
    const double pref = T / (2.0 * std::sqrt(kPi));
    auto g = [&](double s) {
        return pref * std::exp(-s * s / (4.0 * T * T)) * std::exp(cplx{0.0, kappa * s}) * w.analytic(cplx{s, -delta});
    };
    const double L = 13.0 * T;
    auto q = quad::integrate_panels(g, -L, L, width, {}, opt.tolerance);
    r.log_scale = delta * delta / (4.0 * T * T) - nu * delta;
    r.value = q.value;
    r.error = q.error;
    r.offset = delta;
    return r;
}

/// Real-axis evaluation at w(u - i eps) on a three-rung eps ladder with
/// Richardson extrapolation; used when K_T is not entire.
inline ScaledIntegral direct_ladder(const CorrelatorKernel& w, double nu, const SwitchingFunction& chi, double T,
                                    const ResponseOptions& opt) {
    ScaledIntegral r;
    if (w.is_zero) return r;
    const double L = 2.0 * chi.support() * T;
    const double width = std::min(nu != 0 ? kPi / std::abs(nu) : kInf, 0.25 * T);
    auto at = [&](double eps) {
        std::vector<double> br;
        for (double s0 : w.real_singularities) {
            if (std::abs(s0) >= L) continue;
            br.push_back(s0);
            for (double d = eps; d < 0.25 * T; d *= 4.0) {
                br.push_back(s0 - d);
                br.push_back(s0 + d);
            }
        }
        auto g = [&](double u) {
            return chi.autocorrelation(u, T) * std::exp(cplx{0.0, -nu * u}) * w.analytic(cplx{u, -eps});
        };
        return quad::integrate_panels(g, -L, L, width, br, opt.tolerance);
    };
    const double e0 = opt.epsilon_scale * T;
    std::vector<cplx> rungs;
    double quad_error = 0.0;
    for (double eps = e0; rungs.size() < 3; eps *= 0.5) {
        const auto q = at(eps);
        rungs.push_back(q.value);
        quad_error = std::max(quad_error, q.error);
    }
    const auto [best, lower] = quad::richardson_table(rungs);
    r.value = best;
    r.error = std::abs(best - lower) + quad_error;
    r.offset = e0;
    return r;
}

inline ScaledIntegral direct_integral(const CorrelatorKernel& w, double nu, const SwitchingFunction& chi, double T,
                                      const ResponseOptions& opt) {
    return chi.entire() ? direct_contour(w, nu, chi, T, opt) : direct_ladder(w, nu, chi, T, opt);
}

/// (T / 2 pi) int dw |chi~(w)|^2 w~(nu + w / T).
inline ScaledIntegral fourier_integral(const CorrelatorKernel& w, double nu, const SwitchingFunction& chi, double T,
                                       const ResponseOptions& opt) {
    ScaledIntegral r;
    if (w.is_zero) return r;
    // Support of the integrand in w: nu + w / T <= spectral_upper.
    const double hi_support = w.spectral_upper ? T * (*w.spectral_upper - nu) : kInf;
    double center = 0.0, lo, hi;
    std::vector<double> breaks;
    if (chi.shape == SwitchingShape::Gaussian) {
        center = std::min(0.0, hi_support);
        lo = center - opt.fourier_window;
        hi = std::min(center + opt.fourier_window, hi_support);
    } else {
        // |chi~|^2 is 1e-12 at the bandwidth; three bandwidths puts it near 1e-21,
        // enough to absorb the linear growth of w~ at negative frequency.
        const double b = 3.0 * chi.bandwidth();
        lo = -b;
        hi = std::min(b, hi_support);
        if (!(hi > lo))
            throw CoverageError("fourier route: spectral support lies outside the switching bandwidth");
    }
    if (std::isfinite(hi_support)) breaks.push_back(hi_support);
    const double center_power = chi.log_power(center);
    auto g = [&](double x) {
        const double weight = chi.shape == SwitchingShape::Gaussian ? std::exp(-(x * x - center * center))
                                                                     : std::pow(chi.fourier(x), 2);
        return weight * correlators::kernel_fourier(w, nu + x / T);
    };
    const double width = chi.shape == SwitchingShape::Gaussian ? 0.25 : std::max(0.1, kPi / 2.0);
    auto q = quad::integrate_panels(g, lo, hi, width, breaks, opt.tolerance);
    // Coverage: integrand mass beyond the window, estimated from the edges.
    const double edge = std::abs(g(lo)) + (hi < hi_support ? std::abs(g(hi)) : 0.0);
    if (edge > 1e-10 * std::max(std::abs(q.value), 1e-300) && edge > 1e-300)
        throw CoverageError("fourier route: integrand not negligible at the window edge (relative " +
                            std::to_string(edge / std::max(std::abs(q.value), 1e-300)) + ")");
    r.log_scale = (chi.shape == SwitchingShape::Gaussian ? center_power : 0.0) + std::log(T / kTwoPi);
    r.value = q.value;
    r.error = q.error;
    r.offset = center;
    return r;
}

inline double peak_coupling(const CorrelatorKernel& w, double lambda, double T) {
    if (w.is_zero || !w.analytic) return 0.0;
    const double s = std::min(T, 0.5 * w.strip_depth);
    return lambda * lambda * std::abs(w.analytic(cplx{0.0, -s})) * T * T;
}

inline ResponseResult assemble(const DetectorSpec& det, double T, Route route, const ScaledIntegral& up,
                               const ScaledIntegral& down, const EffectiveWightman& w, const ResponseOptions& opt) {
    for (const auto* s : {&up, &down})
        if (!std::isfinite(s->value.real()) || !std::isfinite(s->value.imag()) || !std::isfinite(s->log_scale))
            throw NumericalError("transition probability: non-finite integral", kInf);
    ResponseResult r;
    r.omega = det.omega;
    r.T = T;
    r.route = route;
    r.log_p_up = combine_log(det.lambda, up);
    r.log_p_down = combine_log(det.lambda, down);
    r.p_up = std::exp(r.log_p_up);
    r.p_down = std::exp(r.log_p_down);
    auto rel = [](const ScaledIntegral& s, double x) {
        return std::abs(s.value) > 0 ? x / std::abs(s.value) : 0.0;
    };
    r.diagnostics.error_up = rel(up, up.error);
    r.diagnostics.error_down = rel(down, down.error);
    r.diagnostics.imag_up = rel(up, std::abs(up.value.imag()));
    r.diagnostics.imag_down = rel(down, std::abs(down.value.imag()));
    r.diagnostics.contour_up = up.offset;
    r.diagnostics.contour_down = down.offset;
    r.diagnostics.peak_coupling = std::max(peak_coupling(w.w_in, det.lambda, T), peak_coupling(w.w_ni, det.lambda, T));
    r.perturbative_warning = r.diagnostics.peak_coupling > opt.perturbative_threshold;
    if (r.p_up > 1.0 || r.p_down > 1.0)
        throw PerturbativityError("transition probability exceeds 1 (p_up = " + std::to_string(r.p_up) +
                                  ", p_down = " + std::to_string(r.p_down) + "); coupling too strong");
    const double worst = std::max(r.diagnostics.error_up, r.diagnostics.error_down);
    if (!(worst < 1e-4))
        throw NumericalError("transition probability: quadrature did not converge", worst);
    return r;
}

}  // namespace detail

inline ResponseResult transition_probability_direct(const EffectiveWightman& w, const SwitchingFunction& chi,
                                                    const DetectorSpec& det, double T,
                                                    const ResponseOptions& opt = {}) {
    det.validate();
    if (!(T > 0)) throw PreconditionError("transition_probability_direct: T must be > 0");
    for (const auto* k : {&w.w_in, &w.w_ni})
        if (!k->is_zero && !k->analytic)
            throw UnsupportedError("transition_probability_direct: kernel '" + k->label + "' is spectrum-only");
    const auto up = detail::direct_integral(w.w_in, det.omega, chi, T, opt);
    const auto down = detail::direct_integral(w.w_ni, -det.omega, chi, T, opt);
    return detail::assemble(det, T, Route::Direct, up, down, w, opt);
}

inline ResponseResult transition_probability_direct(const CorrelatorKernel& w, const SwitchingFunction& chi,
                                                    const DetectorSpec& det, double T,
                                                    const ResponseOptions& opt = {}) {
    return transition_probability_direct(EffectiveWightman{w, w}, chi, det, T, opt);
}

inline ResponseResult transition_probability_fourier(const EffectiveWightman& w, const SwitchingFunction& chi,
                                                     const DetectorSpec& det, double T,
                                                     const ResponseOptions& opt = {}) {
    det.validate();
    if (!(T > 0)) throw PreconditionError("transition_probability_fourier: T must be > 0");
    const auto up = detail::fourier_integral(w.w_in, det.omega, chi, T, opt);
    const auto down = detail::fourier_integral(w.w_ni, -det.omega, chi, T, opt);
    return detail::assemble(det, T, Route::Fourier, up, down, w, opt);
}

inline ResponseResult transition_probability_fourier(const CorrelatorKernel& w, const SwitchingFunction& chi,
                                                     const DetectorSpec& det, double T,
                                                     const ResponseOptions& opt = {}) {
    return transition_probability_fourier(EffectiveWightman{w, w}, chi, det, T, opt);
}

inline ResponseResult transition_probability(const EffectiveWightman& w, const SwitchingFunction& chi,
                                             const DetectorSpec& det, double T, Route route,
                                             const ResponseOptions& opt = {}) {
    return route == Route::Direct ? transition_probability_direct(w, chi, det, T, opt)
                                  : transition_probability_fourier(w, chi, det, T, opt);
}

// ---------------------------------------------------------------------------
// Batches

struct ResponseJob {
    std::string label;
    EffectiveWightman w;
    SwitchingFunction chi;
    DetectorSpec det;
    double T = 1.0;
    Route route = Route::Direct;
};

struct BatchRow {
    std::string label;
    ResponseResult result;
    std::string error;  // empty on success; "<kind>: <message>" otherwise
};

/// Evaluates jobs on `workers` threads; rows come back in job order.
inline std::vector<BatchRow> response_batch(const std::vector<ResponseJob>& jobs, unsigned workers = 1,
                                            const ResponseOptions& opt = {}) {
    std::vector<BatchRow> rows(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
            const auto& job = jobs[j];
            rows[j].label = job.label;
            rows[j].result.omega = job.det.omega;
            rows[j].result.T = job.T;
            rows[j].result.route = job.route;
            try {
                rows[j].result = transition_probability(job.w, job.chi, job.det, job.T, job.route, opt);
            } catch (const Error& e) {
                rows[j].error = e.kind() + ": " + e.what();
            } catch (const std::exception& e) {
                rows[j].error = std::string("internal: ") + e.what();
            }
        }
    };
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return rows;
}

/// Columnar records: label, omega, T, route, p_up, p_down, log_p_up, log_p_down, errors, status.
inline void write_responses(std::ostream& os, const std::vector<BatchRow>& rows) {
    os << "# units: natural (hbar = c = k_B = 1)\n";
    os << "label\tomega\tT\troute\tp_up\tp_down\tlog_p_up\tlog_p_down\terr_up\terr_down\tstatus\n";
    const auto flags = os.flags();
    const auto prec = os.precision();
    os.precision(12);
    for (const auto& r : rows) {
        const auto& x = r.result;
        os << r.label << '\t' << x.omega << '\t' << x.T << '\t' << to_string(x.route) << '\t';
        if (r.error.empty()) {
            os << x.p_up << '\t' << x.p_down << '\t' << x.log_p_up << '\t' << x.log_p_down << '\t'
               << x.diagnostics.error_up << '\t' << x.diagnostics.error_down << '\t'
               << (x.perturbative_warning ? "ok(perturbativity-warning)" : "ok") << '\n';
        } else {
            os << "nan\tnan\tnan\tnan\tnan\tnan\t" << r.error << '\n';
        }
    }
    os.flags(flags);
    os.precision(prec);
}

}  // namespace kmsprobe::detector
