#pragma once

// Temperature read-out from detector responses and direct checks of the
// KMS condition on kernels: excitation/deexcitation ratio (EDR), detailed
// balance in frequency, anti-periodicity in imaginary time, smearing-moment
// validity bounds and Unruh-temperature unit conversions.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "kmsprobe/core.hpp"
#include "kmsprobe/correlators.hpp"
#include "kmsprobe/detector.hpp"
#include "kmsprobe/geometry.hpp"
#include "kmsprobe/smearing.hpp"

namespace kmsprobe::thermometry {

using correlators::CorrelatorKernel;
using detector::EffectiveWightman;
using geometry::Vec3;

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> errors)
        : Error("convergence", what), errors_(std::move(errors)) {}
    const std::vector<double>& errors() const noexcept { return errors_; }

private:
    std::vector<double> errors_;
};

// ---------------------------------------------------------------------------
// EDR

struct EdrEstimate {
    double beta_hat = 0.0;
    double ratio = 0.0;      // p_up / p_down; may underflow, log_ratio does not
    double log_ratio = 0.0;
    double omega = 0.0;
    double T = 0.0;
    bool converged = false;
};

inline EdrEstimate edr_beta_estimate_log(double log_p_up, double log_p_down, double omega) {
    if (omega == 0.0) throw DomainError("edr_beta_estimate: degenerate gap omega = 0");
    if (!std::isfinite(log_p_up) || !std::isfinite(log_p_down))
        throw DomainError("edr_beta_estimate: probabilities must be > 0");
    EdrEstimate e;
    e.omega = omega;
    e.log_ratio = log_p_up - log_p_down;
    e.ratio = std::exp(e.log_ratio);
    e.beta_hat = -e.log_ratio / omega;
    return e;
}

/// beta_hat = -log(p_up / p_down) / omega.
inline EdrEstimate edr_beta_estimate(double p_up, double p_down, double omega) {
    if (!(p_up > 0.0) || !(p_down > 0.0)) throw DomainError("edr_beta_estimate: probabilities must be > 0");
    return edr_beta_estimate_log(std::log(p_up), std::log(p_down), omega);
}

inline EdrEstimate edr_beta_estimate(const detector::ResponseResult& r) {
    auto e = edr_beta_estimate_log(r.log_p_up, r.log_p_down, r.omega);
    e.T = r.T;
    return e;
}

struct SweepSetup {
    std::string label = "sweep";
    EffectiveWightman w;
    detector::SwitchingFunction chi;
    detector::DetectorSpec det;
    detector::Route route = detector::Route::Direct;
    /// Expected inverse temperature; infinite for the vacuum.
    double beta_nominal = kInf;
    /// Relative tolerance on the terminal estimate.
    double tolerance = 0.02;
    detector::ResponseOptions response{};
};

enum class SweepVerdict { Converged, Divergent };

inline std::string to_string(SweepVerdict v) { return v == SweepVerdict::Converged ? "converged" : "divergent"; }

struct SweepPoint {
    detector::ResponseResult response;
    EdrEstimate estimate;
    double error = 0.0;  // |beta_hat - beta_nominal| / beta_nominal; NaN when beta_nominal is infinite
};

struct SweepReport {
    std::string label;
    double beta_nominal = kInf;
    double tolerance = 0.02;
    std::vector<SweepPoint> points;
    SweepVerdict verdict = SweepVerdict::Converged;

    double terminal_beta() const { return points.empty() ? kInf : points.back().estimate.beta_hat; }
    double terminal_error() const { return points.empty() ? kInf : points.back().error; }
};

/// Convergence verdict for a filled report. Finite beta_nominal: terminal
/// relative error within tolerance and errors non-increasing over the last
/// three points. Infinite beta_nominal: beta_hat must grow strictly, which is
/// reported as divergent. Throws ConvergenceError otherwise.
inline void judge_sweep(SweepReport& rep) {
    std::vector<double> errs;
    for (const auto& p : rep.points) errs.push_back(std::isfinite(rep.beta_nominal) ? p.error : p.estimate.beta_hat);
    if (errs.empty()) throw PreconditionError("judge_sweep: empty report");
    if (std::isfinite(rep.beta_nominal)) {
        bool monotone = true;
        const std::size_t n = errs.size();
        for (std::size_t j = (n >= 3 ? n - 2 : 1); j < n; ++j) monotone = monotone && errs[j] <= errs[j - 1];
        if (!(errs.back() < rep.tolerance) || !monotone)
            throw ConvergenceError("beta_hat did not converge to " + std::to_string(rep.beta_nominal) +
                                       " (terminal relative error " + std::to_string(errs.back()) +
                                       (monotone ? ")" : ", not monotone)"),
                                   errs);
        rep.verdict = SweepVerdict::Converged;
        for (auto& p : rep.points) p.estimate.converged = true;
    } else {
        for (std::size_t j = 1; j < errs.size(); ++j)
            if (!(errs[j] > errs[j - 1])) throw ConvergenceError("vacuum beta_hat is not increasing", errs);
        rep.verdict = SweepVerdict::Divergent;
    }
}

inline SweepPoint make_sweep_point(const detector::ResponseResult& r, double beta_nominal) {
    SweepPoint p;
    p.response = r;
    p.estimate = edr_beta_estimate(r);
    p.error = std::isfinite(beta_nominal) ? std::abs(p.estimate.beta_hat - beta_nominal) / beta_nominal
                                          : std::nan("");
    return p;
}

/// Runs the detector at every T and judges convergence of beta_hat(T).
inline SweepReport edr_convergence_sweep(const SweepSetup& s, const std::vector<double>& T_list,
                                         unsigned workers = 1) {
    if (T_list.empty()) throw PreconditionError("edr_convergence_sweep: empty T list");
    for (std::size_t j = 1; j < T_list.size(); ++j)
        if (!(T_list[j] > T_list[j - 1])) throw PreconditionError("edr_convergence_sweep: T list must increase");
    std::vector<detector::ResponseJob> jobs;
    for (double T : T_list) jobs.push_back({s.label, s.w, s.chi, s.det, T, s.route});
    const auto rows = detector::response_batch(jobs, workers, s.response);
    SweepReport rep;
    rep.label = s.label;
    rep.beta_nominal = s.beta_nominal;
    rep.tolerance = s.tolerance;
    for (const auto& row : rows) {
        if (!row.error.empty())
            throw NumericalError("edr_convergence_sweep: T = " + std::to_string(row.result.T) + " failed: " + row.error,
                                 kInf);
        rep.points.push_back(make_sweep_point(row.result, s.beta_nominal));
    }
    judge_sweep(rep);
    return rep;
}

inline void write_sweep(std::ostream& os, const SweepReport& r) {
    const auto prec = os.precision();
    os.precision(12);
    os << "# sweep: " << r.label << "  beta_nominal: " << r.beta_nominal << "  verdict: " << to_string(r.verdict)
       << "\n# units: natural (hbar = c = k_B = 1)\n";
    os << "label\tomega\tT\tp_up\tp_down\tlog_p_up\tlog_p_down\tbeta_hat\trel_error\n";
    for (const auto& p : r.points)
        os << r.label << '\t' << p.estimate.omega << '\t' << p.response.T << '\t' << p.response.p_up << '\t'
           << p.response.p_down << '\t' << p.response.log_p_up << '\t' << p.response.log_p_down << '\t'
           << p.estimate.beta_hat << '\t' << p.error << '\n';
    os.precision(prec);
}

// ---------------------------------------------------------------------------
// KMS checks on kernels

/// n points with beta omega / 2 pi uniformly spaced on [-5, 5]; omega in [-5, 5] at beta = 2 pi.
inline std::vector<double> default_omega_grid(double beta, int n = 101) {
    std::vector<double> g(n);
    for (int j = 0; j < n; ++j) g[j] = (-5.0 + 10.0 * j / (n - 1)) * kTwoPi / beta;
    return g;
}

/// max_w |w~(w) - e^{-beta w} w~_swapped(-w)| relative to the larger of the two sides.
inline double detailed_balance_residual(const CorrelatorKernel& w, const CorrelatorKernel& w_swapped, double beta,
                                        const std::vector<double>& omega_grid,
                                        correlators::FourierMethod method = correlators::FourierMethod::Auto) {
    if (!(beta > 0)) throw PreconditionError("detailed_balance_residual: beta must be > 0");
    if (omega_grid.size() < 2) throw CoverageError("detailed_balance_residual: frequency grid needs >= 2 points");
    std::vector<cplx> at(omega_grid.size()), at_neg(omega_grid.size()), sw_neg(omega_grid.size());
    double peak = 0.0;
    for (std::size_t j = 0; j < omega_grid.size(); ++j) {
        const double om = omega_grid[j];
        at[j] = correlators::kernel_fourier(w, om, method);
        at_neg[j] = correlators::kernel_fourier(w, -om, method);
        sw_neg[j] = &w_swapped == &w ? at_neg[j] : correlators::kernel_fourier(w_swapped, -om, method);
        peak = std::max({peak, std::abs(at[j]), std::abs(at_neg[j])});
    }
    if (!(peak > 0)) throw CoverageError("detailed_balance_residual: spectrum vanishes on the grid");
    double worst = 0.0;
    for (std::size_t j = 0; j < omega_grid.size(); ++j) {
        const cplx rhs = std::exp(-beta * omega_grid[j]) * sw_neg[j];
        const double den = std::max({std::abs(at[j]), std::abs(rhs), 1e-30 * peak});
        worst = std::max(worst, std::abs(at[j] - rhs) / den);
    }
    return worst;
}

inline double detailed_balance_residual(const CorrelatorKernel& w, double beta, const std::vector<double>& omega_grid,
                                        correlators::FourierMethod method = correlators::FourierMethod::Auto) {
    return detailed_balance_residual(w, w, beta, omega_grid, method);
}

/// Spectrum-level variant for synthetic spectra.
template <class Spectrum>
double detailed_balance_residual_spectrum(Spectrum&& spectrum, double beta, const std::vector<double>& omega_grid) {
    double peak = 0.0;
    for (double om : omega_grid) peak = std::max({peak, std::abs(spectrum(om)), std::abs(spectrum(-om))});
    double worst = 0.0;
    for (double om : omega_grid) {
        const auto lhs = spectrum(om);
        const auto rhs = std::exp(-beta * om) * spectrum(-om);
        const double den = std::max({std::abs(lhs), std::abs(rhs), 1e-30 * peak});
        worst = std::max(worst, std::abs(lhs - rhs) / den);
    }
    return worst;
}

/// max_tau |w(tau + i beta) - w_swapped(-tau)| / |w_swapped(-tau)|.
inline double anti_periodicity_residual(const CorrelatorKernel& w, const CorrelatorKernel& w_swapped, double beta,
                                        const std::vector<double>& tau_grid) {
    if (!w.has_continuation) throw UnsupportedError("anti_periodicity_residual: kernel has no strip continuation");
    double worst = 0.0;
    for (double t : tau_grid) {
        const cplx up = correlators::strip_continuation(w, t, beta);
        const cplx ref = w_swapped.analytic(cplx{-t, 0.0});
        worst = std::max(worst, std::abs(up - ref) / std::abs(ref));
    }
    return worst;
}

inline double anti_periodicity_residual(const CorrelatorKernel& w, double beta, const std::vector<double>& tau_grid) {
    return anti_periodicity_residual(w, w, beta, tau_grid);
}

/// n points on [lo, hi] shifted by half a step so that tau = 0 is avoided.
inline std::vector<double> default_tau_grid(double lo = -5.0, double hi = 5.0, int n = 200) {
    std::vector<double> g(n);
    const double h = (hi - lo) / n;
    for (int j = 0; j < n; ++j) g[j] = lo + (j + 0.5) * h;
    return g;
}

// ---------------------------------------------------------------------------
// Smearing moments and validity bounds

struct MomentReport {
    std::vector<cplx> weight;                                  // per component a
    std::vector<std::array<cplx, 3>> dipole;                   // F^{a,i}
    std::vector<std::array<std::array<cplx, 3>, 3>> quadrupole;  // F^{a,ij}
    std::vector<cplx> D;                                       // X-dipole per component
    double bound_dipole = 0.0;      // |a_i F^{a,i}|
    double bound_quadrupole = 0.0;  // |R_0i0j F^{a,ij}|
    double adx = 0.0;               // a^2 D*_a D^a, a = |acceleration|
};

/// Bound values for given acceleration and curvature (FW frame).
inline void fill_bounds(MomentReport& m, const Vec3& accel, const geometry::Curvature& R) {
    double bd = 0.0, bq = 0.0, dd = 0.0;
    for (std::size_t c = 0; c < m.weight.size(); ++c) {
        cplx ad{}, rq{};
        for (int i = 0; i < 3; ++i) {
            ad += accel[i] * m.dipole[c][i];
            for (int j = 0; j < 3; ++j) rq += R.r0i0j[i][j] * m.quadrupole[c][i][j];
        }
        bd += std::norm(ad);
        bq += std::norm(rq);
        dd += std::norm(m.D[c]);
    }
    m.bound_dipole = std::sqrt(bd);
    m.bound_quadrupole = std::sqrt(bq);
    m.adx = geometry::norm3(accel) * geometry::norm3(accel) * dd;
}

/// Weight, dipole and quadrupole moments of every component. Moments are
/// taken with the flat slice measure, the profile's own normalization.
inline MomentReport smearing_moments(const detector::SmearingProfile& p, const Vec3& accel = {0, 0, 0},
                                     const geometry::Curvature& R = {}) {
    MomentReport m;
    const std::size_t nc = p.components.size();
    m.weight.assign(nc, cplx{});
    m.dipole.assign(nc, {});
    m.quadrupole.assign(nc, {});
    m.D.assign(nc, cplx{});
    cplx w{};
    std::array<cplx, 3> d{};
    std::array<std::array<cplx, 3>, 3> q{};
    for (const auto& n : p.nodes) {
        w += n.value;
        for (int i = 0; i < 3; ++i) {
            d[i] += n.value * n.xi[i];
            for (int j = 0; j < 3; ++j) q[i][j] += n.value * n.xi[i] * n.xi[j];
        }
    }
    for (std::size_t c = 0; c < nc; ++c) {
        const cplx s = p.components[c];
        m.weight[c] = s * w;
        for (int i = 0; i < 3; ++i) {
            m.dipole[c][i] = s * d[i];
            for (int j = 0; j < 3; ++j) m.quadrupole[c][i][j] = s * q[i][j];
        }
        m.D[c] = m.dipole[c][0];
    }
    auto finite = [](cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); };
    for (std::size_t c = 0; c < nc; ++c) {
        bool ok = finite(m.weight[c]);
        for (int i = 0; i < 3; ++i) {
            ok = ok && finite(m.dipole[c][i]);
            for (int j = 0; j < 3; ++j) ok = ok && finite(m.quadrupole[c][i][j]);
        }
        if (!ok) throw DomainError("smearing_moments: profile '" + p.label + "' has divergent moments");
    }
    fill_bounds(m, accel, R);
    return m;
}

struct ValidityReport {
    double dipole_value = 0.0;      // |a_i F^{a,i}|^2, equal to a^2 D*D for acceleration along X
    double quadrupole_value = 0.0;  // |R_0i0j F^{a,ij}|
    double adx = 0.0;
    double threshold = 1e-2;
    bool dipole_pass = true, quadrupole_pass = true;
    double dipole_margin = 0.0, quadrupole_margin = 0.0;  // threshold / value
    bool pass() const { return dipole_pass && quadrupole_pass; }
    std::string note = "displacements along y and z are not constrained by the acceleration bound";
};

inline ValidityReport validity_bounds(MomentReport report, const Vec3& accel, const geometry::Curvature& R = {},
                                      double threshold = 1e-2) {
    fill_bounds(report, accel, R);
    ValidityReport v;
    v.threshold = threshold;
    v.dipole_value = report.bound_dipole * report.bound_dipole;
    v.quadrupole_value = report.bound_quadrupole;
    v.adx = report.adx;
    v.dipole_pass = v.dipole_value < threshold;
    v.quadrupole_pass = v.quadrupole_value < threshold;
    v.dipole_margin = v.dipole_value > 0 ? threshold / v.dipole_value : kInf;
    v.quadrupole_margin = v.quadrupole_value > 0 ? threshold / v.quadrupole_value : kInf;
    return v;
}

// ---------------------------------------------------------------------------
// Units

/// CODATA 2018 exact / recommended values.
namespace si {
inline constexpr double hbar = 1.05457181765e-34;  // J s, h / 2 pi with h exact
inline constexpr double c = 299792458.0;          // m / s
inline constexpr double k_B = 1.380649e-23;       // J / K
}  // namespace si

enum class Units { Natural, SI };

/// Natural: T = a / 2 pi. SI: a in m/s^2, T = hbar a / (2 pi c k_B) in kelvin.
inline double unruh_temperature(double a, Units units = Units::Natural) {
    if (!(a > 0)) throw DomainError("unruh_temperature: acceleration must be > 0");
    if (units == Units::Natural) return a / kTwoPi;
    return si::hbar * a / (kTwoPi * si::c * si::k_B);
}

inline double temperature_to_acceleration(double T, Units units = Units::Natural) {
    if (!(T > 0)) throw DomainError("temperature_to_acceleration: temperature must be > 0");
    if (units == Units::Natural) return kTwoPi * T;
    return kTwoPi * si::c * si::k_B * T / si::hbar;
}

/// Proper acceleration in m/s^2 to the geometric inverse length a / c^2 in 1/m.
inline double acceleration_si_to_inverse_length(double a_si) { return a_si / (si::c * si::c); }
inline double inverse_length_to_acceleration_si(double a_nat) { return a_nat * si::c * si::c; }

}  // namespace kmsprobe::thermometry
