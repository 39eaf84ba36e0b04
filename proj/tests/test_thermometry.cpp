#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kmsprobe/correlators.hpp"
#include "kmsprobe/detector.hpp"
#include "kmsprobe/smearing.hpp"
#include "kmsprobe/thermometry.hpp"

using namespace kmsprobe;
using namespace kmsprobe::thermometry;
using correlators::FieldState;
using correlators::KernelFamily;
using correlators::Motion;
using correlators::OperatorKind;
using detector::MuPreset;
using detector::SwitchingFunction;

namespace {

KernelFamily rindler(OperatorKind op = OperatorKind::HermitianScalar) {
    KernelFamily f;
    f.motion = Motion::Rindler;
    f.a = 1.0;
    f.op = op;
    return f;
}

KernelFamily thermal(double beta) {
    KernelFamily f;
    f.state = FieldState::Thermal;
    f.motion = Motion::Inertial;
    f.beta = beta;
    return f;
}

KernelFamily inertial_vacuum() {
    KernelFamily f;
    f.motion = Motion::Inertial;
    return f;
}

SweepSetup setup_for(const KernelFamily& fam, double omega, MuPreset mu = MuPreset::Raising,
                     detector::Route route = detector::Route::Direct) {
    SweepSetup s;
    s.det = detector::with_mu_preset(detector::DetectorSpec{}, mu);
    s.det.omega = omega;
    s.w = detector::effective_wightman(s.det, correlators::pointlike_set(fam));
    s.chi = SwitchingFunction::gaussian();
    s.route = route;
    s.beta_nominal = fam.beta_nominal();
    return s;
}

double beta_at(const SweepSetup& s, double T) {
    return edr_beta_estimate(detector::transition_probability(s.w, s.chi, s.det, T, s.route)).beta_hat;
}

const std::vector<double> kSweepT{5.0, 10.0, 20.0, 40.0};

}  // namespace

// ---------------------------------------------------------------------------
// EDR estimator

TEST(Edr, BoltzmannRatioInvertsExactly) {
    for (double beta : {0.3, 2.0, kTwoPi})
        for (double om : {0.5, 1.0, -2.0}) {
            const double x = 1e-5;
            EXPECT_NEAR(edr_beta_estimate(x * std::exp(-beta * om), x, om).beta_hat, beta, 1e-12 * beta);
        }
}

TEST(Edr, EqualProbabilitiesGiveInfiniteTemperature) {
    EXPECT_EQ(edr_beta_estimate(3e-4, 3e-4, 1.0).beta_hat, 0.0);
}

TEST(Edr, DegenerateInputsAreDomainErrors) {
    EXPECT_THROW(edr_beta_estimate(1e-3, 1e-3, 0.0), DomainError);
    EXPECT_THROW(edr_beta_estimate(0.0, 1e-3, 1.0), DomainError);
    EXPECT_THROW(edr_beta_estimate(1e-3, -1e-3, 1.0), DomainError);
}

TEST(Edr, AcceleratedPipelineAtThirty) {
    const auto s = setup_for(rindler(), 1.0);
    EXPECT_NEAR(beta_at(s, 30.0), kTwoPi, 0.02 * kTwoPi);
}

TEST(Edr, LogFormSurvivesUnderflow) {
    const auto e = edr_beta_estimate_log(-800.0, -10.0, 1.0);
    EXPECT_EQ(e.ratio, 0.0);
    EXPECT_DOUBLE_EQ(e.beta_hat, 790.0);
}

// ---------------------------------------------------------------------------
// Convergence sweeps

TEST(Sweep, AcceleratedConvergesToUnruhBeta) {
    const auto rep = edr_convergence_sweep(setup_for(rindler(), 1.0), kSweepT);
    ASSERT_EQ(rep.points.size(), 4u);
    EXPECT_EQ(rep.verdict, SweepVerdict::Converged);
    EXPECT_LT(rep.points.back().error, 0.02);
    EXPECT_LE(rep.points[3].error, rep.points[2].error);
    EXPECT_LE(rep.points[2].error, rep.points[1].error);
}

TEST(Sweep, ThermalInertialConvergesToBeta) {
    const auto rep = edr_convergence_sweep(setup_for(thermal(2.0), 1.0), kSweepT);
    EXPECT_EQ(rep.verdict, SweepVerdict::Converged);
    EXPECT_LT(rep.points.back().error, 0.02);
}

TEST(Sweep, InertialVacuumIsDivergent) {
    const auto rep = edr_convergence_sweep(setup_for(inertial_vacuum(), 1.0), kSweepT);
    EXPECT_EQ(rep.verdict, SweepVerdict::Divergent);
    for (std::size_t j = 1; j < rep.points.size(); ++j)
        EXPECT_GT(rep.points[j].estimate.beta_hat, rep.points[j - 1].estimate.beta_hat);
    EXPECT_TRUE(std::isnan(rep.points.back().error));
}

TEST(Sweep, WrongNominalBetaIsAConvergenceError) {
    auto s = setup_for(rindler(), 1.0);
    s.beta_nominal = 4.0;
    try {
        edr_convergence_sweep(s, kSweepT);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.errors().size(), kSweepT.size());
    }
}

TEST(Sweep, RejectsBadTemperatureLists) {
    const auto s = setup_for(rindler(), 1.0);
    EXPECT_THROW(edr_convergence_sweep(s, {}), PreconditionError);
    EXPECT_THROW(edr_convergence_sweep(s, {10.0, 5.0}), PreconditionError);
}

TEST(Sweep, CatalogConvergesAtEveryGap) {
    const std::vector<std::pair<std::string, KernelFamily>> catalog{
        {"accelerated", rindler()},
        {"thermal", thermal(2.0)},
        {"derivative", rindler(OperatorKind::Derivative)},
        {"complex", rindler(OperatorKind::ComplexScalar)},
    };
    for (const auto& [name, fam] : catalog)
        for (double om : {0.5, 1.0, 2.0}) {
            const auto rep = edr_convergence_sweep(setup_for(fam, om), kSweepT);
            EXPECT_LT(rep.points.back().error, 0.02) << name << " omega=" << om;
        }
}

TEST(Sweep, SmearedAcceleratedConverges) {
    const auto fam = rindler();
    const auto p = detector::gaussian_profile(0.01, {0, 0, 0}, 3);
    const auto set = correlators::smeared_correlator(fam, p, p, correlators::GeometryContext::for_family(fam));
    auto s = setup_for(fam, 1.0);
    s.w = detector::effective_wightman(s.det, set);
    const auto rep = edr_convergence_sweep(s, kSweepT);
    EXPECT_LT(rep.points.back().error, 0.02);
}

TEST(Sweep, SyntheticKmsSpectrumThroughFourierRoute) {
    // w~(w) = e^{-beta w / 2} e^{-w^2 / 2} satisfies w~(w) = e^{-beta w} w~(-w) exactly.
    const double beta = 1.5;
    correlators::CorrelatorKernel k;
    k.spectrum = [beta](double w) { return cplx{std::exp(-0.5 * beta * w - 0.5 * w * w)}; };
    k.domain = "test/synthetic";
    k.label = "synthetic";
    k.beta_nominal = beta;
    SweepSetup s;
    s.w = {k, k};
    s.chi = SwitchingFunction::gaussian();
    s.route = detector::Route::Fourier;
    s.beta_nominal = beta;
    const auto rep = edr_convergence_sweep(s, kSweepT);
    EXPECT_LT(rep.points.back().error, 0.02);
    for (std::size_t j = 2; j < rep.points.size(); ++j) EXPECT_LE(rep.points[j].error, rep.points[j - 1].error);
    EXPECT_THROW(detector::transition_probability_direct(k, s.chi, s.det, 10.0), UnsupportedError);
}

TEST(Sweep, DerivativeCouplingReadsTheSameTemperature) {
    const double plain = beta_at(setup_for(rindler(), 1.0), 40.0);
    const double deriv = beta_at(setup_for(rindler(OperatorKind::Derivative), 1.0), 40.0);
    EXPECT_LT(std::abs(deriv - plain) / plain, 0.02);
}

TEST(Sweep, MuPresetsGiveTheSameTemperature) {
    for (auto op : {OperatorKind::HermitianScalar, OperatorKind::ComplexScalar}) {
        double lo = kInf, hi = -kInf;
        for (auto mu : {MuPreset::Raising, MuPreset::Symmetric, MuPreset::RandomPhase}) {
            const double b = beta_at(setup_for(rindler(op), 1.0, mu), 20.0);
            lo = std::min(lo, b);
            hi = std::max(hi, b);
        }
        EXPECT_LT((hi - lo) / lo, 0.005);
    }
}

TEST(Sweep, ReportTableHasOneRowPerPoint) {
    const auto rep = edr_convergence_sweep(setup_for(rindler(), 1.0), {10.0, 20.0});
    std::ostringstream os;
    write_sweep(os, rep);
    const std::string out = os.str();
    EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 5);  // two comment lines, header, two rows
}

// ---------------------------------------------------------------------------
// Detailed balance and anti-periodicity

TEST(DetailedBalance, SyntheticPlanckSpectrumIsExact) {
    const double beta = 2.0;
    auto planck = [beta](double w) {
        return w == 0.0 ? 1.0 / beta : w / (std::exp(beta * w) - 1.0);
    };
    EXPECT_LT(detailed_balance_residual_spectrum(planck, beta, default_omega_grid(beta)), 1e-13);
}

TEST(DetailedBalance, AcceleratedPassesAtUnruhBeta) {
    const auto w = correlators::vacuum_kernel_accelerated(1.0);
    const auto grid = default_omega_grid(kTwoPi);  // omega in [-5, 5]
    EXPECT_LT(detailed_balance_residual(w, kTwoPi, grid, correlators::FourierMethod::DampedQuadrature), 1e-3);
    EXPECT_GT(detailed_balance_residual(w, kPi, grid), 0.5);
}

TEST(DetailedBalance, ThermalAndDerivativeKernels) {
    EXPECT_LT(detailed_balance_residual(correlators::thermal_kernel_inertial(2.0), 2.0, default_omega_grid(2.0, 51),
                                        correlators::FourierMethod::DampedQuadrature),
              1e-3);
    const auto d = correlators::pointlike_set(rindler(OperatorKind::Derivative)).w_ud;
    EXPECT_LT(detailed_balance_residual(d, kTwoPi, default_omega_grid(kTwoPi, 51),
                                        correlators::FourierMethod::DampedQuadrature),
              1e-3);
}

TEST(AntiPeriodicity, AcceleratedIsExact) {
    EXPECT_LT(anti_periodicity_residual(correlators::vacuum_kernel_accelerated(1.0), kTwoPi, default_tau_grid()),
              1e-10);
}

TEST(AntiPeriodicity, ThermalAtOwnBetaAndWrongBeta) {
    const auto w = correlators::thermal_kernel_inertial(2.0);
    EXPECT_LT(anti_periodicity_residual(w, 2.0, default_tau_grid()), 1e-8);
    EXPECT_GT(anti_periodicity_residual(w, 1.3, default_tau_grid()), 0.1);
}

TEST(AntiPeriodicity, MissingContinuationIsUnsupported) {
    correlators::CorrelatorKernel k = correlators::vacuum_kernel_inertial();
    k.has_continuation = false;
    EXPECT_THROW(anti_periodicity_residual(k, 1.0, default_tau_grid()), UnsupportedError);
}

// ---------------------------------------------------------------------------
// Moments and validity

TEST(Moments, CenteredGaussianHasNoDipole) {
    for (double sigma : {1e-3, 0.01, 0.2}) {
        const auto m = smearing_moments(detector::gaussian_profile(sigma, {0, 0, 0}, 5));
        for (int i = 0; i < 3; ++i) EXPECT_LT(std::abs(m.dipole[0][i]), 1e-15 * sigma);
    }
}

TEST(Moments, ShiftedGaussianDipoleIsTheOffset) {
    const double x0 = 0.003;
    const auto m = smearing_moments(detector::gaussian_profile(0.01, {x0, 0, 0}, 5));
    EXPECT_LT(std::abs(m.D[0] - x0) / x0, 1e-8);
    EXPECT_LT(std::abs(m.weight[0] - 1.0), 1e-12);
}

TEST(Moments, QuadrupoleIsSigmaSquaredDelta) {
    const double sigma = 0.02;
    const auto m = smearing_moments(detector::gaussian_profile(sigma, {0, 0, 0}, 4));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double expect = i == j ? sigma * sigma : 0.0;
            EXPECT_LT(std::abs(m.quadrupole[0][i][j] - expect), 1e-8 * sigma * sigma);
        }
}

TEST(Moments, TabulatedProfileMatchesClosedForm) {
    const double sigma = 0.1, x0 = 0.05;
    auto F = [&](const geometry::Vec3& x) {
        const double r2 = (x[0] - x0) * (x[0] - x0) + x[1] * x[1] + x[2] * x[2];
        return std::exp(-r2 / (2 * sigma * sigma)) / std::pow(std::sqrt(kTwoPi) * sigma, 3);
    };
    const double L = 10 * sigma;
    const auto p = detector::tabulated_profile(F, {x0 - L, -L, -L}, {x0 + L, L, L}, {121, 121, 121});
    const auto m = smearing_moments(p);
    EXPECT_LT(std::abs(m.weight[0] - 1.0), 1e-8);
    EXPECT_LT(std::abs(m.D[0] - x0) / x0, 1e-8);
    EXPECT_LT(std::abs(m.quadrupole[0][1][1] - sigma * sigma) / (sigma * sigma), 1e-8);
}

TEST(Moments, DivergentProfileIsADomainError) {
    detector::SmearingProfile p = detector::pointlike_profile();
    p.nodes[0].value = cplx{std::nan(""), 0.0};
    EXPECT_THROW(smearing_moments(p), DomainError);
}

TEST(Validity, PointlikeAtOriginPasses) {
    const geometry::Vec3 a{1.0, 0, 0};
    const auto v = validity_bounds(smearing_moments(detector::pointlike_profile()), a);
    EXPECT_EQ(v.dipole_value, 0.0);
    EXPECT_EQ(v.quadrupole_value, 0.0);
    EXPECT_TRUE(v.pass());
}

TEST(Validity, SiBoundaryCases) {
    const double a = acceleration_si_to_inverse_length(1e20);
    const geometry::Vec3 acc{a, 0, 0};
    {
        const double x0 = 1e-3;
        const auto v = validity_bounds(smearing_moments(detector::gaussian_profile(1e-5, {x0, 0, 0}, 3)), acc);
        EXPECT_LT(std::abs(v.adx - (a * x0) * (a * x0)) / v.adx, 1e-8);
        EXPECT_GT(v.adx, 1.0);
        EXPECT_FALSE(v.pass());
    }
    {
        const double x0 = 1e-6;
        const auto v = validity_bounds(smearing_moments(detector::gaussian_profile(1e-8, {x0, 0, 0}, 3)), acc);
        EXPECT_LT(std::abs(v.adx - (a * x0) * (a * x0)) / v.adx, 1e-8);
        EXPECT_NEAR(v.adx, 1.238e-6, 0.01e-6);
        EXPECT_TRUE(v.pass());
    }
}

TEST(Validity, TransverseOffsetIsUnconstrained) {
    const geometry::Vec3 acc{1.0, 0, 0};
    const auto v = validity_bounds(smearing_moments(detector::pointlike_profile({0, 0.5, 0})), acc);
    EXPECT_EQ(v.dipole_value, 0.0);
    EXPECT_TRUE(v.pass());
}

TEST(Validity, CurvatureQuadrupoleBound) {
    geometry::Curvature R;
    R.r0i0j[0][0] = 4.0;
    const double sigma = 0.1;
    const auto v = validity_bounds(smearing_moments(detector::gaussian_profile(sigma, {0, 0, 0}, 4)), {0, 0, 0}, R);
    EXPECT_NEAR(v.quadrupole_value, 4.0 * sigma * sigma, 1e-12);
    EXPECT_FALSE(v.quadrupole_pass);
}

// ---------------------------------------------------------------------------
// Units

TEST(Units, NaturalUnruhTemperature) {
    EXPECT_DOUBLE_EQ(unruh_temperature(kTwoPi), 1.0);
    EXPECT_THROW(unruh_temperature(0.0), DomainError);
    EXPECT_THROW(unruh_temperature(-1.0, Units::SI), DomainError);
}

TEST(Units, SiUnruhTemperatureNearOneKelvin) {
    const double T = unruh_temperature(1e20, Units::SI);
    EXPECT_NEAR(T, 0.405, 0.005 * 0.405);
    // hbar a / (2 pi c k_B) with CODATA 2018 values.
    const double oracle = 1.054571817e-34 * 1e20 / (2.0 * M_PI * 299792458.0 * 1.380649e-23);
    EXPECT_LT(std::abs(T - oracle) / oracle, 1e-9);
}

TEST(Units, RoundTrip) {
    for (double a : {1e-3, 1.0, 1e20, 3.7e25}) {
        EXPECT_LT(std::abs(temperature_to_acceleration(unruh_temperature(a, Units::SI), Units::SI) - a) / a, 1e-12);
        EXPECT_LT(std::abs(temperature_to_acceleration(unruh_temperature(a)) - a) / a, 1e-12);
    }
    EXPECT_LT(std::abs(inverse_length_to_acceleration_si(acceleration_si_to_inverse_length(9.81)) - 9.81), 1e-14);
}
