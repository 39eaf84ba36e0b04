#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "kmsprobe/correlators.hpp"
#include "kmsprobe/quadrature.hpp"
#include "kmsprobe/smearing.hpp"
#include "kmsprobe/thermometry.hpp"

using namespace kmsprobe;
using namespace kmsprobe::correlators;

namespace {

KernelFamily rindler(double a = 1.0, OperatorKind op = OperatorKind::HermitianScalar) {
    KernelFamily f;
    f.motion = Motion::Rindler;
    f.a = a;
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

double rel(cplx a, cplx b) { return std::abs(a - b) / std::abs(b); }

// e^{-2 pi}: Boltzmann factor at beta = 2 pi, omega = 1.
const double kBoltzmann2Pi = std::exp(-kTwoPi);

}  // namespace

TEST(VacuumInertial, UnitSeparationValue) {
    const auto k = vacuum_kernel_inertial();
    const double exact = -1.0 / (4.0 * kPi * kPi);
    EXPECT_NEAR(exact, -0.02533, 5e-6);
    // eps -> 0 by Richardson on a geometric ladder.
    const cplx r = quad::richardson3(k.eval(1.0, 1e-4), k.eval(1.0, 5e-5), k.eval(1.0, 2.5e-5));
    EXPECT_NEAR(r.real(), exact, 1e-12);
    EXPECT_NEAR(r.imag(), 0.0, 1e-12);
}

TEST(VacuumInertial, FourierVanishesForPositiveFrequency) {
    const auto k = vacuum_kernel_inertial();
    for (double w : {0.5, 1.0, 2.0})
        EXPECT_LT(std::abs(kernel_fourier(k, w, FourierMethod::DampedQuadrature)), 1e-10);
    // Negative frequencies carry the vacuum spectrum |w| / 2 pi.
    EXPECT_NEAR(kernel_fourier(k, -1.0, FourierMethod::DampedQuadrature).real(), 1.0 / kTwoPi, 1e-8);
}

TEST(Kernels, HermitianSymmetryOnRandomSeparations) {
    std::mt19937 eng(17);
    std::uniform_real_distribution<double> u(-8.0, 8.0);
    for (const auto& k : {vacuum_kernel_inertial(), vacuum_kernel_accelerated(1.3), thermal_kernel_inertial(2.0),
                          derivative_coupled_kernel(vacuum_kernel_accelerated(1.0)),
                          pair_kernel(rindler(), {0.05, 0.01, 0}, {-0.02, 0, 0.03})}) {
        double worst = 0.0;
        for (int n = 0; n < 1000; ++n) {
            const double t = u(eng);
            if (std::abs(t) < 0.2) continue;
            worst = std::max(worst, rel(k.eval(-t, 0.0), std::conj(k.eval(t, 0.0))));
        }
        EXPECT_LT(worst, 1e-10) << k.label;
    }
}

TEST(VacuumAccelerated, SmallAccelerationApproachesInertial) {
    const cplx inertial = vacuum_kernel_inertial().eval(1.0, 0.0);
    const double d1 = rel(vacuum_kernel_accelerated(0.02).eval(1.0, 0.0), inertial);
    const double d2 = rel(vacuum_kernel_accelerated(0.01).eval(1.0, 0.0), inertial);
    EXPECT_LT(d2, 1e-4);
    EXPECT_NEAR(d1 / d2, 4.0, 0.01);  // O(a^2)
}

TEST(VacuumAccelerated, ContinuationByBetaReflects) {
    const auto k = vacuum_kernel_accelerated(1.0);
    for (double t : {-2.5, -0.7, 0.4, 1.9})
        EXPECT_LT(rel(strip_continuation(k, t, kTwoPi), k.eval(-t, 0.0)), 1e-12);
}

TEST(VacuumAccelerated, PlanckRatioAtUnitGap) {
    const auto k = vacuum_kernel_accelerated(1.0);
    const cplx up = kernel_fourier(k, 1.0, FourierMethod::DampedQuadrature);
    const cplx down = kernel_fourier(k, -1.0, FourierMethod::DampedQuadrature);
    EXPECT_NEAR(kBoltzmann2Pi, 1.8674e-3, 1e-7);
    EXPECT_NEAR(up.real() / down.real(), kBoltzmann2Pi, 1e-9 * kBoltzmann2Pi);
}

TEST(VacuumAccelerated, UnitFrequencySpectrumAgainstClosedForm) {
    const auto k = vacuum_kernel_accelerated(1.0);
    const double closed = 1.0 / (kTwoPi * (std::exp(kTwoPi) - 1.0));
    EXPECT_NEAR(closed, 2.9777e-4, 1e-8);
    EXPECT_LT(std::abs(kernel_fourier(k, 1.0, FourierMethod::DampedQuadrature) - closed) / closed, 1e-6);
    EXPECT_LT(std::abs(kernel_fourier(k, 1.0, FourierMethod::FftGrid) - closed) / closed, 1e-6);
    EXPECT_LT(std::abs(kernel_fourier(k, 1.0, FourierMethod::ClosedForm) - closed) / closed, 1e-14);
}

TEST(ThermalInertial, LargeBetaMatchesVacuum) {
    const auto th = thermal_kernel_inertial(1e6);
    const auto vac = vacuum_kernel_inertial();
    EXPECT_NEAR(std::abs(th.eval(1.0, 0.0) - vac.eval(1.0, 0.0)), 0.0, 1e-10);
}

TEST(ThermalInertial, ContinuationByBetaReflects) {
    const auto k = thermal_kernel_inertial(2.0);
    for (double t : {-1.5, 0.3, 2.2}) EXPECT_LT(rel(strip_continuation(k, t, 2.0), k.eval(-t, 0.0)), 1e-12);
}

TEST(ThermalInertial, ThreeFourierMethodsAgree) {
    const auto k = thermal_kernel_inertial(2.0);
    for (double w : {-1.0, 1.0}) {
        const cplx c = kernel_fourier(k, w, FourierMethod::ClosedForm);
        const cplx q = kernel_fourier(k, w, FourierMethod::DampedQuadrature);
        const cplx f = kernel_fourier(k, w, FourierMethod::FftGrid);
        EXPECT_LT(rel(q, c), 1e-6);
        EXPECT_LT(rel(f, c), 1e-6);
        EXPECT_LT(rel(f, q), 1e-6);
    }
}

TEST(ThermalInertial, DetailedBalanceAtOwnBeta) {
    const auto k = thermal_kernel_inertial(2.0);
    EXPECT_LT(thermometry::detailed_balance_residual(k, 2.0, thermometry::default_omega_grid(2.0),
                                                     FourierMethod::DampedQuadrature),
              1e-3);
}

TEST(ImageSum, AgreesWithResummedForm) {
    const double beta = 2.0, tol = 1e-6;
    const auto sum = thermal_kernel_image_sum(beta, tol);
    const auto closed = thermal_kernel_inertial(beta);
    for (double t : {0.3, 1.0, 2.7})
        EXPECT_LT(std::abs(sum.eval(t, 0.0) - closed.eval(t, 0.0)), image_sum_tail_bound(beta, image_count_for(beta, tol)));
}

TEST(ImageSum, DoublingCutoffStaysWithinTailBound) {
    const double beta = 1.5, tol = 1e-5;
    const auto k1 = thermal_kernel_image_sum(beta, tol);
    const auto k2 = thermal_kernel_image_sum(beta, tol / 2);
    const double bound = image_sum_tail_bound(beta, image_count_for(beta, tol));
    EXPECT_LE(bound, tol);
    for (double t : {0.2, 0.9, 3.0}) EXPECT_LT(std::abs(k1.eval(t, 0.0) - k2.eval(t, 0.0)), bound);
}

TEST(ImageSum, TooManyImagesIsANumericalError) {
    EXPECT_THROW(thermal_kernel_image_sum(0.01, 1e-9, 1000), NumericalError);
}

TEST(Fourier, Linearity) {
    const auto w1 = vacuum_kernel_accelerated(1.0);
    const auto w2 = thermal_kernel_inertial(2.0);
    const cplx alpha{0.7, -0.3};
    const auto combo = linear_combination({{alpha, w1}, {1.0, w2}}, "combo");
    for (auto m : {FourierMethod::ClosedForm, FourierMethod::DampedQuadrature}) {
        const cplx lhs = kernel_fourier(combo, 0.8, m);
        const cplx rhs = alpha * kernel_fourier(w1, 0.8, m) + kernel_fourier(w2, 0.8, m);
        EXPECT_LT(rel(lhs, rhs), 1e-9);
    }
}

TEST(Fourier, ClosedFormRequiresSpectrum) {
    auto k = thermal_kernel_image_sum(2.0);
    k.spectrum = {};
    EXPECT_THROW(kernel_fourier(k, 1.0, FourierMethod::ClosedForm), UnsupportedError);
}

TEST(Derivative, InertialVacuumClosedForm) {
    const auto d = derivative_coupled_kernel(vacuum_kernel_inertial());
    for (double t : {0.5, 1.0, -2.0}) {
        const cplx z{t, -0.01};
        EXPECT_LT(rel(d.at(z), 6.0 / (4.0 * kPi * kPi * z * z * z * z)), 1e-14);
    }
}

TEST(Derivative, SecondDifferenceConvergesQuadratically) {
    for (const auto& base : {vacuum_kernel_accelerated(1.0), thermal_kernel_inertial(2.0), vacuum_kernel_inertial()}) {
        const auto d = derivative_coupled_kernel(base);
        const cplx z{0.8, -0.05};
        auto err = [&](double h) {
            const cplx fd = -(base.at(z + h) - 2.0 * base.at(z) + base.at(z - h)) / (h * h);
            return std::abs(fd - d.at(z)) / std::abs(d.at(z));
        };
        const double e1 = err(1e-3), e2 = err(5e-4);
        EXPECT_LT(e1, 1e-4);
        EXPECT_NEAR(e1 / e2, 4.0, 0.2) << base.label;
    }
}

TEST(Derivative, ThermalTailStaysFiniteWhereSinhOverflows) {
    // At Re z = 150, beta = 2 the fourth power of sinh overflows; the leading
    // exponential -16 A b^2 e^{-2 b z} is exact to double precision there.
    const double beta = 2.0, A = 1.0 / (4.0 * beta * beta), b = kPi / beta;
    const auto d = derivative_coupled_kernel(thermal_kernel_inertial(beta));
    for (cplx z : {cplx{150.0, -0.3}, cplx{-150.0, -0.3}}) {
        const cplx tail = -16.0 * A * b * b * std::exp(z.real() > 0 ? -2.0 * b * z : 2.0 * b * z);
        EXPECT_LT(rel(d.at(z), -tail), 1e-12) << z;
    }
}

TEST(Derivative, HermitianSymmetryPreserved) {
    const auto d = derivative_coupled_kernel(thermal_kernel_inertial(1.5));
    for (double t : {0.4, 1.1, 3.0}) EXPECT_LT(rel(d.eval(-t, 0.0), std::conj(d.eval(t, 0.0))), 1e-12);
}

TEST(Derivative, AcceleratedStillKmsAtUnruhBeta) {
    const auto d = derivative_coupled_kernel(rindler(1.0), {1, 0, 0, 0});
    EXPECT_LT(thermometry::detailed_balance_residual(d, kTwoPi, thermometry::default_omega_grid(kTwoPi),
                                                     FourierMethod::DampedQuadrature),
              1e-3);
}

TEST(Derivative, SpatialDirectionOnRindlerIsKms) {
    const auto d = derivative_coupled_kernel(rindler(1.0), {0, 0, 1, 0});
    EXPECT_FALSE(d.has_spectrum());
    EXPECT_LT(thermometry::detailed_balance_residual(d, kTwoPi, thermometry::default_omega_grid(kTwoPi),
                                                     FourierMethod::DampedQuadrature),
              1e-3);
}

TEST(Derivative, InertialVacuumGeneralDirectionSpectrum) {
    KernelFamily f;
    f.motion = Motion::Inertial;
    const auto d = derivative_coupled_kernel(f, {1.0, 0.0, 0.5, 0.0});
    for (double w : {-1.0, -2.0}) EXPECT_LT(rel(kernel_fourier(d, w, FourierMethod::DampedQuadrature), d.spectrum(w)), 1e-6);
}

TEST(PairKernel, OffsetSpectrumAgainstQuadrature) {
    const auto k = pair_kernel(rindler(1.0), {0.05, 0.0, 0.0}, {-0.03, 0.02, 0.0});
    for (double w : {-2.0, -0.5, 0.5, 1.0})
        EXPECT_LT(rel(kernel_fourier(k, w, FourierMethod::DampedQuadrature), k.spectrum(w)), 1e-6) << w;
}

TEST(PairKernel, ThermalOffsetSpectrumAgainstFft) {
    const auto k = pair_kernel(thermal(2.0), {0.04, 0.0, 0.0}, {0.0, 0.03, 0.0});
    for (double w : {-1.0, 0.5, 1.5}) EXPECT_LT(rel(kernel_fourier(k, w, FourierMethod::FftGrid), k.spectrum(w)), 1e-6);
}

TEST(PairKernel, VacuumInertialSeparatedSpectrum) {
    KernelFamily f;
    f.motion = Motion::Inertial;
    const auto k = pair_kernel(f, {0.3, 0, 0}, {0, 0, 0});
    EXPECT_LT(rel(kernel_fourier(k, -1.5, FourierMethod::DampedQuadrature), k.spectrum(-1.5)), 1e-6);
    EXPECT_LT(std::abs(kernel_fourier(k, 1.5, FourierMethod::DampedQuadrature)), 1e-10);
}

TEST(Smeared, DeltaProfilesReproducePointlike) {
    for (auto op : {OperatorKind::HermitianScalar, OperatorKind::ComplexScalar, OperatorKind::Derivative}) {
        const auto fam = rindler(1.0, op);
        const auto p = detector::pointlike_profile();
        const auto s = smeared_correlator(fam, p, p, GeometryContext::for_family(fam));
        const auto ref = pointlike_set(fam);
        for (double t : {-1.3, 0.6, 2.5}) {
            const std::array<std::pair<const CorrelatorKernel*, const CorrelatorKernel*>, 4> pairs{
                {{&s.w_uu, &ref.w_uu}, {&s.w_ud, &ref.w_ud}, {&s.w_du, &ref.w_du}, {&s.w_dd, &ref.w_dd}}};
            for (auto [x, y] : pairs) {
                const cplx a = x->eval(t, 0.0), b = y->eval(t, 0.0);
                EXPECT_LE(std::abs(a - b), 1e-10 * std::max(1.0, std::abs(b)));
            }
        }
    }
}

TEST(Smeared, HermitianOperatorCollapsesFourKernels) {
    const auto fam = rindler(1.0);
    const auto p = detector::gaussian_profile(0.01, {0.005, 0, 0}, 3);
    const auto s = smeared_correlator(fam, p, p, GeometryContext::for_family(fam));
    for (double t : {-0.8, 0.5, 1.7}) {
        const cplx v = s.w_ud.eval(t, 0.0);
        EXPECT_LT(rel(s.w_uu.eval(t, 0.0), v), 1e-12);
        EXPECT_LT(rel(s.w_du.eval(t, 0.0), v), 1e-12);
        EXPECT_LT(rel(s.w_dd.eval(t, 0.0), v), 1e-12);
    }
}

TEST(Smeared, ComplexScalarHasVanishingSameArrowKernels) {
    const auto fam = rindler(1.0, OperatorKind::ComplexScalar);
    const auto s = pointlike_set(fam);
    EXPECT_TRUE(s.w_uu.is_zero);
    EXPECT_TRUE(s.w_dd.is_zero);
    EXPECT_LT(rel(s.w_ud.eval(0.7, 0.0), 2.0 * vacuum_kernel_accelerated(1.0).eval(0.7, 0.0)), 1e-14);
}

TEST(Smeared, GaussianSmearedSpectrumIsKms) {
    const auto fam = rindler(1.0);
    const auto p = detector::gaussian_profile(0.01, {0, 0, 0}, 3);
    const auto s = smeared_correlator(fam, p, p, GeometryContext::for_family(fam));
    EXPECT_TRUE(s.w_ud.has_spectrum());
    EXPECT_LT(thermometry::detailed_balance_residual(s.w_ud, kTwoPi, thermometry::default_omega_grid(kTwoPi)), 1e-10);
    EXPECT_LT(rel(kernel_fourier(s.w_ud, 1.0, FourierMethod::DampedQuadrature), s.w_ud.spectrum(1.0)), 1e-6);
}

TEST(Smeared, ProfileBeyondValidityRadiusIsRejected) {
    const auto fam = rindler(1.0);
    const auto p = detector::gaussian_profile(0.05, {0, 0, 0}, 3);
    EXPECT_THROW(smeared_correlator(fam, p, p, GeometryContext::for_family(fam)), OutOfDomainError);
}

TEST(Smeared, TimeDependentVolumeElementIsAnAssumptionViolation) {
    const auto fam = rindler(1.0);
    auto ctx = GeometryContext::for_family(fam);
    ctx.curvature = [](double t) {
        geometry::Curvature R;
        R.r0i0j[0][0] = 1e-3 * (1.0 + std::sin(t));
        return R;
    };
    const auto p = detector::pointlike_profile({0.05, 0, 0});
    EXPECT_THROW(smeared_correlator(fam, p, p, ctx), AssumptionViolation);
}

TEST(StripContinuation, HalfBetaIsReal) {
    const auto k = vacuum_kernel_accelerated(1.0);
    for (double t : {-1.0, 0.0, 0.5, 2.0}) {
        const cplx v = strip_continuation(k, t, 0.5 * kTwoPi);
        EXPECT_LT(std::abs(v.imag()), 1e-14 * std::abs(v.real()));
        EXPECT_GT(v.real(), 0.0);  // sinh^2 is real-negative there, so -A / sinh^2 > 0
    }
}

TEST(StripContinuation, SmallOffsetRecoversBoundaryValue) {
    const auto k = thermal_kernel_inertial(2.0);
    EXPECT_LT(rel(strip_continuation(k, 0.9, 1e-9), k.eval(0.9, 0.0)), 1e-8);
}

TEST(StripContinuation, OutsideStripIsRejected) {
    const auto k = vacuum_kernel_accelerated(1.0);
    EXPECT_THROW(strip_continuation(k, 0.5, 7.0), UnsupportedError);
    EXPECT_THROW(strip_continuation(k, 0.5, 0.0), UnsupportedError);
}

TEST(Export, KernelTableColumns) {
    std::stringstream ss;
    export_kernel_table(ss, vacuum_kernel_accelerated(1.0), {-1.0, 1.0}, 1e-3);
    std::string line;
    int data = 0;
    while (std::getline(ss, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double t, re, im, eps;
        ASSERT_TRUE(static_cast<bool>(ls >> t >> re >> im >> eps));
        EXPECT_EQ(eps, 1e-3);
        ++data;
    }
    EXPECT_EQ(data, 2);
}

TEST(Families, InvalidParametersRejected) {
    EXPECT_THROW(vacuum_kernel_accelerated(0.0), PreconditionError);
    EXPECT_THROW(thermal_kernel_inertial(-1.0), PreconditionError);
    KernelFamily f = thermal(2.0);
    f.motion = Motion::Rindler;
    EXPECT_THROW(scalar_kernel(f), UnsupportedError);
}
