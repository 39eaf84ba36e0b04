#pragma once

// Quadrature helpers shared by the correlator and detector modules.
//
// Oscillatory integrands are split into panels whose width resolves the
// oscillation; every panel is then integrated with adaptive Gauss-Kronrod.

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "kmsprobe/core.hpp"

namespace kmsprobe::quad {

template <class T>
struct QuadResult {
    T value{};
    double error = 0.0;  // absolute error estimate
    double l1 = 0.0;     // integral of |f|, measures cancellation
};

namespace detail {

/// One 15/31 Gauss-Kronrod pass on [a, b]; error is |K - G| scaled to [a, b].
template <class F>
auto gk31(F& f, double a, double b) {
    using T = std::decay_t<decltype(f(a))>;
    using Rule = boost::math::quadrature::gauss_kronrod<double, 31>;
    using Gauss = boost::math::quadrature::gauss<double, 15>;
    const auto& x = Rule::abscissa();
    const auto& wk = Rule::weights();
    const auto& wg = Gauss::weights();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    const T f0 = f(mid);
    T kronrod = f0 * wk[0], gauss = f0 * wg[0];
    double l1 = std::abs(f0) * wk[0];
    for (std::size_t i = 1; i < x.size(); ++i) {
        const T fp = f(mid + half * x[i]), fm = f(mid - half * x[i]);
        kronrod += (fp + fm) * wk[i];
        l1 += (std::abs(fp) + std::abs(fm)) * wk[i];
        if (i % 2 == 0) gauss += (fp + fm) * wg[i / 2];
    }
    QuadResult<T> r;
    r.value = half * kronrod;
    r.error = std::max(half * std::abs(kronrod - gauss), 2.0 * std::numeric_limits<double>::epsilon() * half * l1);
    r.l1 = half * l1;
    return r;
}

template <class F, class T>
void gk_recurse(F& f, double a, double b, const QuadResult<T>& here, double abs_tol, unsigned depth,
                QuadResult<T>& out) {
    if (depth == 0 || here.error <= abs_tol) {
        out.value += here.value;
        out.error += here.error;
        out.l1 += here.l1;
        return;
    }
    const double mid = 0.5 * (a + b);
    const auto left = gk31(f, a, mid), right = gk31(f, mid, b);
    gk_recurse(f, a, mid, left, 0.5 * abs_tol, depth - 1, out);
    gk_recurse(f, mid, b, right, 0.5 * abs_tol, depth - 1, out);
}

}  // namespace detail

/// Adaptive Gauss-Kronrod (15/31 nodes from Boost.Math) on [a, b]: bisects
/// until each piece meets its share of tol * |integral|.
template <class F>
auto integrate_gk(F&& f, double a, double b, double tol = 1e-13, unsigned max_depth = 12) {
    using T = std::decay_t<decltype(f(a))>;
    QuadResult<T> r;
    if (a == b) return r;
    const auto first = detail::gk31(f, a, b);
    detail::gk_recurse(f, a, b, first, tol * std::abs(first.value), max_depth, r);
    return r;
}

/// Integrates over [lo, hi] split at `breaks` and into panels no wider
/// than `width`. The tolerance applies to the whole integral: a first
/// non-adaptive pass fixes the scale, then only panels whose error matters at
/// that scale are refined.
template <class F>
auto integrate_panels(F&& f, double lo, double hi, double width,
                      std::vector<double> breaks = {}, double tol = 1e-13,
                      unsigned max_depth = 12) {
    using T = std::decay_t<decltype(f(lo))>;
    QuadResult<T> total;
    if (!(hi > lo)) return total;
    breaks.push_back(lo);
    breaks.push_back(hi);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    std::vector<std::pair<double, double>> panels;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double a = std::max(breaks[k], lo);
        const double b = std::min(breaks[k + 1], hi);
        if (!(b > a)) continue;
        const int n = std::max(1, static_cast<int>(std::ceil((b - a) / width)));
        const double h = (b - a) / n;
        for (int j = 0; j < n; ++j) {
            const double x0 = a + j * h;
            panels.emplace_back(x0, (j + 1 == n) ? b : x0 + h);
        }
    }
    std::vector<QuadResult<T>> first(panels.size());
    double scale = 0.0;
    for (std::size_t j = 0; j < panels.size(); ++j) {
        first[j] = integrate_gk(f, panels[j].first, panels[j].second, tol, 0);
        scale += first[j].l1;
    }
    for (std::size_t j = 0; j < panels.size(); ++j) {
        QuadResult<T> part = first[j];
        if (part.error > tol * scale) {
            const double local = std::min(1e-3, tol * scale / std::max(part.l1, 1e-300));
            part = integrate_gk(f, panels[j].first, panels[j].second, std::max(local, tol), max_depth);
        }
        total.value += part.value;
        total.error += part.error;
        total.l1 += part.l1;
    }
    return total;
}

/// Gauss-Hermite rule for the weight exp(-x^2) (Golub-Welsch).
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(int n) {
    if (n < 1) throw PreconditionError("gauss_hermite: need at least one node");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(k / 2.0);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    std::vector<double> x(n), w(n);
    const double mu0 = std::sqrt(kPi);
    for (int k = 0; k < n; ++k) {
        x[k] = es.eigenvalues()(k);
        const double v = es.eigenvectors()(0, k);
        w[k] = mu0 * v * v;
    }
    // Symmetrize so that odd moments vanish to rounding.
    for (int k = 0; k < n / 2; ++k) {
        const double xs = 0.5 * (x[n - 1 - k] - x[k]);
        const double ws = 0.5 * (w[n - 1 - k] + w[k]);
        x[k] = -xs;
        x[n - 1 - k] = xs;
        w[k] = w[n - 1 - k] = ws;
    }
    if (n % 2 == 1) x[n / 2] = 0.0;
    return {x, w};
}

/// Richardson extrapolation over a geometric ladder h, h/2, h/4 assuming
/// error terms c1*h + c2*h^2.
template <class T>
T richardson3(const T& at_h, const T& at_h2, const T& at_h4) {
    return (8.0 * at_h4 - 6.0 * at_h2 + at_h) / 3.0;
}

/// Full Richardson table over h, h/2, h/4, ... assuming a power series in h.
/// Returns the last two diagonal entries; their distance is the error estimate.
template <class T>
std::pair<T, T> richardson_table(std::vector<T> row) {
    const std::size_t n = row.size();
    if (n < 2) throw PreconditionError("richardson_table: need at least two levels");
    double factor = 1.0;
    for (std::size_t order = 1; order < n; ++order) {
        factor *= 2.0;
        for (std::size_t j = n - 1; j >= order; --j) row[j] = (factor * row[j] - row[j - 1]) / (factor - 1.0);
    }
    return {row[n - 1], row[n - 2]};
}

}  // namespace kmsprobe::quad
