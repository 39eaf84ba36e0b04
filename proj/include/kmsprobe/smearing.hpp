#pragma once

// Spatial smearing profiles F^a(xi) on the detector's rest slices.
//
// A profile is stored as quadrature nodes: each node carries the FNC position
// xi and the product (quadrature weight) x F(xi). Tensor-valued profiles
// factor as F^a(xi) = components[a] * F(xi).

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kmsprobe/core.hpp"
#include "kmsprobe/geometry.hpp"
#include "kmsprobe/quadrature.hpp"

namespace kmsprobe::detector {

using geometry::Vec3;

struct SmearingNode {
    Vec3 xi{};
    cplx value{};
};

struct SmearingProfile {
    std::string label = "pointlike";
    std::vector<SmearingNode> nodes;
    std::vector<cplx> components{cplx{1.0}};
    double support_radius = 0.0;
    bool pointlike = true;

    /// Integral of the scalar part F over the slice.
    cplx weight() const {
        cplx s{};
        for (const auto& n : nodes) s += n.value;
        return s;
    }
};

/// Delta profile at xi = at.
inline SmearingProfile pointlike_profile(const Vec3& at = {0, 0, 0}, cplx weight = 1.0) {
    SmearingProfile p;
    p.label = "pointlike";
    p.nodes.push_back({at, weight});
    p.support_radius = geometry::norm3(at);
    p.pointlike = true;
    return p;
}

/// Isotropic Gaussian of width sigma centred at `center`, total weight `weight`,
/// discretized with a tensor Gauss-Hermite rule of `nodes_per_axis` points.
inline SmearingProfile gaussian_profile(double sigma, const Vec3& center = {0, 0, 0},
                                        int nodes_per_axis = 5, double weight = 1.0) {
    if (!(sigma > 0)) throw PreconditionError("gaussian_profile: sigma must be > 0");
    auto [x, w] = quad::gauss_hermite(nodes_per_axis);
    const double s2 = std::sqrt(2.0) * sigma;
    const double norm = weight / std::pow(std::sqrt(kPi), 3);
    SmearingProfile p;
    p.label = "gaussian";
    p.pointlike = false;
    double xmax = 0.0;
    for (int i = 0; i < nodes_per_axis; ++i)
        for (int j = 0; j < nodes_per_axis; ++j)
            for (int k = 0; k < nodes_per_axis; ++k) {
                p.nodes.push_back({{center[0] + s2 * x[i], center[1] + s2 * x[j], center[2] + s2 * x[k]},
                                   norm * w[i] * w[j] * w[k]});
            }
    for (double v : x) xmax = std::max(xmax, std::abs(v));
    p.support_radius = geometry::norm3(center) + std::sqrt(3.0) * s2 * xmax;
    return p;
}

/// Profile sampled from a callable on a box with the composite trapezoid rule.
/// `n` counts points per axis (>= 2).
inline SmearingProfile tabulated_profile(const std::function<double(const Vec3&)>& F, const Vec3& lo,
                                         const Vec3& hi, const std::array<int, 3>& n) {
    for (int d = 0; d < 3; ++d)
        if (n[d] < 2 || !(hi[d] > lo[d])) throw PreconditionError("tabulated_profile: bad grid");
    SmearingProfile p;
    p.label = "tabulated";
    p.pointlike = false;
    Vec3 h{};
    for (int d = 0; d < 3; ++d) h[d] = (hi[d] - lo[d]) / (n[d] - 1);
    for (int i = 0; i < n[0]; ++i)
        for (int j = 0; j < n[1]; ++j)
            for (int k = 0; k < n[2]; ++k) {
                const Vec3 xi{lo[0] + i * h[0], lo[1] + j * h[1], lo[2] + k * h[2]};
                double w = h[0] * h[1] * h[2];
                if (i == 0 || i == n[0] - 1) w *= 0.5;
                if (j == 0 || j == n[1] - 1) w *= 0.5;
                if (k == 0 || k == n[2] - 1) w *= 0.5;
                const double f = F(xi);
                if (f == 0.0) continue;
                p.nodes.push_back({xi, w * f});
                p.support_radius = std::max(p.support_radius, geometry::norm3(xi));
            }
    return p;
}

}  // namespace kmsprobe::detector
