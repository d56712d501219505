#pragma once
// The model chart R_{>=0} x R^{n-1} with coordinates (y, x, u_1..u_{n-2}),
// the working window W, the inner neighbourhood U and the segment gamma.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "scalar_kit.hpp"

namespace mmerge {

/// Chart point: [0] = y (boundary-defining), [1] = x, [2..] = u.
using ChartPoint = Vec;

inline ChartPoint make_point(double y, double x, int n = 2) {
    ChartPoint p = ChartPoint::Zero(n);
    p[0] = y;
    p[1] = x;
    return p;
}

struct Box {
    Vec lo;
    Vec hi;

    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(const ChartPoint& p) const {
        for (int i = 0; i < dim(); ++i)
            if (p[i] < lo[i] || p[i] > hi[i]) return false;
        return true;
    }
    bool strictly_inside(const Box& outer) const {
        for (int i = 0; i < dim(); ++i)
            if (lo[i] < outer.lo[i] || hi[i] > outer.hi[i]) return false;
        return true;
    }
    /// Same box with every face moved inward by `margin`, except the y = 0 face.
    Box shrunk(double margin) const {
        Box b = *this;
        for (int i = 0; i < dim(); ++i) {
            if (!(i == 0 && lo[i] == 0.0)) b.lo[i] += margin;
            b.hi[i] -= margin;
        }
        return b;
    }
    /// Every extent widened by `fraction` of its width on both sides (y stays >= 0).
    Box extended(double fraction) const {
        Box b = *this;
        for (int i = 0; i < dim(); ++i) {
            const double w = hi[i] - lo[i];
            b.lo[i] -= fraction * w;
            b.hi[i] += fraction * w;
        }
        b.lo[0] = std::max(0.0, b.lo[0]);
        return b;
    }
};

inline bool contains(const Box& box, const ChartPoint& p) { return box.contains(p); }

enum class Side { Low, High };

struct Face {
    int axis = 0;
    Side side = Side::Low;

    bool is_boundary() const { return axis == 0 && side == Side::Low; }
    bool operator==(const Face&) const = default;
    std::string name() const {
        std::string a = axis == 0 ? "y" : axis == 1 ? "x" : "u" + std::to_string(axis - 1);
        return a + (side == Side::Low ? "-low" : "-high");
    }
};

struct FaceCrossing {
    Face face;
    ChartPoint point;
    double fraction = 0.0;  // position along the segment
};

/// Face through which the segment inside -> outside leaves the box. The first
/// bound crossed wins; ties go to the smallest axis index.
inline FaceCrossing exit_face(const Box& box, const ChartPoint& inside, const ChartPoint& outside) {
    if (!box.contains(inside)) throw std::invalid_argument("exit_face: first endpoint not inside");
    if (box.contains(outside)) throw std::invalid_argument("exit_face: second endpoint not outside");
    double best = std::numeric_limits<double>::infinity();
    Face face;
    for (int i = 0; i < box.dim(); ++i) {
        const double d = outside[i] - inside[i];
        double theta = std::numeric_limits<double>::infinity();
        Side side = Side::Low;
        if (outside[i] > box.hi[i]) {
            theta = (box.hi[i] - inside[i]) / d;
            side = Side::High;
        } else if (outside[i] < box.lo[i]) {
            theta = (box.lo[i] - inside[i]) / d;
            side = Side::Low;
        } else {
            continue;
        }
        if (theta < best - 1e-12) {
            best = theta;
            face = {i, side};
        }
    }
    FaceCrossing out;
    out.face = face;
    out.fraction = best;
    out.point = inside + best * (outside - inside);
    out.point[face.axis] = face.side == Side::High ? box.hi[face.axis] : box.lo[face.axis];
    return out;
}

/// Numeric description of the model; profiles are built from it by `build()`.
struct ModelParams {
    int n = 2;
    int k = 1;

    double w_scale = 1.0;
    double alpha_outer_lo = -0.25, alpha_inner_lo = -0.1, alpha_inner_hi = 1.1,
           alpha_outer_hi = 1.25;
    double beta_lo = 0.1, beta_hi = 0.9;
    /// "monotone" (default falling transition) or "nonmonotone" (negative control).
    std::string beta_kind = "monotone";
    double delta_inner = 0.5, delta_outer = 1.0;
    /// Perturbation magnitude; <= 0 means "choose automatically".
    double c = 0.0;
    double r_z = 0.1;

    double window_y = 2.0, window_x_lo = -0.5, window_x_hi = 1.5;
    double inner_y = 1.5, inner_x_lo = -0.25, inner_x_hi = 1.25;
    double u_halfwidth = 1.0;

    SmoothScalar1D w, alpha, beta;
    ProductBump delta;
    Box window, inner;

    double beta_support_end() const { return beta_hi; }

    Box make_box(double ymax, double xlo, double xhi) const {
        Box b{Vec::Zero(n), Vec::Zero(n)};
        b.lo[0] = 0.0;
        b.hi[0] = ymax;
        b.lo[1] = xlo;
        b.hi[1] = xhi;
        for (int i = 2; i < n; ++i) {
            b.lo[i] = -u_halfwidth;
            b.hi[i] = u_halfwidth;
        }
        return b;
    }
};

namespace detail {

// Negative-control beta: equals 1 near y = 0 and vanishes past beta_hi, but dips
// to zero and climbs back to 0.8 in between, so it is not monotone.
inline SmoothScalar1D make_nonmonotone_beta(double lo, double hi) {
    const double L = hi - lo;
    auto f1 = make_transition({lo, lo + 0.25 * L, Orientation::Falling});
    auto r = make_transition({lo + 0.375 * L, lo + 0.625 * L, Orientation::Rising});
    auto f2 = make_transition({lo + 0.75 * L, hi, Orientation::Falling});
    return SmoothScalar1D(
        [=](double y) { return f1(y) + 0.8 * r(y) * f2(y); },
        [=](double y) {
            return f1.deriv(y) + 0.8 * (r.deriv(y) * f2(y) + r(y) * f2.deriv(y));
        });
}

}  // namespace detail

/// c = 2 max_{[0,1]} w, the maximum located by a dense scan then golden section.
inline double choose_c(const SmoothScalar1D& w) {
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    const int N = 1000;
    for (int i = 0; i <= N; ++i) {
        const double v = w(static_cast<double>(i) / N);
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    const double lo = std::max(0.0, (best - 1.0) / N), hi = std::min(1.0, (best + 1.0) / N);
    const double xm = golden_max([&](double x) { return w(x); }, lo, hi);
    return 2.0 * std::max(best_v, w(xm));
}

/// Validates the numeric description and builds the profiles and boxes.
inline void build(ModelParams& p) {
    if (p.n < 2 || p.n > 8) throw ConfigError("n must be in [2, 8]");
    if (p.k < 1 || p.k > p.n - 1) throw ConfigError("k must be in [1, n-1]");
    p.w = make_w(p.w_scale);
    p.alpha = make_window(p.alpha_outer_lo, p.alpha_inner_lo, p.alpha_inner_hi, p.alpha_outer_hi);
    if (!(p.alpha_inner_lo <= 0.0 && p.alpha_inner_hi >= 1.0))
        throw ConfigError("alpha must be 1 on [0,1]");
    if (p.beta_kind == "monotone")
        p.beta = make_transition({p.beta_lo, p.beta_hi, Orientation::Falling});
    else if (p.beta_kind == "nonmonotone")
        p.beta = detail::make_nonmonotone_beta(p.beta_lo, p.beta_hi);
    else
        throw ConfigError("unknown beta kind: " + p.beta_kind);
    if (!(p.beta_lo > 0.0)) throw ConfigError("beta must be 1 near y = 0");
    if (!(p.delta_inner > 0.0 && p.delta_inner < p.delta_outer))
        throw ConfigError("delta: need 0 < inner < outer");
    p.delta = ProductBump(p.delta_inner, p.delta_outer);
    if (p.c <= 0.0) p.c = choose_c(p.w);
    if (!(p.r_z > 0.0)) throw ConfigError("blend radius must be positive");

    p.window = p.make_box(p.window_y, p.window_x_lo, p.window_x_hi);
    p.inner = p.make_box(p.inner_y, p.inner_x_lo, p.inner_x_hi);
    if (!(p.window_x_lo < 0.0 && p.window_x_hi > 1.0 && p.window_y > 0.0))
        throw ConfigError("W must contain gamma");
    if (!p.inner.strictly_inside(p.window)) throw ConfigError("U must lie inside W");
    if (!(p.inner_x_lo < 0.0 && p.inner_x_hi > 1.0)) throw ConfigError("gamma must lie inside U");
    // support of eta = alpha * beta * delta inside U
    if (p.alpha_outer_lo < p.inner_x_lo || p.alpha_outer_hi > p.inner_x_hi ||
        p.beta_hi > p.inner_y || p.delta_outer > p.u_halfwidth)
        throw ConfigError("support of eta must lie inside U");
}

inline ModelParams default_params(int n = 2, int k = 1) {
    ModelParams p;
    p.n = n;
    p.k = k;
    build(p);
    return p;
}

/// gamma(t) = (0, t, 0): the boundary segment from p to q.
inline ChartPoint segment_point(double t, int n = 2) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("segment_point: t must lie in [0,1]");
    return make_point(0.0, t, n);
}

}  // namespace mmerge
