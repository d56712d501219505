#pragma once
// One-dimensional smooth profiles: transitions, windows, the height function w,
// and radial / per-coordinate bumps built from the exp(-1/t) mollifier.

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

namespace mmerge {

/// Fixed-capacity vector type used everywhere for chart data (n <= 8).
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 8, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 8, 8>;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

// sigma(t) = psi(t) / (psi(t) + psi(1-t)), psi(t) = exp(-1/t) for t > 0.
// Written as 1 / (1 + exp(1/t - 1/(1-t))) which is stable near both ends.
inline double sigma(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double e = std::exp(1.0 / t - 1.0 / (1.0 - t));
    return 1.0 / (1.0 + e);
}

inline double sigma_deriv(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    const double s = sigma(t);
    const double u = 1.0 - t;
    return s * (1.0 - s) * (1.0 / (t * t) + 1.0 / (u * u));
}

}  // namespace detail

/// Bisection for a root of a continuous f with f(lo), f(hi) of opposite sign.
template <class F>
double bisect(F&& f, double lo, double hi, double xtol = 1e-12, int max_iter = 200) {
    double flo = f(lo);
    if (flo == 0.0) return lo;
    for (int it = 0; it < max_iter && hi - lo > xtol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Golden-section maximization of a unimodal f on [lo, hi].
template <class F>
double golden_max(F&& f, double lo, double hi, double xtol = 1e-12) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > xtol) {
        if (fc > fd) {
            b = d; d = c; fd = fc;
            c = b - g * (b - a); fc = f(c);
        } else {
            a = c; c = d; fc = fd;
            d = a + g * (b - a); fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

/// A smooth scalar profile with its exact derivative and, when the profile is
/// strictly monotone on a transition band, a partial inverse on that band.
class SmoothScalar1D {
public:
    using Fn = std::function<double(double)>;
    using Inv = std::function<std::optional<double>(double)>;

    SmoothScalar1D() = default;
    SmoothScalar1D(Fn eval, Fn deriv, Inv inverse = {})
        : eval_(std::move(eval)), deriv_(std::move(deriv)), inverse_(std::move(inverse)) {}

    double operator()(double x) const { return eval_(x); }
    double eval(double x) const { return eval_(x); }
    double deriv(double x) const { return deriv_(x); }
    bool has_inverse() const { return static_cast<bool>(inverse_); }
    std::optional<double> monotone_inverse(double r) const {
        if (!inverse_) return std::nullopt;
        return inverse_(r);
    }

private:
    Fn eval_;
    Fn deriv_;
    Inv inverse_;
};

enum class Orientation { Rising, Falling };

struct TransitionProfile {
    double lo = 0.0;  // end of the first plateau
    double hi = 1.0;  // start of the second plateau
    Orientation orientation = Orientation::Rising;
};

/// Rising: 0 for x <= lo, 1 for x >= hi. Falling: the mirror image.
/// The inverse is defined on the open range (0, 1) and bisects to 1e-12.
inline SmoothScalar1D make_transition(TransitionProfile prof) {
    if (!(prof.lo < prof.hi)) throw ConfigError("transition: lo must be < hi");
    const double lo = prof.lo, hi = prof.hi, w = hi - lo;
    if (prof.orientation == Orientation::Rising) {
        return SmoothScalar1D(
            [=](double x) { return detail::sigma((x - lo) / w); },
            [=](double x) { return detail::sigma_deriv((x - lo) / w) / w; },
            [=](double r) -> std::optional<double> {
                if (!(r > 0.0 && r < 1.0)) return std::nullopt;
                return bisect([&](double x) { return detail::sigma((x - lo) / w) - r; }, lo, hi,
                              1e-12, 60);
            });
    }
    return SmoothScalar1D(
        [=](double x) { return detail::sigma((hi - x) / w); },
        [=](double x) { return -detail::sigma_deriv((hi - x) / w) / w; },
        [=](double r) -> std::optional<double> {
            if (!(r > 0.0 && r < 1.0)) return std::nullopt;
            return bisect([&](double x) { return detail::sigma((hi - x) / w) - r; }, lo, hi, 1e-12,
                          60);
        });
}

/// Window: 0 below outer_lo, rises to 1 on [outer_lo, inner_lo], 1 on
/// [inner_lo, inner_hi], falls to 0 on [inner_hi, outer_hi].
inline SmoothScalar1D make_window(double outer_lo, double inner_lo, double inner_hi,
                                  double outer_hi) {
    if (!(outer_lo < inner_lo && inner_lo <= inner_hi && inner_hi < outer_hi))
        throw ConfigError("window: need outer_lo < inner_lo <= inner_hi < outer_hi");
    auto up = make_transition({outer_lo, inner_lo, Orientation::Rising});
    auto down = make_transition({inner_hi, outer_hi, Orientation::Falling});
    return SmoothScalar1D([=](double x) { return up(x) * down(x); },
                          [=](double x) { return up.deriv(x) * down(x) + up(x) * down.deriv(x); });
}

/// w(x) = scale * x (1 - x): positive on (0,1), negative off [0,1].
inline SmoothScalar1D make_w(double scale = 1.0) {
    if (!(scale > 0.0)) throw ConfigError("w: scale must be positive");
    return SmoothScalar1D([=](double x) { return scale * x * (1.0 - x); },
                          [=](double x) { return scale * (1.0 - 2.0 * x); });
}

/// Radial bump in R^m: 1 for |p - center| <= inner, 0 for >= outer.
class BumpND {
public:
    BumpND(Vec center, double inner, double outer) : center_(std::move(center)) {
        if (!(inner > 0.0 && inner < outer)) throw ConfigError("bump: need 0 < inner < outer");
        profile_ = make_transition({inner, outer, Orientation::Falling});
        inner_ = inner;
        outer_ = outer;
    }
    double operator()(const Vec& p) const { return profile_((p - center_).norm()); }
    double of_radius(double r) const { return profile_(r); }
    const Vec& center() const { return center_; }
    double inner() const { return inner_; }
    double outer() const { return outer_; }

private:
    Vec center_;
    SmoothScalar1D profile_;
    double inner_ = 0.0, outer_ = 0.0;
};

inline BumpND make_bump_nd(const Vec& center, double inner_radius, double outer_radius) {
    return BumpND(center, inner_radius, outer_radius);
}

/// Product of per-coordinate bumps in |u_i|: used for delta(u).
class ProductBump {
public:
    ProductBump() : ProductBump(0.5, 1.0) {}
    ProductBump(double inner, double outer)
        : profile_(make_transition({inner, outer, Orientation::Falling})) {
        if (!(inner > 0.0)) throw ConfigError("product bump: inner radius must be positive");
    }
    template <class Derived>
    double operator()(const Eigen::MatrixBase<Derived>& u) const {
        double v = 1.0;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            v *= profile_(std::abs(u[i]));
            if (v == 0.0) break;
        }
        return v;
    }

private:
    SmoothScalar1D profile_;
};

}  // namespace mmerge
