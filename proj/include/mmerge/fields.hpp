#pragma once
// The model field xi, its perturbation xi_c, the linearization xi_lin at the
// merged zero z, and the blend xi' = (1 - tau) xi_c + tau xi_lin.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "model_chart.hpp"

namespace mmerge {

enum class FieldKind { Xi, XiC, XiLin, XiPrime };

inline std::string to_string(FieldKind k) {
    switch (k) {
        case FieldKind::Xi: return "xi";
        case FieldKind::XiC: return "xi_c";
        case FieldKind::XiLin: return "xi_lin";
        case FieldKind::XiPrime: return "xi_prime";
    }
    return "?";
}

/// Components along d/dy, d/dx, d/du_i.
using FieldVector = Vec;

/// xi = (y (2x - 1), w(x), -u_1..-u_{k-1}, u_k..u_{n-2}).
inline FieldVector eval_xi(const ChartPoint& p, const ModelParams& P) {
    FieldVector v(P.n);
    v[0] = p[0] * (2.0 * p[1] - 1.0);
    v[1] = P.w(p[1]);
    for (int j = 1; j <= P.n - 2; ++j) v[1 + j] = (j <= P.k - 1) ? -p[1 + j] : p[1 + j];
    return v;
}

inline double eval_eta(const ChartPoint& p, const ModelParams& P) {
    const double a = P.alpha(p[1]);
    if (a == 0.0) return 0.0;
    const double b = P.beta(p[0]);
    if (b == 0.0) return 0.0;
    return P.n > 2 ? a * b * P.delta(p.tail(P.n - 2)) : a * b;
}

/// xi_c = xi - c eta d/dx.
inline FieldVector eval_xi_c(const ChartPoint& p, const ModelParams& P) {
    FieldVector v = eval_xi(p, P);
    const double eta = eval_eta(p, P);
    if (eta != 0.0) v[1] -= P.c * eta;
    return v;
}

struct SpectrumError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MergedCriticalPoint {
    ChartPoint location;
    double residual = 0.0;  // |xi_c(z)| after Newton polish
    Eigen::Matrix2d jac2 = Eigen::Matrix2d::Zero();
    double lambda_plus = 0.0, lambda_minus = 0.0;
    Eigen::Vector2d v_plus = Eigen::Vector2d::Zero(), v_minus = Eigen::Vector2d::Zero();
    Mat jac_full;
    std::vector<double> spectrum;  // real eigenvalues of jac_full, ascending
    int index = 0;

    double y0() const { return location[0]; }
    double x0() const { return location[1]; }
};

/// y0 from beta(y0) = w(1/2) / c; x0 = 1/2 exactly, u = 0. Newton on the planar
/// part then certifies the residual.
inline MergedCriticalPoint solve_z(const ModelParams& P) {
    const double x0 = 0.5;
    const double r = P.w(x0) / P.c;
    if (!(r > 0.0 && r < 1.0))
        throw ConfigError("no interior zero: w(1/2)/c = " + std::to_string(r) +
                          " is outside (0,1)");
    double y0 = 0.0;
    if (auto inv = P.beta.monotone_inverse(r)) {
        y0 = *inv;
    } else {
        y0 = bisect([&](double y) { return P.beta(y) - r; }, 0.0, P.beta_support_end());
    }
    // Newton on (y(2x-1), w(x) - c alpha(x) beta(y)); with x = 1/2 the x-update is zero.
    double y = y0, x = x0;
    for (int it = 0; it < 8; ++it) {
        Eigen::Vector2d F(y * (2.0 * x - 1.0), P.w(x) - P.c * P.alpha(x) * P.beta(y));
        if (F.norm() <= 1e-15) break;
        Eigen::Matrix2d J;
        J << 2.0 * x - 1.0, 2.0 * y, -P.c * P.alpha(x) * P.beta.deriv(y),
            P.w.deriv(x) - P.c * P.alpha.deriv(x) * P.beta(y);
        const Eigen::Vector2d d = J.fullPivLu().solve(-F);
        if (!d.allFinite()) break;
        y += d[0];
        x += d[1];
    }
    MergedCriticalPoint z;
    z.location = make_point(y, x, P.n);
    z.residual = eval_xi_c(z.location, P).norm();
    return z;
}

/// Closed-form planar Jacobian of xi_c at z.
inline Eigen::Matrix2d jacobian2_at_z(const ModelParams& P, const ChartPoint& z) {
    const double y = z[0], x = z[1];
    Eigen::Matrix2d J;
    J << 2.0 * x - 1.0, 2.0 * y, -P.c * P.alpha(x) * P.beta.deriv(y),
        P.w.deriv(x) - P.c * P.alpha.deriv(x) * P.beta(y);
    return J;
}

/// Full Jacobian: planar block plus the diagonal -1 / +1 on the u-coordinates.
inline Mat full_jacobian(const ModelParams& P, const Eigen::Matrix2d& J2) {
    Mat J = Mat::Zero(P.n, P.n);
    J.topLeftCorner(2, 2) = J2;
    for (int j = 1; j <= P.n - 2; ++j) J(1 + j, 1 + j) = (j <= P.k - 1) ? -1.0 : 1.0;
    return J;
}

/// Fills the eigen data of z. Throws SpectrumError when det(jac2) >= 0.
inline void spectrum_at_z(const ModelParams& P, MergedCriticalPoint& z) {
    z.jac2 = jacobian2_at_z(P, z.location);
    z.jac_full = full_jacobian(P, z.jac2);
    const double tr = z.jac2.trace(), det = z.jac2.determinant();
    if (!(det < 0.0))
        throw SpectrumError("det(jac2) = " + std::to_string(det) + " is not negative");
    const double disc = std::sqrt(tr * tr - 4.0 * det);
    z.lambda_plus = 0.5 * (tr + disc);
    z.lambda_minus = 0.5 * (tr - disc);
    // (b, lambda - a) spans the kernel of J - lambda since b = 2 y0 != 0.
    const double a = z.jac2(0, 0), b = z.jac2(0, 1);
    z.v_plus = Eigen::Vector2d(b, z.lambda_plus - a).normalized();
    z.v_minus = Eigen::Vector2d(b, z.lambda_minus - a).normalized();
    z.spectrum = {z.lambda_plus, z.lambda_minus};
    for (int j = 1; j <= P.n - 2; ++j) z.spectrum.push_back((j <= P.k - 1) ? -1.0 : 1.0);
    std::sort(z.spectrum.begin(), z.spectrum.end());
    z.index = static_cast<int>(
        std::count_if(z.spectrum.begin(), z.spectrum.end(), [](double l) { return l < 0.0; }));
}

/// Real eigenvalues of a general matrix (computed numerically); empty optional if
/// any eigenvalue has an imaginary part above `imag_tol`.
inline std::optional<std::vector<double>> real_eigenvalues(const Mat& A, double imag_tol = 1e-12) {
    Eigen::MatrixXd M = A;
    Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
    std::vector<double> out;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const auto l = es.eigenvalues()[i];
        if (std::abs(l.imag()) > imag_tol * std::max(1.0, std::abs(l.real()))) return std::nullopt;
        out.push_back(l.real());
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// The model with its perturbation, merged zero and blended field.
class Model {
public:
    explicit Model(ModelParams params, std::optional<double> r_z = std::nullopt)
        : P_(std::move(params)) {
        r_z_ = r_z.value_or(P_.r_z);
        try {
            z_ = solve_z(P_);
        } catch (const ConfigError& e) {
            z_error_ = e.what();
            return;
        }
        center_ = Vec(2);
        center_ << z_->location[0], z_->location[1];
        tau_.emplace(center_, 0.5 * r_z_, r_z_);
        z_->jac2 = jacobian2_at_z(P_, z_->location);
        z_->jac_full = full_jacobian(P_, z_->jac2);
        try {
            spectrum_at_z(P_, *z_);
        } catch (const SpectrumError& e) {
            spectrum_error_ = e.what();
        }
    }

    const ModelParams& params() const { return P_; }
    int dim() const { return P_.n; }
    bool has_z() const { return z_.has_value(); }
    const MergedCriticalPoint& z() const {
        if (!z_) throw ConfigError(z_error_);
        return *z_;
    }
    const std::string& z_error() const { return z_error_; }
    const std::string& spectrum_error() const { return spectrum_error_; }
    bool spectrum_ok() const { return z_ && spectrum_error_.empty(); }
    double r_z() const { return r_z_; }
    /// tau == 1 on this (y,x)-radius around z.
    double linear_radius() const { return 0.5 * r_z_; }

    /// (y,x)-distance from z.
    double planar_distance(const ChartPoint& p) const {
        return std::hypot(p[0] - center_[0], p[1] - center_[1]);
    }
    double tau(const ChartPoint& p) const {
        if (!tau_) return 0.0;
        return tau_->of_radius(planar_distance(p));
    }

    FieldVector xi(const ChartPoint& p) const { return eval_xi(p, P_); }
    FieldVector xi_c(const ChartPoint& p) const { return eval_xi_c(p, P_); }
    FieldVector xi_lin(const ChartPoint& p) const {
        return z().jac_full * (p - z().location);
    }
    /// Equals xi_lin exactly where tau = 1 and xi_c exactly where tau = 0.
    FieldVector xi_prime(const ChartPoint& p) const {
        if (!z_) return xi_c(p);
        const double t = tau(p);
        if (t == 0.0) return xi_c(p);
        if (t == 1.0) return xi_lin(p);
        return (1.0 - t) * xi_c(p) + t * xi_lin(p);
    }

    FieldVector eval(FieldKind kind, const ChartPoint& p) const {
        switch (kind) {
            case FieldKind::Xi: return xi(p);
            case FieldKind::XiC: return xi_c(p);
            case FieldKind::XiLin: return xi_lin(p);
            case FieldKind::XiPrime: return xi_prime(p);
        }
        return xi(p);
    }

    /// Blend radius must keep the blend ball inside U.
    void check_blend_radius() const {
        if (!z_) return;
        const auto& U = P_.inner;
        const double y = z_->location[0], x = z_->location[1];
        const double d = std::min({y - U.lo[0], U.hi[0] - y, x - U.lo[1], U.hi[1] - x});
        if (!(r_z_ < d))
            throw ConfigError("blend radius " + std::to_string(r_z_) +
                              " is not below dist(z, boundary of U) = " + std::to_string(d));
        // keep the blend inside the alpha == 1 band as well
        if (x - r_z_ < P_.alpha_inner_lo || x + r_z_ > P_.alpha_inner_hi)
            throw ConfigError("blend ball leaves the alpha == 1 band");
    }

private:
    ModelParams P_;
    double r_z_ = 0.1;
    std::optional<MergedCriticalPoint> z_;
    std::string z_error_;
    std::string spectrum_error_;
    Vec center_;
    std::optional<BumpND> tau_;
};

/// max of |fa - fb|_inf over a grid_n x grid_n lattice on the planar disc of
/// radius r around `center` (u = 0).
template <class FA, class FB>
double c0_distance_generic(FA&& fa, FB&& fb, double cy, double cx, double r, int grid_n, int n) {
    double best = 0.0;
    for (int i = 0; i < grid_n; ++i) {
        for (int j = 0; j < grid_n; ++j) {
            const double dy = -r + 2.0 * r * i / (grid_n - 1);
            const double dx = -r + 2.0 * r * j / (grid_n - 1);
            if (dy * dy + dx * dx > r * r) continue;
            const ChartPoint p = make_point(cy + dy, cx + dx, n);
            best = std::max(best, (fa(p) - fb(p)).template lpNorm<Eigen::Infinity>());
        }
    }
    return best;
}

/// C0 distance between xi' (built with blend radius r_z) and xi_c over the blend ball.
inline double c0_distance(const ModelParams& P, double r_z, int grid_n) {
    Model m(P, r_z);
    const auto& z = m.z();
    return c0_distance_generic([&](const ChartPoint& p) { return m.xi_prime(p); },
                               [&](const ChartPoint& p) { return m.xi_c(p); }, z.location[0],
                               z.location[1], r_z, grid_n, P.n);
}

}  // namespace mmerge
