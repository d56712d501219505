#pragma once
// Eigen-coordinates (s, t, u) around z in which xi_lin is diagonal.

#include <cmath>
#include <vector>

#include "fields.hpp"

namespace mmerge {

/// Frame coordinates f = scale * M^{-1} (p - z), where the columns of M are
/// v_plus, v_minus (planar) and the unit u-directions. Index 0 is s, 1 is t.
class EigenFrame {
public:
    EigenFrame() = default;
    EigenFrame(const ModelParams& P, const MergedCriticalPoint& z, double scale)
        : n_(P.n), k_(P.k), scale_(scale), z_(z.location) {
        M_ = Mat::Identity(n_, n_);
        M_.block(0, 0, 2, 1) = z.v_plus;
        M_.block(0, 1, 2, 1) = z.v_minus;
        Minv_ = M_.inverse();
        rates_ = Vec(n_);
        expanding_.assign(n_, false);
        rates_[0] = z.lambda_plus;
        expanding_[0] = true;
        rates_[1] = z.lambda_minus;
        for (int j = 1; j <= n_ - 2; ++j) {
            const bool contracting = j <= k_ - 1;
            rates_[1 + j] = contracting ? -1.0 : 1.0;
            expanding_[1 + j] = !contracting;
        }
    }

    int dim() const { return n_; }
    double scale() const { return scale_; }
    const Vec& origin() const { return z_; }
    const Vec& rates() const { return rates_; }
    bool expanding(int i) const { return expanding_[i]; }
    const Mat& basis() const { return M_; }

    Vec to_frame(const ChartPoint& p) const { return scale_ * (Minv_ * (p - z_)); }
    ChartPoint from_frame(const Vec& f) const { return z_ + (M_ * f) / scale_; }

    /// Exact flow of xi_lin in frame coordinates.
    Vec propagate_frame(const Vec& f, double time) const {
        Vec out(n_);
        for (int i = 0; i < n_; ++i) out[i] = f[i] * std::exp(rates_[i] * time);
        return out;
    }
    ChartPoint propagate(const ChartPoint& p, double time) const {
        return from_frame(propagate_frame(to_frame(p), time));
    }

    /// Squared expanding radius A^2 and contracting radius B^2.
    double a2(const Vec& f) const {
        double s = 0.0;
        for (int i = 0; i < n_; ++i)
            if (expanding_[i]) s += f[i] * f[i];
        return s;
    }
    double b2(const Vec& f) const {
        double s = 0.0;
        for (int i = 0; i < n_; ++i)
            if (!expanding_[i]) s += f[i] * f[i];
        return s;
    }

    /// Chart gradient of a function given its gradient in frame coordinates.
    Vec chart_gradient(const Vec& df) const { return scale_ * (Minv_.transpose() * df); }

    /// xi_lin pushed into frame coordinates, as a matrix.
    Mat pushforward(const Mat& jac_full) const { return Minv_ * jac_full * M_; }

private:
    int n_ = 0, k_ = 0;
    double scale_ = 1.0;
    Vec z_;
    Mat M_, Minv_;
    Vec rates_;
    std::vector<bool> expanding_;
};

}  // namespace mmerge
