#pragma once
// Dormand-Prince 5(4) for autonomous systems, with FSAL and a step observer
// that may stop the integration or re-take partial steps for event location.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "scalar_kit.hpp"

namespace mmerge {

struct StepUnderflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OdeOptions {
    double tol = 1e-9;  // used as both absolute and relative tolerance
    double h_init = 1e-2;
    double h_min = 1e-14;
    double h_max = 0.25;
};

template <class Rhs>
class Dopri5 {
public:
    explicit Dopri5(Rhs rhs) : rhs_(std::move(rhs)) {}

    Vec rhs(const Vec& y) const { return rhs_(y); }

    /// One step of size h from y with k1 = rhs(y). Outputs the 5th-order
    /// solution, rhs at it (FSAL) and the embedded error estimate.
    void step(const Vec& y, const Vec& k1, double h, Vec& y5, Vec& k7, Vec& err) const {
        const Vec k2 = rhs_(y + h * (1.0 / 5.0) * k1);
        const Vec k3 = rhs_(y + h * ((3.0 / 40.0) * k1 + (9.0 / 40.0) * k2));
        const Vec k4 = rhs_(y + h * ((44.0 / 45.0) * k1 - (56.0 / 15.0) * k2 + (32.0 / 9.0) * k3));
        const Vec k5 = rhs_(y + h * ((19372.0 / 6561.0) * k1 - (25360.0 / 2187.0) * k2 +
                                     (64448.0 / 6561.0) * k3 - (212.0 / 729.0) * k4));
        const Vec k6 = rhs_(y + h * ((9017.0 / 3168.0) * k1 - (355.0 / 33.0) * k2 +
                                     (46732.0 / 5247.0) * k3 + (49.0 / 176.0) * k4 -
                                     (5103.0 / 18656.0) * k5));
        y5 = y + h * ((35.0 / 384.0) * k1 + (500.0 / 1113.0) * k3 + (125.0 / 192.0) * k4 -
                      (2187.0 / 6784.0) * k5 + (11.0 / 84.0) * k6);
        k7 = rhs_(y5);
        err = h * ((35.0 / 384.0 - 5179.0 / 57600.0) * k1 +
                   (500.0 / 1113.0 - 7571.0 / 16695.0) * k3 +
                   (125.0 / 192.0 - 393.0 / 640.0) * k4 +
                   (-2187.0 / 6784.0 + 92097.0 / 339200.0) * k5 +
                   (11.0 / 84.0 - 187.0 / 2100.0) * k6 + (-1.0 / 40.0) * k7);
    }

    /// Solution after a partial step of size h from y (k1 = rhs(y)).
    Vec advance(const Vec& y, const Vec& k1, double h) const {
        Vec y5, k7, err;
        step(y, k1, h, y5, k7, err);
        return y5;
    }

private:
    Rhs rhs_;
};

/// Information handed to the observer after every accepted step.
struct AcceptedStep {
    double t0;
    const Vec& y0;
    const Vec& k0;  // rhs(y0)
    double h;
    double t1;
    Vec& y1;  // may be modified (e.g. clamping); rhs is re-evaluated if so
};

/// Adaptive integration from t = 0 to t_end (> 0). `max_len(y)` caps the step
/// length |h * rhs(y)|; `observer(step, stepper)` returns true to stop.
/// Returns the final time reached.
template <class Rhs, class MaxLen, class Observer>
double integrate_adaptive(const Dopri5<Rhs>& dp, Vec y, double t_end, const OdeOptions& opt,
                          MaxLen&& max_len, Observer&& observer) {
    double t = 0.0;
    double h = opt.h_init;
    Vec k1 = dp.rhs(y);
    Vec y5, k7, err;
    while (t < t_end) {
        const double speed = k1.norm();
        double h_cap = opt.h_max;
        if (speed > 0.0) h_cap = std::min(h_cap, max_len(y) / speed);
        h = std::min({h, h_cap, t_end - t});
        bool accepted = false;
        while (!accepted) {
            if (h < opt.h_min) throw StepUnderflow("step size underflow");
            dp.step(y, k1, h, y5, k7, err);
            double en = 0.0;
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                const double sc = opt.tol + opt.tol * std::max(std::abs(y[i]), std::abs(y5[i]));
                en = std::max(en, std::abs(err[i]) / sc);
            }
            if (!std::isfinite(en)) {
                h *= 0.25;
                continue;
            }
            if (en <= 1.0) {
                accepted = true;
                const double t1 = (t_end - t - h <= 1e-15 * std::max(1.0, t_end)) ? t_end : t + h;
                Vec y1 = y5;
                AcceptedStep st{t, y, k1, h, t1, y1};
                const bool stop = observer(st, dp);
                const bool changed = (y1 != y5);
                y = y1;
                k1 = changed ? dp.rhs(y) : k7;
                t = t1;
                const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
                h *= fac;
                if (stop) return t;
            } else {
                h *= std::clamp(0.9 * std::pow(en, -0.2), 0.1, 0.9);
            }
        }
    }
    return t;
}

/// Fixed-step integration to time T with n_steps equal steps.
template <class Rhs>
Vec integrate_fixed(const Dopri5<Rhs>& dp, Vec y, double T, int n_steps) {
    const double h = T / n_steps;
    for (int i = 0; i < n_steps; ++i) y = dp.advance(y, dp.rhs(y), h);
    return y;
}

}  // namespace mmerge
