#pragma once
// Trajectory integration, the planar phase portrait of xi_c (nullclines,
// regions, kappa) and the empirical sweeps: dichotomy, no re-entry, single
// crossing, Lyapunov monotonicity near z.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "fields.hpp"
#include "frame.hpp"
#include "ode.hpp"
#include "parallel.hpp"

namespace mmerge {

enum class TrajClass { ConvergesToZ, LeavesW, Unresolved };

inline std::string to_string(TrajClass c) {
    switch (c) {
        case TrajClass::ConvergesToZ: return "converges_to_z";
        case TrajClass::LeavesW: return "leaves_w";
        case TrajClass::Unresolved: return "unresolved";
    }
    return "?";
}

struct Trajectory {
    std::vector<double> t;
    std::vector<ChartPoint> p;
    TrajClass cls = TrajClass::Unresolved;
    Face exit_face;
    double exit_time = 0.0;
    ChartPoint exit_point;
    bool backward = false;
    bool stopped = false;  // stop_when fired; the last sample is the stop point
};

struct IntegrateOptions {
    double T_max = 200.0;
    double tol = 1e-9;
    bool backward = false;
    std::optional<Box> box;  // defaults to W
    bool detect_convergence = true;
    double r_converge = 1e-3;
    double v_converge_factor = 1e-3;  // times |jac_full|
    double max_step_length = 0.05;
    std::function<double(const Vec&)> step_cap;  // overrides max_step_length
    std::function<bool(const Vec&)> stop_when;    // checked on accepted samples
    bool record = true;
};

namespace detail {

inline double operator_norm(const Mat& A) {
    Eigen::MatrixXd M = A;
    return Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()[0];
}

inline void clamp_boundary(Vec& y) {
    if (y[0] < 0.0 && y[0] > -1e-14) y[0] = 0.0;
}

}  // namespace detail

/// Integrates the chosen field from `start` until it leaves the box (exit point
/// bisected to 1e-9 face residual), converges to z, or reaches T_max.
inline Trajectory integrate(const Model& m, FieldKind kind, const ChartPoint& start,
                            const IntegrateOptions& opt = {}) {
    const Box box = opt.box.value_or(m.params().window);
    const double sign = opt.backward ? -1.0 : 1.0;
    Dopri5 dp([&m, kind, sign](const Vec& y) -> Vec { return sign * m.eval(kind, y); });

    Trajectory tr;
    tr.backward = opt.backward;
    tr.t.push_back(0.0);
    tr.p.push_back(start);
    if (!box.contains(start)) {
        tr.cls = TrajClass::LeavesW;
        tr.exit_point = start;
        return tr;
    }
    const bool conv = opt.detect_convergence && m.has_z() && kind != FieldKind::Xi;
    const double v_conv = conv ? opt.v_converge_factor * detail::operator_norm(m.z().jac_full) : 0.0;
    auto converged = [&](const Vec& y) {
        if (!conv) return false;
        return (y - m.z().location).norm() <= opt.r_converge && m.eval(kind, y).norm() <= v_conv;
    };
    if (converged(start)) {
        tr.cls = TrajClass::ConvergesToZ;
        return tr;
    }

    OdeOptions oo;
    oo.tol = opt.tol;
    auto max_len = [&](const Vec& y) {
        return opt.step_cap ? opt.step_cap(y) : opt.max_step_length;
    };
    auto observer = [&](AcceptedStep& st, const auto& stepper) {
        detail::clamp_boundary(st.y1);
        if (!box.contains(st.y1)) {
            double lo = 0.0, hi = 1.0;
            Vec ylo = st.y0, yhi = st.y1;
            for (int it = 0; it < 80 && (yhi - ylo).norm() > 1e-11; ++it) {
                const double mid = 0.5 * (lo + hi);
                Vec ym = stepper.advance(st.y0, st.k0, mid * st.h);
                detail::clamp_boundary(ym);
                if (box.contains(ym)) {
                    lo = mid;
                    ylo = ym;
                } else {
                    hi = mid;
                    yhi = ym;
                }
            }
            const auto cross = exit_face(box, ylo, yhi);
            tr.cls = TrajClass::LeavesW;
            tr.exit_face = cross.face;
            tr.exit_point = cross.point;
            tr.exit_time = sign * (st.t0 + (lo + cross.fraction * (hi - lo)) * st.h);
            tr.t.push_back(sign * (st.t0 + hi * st.h));
            tr.p.push_back(yhi);
            return true;
        }
        if (opt.record) {
            tr.t.push_back(sign * st.t1);
            tr.p.push_back(st.y1);
        }
        if (opt.stop_when && opt.stop_when(st.y1)) {
            tr.stopped = true;
            if (!opt.record) {
                tr.t.push_back(sign * st.t1);
                tr.p.push_back(st.y1);
            }
            return true;
        }
        if (converged(st.y1)) {
            tr.cls = TrajClass::ConvergesToZ;
            if (!opt.record) {
                tr.t.push_back(sign * st.t1);
                tr.p.push_back(st.y1);
            }
            return true;
        }
        return false;
    };
    const double t_end = integrate_adaptive(dp, start, opt.T_max, oo, max_len, observer);
    if (tr.cls == TrajClass::Unresolved && !opt.record) {
        tr.t.push_back(sign * t_end);
    }
    return tr;
}

/// Time-T flow map of the chosen field (T < 0 flows backward). Uses the exact
/// linear flow when xi' stays inside its linear zone.
inline ChartPoint flow_map(const Model& m, FieldKind kind, const ChartPoint& p, double T,
                           double tol = 1e-12, const EigenFrame* frame = nullptr) {
    if (T == 0.0) return p;
    if (frame && m.has_z() &&
        (kind == FieldKind::XiLin ||
         (kind == FieldKind::XiPrime && m.planar_distance(p) < m.linear_radius()))) {
        ChartPoint q = frame->propagate(p, T);
        if (kind == FieldKind::XiLin || m.planar_distance(q) < m.linear_radius()) return q;
    }
    const double sign = T < 0.0 ? -1.0 : 1.0;
    Dopri5 dp([&m, kind, sign](const Vec& y) -> Vec { return sign * m.eval(kind, y); });
    OdeOptions oo;
    oo.tol = tol;
    oo.h_init = std::min(1e-2, std::abs(T));
    ChartPoint out = p;
    integrate_adaptive(
        dp, p, std::abs(T), oo, [](const Vec&) { return 0.05; },
        [&](AcceptedStep& st, const auto&) {
            out = st.y1;
            return false;
        });
    return out;
}

// ---------------------------------------------------------------------------
// Planar phase portrait of xi_c (u projected out, delta = 1).

enum class Region { Omega1, Omega2, Omega3, Omega4, OnNullcline };

inline std::string to_string(Region r) {
    switch (r) {
        case Region::Omega1: return "Omega1";
        case Region::Omega2: return "Omega2";
        case Region::Omega3: return "Omega3";
        case Region::Omega4: return "Omega4";
        case Region::OnNullcline: return "nullcline";
    }
    return "?";
}

inline double planar_xc_x(const ModelParams& P, double y, double x) {
    return P.w(x) - P.c * P.alpha(x) * P.beta(y);
}
inline double planar_xc_y(double y, double x) { return y * (2.0 * x - 1.0); }

/// Omega1: dx>0, dy>0 (x > 1/2, above kappa). Omega2: dx<0, dy>0 (x > 1/2, below
/// kappa). Omega3: dx<0, dy<0 (x < 1/2, below). Omega4: dx>0, dy<0 (x < 1/2, above).
inline Region classify_region(const ModelParams& P, const ChartPoint& p) {
    const double dx = planar_xc_x(P, p[0], p[1]);
    const double dy = planar_xc_y(p[0], p[1]);
    if (std::abs(dx) <= 1e-10 || std::abs(dy) <= 1e-10) return Region::OnNullcline;
    if (dy > 0.0) return dx > 0.0 ? Region::Omega1 : Region::Omega2;
    return dx < 0.0 ? Region::Omega3 : Region::Omega4;
}

struct KappaValue {
    double value;
    double deriv;
};

/// kappa(x) = beta^{-1}(w(x) / (c alpha(x))): the graph part of the x-nullcline.
inline std::optional<KappaValue> kappa(double x, const ModelParams& P) {
    const double a = P.alpha(x);
    if (a <= 0.0) return std::nullopt;
    const double ratio = P.w(x) / (P.c * a);
    if (!(ratio > 0.0 && ratio < 1.0)) return std::nullopt;
    double y;
    if (auto inv = P.beta.monotone_inverse(ratio))
        y = *inv;
    else
        y = bisect([&](double yy) { return P.beta(yy) - ratio; }, 0.0, P.beta_support_end());
    const double dratio = (P.w.deriv(x) * a - P.w(x) * P.alpha.deriv(x)) / (P.c * a * a);
    return KappaValue{y, dratio / P.beta.deriv(y)};
}

struct Nullclines {
    std::vector<Eigen::Vector2d> gamma_y;        // (y, x) on {x = 1/2} and {y = 0}
    std::vector<Eigen::Vector2d> gamma_x_kappa;  // (kappa(x), x)
    std::vector<Eigen::Vector2d> gamma_x_0;      // (y, x) with x in {0,1}, beta(y) = 0
};

inline Nullclines make_nullclines(const ModelParams& P, int samples = 500) {
    Nullclines nc;
    const double ymax = P.window.hi[0];
    const double xlo = P.window.lo[1], xhi = P.window.hi[1];
    for (int i = 0; i < samples; ++i) {
        const double s = static_cast<double>(i) / (samples - 1);
        nc.gamma_y.emplace_back(s * ymax, 0.5);
        nc.gamma_y.emplace_back(0.0, xlo + s * (xhi - xlo));
        const double x = 0.01 + 0.98 * s;
        if (auto k = kappa(x, P)) nc.gamma_x_kappa.emplace_back(k->value, x);
        const double y = P.beta_support_end() + s * (ymax - P.beta_support_end());
        nc.gamma_x_0.emplace_back(y, 0.0);
        nc.gamma_x_0.emplace_back(y, 1.0);
    }
    return nc;
}

struct CrossingCounts {
    int gamma_x_kappa = 0;
    int gamma_y = 0;  // {x = 1/2} away from y = 0
};

/// Sign changes of (y - kappa(x)) while x stays in (0,1), and of (x - 1/2) while y > 0.
/// With `slab_only`, samples with some |u_i| above the inner radius of delta are
/// skipped and reset the count; inside that slab the dynamics are the planar ones.
inline CrossingCounts crossing_counts(const Trajectory& tr, const ModelParams& P,
                                      bool slab_only = false) {
    CrossingCounts c;
    int prev_k = 0, prev_y = 0;
    for (const auto& p : tr.p) {
        if (slab_only && P.n > 2 && p.tail(P.n - 2).cwiseAbs().maxCoeff() > P.delta_inner) {
            prev_k = prev_y = 0;
            continue;
        }
        const double y = p[0], x = p[1];
        int sk = 0;
        if (x > 0.0 && x < 1.0) {
            const double dx = planar_xc_x(P, y, x);  // sign(dx) == sign(y - kappa(x))
            sk = dx > 0.0 ? 1 : (dx < 0.0 ? -1 : 0);
        }
        if (sk != 0 && prev_k != 0 && sk != prev_k) ++c.gamma_x_kappa;
        prev_k = sk;
        int sy = 0;
        if (y > 0.0) sy = x > 0.5 ? 1 : (x < 0.5 ? -1 : 0);
        if (sy != 0 && prev_y != 0 && sy != prev_y) ++c.gamma_y;
        if (sy != 0) prev_y = sy;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Sweeps.

inline ChartPoint uniform_in(const Box& b, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    ChartPoint p(b.dim());
    for (int i = 0; i < b.dim(); ++i) p[i] = b.lo[i] + U(rng) * (b.hi[i] - b.lo[i]);
    return p;
}

struct SweepResult {
    int converges = 0;
    int leaves = 0;
    int unresolved = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<std::uint64_t> unresolved_seeds;
    std::vector<ChartPoint> starts;
    std::vector<Trajectory> trajectories;
};

/// N uniform starts in W integrated under xi' (forward or backward).
inline SweepResult dichotomy_sweep(const Model& m, int N, double T_max, std::uint64_t seed,
                                   bool backward = false, int threads = 1, double tol = 1e-9) {
    SweepResult r;
    r.trajectories.resize(N);
    r.starts.resize(N);
    r.seeds.resize(N);
    parallel_for(N, threads, [&](std::size_t i) {
        const std::uint64_t s = seed + i;
        r.seeds[i] = s;
        r.starts[i] = uniform_in(m.params().window, s);
        IntegrateOptions o;
        o.T_max = T_max;
        o.backward = backward;
        o.tol = tol;
        r.trajectories[i] = integrate(m, FieldKind::XiPrime, r.starts[i], o);
    });
    for (int i = 0; i < N; ++i) {
        switch (r.trajectories[i].cls) {
            case TrajClass::ConvergesToZ: ++r.converges; break;
            case TrajClass::LeavesW: ++r.leaves; break;
            case TrajClass::Unresolved:
                ++r.unresolved;
                r.unresolved_seeds.push_back(r.seeds[i]);
                break;
        }
    }
    return r;
}

struct ReentryResult {
    int checked = 0;
    int reentries = 0;
    std::vector<std::uint64_t> offending_seeds;
};

/// Continues each exited trajectory whose path met U for T_extra inside W
/// extended by 50%, and counts the ones that come back into U.
inline ReentryResult reentry_check(const Model& m, const SweepResult& sweep, double T_extra,
                                   int threads = 1) {
    const Box& U = m.params().inner;
    const Box ext = m.params().window.extended(0.5);
    const std::size_t N = sweep.trajectories.size();
    std::vector<int> state(N, 0);  // 0 skipped, 1 ok, 2 re-entered
    parallel_for(N, threads, [&](std::size_t i) {
        const auto& tr = sweep.trajectories[i];
        if (tr.cls != TrajClass::LeavesW) return;
        bool met = false;
        for (const auto& p : tr.p)
            if (U.contains(p)) {
                met = true;
                break;
            }
        if (!met) return;
        IntegrateOptions o;
        o.T_max = T_extra;
        o.box = ext;
        o.detect_convergence = false;
        o.backward = tr.backward;
        o.max_step_length = 0.02;
        const auto cont = integrate(m, FieldKind::XiPrime, tr.exit_point, o);
        state[i] = 1;
        for (std::size_t j = 1; j < cont.p.size(); ++j)
            if (U.contains(cont.p[j])) {
                state[i] = 2;
                break;
            }
    });
    ReentryResult r;
    for (std::size_t i = 0; i < N; ++i) {
        if (state[i] != 0) ++r.checked;
        if (state[i] == 2) {
            ++r.reentries;
            r.offending_seeds.push_back(sweep.seeds[i]);
        }
    }
    return r;
}

/// Smallest finite-difference slope of 1/2 (s^2 - t^2) (planar eigen-coordinates)
/// over consecutive forward samples that both lie in the linear zone. +inf if none.
inline double lyapunov_min_slope(const Model& m, const EigenFrame& frame, const Trajectory& tr) {
    double best = std::numeric_limits<double>::infinity();
    auto g = [&](const ChartPoint& p) {
        const Vec f = frame.to_frame(p) / frame.scale();
        return 0.5 * (f[0] * f[0] - f[1] * f[1]);
    };
    for (std::size_t i = 1; i < tr.p.size(); ++i) {
        if (m.planar_distance(tr.p[i - 1]) >= m.linear_radius() ||
            m.planar_distance(tr.p[i]) >= m.linear_radius())
            continue;
        const double dt = tr.t[i] - tr.t[i - 1];
        if (dt <= 0.0) continue;
        best = std::min(best, (g(tr.p[i]) - g(tr.p[i - 1])) / dt);
    }
    return best;
}

}  // namespace mmerge
