#pragma once
// Critical-point census, boundary classification, gradient-like checks and
// the merge report that strings all of them together.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fields.hpp"
#include "flow.hpp"
#include "reconstruct.hpp"

namespace mmerge {

using Json = nlohmann::ordered_json;

enum class CriticalKind { Interior, BoundaryStable, BoundaryUnstable };

inline std::string to_string(CriticalKind k) {
    switch (k) {
        case CriticalKind::Interior: return "interior";
        case CriticalKind::BoundaryStable: return "boundary_stable";
        case CriticalKind::BoundaryUnstable: return "boundary_unstable";
    }
    return "?";
}

struct CriticalRecord {
    ChartPoint location;
    CriticalKind kind = CriticalKind::Interior;
    int index = -1;
    std::vector<double> eigenvalues;
    double residual = 0.0;
    bool degenerate = false;
    int epsilon = 0;  // sign of the y-normal Hessian entry at boundary points
};

struct CensusResult {
    std::vector<CriticalRecord> zeros;
    std::vector<ChartPoint> suspects;  // candidates where Newton did not converge
    std::vector<ChartPoint> nonzero_minima;  // Newton stalled at a nonzero residual
    double min_stalled_residual = std::numeric_limits<double>::infinity();
    int candidates = 0;
};

using FieldFn = std::function<Vec(const ChartPoint&)>;

namespace detail {

inline Mat fd_jacobian(const FieldFn& F, const ChartPoint& p, double h = 1e-7) {
    const int n = static_cast<int>(p.size());
    Mat J(n, n);
    for (int j = 0; j < n; ++j) {
        ChartPoint a = p, b = p;
        a[j] += h;
        b[j] -= h;
        J.col(j) = (F(a) - F(b)) / (2.0 * h);
    }
    return J;
}

// Stalled: the line search cannot reduce a nonzero residual (a local minimum
// of |F| that is not a zero). Failed: no convergence within the iteration budget.
enum class NewtonStatus { Converged, Left, Stalled, Failed };

/// Damped Newton for F = 0; `fixed_y` keeps coordinate 0 pinned at 0.
inline NewtonStatus newton(const FieldFn& F, ChartPoint& p, const Box& region, bool fixed_y,
                           double tol = 1e-12) {
    const int n = static_cast<int>(p.size());
    const int off = fixed_y ? 1 : 0;
    const Box loose = region.extended(0.02);
    auto residual = [&](const ChartPoint& q) { return F(q).tail(n - off).norm(); };
    double r = residual(p);
    for (int it = 0; it < 60; ++it) {
        if (r <= tol) return NewtonStatus::Converged;
        Mat J = fd_jacobian(F, p);
        Eigen::MatrixXd Js = J.bottomRightCorner(n - off, n - off);
        Eigen::VectorXd Fv = F(p).tail(n - off);
        Eigen::VectorXd d = Js.fullPivLu().solve(-Fv);
        if (!d.allFinite()) return NewtonStatus::Stalled;
        double lam = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 30; ++ls) {
            ChartPoint q = p;
            for (int i = 0; i < n - off; ++i) q[off + i] += lam * d[i];
            const double rq = residual(q);
            if (rq < r) {
                p = q;
                r = rq;
                improved = true;
                break;
            }
            lam *= 0.5;
        }
        if (!improved) return r <= 1e-10 ? NewtonStatus::Converged : NewtonStatus::Stalled;
        if (!loose.contains(p) && !(p[0] < 0.0 && p[0] > -1e-9 && [&] {
                ChartPoint c = p;
                c[0] = 0.0;
                return loose.contains(c);
            }()))
            return NewtonStatus::Left;
    }
    return r <= 1e-10 ? NewtonStatus::Converged : NewtonStatus::Failed;
}

inline int default_grid(int dims) {
    switch (dims) {
        case 1: return 401;
        case 2: return 201;
        case 3: return 41;
        case 4: return 21;
        default: return 13;
    }
}

}  // namespace detail

/// Grid scan of |F| for local minima below a spacing-scaled threshold, then
/// Newton refinement and deduplication at 1e-6. With `boundary_slice`, only
/// the tangential components are used on the face y = 0.
inline CensusResult census(const FieldFn& F, const Box& region, bool boundary_slice = false,
                           int grid_n = 0) {
    const int n = region.dim();
    const int off = boundary_slice ? 1 : 0;
    const int dims = n - off;
    if (grid_n <= 0) grid_n = detail::default_grid(dims);
    std::vector<double> step(dims);
    double hmax = 0.0;
    for (int d = 0; d < dims; ++d) {
        step[d] = (region.hi[off + d] - region.lo[off + d]) / (grid_n - 1);
        hmax = std::max(hmax, step[d]);
    }
    std::size_t total = 1;
    for (int d = 0; d < dims; ++d) total *= grid_n;
    std::vector<double> val(total);
    auto point_of = [&](std::size_t idx) {
        ChartPoint p = ChartPoint::Zero(n);
        for (int d = 0; d < dims; ++d) {
            p[off + d] = region.lo[off + d] + static_cast<double>(idx % grid_n) * step[d];
            idx /= grid_n;
        }
        return p;
    };
    for (std::size_t i = 0; i < total; ++i) val[i] = F(point_of(i)).tail(dims).norm();
    const double threshold = 3.0 * hmax * std::sqrt(static_cast<double>(dims));

    CensusResult out;
    std::size_t stride = 1;
    std::vector<std::size_t> strides(dims);
    for (int d = 0; d < dims; ++d) {
        strides[d] = stride;
        stride *= grid_n;
    }
    for (std::size_t i = 0; i < total; ++i) {
        if (val[i] > threshold) continue;
        bool is_min = true;
        for (int d = 0; d < dims && is_min; ++d) {
            const std::size_t c = (i / strides[d]) % grid_n;
            if (c > 0 && val[i - strides[d]] < val[i]) is_min = false;
            if (c + 1 < static_cast<std::size_t>(grid_n) && val[i + strides[d]] < val[i]) is_min = false;
        }
        if (!is_min) continue;
        ++out.candidates;
        ChartPoint p = point_of(i);
        const auto st = detail::newton(F, p, region, boundary_slice);
        if (st == detail::NewtonStatus::Left) continue;
        if (st == detail::NewtonStatus::Stalled) {
            out.nonzero_minima.push_back(p);
            out.min_stalled_residual = std::min(out.min_stalled_residual, F(p).tail(dims).norm());
            continue;
        }
        if (st == detail::NewtonStatus::Failed) {
            out.suspects.push_back(p);
            continue;
        }
        if (p[0] < 0.0 && p[0] > -1e-9) p[0] = 0.0;
        if (!region.contains(p)) continue;
        bool dup = false;
        for (const auto& r : out.zeros)
            if ((r.location - p).norm() < 1e-6) dup = true;
        if (dup) continue;
        CriticalRecord rec;
        rec.location = p;
        rec.residual = F(p).tail(dims).norm();
        rec.kind = p[0] == 0.0 ? CriticalKind::BoundaryStable : CriticalKind::Interior;
        out.zeros.push_back(rec);
    }
    std::sort(out.zeros.begin(), out.zeros.end(), [](const CriticalRecord& a, const CriticalRecord& b) {
        for (int i = 0; i < a.location.size(); ++i)
            if (a.location[i] != b.location[i]) return a.location[i] < b.location[i];
        return false;
    });
    return out;
}

inline CensusResult census(const Model& m, FieldKind kind, const Box& region,
                           bool boundary_slice = false, int grid_n = 0) {
    return census([&](const ChartPoint& p) { return m.eval(kind, p); }, region, boundary_slice, grid_n);
}

using ScalarFn = std::function<double(const ChartPoint&)>;

/// Central-difference Hessian with one Richardson step (h and h/2).
inline Mat hessian_fd(const ScalarFn& f, const ChartPoint& p, double h = 1e-3) {
    const int n = static_cast<int>(p.size());
    auto H_at = [&](double s) {
        Mat H(n, n);
        const double f0 = f(p);
        for (int i = 0; i < n; ++i) {
            ChartPoint a = p, b = p;
            a[i] += s;
            b[i] -= s;
            H(i, i) = (f(a) - 2.0 * f0 + f(b)) / (s * s);
            for (int j = i + 1; j < n; ++j) {
                ChartPoint pp = p, pm = p, mp = p, mm = p;
                pp[i] += s; pp[j] += s;
                pm[i] += s; pm[j] -= s;
                mp[i] -= s; mp[j] += s;
                mm[i] -= s; mm[j] -= s;
                H(i, j) = H(j, i) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * s * s);
            }
        }
        return H;
    };
    const Mat H1 = H_at(h), H2 = H_at(0.5 * h);
    return (4.0 * H2 - H1) / 3.0;
}

/// Kind and index of a critical point of f: epsilon from the y-normal entry at
/// boundary points, index = number of negative Hessian eigenvalues.
inline CriticalRecord classify_critical(CriticalRecord rec, const ScalarFn& f, double h = 1e-3) {
    const Mat H = hessian_fd(f, rec.location, h);
    Eigen::MatrixXd Hs = 0.5 * (H + H.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hs);
    rec.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
    rec.index = 0;
    rec.degenerate = false;
    for (double l : rec.eigenvalues) {
        if (l < 0.0) ++rec.index;
        if (std::abs(l) < 1e-6 * norm) rec.degenerate = true;
    }
    if (rec.location[0] == 0.0) {
        rec.epsilon = H(0, 0) > 0.0 ? 1 : -1;
        rec.kind = rec.epsilon < 0 ? CriticalKind::BoundaryStable : CriticalKind::BoundaryUnstable;
    } else {
        rec.epsilon = 0;
        rec.kind = CriticalKind::Interior;
    }
    return rec;
}

/// Boundary Morse models of the two critical points of xi: p (stable) and q (unstable).
inline double model_function_p(const ChartPoint& v, int k) {
    double s = -v[0] * v[0] + v[1] * v[1];
    for (int j = 1; j + 1 < v.size(); ++j) s += (j <= k - 1 ? -1.0 : 1.0) * v[1 + j] * v[1 + j];
    return s;
}
inline double model_function_q(const ChartPoint& v, int k) {
    double s = v[0] * v[0] - (v[1] - 1.0) * (v[1] - 1.0);
    for (int j = 1; j + 1 < v.size(); ++j) s += (j <= k - 1 ? -1.0 : 1.0) * v[1 + j] * v[1 + j];
    return s;
}

// ---------------------------------------------------------------------------

struct GradientLikeVerdict {
    bool positivity = false;
    bool tangency = false;
    bool normal_form = false;
    int positivity_samples = 0, positivity_failures = 0;
    double min_derivative = 0.0;
    int tangency_samples = 0, tangency_failures = 0;
    int normal_form_samples = 0;
    double max_normal_form_error = 0.0;
    double max_field_mismatch = 0.0;
    int errors = 0;
    bool pass() const { return positivity && tangency && normal_form; }
};

/// (i) positivity of the derivative of g along `kind` off the 1e-3 ball at z;
/// (ii) tangency of the field to y = 0; (iii) agreement with the normal form in H2.
inline GradientLikeVerdict check_gradient_like(const GField& G, FieldKind kind, int n_samples,
                                               std::uint64_t seed, int n_boundary = -1) {
    GradientLikeVerdict v;
    const Model& m = G.model();
    const auto& z = m.z();
    const Box& Wf = G.window();
    v.min_derivative = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_samples; ++i) {
        const ChartPoint p = uniform_in(Wf, seed + i);
        if ((p - z.location).norm() < 1e-3) continue;
        ++v.positivity_samples;
        double d;
        try {
            if (kind == FieldKind::XiPrime) {
                d = G.dg_along(p);
            } else {
                // derivative of g along another field: dg . F via central differences
                const Vec F = m.eval(kind, p);
                const double hs = 1e-6 / std::max(1e-12, F.norm());
                d = (G.g(p + hs * F) - G.g(p - hs * F)) / (2.0 * hs);
            }
        } catch (const std::exception&) {
            ++v.errors;
            ++v.positivity_failures;
            continue;
        }
        v.min_derivative = std::min(v.min_derivative, d);
        if (!(d > 0.0)) ++v.positivity_failures;
    }
    v.positivity = v.positivity_failures == 0 && v.positivity_samples > 0;

    if (n_boundary < 0) n_boundary = n_samples;
    for (int i = 0; i < n_boundary; ++i) {
        ChartPoint p = uniform_in(m.params().window, seed + 7919 + i);
        p[0] = 0.0;
        ++v.tangency_samples;
        if (m.eval(kind, p)[0] != 0.0) ++v.tangency_failures;
    }
    v.tangency = v.tangency_failures == 0;

    // normal form: frame points inside H2
    std::mt19937_64 rng(seed + 104729);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const int n = m.dim();
    int tries = 0;
    while (v.normal_form_samples < 200 && tries < 200000) {
        ++tries;
        Vec f(n);
        for (int i = 0; i < n; ++i) f[i] = G.H2().rho * U(rng);
        const ChartPoint p = G.round_to_lattice(G.from_frame(f));
        if (G.zone(p) != Zone::H2) continue;
        ++v.normal_form_samples;
        const double closed = G.dg0_closed(p);
        double d;
        if (kind == FieldKind::XiPrime) {
            d = G.dg_along(p);
        } else {
            const Vec F = m.eval(kind, p);
            const double hs = 1e-6 / std::max(1e-12, F.norm());
            d = (G.g(p + hs * F) - G.g(p - hs * F)) / (2.0 * hs);
        }
        v.max_normal_form_error = std::max(v.max_normal_form_error, std::abs(d - closed));
        v.max_field_mismatch =
            std::max(v.max_field_mismatch, (m.eval(kind, p) - m.xi_lin(p)).norm());
    }
    v.normal_form = v.normal_form_samples > 0 && v.max_normal_form_error <= 1e-8 &&
                    v.max_field_mismatch <= 1e-12;
    return v;
}

// ---------------------------------------------------------------------------

struct ContinuityFace {
    std::string face;
    int samples = 0;
    double sum_jump_coarse = 0.0, sum_jump_fine = 0.0;
    double ratio = 0.0;
    double max_jump_fine = 0.0;
    double max_face_mismatch = 0.0;  // |g1 - g0| on the face (x_in, x_out)
};

inline ContinuityFace continuity_face(const GField& G, const std::string& face, int samples,
                                      std::uint64_t seed, double coarse = 1e-4, double fine = 1e-5) {
    ContinuityFace out;
    out.face = face;
    std::mt19937_64 rng(seed);
    int tries = 0;
    while (out.samples < samples && tries < 100 * samples) {
        ++tries;
        auto f = G.sample_face(G.H1(), face, rng);
        if (!f) continue;
        const ChartPoint p = G.from_frame(*f);
        const Vec nrm = G.face_normal(face, *f);
        const double jc = std::abs(G.g(p + coarse * nrm) - G.g(p - coarse * nrm));
        const double jf = std::abs(G.g(p + fine * nrm) - G.g(p - fine * nrm));
        out.sum_jump_coarse += jc;
        out.sum_jump_fine += jf;
        out.max_jump_fine = std::max(out.max_jump_fine, jf);
        if (face != "x_tan") {
            const ChartPoint q = G.round_to_lattice(p);
            out.max_face_mismatch = std::max(out.max_face_mismatch, std::abs(G.g1(q) - G.g0(q)));
        }
        ++out.samples;
    }
    out.ratio = out.sum_jump_fine > 0.0 ? out.sum_jump_coarse / out.sum_jump_fine : 0.0;
    return out;
}

// ---------------------------------------------------------------------------

struct Stage {
    std::string name;
    bool pass = false;
    Json evidence = Json::object();
};

struct MergeOptions {
    int sweep_seeds = 1000;
    double T_max = 200.0;
    double T_extra = 50.0;
    std::uint64_t seed = 20240601;
    int threads = 1;
    int gradient_samples = 10000;
    int boundary_samples = 10000;
    int face_samples = 1000;      // face matching on X_in, X_out
    int straddle_samples = 200;   // per face
    int c0_halvings = 3;
    int c0_grid = 81;
    int census_grid = 0;          // 0: dimension-dependent default
    bool fail_fast = false;       // skip the remaining stages after a failure
};

struct MergeReport {
    int n = 2, k = 1;
    std::vector<Stage> stages;
    std::vector<CriticalRecord> census_before;
    std::vector<CriticalRecord> census_after;
    bool overall = false;

    const Stage* find(const std::string& name) const {
        for (const auto& s : stages)
            if (s.name == name) return &s;
        return nullptr;
    }
    std::string first_failure() const {
        for (const auto& s : stages)
            if (!s.pass) return s.name;
        return "";
    }
};

inline Json point_json(const ChartPoint& p);

inline void census_evidence(Json& e, const CensusResult& c) {
    e["zeros"] = static_cast<int>(c.zeros.size());
    e["suspects"] = static_cast<int>(c.suspects.size());
    e["candidates"] = c.candidates;
    e["nonzero_minima"] = static_cast<int>(c.nonzero_minima.size());
    if (!c.nonzero_minima.empty()) e["min_stalled_residual"] = c.min_stalled_residual;
}

inline Json point_json(const ChartPoint& p) {
    Json a = Json::array();
    for (int i = 0; i < p.size(); ++i) a.push_back(p[i]);
    return a;
}

inline Json record_json(const CriticalRecord& r) {
    Json j;
    j["location"] = point_json(r.location);
    j["kind"] = to_string(r.kind);
    j["index"] = r.index;
    j["eigenvalues"] = r.eigenvalues;
    j["residual"] = r.residual;
    j["degenerate"] = r.degenerate;
    return j;
}

inline Json to_json(const MergeReport& r) {
    Json j;
    j["n"] = r.n;
    j["k"] = r.k;
    j["stages"] = Json::array();
    for (const auto& s : r.stages) {
        Json sj;
        sj["name"] = s.name;
        sj["pass"] = s.pass;
        sj["evidence"] = s.evidence;
        j["stages"].push_back(sj);
    }
    Json before = Json::array(), after = Json::array();
    for (const auto& c : r.census_before) before.push_back(record_json(c));
    for (const auto& c : r.census_after) after.push_back(record_json(c));
    j["census_before"] = before;
    j["census_after"] = after;
    j["overall"] = r.overall ? "pass" : "fail";
    return j;
}

namespace detail {

inline Stage skipped(const std::string& name, const std::string& why) {
    Stage s{name, false, Json::object()};
    s.evidence["skipped"] = why;
    return s;
}

}  // namespace detail

/// Runs every verification stage for the model. Stages that need the merged
/// zero or the reconstructed g fail with the reason when those are missing.
inline MergeReport merge_report(const ModelParams& P, const ReconstructParams& RP = {},
                                const MergeOptions& opt = {}) {
    MergeReport rep;
    rep.n = P.n;
    rep.k = P.k;
    const Model m(P);
    const Box& W = P.window;
    const double y0_target = P.w(0.5) / P.c;
    auto add = [&](Stage s) {
        rep.stages.push_back(std::move(s));
        return rep.stages.back().pass;
    };
    auto stop = [&]() { return opt.fail_fast && !rep.stages.empty() && !rep.stages.back().pass; };

    // census before: zeros of xi are p and q, classified with the boundary models
    {
        Stage s{"census_before"};
        const auto c = census(m, FieldKind::Xi, W, false, opt.census_grid);
        bool ok = c.zeros.size() == 2 && c.suspects.empty();
        const ChartPoint p0 = make_point(0.0, 0.0, P.n), q0 = make_point(0.0, 1.0, P.n);
        if (ok) {
            ok = (c.zeros[0].location - p0).norm() < 1e-9 && (c.zeros[1].location - q0).norm() < 1e-9;
        }
        if (ok) {
            auto rp = classify_critical(c.zeros[0], [&](const ChartPoint& v) { return model_function_p(v, P.k); });
            auto rq = classify_critical(c.zeros[1], [&](const ChartPoint& v) { return model_function_q(v, P.k); });
            rep.census_before = {rp, rq};
            ok = rp.kind == CriticalKind::BoundaryStable && rq.kind == CriticalKind::BoundaryUnstable &&
                 !rp.degenerate && !rq.degenerate;
            s.evidence["index_p"] = rp.index;
            s.evidence["index_q"] = rq.index;
        }
        census_evidence(s.evidence, c);
        s.pass = ok;
        add(s);
    }
    if (stop()) goto done;

    // boundary census: xi' restricted to y = 0 has no zeros
    {
        Stage s{"boundary census"};
        const auto c = census(m, FieldKind::XiPrime, W, true, opt.census_grid);
        census_evidence(s.evidence, c);
        s.evidence["zero_locations"] = Json::array();
        for (const auto& z : c.zeros) s.evidence["zero_locations"].push_back(point_json(z.location));
        s.evidence["merged_zero"] = m.has_z();
        if (!m.has_z()) s.evidence["reason"] = m.z_error();
        s.pass = c.zeros.empty() && c.suspects.empty() && m.has_z();
        add(s);
    }
    if (stop()) goto done;

    // interior census: xi_c and xi' each have exactly one zero, the merged one
    {
        Stage s{"interior census"};
        bool ok = m.has_z();
        for (auto kind : {FieldKind::XiC, FieldKind::XiPrime}) {
            const auto c = census(m, kind, W, false, opt.census_grid);
            Json e;
            census_evidence(e, c);
            e["locations"] = Json::array();
            for (const auto& z : c.zeros) e["locations"].push_back(point_json(z.location));
            bool one = c.zeros.size() == 1 && c.suspects.empty();
            if (one) {
                const auto& zl = c.zeros[0].location;
                const double dx = std::abs(zl[1] - 0.5);
                const double db = std::abs(P.beta(zl[0]) - y0_target);
                e["x0_error"] = dx;
                e["beta_residual"] = db;
                one = dx <= 1e-9 && db <= 1e-10 && zl[0] > 0.0;
                if (kind == FieldKind::XiPrime) {
                    CriticalRecord r = c.zeros[0];
                    rep.census_after = {r};
                }
            }
            ok = ok && one;
            s.evidence[to_string(kind)] = e;
        }
        s.pass = ok;
        add(s);
    }
    if (stop()) goto done;

    // index: spectrum at every zero of xi_c
    {
        Stage s{"index"};
        const auto c = census(m, FieldKind::XiC, W, false, opt.census_grid);
        bool ok = !c.zeros.empty();
        s.evidence["zeros"] = Json::array();
        for (const auto& z : c.zeros) {
            const Mat J = detail::fd_jacobian([&](const ChartPoint& p) { return m.xi_c(p); }, z.location);
            const double det = J.topLeftCorner(2, 2).determinant();
            const auto ev = real_eigenvalues(J, 1e-9);
            int neg = 0, pos = 0;
            if (ev)
                for (double l : *ev) (l < 0.0 ? neg : pos) += 1;
            Json e;
            e["location"] = point_json(z.location);
            e["det_jac2"] = det;
            e["real_spectrum"] = ev.has_value();
            e["negative"] = neg;
            e["positive"] = pos;
            if (ev) e["eigenvalues"] = *ev;
            ok = ok && det < 0.0 && ev && neg == P.k && pos == P.n - P.k;
            s.evidence["zeros"].push_back(e);
        }
        s.pass = ok;
        add(s);
    }
    if (stop()) goto done;

    {
        std::optional<GField> G;
        std::string g_error;
        try {
            G.emplace(m, RP);
        } catch (const ConfigError& e) {
            g_error = e.what();
        }

        // tangency of all fields to the boundary
        {
            Stage s{"tangency"};
            int fails = 0;
            for (int i = 0; i < opt.boundary_samples; ++i) {
                ChartPoint p = uniform_in(W, opt.seed + 31 * i + 3);
                p[0] = 0.0;
                for (auto kind : {FieldKind::Xi, FieldKind::XiC, FieldKind::XiPrime})
                    if (m.eval(kind, p)[0] != 0.0) ++fails;
            }
            s.evidence["samples"] = opt.boundary_samples;
            s.evidence["failures"] = fails;
            s.pass = fails == 0;
            add(s);
        }
        if (stop()) goto done;

        if (!m.spectrum_ok()) {
            const std::string why = m.has_z() ? m.spectrum_error() : m.z_error();
            for (const char* name : {"dichotomy", "no re-entry", "single crossing", "c0 closeness",
                                     "gradient-like", "continuity", "critical point of g"})
                add(detail::skipped(name, why));
        } else {
            const auto fwd = dichotomy_sweep(m, opt.sweep_seeds, opt.T_max, opt.seed, false, opt.threads);
            const auto bwd = dichotomy_sweep(m, opt.sweep_seeds, opt.T_max, opt.seed, true, opt.threads);
            {
                Stage s{"dichotomy"};
                for (auto [name, sw] : {std::pair{"forward", &fwd}, {"backward", &bwd}}) {
                    Json e;
                    e["converges_to_z"] = sw->converges;
                    e["leaves_w"] = sw->leaves;
                    e["unresolved"] = sw->unresolved;
                    e["unresolved_seeds"] = sw->unresolved_seeds;
                    s.evidence[name] = e;
                }
                s.pass = fwd.unresolved == 0 && bwd.unresolved == 0;
                add(s);
            }
            if (stop()) goto done;
            {
                Stage s{"no re-entry"};
                const auto rf = reentry_check(m, fwd, opt.T_extra, opt.threads);
                const auto rb = reentry_check(m, bwd, opt.T_extra, opt.threads);
                s.evidence["checked"] = rf.checked + rb.checked;
                s.evidence["reentries"] = rf.reentries + rb.reentries;
                std::vector<std::uint64_t> seeds = rf.offending_seeds;
                seeds.insert(seeds.end(), rb.offending_seeds.begin(), rb.offending_seeds.end());
                s.evidence["offending_seeds"] = seeds;
                s.pass = rf.reentries + rb.reentries == 0;
                add(s);
            }
            if (stop()) goto done;
            {
                Stage s{"single crossing"};
                int vk = 0, vy = 0, maxk = 0, maxy = 0;
                const bool slab = P.n > 2;
                s.evidence["counted_in"] = slab ? "delta plateau slab" : "whole trajectory";
                for (const auto& tr : fwd.trajectories) {
                    const auto c = crossing_counts(tr, P, slab);
                    maxk = std::max(maxk, c.gamma_x_kappa);
                    maxy = std::max(maxy, c.gamma_y);
                    if (c.gamma_x_kappa > 1) ++vk;
                    if (c.gamma_y > 1) ++vy;
                }
                s.evidence["kappa_violations"] = vk;
                s.evidence["gamma_y_violations"] = vy;
                s.evidence["max_kappa_crossings"] = maxk;
                s.evidence["max_gamma_y_crossings"] = maxy;
                s.pass = vk == 0 && vy == 0;
                add(s);
            }
            if (stop()) goto done;
            {
                Stage s{"c0 closeness"};
                std::vector<double> d, radii;
                double r = P.r_z;
                for (int i = 0; i <= opt.c0_halvings; ++i) {
                    radii.push_back(r);
                    d.push_back(c0_distance(P, r, opt.c0_grid));
                    r *= 0.5;
                }
                std::vector<double> ratios;
                bool ok = true;
                for (std::size_t i = 1; i < d.size(); ++i) {
                    ratios.push_back(d[i - 1] / d[i]);
                    ok = ok && ratios.back() >= 3.0;
                }
                s.evidence["radii"] = radii;
                s.evidence["distances"] = d;
                s.evidence["ratios"] = ratios;
                s.pass = ok;
                add(s);
            }
            if (stop()) goto done;

            if (!G) {
                for (const char* name : {"gradient-like", "continuity", "critical point of g"})
                    add(detail::skipped(name, g_error));
            } else {
                {
                    Stage s{"gradient-like"};
                    const auto v = check_gradient_like(*G, FieldKind::XiPrime, opt.gradient_samples,
                                                       opt.seed + 1, opt.boundary_samples);
                    s.evidence["positivity_samples"] = v.positivity_samples;
                    s.evidence["positivity_failures"] = v.positivity_failures;
                    s.evidence["min_derivative"] = v.min_derivative;
                    s.evidence["trace_errors"] = v.errors;
                    s.evidence["tangency_samples"] = v.tangency_samples;
                    s.evidence["tangency_failures"] = v.tangency_failures;
                    s.evidence["normal_form_samples"] = v.normal_form_samples;
                    s.evidence["max_normal_form_error"] = v.max_normal_form_error;
                    s.evidence["max_field_mismatch"] = v.max_field_mismatch;
                    s.pass = v.pass();
                    add(s);
                }
                if (stop()) goto done;
                {
                    Stage s{"continuity"};
                    bool ok = true;
                    for (const char* face : {"x_in", "x_out", "x_tan"}) {
                        const auto cf = continuity_face(*G, face, opt.straddle_samples, opt.seed + 17);
                        Json e;
                        e["samples"] = cf.samples;
                        e["ratio"] = cf.ratio;
                        e["max_jump_fine"] = cf.max_jump_fine;
                        ok = ok && cf.samples > 0 && cf.ratio >= 5.0 && cf.ratio <= 20.0;
                        s.evidence[face] = e;
                    }
                    // face matching of g1 and g0 on X_in and X_out
                    double worst = 0.0;
                    int matched = 0;
                    std::mt19937_64 rng(opt.seed + 23);
                    for (const char* face : {"x_in", "x_out"}) {
                        int got = 0, tries = 0;
                        while (got < opt.face_samples && tries < 100 * opt.face_samples) {
                            ++tries;
                            auto f = G->sample_face(G->H1(), face, rng);
                            if (!f) continue;
                            const ChartPoint q = G->round_to_lattice(G->from_frame(*f));
                            worst = std::max(worst, std::abs(G->g1(q) - G->g0(q)));
                            ++got;
                        }
                        matched += got;
                    }
                    s.evidence["face_samples"] = matched;
                    s.evidence["max_face_mismatch"] = worst;
                    s.pass = ok && worst <= 1e-6 && matched == 2 * opt.face_samples;
                    add(s);
                }
                if (stop()) goto done;
                {
                    Stage s{"critical point of g"};
                    CriticalRecord r;
                    r.location = m.z().location;
                    r = classify_critical(r, [&](const ChartPoint& p) { return G->g(p); });
                    s.evidence["eigenvalues"] = r.eigenvalues;
                    s.evidence["index"] = r.index;
                    s.evidence["degenerate"] = r.degenerate;
                    s.evidence["y0"] = m.z().y0();
                    s.evidence["dg_at_z"] = G->dg_along(m.z().location);
                    const bool interior = m.z().y0() >= 0.1;
                    s.pass = !r.degenerate && r.index == P.k &&
                             static_cast<int>(r.eigenvalues.size()) - r.index == P.n - P.k && interior &&
                             std::abs(G->dg_along(m.z().location)) <= 1e-10;
                    if (!rep.census_after.empty()) {
                        rep.census_after[0].kind = r.kind;
                        rep.census_after[0].index = r.index;
                        rep.census_after[0].eigenvalues = r.eigenvalues;
                        rep.census_after[0].degenerate = r.degenerate;
                    }
                    add(s);
                }
                if (stop()) goto done;
            }
        }
    }

    // preservation: the modification is supported inside U
    {
        Stage s{"preservation"};
        int outside = 0, fails = 0;
        for (int i = 0; i < opt.boundary_samples; ++i) {
            const ChartPoint p = uniform_in(W, opt.seed + 131 * i + 5);
            if (P.inner.contains(p)) continue;
            ++outside;
            if (m.xi_prime(p) != m.xi(p)) ++fails;
        }
        s.evidence["samples_outside_u"] = outside;
        s.evidence["failures"] = fails;
        s.pass = outside > 0 && fails == 0;
        add(s);
    }
    if (stop()) goto done;

    // connecting trajectory: the boundary segment is a xi-orbit from p to q
    {
        Stage s{"connecting trajectory"};
        IntegrateOptions o;
        o.detect_convergence = false;
        o.T_max = 40.0;
        const auto tr = integrate(m, FieldKind::Xi, make_point(0.0, 1e-6, P.n), o);
        const ChartPoint end = tr.p.back();
        bool on_boundary = true;
        for (const auto& p : tr.p) on_boundary = on_boundary && p[0] == 0.0;
        s.evidence["end_x"] = end[1];
        s.evidence["stays_on_boundary"] = on_boundary;
        s.pass = on_boundary && tr.cls == TrajClass::Unresolved && std::abs(end[1] - 1.0) < 1e-6;
        add(s);
    }

done:
    rep.overall = !rep.stages.empty();
    for (const auto& s : rep.stages) rep.overall = rep.overall && s.pass;
    return rep;
}

}  // namespace mmerge
