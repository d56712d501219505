#pragma once
// Reconstruction of a Morse function g whose gradient-like field is xi'.
// Near z, g0 = m + A^2 - B^2 in eigen-coordinates; elsewhere g1 interpolates
// monotonically in trajectory time between face values and the level sets of
// g0 that the trajectory crosses; the two are blended on H1 by a flow-invariant
// cutoff phi.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "fields.hpp"
#include "flow.hpp"
#include "frame.hpp"

namespace mmerge {

struct TraceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// H(rho, eps) = {|B^2 - A^2| <= eps^2, T <= K} with K = (rho^4 - eps^4) / 4.
struct HSet {
    double rho = 0.08;
    double eps = 0.05;
    double K() const { return 0.25 * (std::pow(rho, 4) - std::pow(eps, 4)); }
};

enum class HMembership { Inside, XIn, XOut, XTan, Outside };

inline std::string to_string(HMembership m) {
    switch (m) {
        case HMembership::Inside: return "inside";
        case HMembership::XIn: return "x_in";
        case HMembership::XOut: return "x_out";
        case HMembership::XTan: return "x_tan";
        case HMembership::Outside: return "outside";
    }
    return "?";
}

enum class Zone { H2, H1Ring, Outside };

inline std::string to_string(Zone z) {
    switch (z) {
        case Zone::H2: return "H2";
        case Zone::H1Ring: return "H1ring";
        case Zone::Outside: return "outside";
    }
    return "?";
}

struct ReconstructParams {
    double rho = 0.08;
    double eps1 = 0.05;
    double eps2 = 0.03;
    double a = -1.0;
    double b = 1.0;
    double frame_scale = 3.0;
    double T_max = 200.0;
    double tol = 1e-10;
    double lattice = 1e-9;
    double window_margin = 0.01;

    double m() const { return 0.5 * (a + b); }
};

struct Knot {
    double time;
    double value;
    std::string label;  // entry, x_in1, x_in2, x_out2, x_out1, exit
};

/// Anchors along the trajectory through a point; times are relative to that point.
struct KnotSchedule {
    std::vector<Knot> knots;
    std::optional<double> t_entry, t_exit;
    double T_inv = std::numeric_limits<double>::infinity();  // +inf: never near z
    double psi = 0.0;
    bool stable_core = false;    // forward limit is z
    bool unstable_core = false;  // backward limit is z
    Face entry_face, exit_face;

    bool increasing() const {
        for (std::size_t i = 1; i < knots.size(); ++i)
            if (!(knots[i].time > knots[i - 1].time && knots[i].value > knots[i - 1].value))
                return false;
        return true;
    }
};

/// Monotone piecewise-cubic Hermite interpolation (Fritsch-Butland slopes),
/// continued linearly with the end slopes outside the knot range.
class Pchip {
public:
    Pchip(std::vector<double> t, std::vector<double> v) : t_(std::move(t)), v_(std::move(v)) {
        const std::size_t n = t_.size();
        d_.assign(n, 0.0);
        if (n < 2) return;
        std::vector<double> h(n - 1), del(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h[i] = t_[i + 1] - t_[i];
            del[i] = (v_[i + 1] - v_[i]) / h[i];
        }
        d_[0] = del[0];
        d_[n - 1] = del[n - 2];
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (del[i - 1] * del[i] <= 0.0) {
                d_[i] = 0.0;
                continue;
            }
            const double w1 = 2.0 * h[i] + h[i - 1], w2 = h[i] + 2.0 * h[i - 1];
            d_[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
        }
    }

    double operator()(double x) const {
        const std::size_t n = t_.size();
        if (n == 0) return 0.0;
        if (n == 1) return v_[0];
        if (x <= t_[0]) return v_[0] + d_[0] * (x - t_[0]);
        if (x >= t_[n - 1]) return v_[n - 1] + d_[n - 1] * (x - t_[n - 1]);
        const std::size_t i =
            static_cast<std::size_t>(std::upper_bound(t_.begin(), t_.end(), x) - t_.begin()) - 1;
        const double h = t_[i + 1] - t_[i], s = (x - t_[i]) / h;
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
        return h00 * v_[i] + h10 * h * d_[i] + h01 * v_[i + 1] + h11 * h * d_[i + 1];
    }

private:
    std::vector<double> t_, v_, d_;
};

class GField {
public:
    GField(Model model, ReconstructParams rp = {}) : M_(std::move(model)), R_(rp) {
        if (!M_.has_z()) throw ConfigError("no merged zero: " + M_.z_error());
        if (!M_.spectrum_ok()) throw ConfigError("merged zero is not a saddle: " + M_.spectrum_error());
        if (!(R_.eps2 > 0.0 && R_.eps2 < R_.eps1 && R_.eps1 < R_.rho))
            throw ConfigError("need 0 < eps2 < eps1 < rho");
        if (!(R_.a < R_.m() - R_.eps1 * R_.eps1 && R_.b > R_.m() + R_.eps1 * R_.eps1))
            throw ConfigError("face values must bracket m -+ eps1^2");
        if (!(R_.frame_scale > 0.0)) throw ConfigError("frame scale must be positive");
        M_.check_blend_radius();
        frame_ = EigenFrame(M_.params(), M_.z(), R_.frame_scale);
        double rmax = 0.0;
        for (int i = 0; i < frame_.dim(); ++i) rmax = std::max(rmax, std::abs(frame_.rates()[i]));
        kappa_T_ = 2.0 * rmax;
        for (int i = 0; i < frame_.dim(); ++i) expo_.push_back(kappa_T_ / std::abs(frame_.rates()[i]));
        H1_ = {R_.rho, R_.eps1};
        H2_ = {R_.rho * R_.eps2 / R_.eps1, R_.eps2};
        K_fade_ = HSet{1.25 * R_.rho, R_.eps1}.K();
        R_lin_ = 0.999 * M_.linear_radius();
        R_trigger_ = 0.95 * R_lin_;
        R_leave_ = 0.99 * R_lin_;
        phi_profile_ = make_transition(
            {H2_.K(), H2_.K() + 0.9 * (H1_.K() - H2_.K()), Orientation::Falling});
        psi_profile_ = make_transition({H1_.K(), K_fade_, Orientation::Falling});
        Wf_ = M_.params().window.shrunk(R_.window_margin);

        const double r1 = max_planar_radius(H1_.eps, H1_.K());
        const double rf = max_planar_radius(H1_.eps, K_fade_);
        if (!(std::max(r1, rf) <= 0.9 * R_lin_))
            throw ConfigError("H1 (planar radius " + std::to_string(std::max(r1, rf)) +
                              ") does not fit inside the linear zone");
    }

    const Model& model() const { return M_; }
    const EigenFrame& frame() const { return frame_; }
    const ReconstructParams& params() const { return R_; }
    const HSet& H1() const { return H1_; }
    const HSet& H2() const { return H2_; }
    double K_fade() const { return K_fade_; }
    double kappa_T() const { return kappa_T_; }
    double linear_zone_radius() const { return R_lin_; }
    const Box& window() const { return Wf_; }

    // ---- frame quantities -------------------------------------------------

    Vec to_frame(const ChartPoint& p) const { return frame_.to_frame(p); }
    double h_of(const Vec& f) const { return frame_.b2(f) - frame_.a2(f); }
    double h(const ChartPoint& p) const { return h_of(to_frame(p)); }

    /// Flow-invariant of xi_lin: sum_A |f|^{kT/mu} * sum_B |f|^{kT/|lambda|}.
    double T_of(const Vec& f) const {
        double P = 0.0, Q = 0.0;
        for (int i = 0; i < frame_.dim(); ++i) {
            const double v = std::pow(std::abs(f[i]), expo_[i]);
            (frame_.expanding(i) ? P : Q) += v;
        }
        return P * Q;
    }
    double T(const ChartPoint& p) const { return T_of(to_frame(p)); }

    Vec grad_h_frame(const Vec& f) const {
        Vec d(f.size());
        for (int i = 0; i < f.size(); ++i) d[i] = (frame_.expanding(i) ? -2.0 : 2.0) * f[i];
        return d;
    }
    Vec grad_T_frame(const Vec& f) const {
        double P = 0.0, Q = 0.0;
        for (int i = 0; i < f.size(); ++i)
            (frame_.expanding(i) ? P : Q) += std::pow(std::abs(f[i]), expo_[i]);
        Vec d(f.size());
        for (int i = 0; i < f.size(); ++i) {
            const double e = expo_[i];
            const double di = f[i] == 0.0 ? 0.0
                                          : e * std::pow(std::abs(f[i]), e - 1.0) *
                                                (f[i] > 0.0 ? 1.0 : -1.0);
            d[i] = frame_.expanding(i) ? di * Q : di * P;
        }
        return d;
    }

    bool in_linear_zone(const ChartPoint& p) const { return M_.planar_distance(p) < R_lin_; }

    HMembership membership(const ChartPoint& p, const HSet& H, double face_tol = 1e-9) const {
        if (!in_linear_zone(p)) return HMembership::Outside;
        const Vec f = to_frame(p);
        const double hv = h_of(f), Tv = T_of(f), e2 = H.eps * H.eps, K = H.K();
        const double Ttol = face_tol * K;
        if (std::abs(hv) > e2 + face_tol || Tv > K + Ttol) return HMembership::Outside;
        if (std::abs(hv - e2) <= face_tol) return HMembership::XIn;
        if (std::abs(hv + e2) <= face_tol) return HMembership::XOut;
        if (std::abs(Tv - K) <= Ttol) return HMembership::XTan;
        return HMembership::Inside;
    }

    bool in_set(const Vec& f, const HSet& H) const {
        return std::abs(h_of(f)) <= H.eps * H.eps && T_of(f) <= H.K();
    }

    Zone zone(const ChartPoint& p) const {
        if (!in_linear_zone(p)) return Zone::Outside;
        const Vec f = to_frame(p);
        if (in_set(f, H2_)) return Zone::H2;
        if (in_set(f, H1_)) return Zone::H1Ring;
        return Zone::Outside;
    }

    // ---- local pieces -----------------------------------------------------

    double g0(const ChartPoint& p) const { return R_.m() - h(p); }

    /// Closed form of the xi_lin-derivative of g0: 2 sum_i |rate_i| f_i^2.
    double dg0_closed(const ChartPoint& p) const {
        const Vec f = to_frame(p);
        double s = 0.0;
        for (int i = 0; i < f.size(); ++i) s += 2.0 * std::abs(frame_.rates()[i]) * f[i] * f[i];
        return s;
    }

    double phi_of_T(double Tv) const { return phi_profile_(Tv); }
    double psi_of_T(double Tv) const {
        return std::isfinite(Tv) ? psi_profile_(Tv) : 0.0;
    }
    /// phi on H1 (flow-invariant: depends on the trajectory through T only).
    double phi(const ChartPoint& p) const { return phi_of_T(T(p)); }

    // ---- schedules and g1 ---------------------------------------------------

    ChartPoint round_to_lattice(const ChartPoint& p) const {
        ChartPoint q = p;
        for (int i = 0; i < q.size(); ++i) q[i] = std::round(p[i] / R_.lattice) * R_.lattice;
        if (q[0] < 0.0) q[0] = 0.0;
        return q;
    }

    KnotSchedule schedule(const ChartPoint& p) const {
        const ChartPoint q = round_to_lattice(p);
        const Key key = make_key(q);
        {
            std::lock_guard<std::mutex> lk(cache_mu_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        KnotSchedule s = trace_knots(q);
        std::lock_guard<std::mutex> lk(cache_mu_);
        cache_.emplace(key, s);
        return s;
    }

    std::size_t cache_size() const {
        std::lock_guard<std::mutex> lk(cache_mu_);
        return cache_.size();
    }

    /// Value of the time interpolant of a schedule at time offset `s`.
    double interpolate(const KnotSchedule& ks, double s) const {
        double pch = 0.0, lin = 0.0;
        if (ks.psi > 0.0) {
            std::vector<double> t, v;
            for (const auto& k : ks.knots) {
                t.push_back(k.time);
                v.push_back(k.value);
            }
            pch = Pchip(std::move(t), std::move(v))(s);
            if (ks.psi == 1.0) return pch;
        }
        if (!ks.t_entry || !ks.t_exit)
            throw TraceError("trajectory without both endpoints away from z");
        const double t0 = *ks.t_entry, t1 = *ks.t_exit;
        lin = R_.a + (R_.b - R_.a) * (s - t0) / (t1 - t0);
        return ks.psi * pch + (1.0 - ks.psi) * lin;
    }

    double g1(const ChartPoint& p) const { return interpolate(schedule(p), 0.0); }

    double g(const ChartPoint& p) const {
        const ChartPoint q = round_to_lattice(p);
        const Zone zq = zone(q);
        if (zq == Zone::H2) return g0(q);
        if (zq == Zone::H1Ring) {
            const double ph = phi(q);
            if (ph == 1.0) return g0(q);
            return ph * g0(q) + (1.0 - ph) * g1(q);
        }
        return g1(q);
    }

    /// Central difference of g along the xi' flow (time step 1e-5). The flowed
    /// points are exact inside the linear zone; g1 comes from the schedule of p.
    double dg_along(const ChartPoint& p, double dt = 1e-5) const {
        const ChartPoint q = round_to_lattice(p);
        const bool lin = M_.planar_distance(q) < R_leave_;
        if (!lin) {
            const auto ks = schedule(q);
            return (interpolate(ks, dt) - interpolate(ks, -dt)) / (2.0 * dt);
        }
        std::optional<KnotSchedule> ks;
        auto G = [&](double s) {
            const ChartPoint ps = frame_.propagate(q, s);
            const Vec f = to_frame(ps);
            if (in_set(f, H2_)) return g0(ps);
            const bool ring = in_set(f, H1_);
            const double ph = ring ? phi_of_T(T_of(f)) : 0.0;
            if (ph == 1.0) return g0(ps);
            if (!ks) ks = schedule(q);
            const double v1 = interpolate(*ks, s);
            return ring ? ph * g0(ps) + (1.0 - ph) * v1 : v1;
        };
        return (G(dt) - G(-dt)) / (2.0 * dt);
    }

    // ---- sampling helpers ---------------------------------------------------

    /// Chart point with frame coordinates f.
    ChartPoint from_frame(const Vec& f) const { return frame_.from_frame(f); }

    /// Random frame point on a face of H: "x_in", "x_out" or "x_tan".
    std::optional<Vec> sample_face(const HSet& H, const std::string& face, std::mt19937_64& rng) const {
        std::uniform_real_distribution<double> U(0.0, 1.0);
        std::normal_distribution<double> N(0.0, 1.0);
        const int n = frame_.dim();
        Vec ad = Vec::Zero(n), bd = Vec::Zero(n);
        for (int i = 0; i < n; ++i) (frame_.expanding(i) ? ad : bd)[i] = N(rng);
        ad.normalize();
        bd.normalize();
        const double e2 = H.eps * H.eps, K = H.K();
        auto point = [&](double A, double B) -> Vec { return A * ad + B * bd; };
        if (face == "x_in" || face == "x_out") {
            const double sgn = face == "x_in" ? 1.0 : -1.0;
            // B^2 - A^2 = sgn e2; grow the smaller radius until T reaches K
            auto at = [&](double r) {
                return sgn > 0 ? point(r, std::sqrt(r * r + e2)) : point(std::sqrt(r * r + e2), r);
            };
            if (T_of(at(0.0)) > K) return std::nullopt;
            double hi = H.rho;
            while (T_of(at(hi)) <= K && hi < 1.0) hi *= 2.0;
            if (T_of(at(hi)) <= K) return std::nullopt;
            const double rmax = bisect([&](double r) { return T_of(at(r)) - K; }, 0.0, hi, 1e-15);
            return at(U(rng) * rmax);
        }
        if (face == "x_tan") {
            const double hv = (2.0 * U(rng) - 1.0) * e2 * 0.98;
            auto at = [&](double A) { return point(A, std::sqrt(A * A + hv)); };
            const double A0 = std::sqrt(std::max(0.0, -hv));
            if (T_of(at(A0)) >= K) return std::nullopt;
            double hi = H.rho;
            while (T_of(at(hi)) <= K && hi < 1.0) hi *= 2.0;
            if (T_of(at(hi)) <= K) return std::nullopt;
            return at(bisect([&](double A) { return T_of(at(A)) - K; }, A0, hi, 1e-15));
        }
        throw std::invalid_argument("unknown face: " + face);
    }

    /// Unit chart normal of a face at frame point f.
    Vec face_normal(const std::string& face, const Vec& f) const {
        const Vec g = face == "x_tan" ? frame_.chart_gradient(grad_T_frame(f))
                                      : frame_.chart_gradient(grad_h_frame(f));
        return g.normalized();
    }

    /// Unrounded, uncached trace of the trajectory through q.
    KnotSchedule trace_knots(const ChartPoint& q) const {
        if (!M_.params().window.contains(q)) throw TraceError("point outside W");
        KnotSchedule ks;
        std::vector<Passage> passages;
        HalfTrace fw = trace_direction(q, 0.0, 1.0);
        HalfTrace bw = trace_direction(q, 0.0, -1.0);
        if (M_.planar_distance(q) < R_trigger_) {
            // both halves start with the exact passage through q: join them
            Passage ps = fw.passages.front();
            ps.t_lo = bw.passages.front().t_lo;
            passages.push_back(ps);
            fw.passages.erase(fw.passages.begin());
            bw.passages.erase(bw.passages.begin());
        }
        for (auto* ht : {&fw, &bw})
            for (const auto& ps : ht->passages) passages.push_back(ps);

        ks.stable_core = fw.to_z;
        ks.unstable_core = bw.to_z;
        if (bw.t_face) {
            ks.t_entry = bw.t_face;
            ks.entry_face = bw.face;
            ks.knots.push_back({*bw.t_face, R_.a, "entry"});
        }
        if (!passages.empty()) {
            const auto best = std::min_element(passages.begin(), passages.end(),
                                               [](const Passage& x, const Passage& y) { return x.Tv < y.Tv; });
            ks.T_inv = best->Tv;
            ks.psi = psi_of_T(best->Tv);
            if (ks.stable_core || ks.unstable_core) ks.psi = 1.0;
            if (ks.psi > 0.0) {
                const double e1 = R_.eps1 * R_.eps1, e2 = R_.eps2 * R_.eps2;
                const std::array<std::pair<double, const char*>, 4> levels{
                    {{e1, "x_in1"}, {e2, "x_in2"}, {-e2, "x_out2"}, {-e1, "x_out1"}}};
                const double big = 200.0;
                const double lo = std::isfinite(best->t_lo) ? best->t_lo - best->t_ref : -big;
                const double hi = std::isfinite(best->t_hi) ? best->t_hi - best->t_ref : big;
                // on a core the residual off-core part is roundoff: drop it
                Vec fr = best->f_ref;
                for (int i = 0; i < fr.size(); ++i) {
                    if (!std::isfinite(best->t_hi) && frame_.expanding(i)) fr[i] = 0.0;
                    if (!std::isfinite(best->t_lo) && !frame_.expanding(i)) fr[i] = 0.0;
                }
                for (const auto& [L, name] : levels) {
                    if (auto tau = level_time(fr, L, lo, hi))
                        ks.knots.push_back({best->t_ref + *tau, R_.m() - L, name});
                }
            }
        }
        if (fw.t_face) {
            ks.t_exit = fw.t_face;
            ks.exit_face = fw.face;
            ks.knots.push_back({*fw.t_face, R_.b, "exit"});
        }
        if (ks.psi < 1.0 && (!ks.t_entry || !ks.t_exit))
            throw TraceError("trajectory has no entry or exit but does not limit to z");
        return ks;
    }

private:
    using Key = std::vector<std::int64_t>;
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::size_t h = 1469598103934665603ull;
            for (auto v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
            return h;
        }
    };

    Key make_key(const ChartPoint& q) const {
        Key k(q.size());
        for (int i = 0; i < q.size(); ++i) k[i] = std::llround(q[i] / R_.lattice);
        return k;
    }

    /// Largest planar chart distance over the star-shaped set {|h| <= eps^2, T <= K},
    /// scanned along frame rays.
    double max_planar_radius(double eps, double K) const {
        const int n = frame_.dim();
        std::vector<Vec> dirs;
        const int n_circle = 2000;
        for (int i = 0; i < n_circle; ++i) {
            const double th = 2.0 * M_PI * i / n_circle;
            Vec e = Vec::Zero(n);
            e[0] = std::cos(th);
            e[1] = std::sin(th);
            dirs.push_back(e);
        }
        if (n > 2) {
            std::mt19937_64 rng(12345);
            std::normal_distribution<double> N(0.0, 1.0);
            for (int i = 0; i < 20000; ++i) {
                Vec e(n);
                for (int j = 0; j < n; ++j) e[j] = N(rng);
                // bias half of the draws towards the planar block
                if (i % 2 == 0) e.tail(n - 2) *= 0.2;
                dirs.push_back(e.normalized());
            }
        }
        double best = 0.0;
        for (const auto& e : dirs) {
            const double he = h_of(e);
            double r = he == 0.0 ? std::numeric_limits<double>::infinity() : eps / std::sqrt(std::abs(he));
            if (T_of(e * 1e3) > K) {
                double hi = 1.0;
                while (T_of(hi * e) < K) hi *= 2.0;
                r = std::min(r, bisect([&](double x) { return T_of(x * e) - K; }, 0.0, hi, 1e-14));
            }
            if (!std::isfinite(r)) return std::numeric_limits<double>::infinity();
            best = std::max(best, M_.planar_distance(from_frame(r * e)));
        }
        return best;
    }

    // -- exact linear flow helpers (frame coordinates) --

    double planar_dist_frame(const Vec& f) const { return M_.planar_distance(from_frame(f)); }

    /// First time (in direction sign) at which the linear flow from f reaches the
    /// planar radius R_leave_; nullopt if it never does (the point lies on a core).
    static constexpr double core_tol = 1e-12;

    std::optional<double> zone_exit_time(const Vec& f, double sign) const {
        auto d = [&](double tau) { return planar_dist_frame(frame_.propagate_frame(f, sign * tau)); };
        if (d(0.0) >= R_leave_) return 0.0;
        // on the stable (forward) or unstable (backward) core the zone is never left
        if (std::sqrt(sign > 0 ? frame_.a2(f) : frame_.b2(f)) <= core_tol) return std::nullopt;
        double lo = 0.0, step = 0.25;
        for (double hi = step; hi <= 120.0; hi += step) {
            if (d(hi) >= R_leave_) {
                return bisect([&](double t) { return d(t) - R_leave_; }, lo, hi, 1e-13);
            }
            lo = hi;
        }
        return std::nullopt;
    }

    /// Time tau in [lo, hi] with h(f e^{rate tau}) = L; h decreases along the flow.
    std::optional<double> level_time(const Vec& f, double L, double lo, double hi) const {
        auto hv = [&](double tau) { return h_of(frame_.propagate_frame(f, tau)); };
        const double hlo = hv(lo), hhi = hv(hi);
        if (!(hlo >= L && L > hhi) && !(hlo > L && L >= hhi)) return std::nullopt;
        if (hlo == L) return lo;
        return bisect([&](double tau) { return hv(tau) - L; }, lo, hi, 1e-14);
    }

    struct Passage {
        Vec f_ref;        // frame point at time t_ref
        double t_ref;
        double t_lo, t_hi;  // may be +-inf for cores
        double Tv;
    };

    /// Traces one direction from point q (time offset t0). Returns the face hit
    /// (if any), its time, and any linear-zone passage encountered.
    struct HalfTrace {
        std::optional<double> t_face;
        Face face;
        bool to_z = false;
        std::vector<Passage> passages;
    };

    HalfTrace trace_direction(ChartPoint q, double t0, double sign) const {
        HalfTrace out;
        const Box& W = M_.params().window;
        const double cap_min = 0.025 * R_lin_;
        double used = 0.0;
        for (int hop = 0; hop < 50; ++hop) {
            IntegrateOptions o;
            o.T_max = R_.T_max - used;
            o.tol = R_.tol;
            o.backward = sign < 0.0;
            o.detect_convergence = false;
            o.record = false;
            o.step_cap = [&](const Vec& y) {
                return std::min(0.05, std::max(cap_min, 0.5 * std::abs(M_.planar_distance(y) - R_trigger_)));
            };
            o.stop_when = [&](const Vec& y) { return M_.planar_distance(y) < R_trigger_; };
            if (M_.planar_distance(q) < R_trigger_) {
                // already inside: handled below without integrating
            } else {
                const Trajectory tr = integrate(M_, FieldKind::XiPrime, q, o);
                if (tr.cls == TrajClass::LeavesW) {
                    out.t_face = t0 + tr.exit_time;
                    out.face = tr.exit_face;
                    return out;
                }
                if (!tr.stopped) throw TraceError("trajectory unresolved within T_max");
                used += std::abs(tr.t.back());
                t0 += tr.t.back();
                q = tr.p.back();
            }
            // exact passage through the linear zone
            const Vec f = to_frame(q);
            const auto te = zone_exit_time(f, sign);
            Passage ps;
            ps.f_ref = f;
            ps.t_ref = t0;
            ps.Tv = T_of(f);
            // u-coordinates keep moving inside the planar zone and may leave W first
            std::optional<double> tw;
            Face wface;
            for (int i = 2; i < f.size(); ++i) {
                const double r = sign * frame_.rates()[i];
                if (r <= 0.0 || q[i] == 0.0) continue;
                const double lim = q[i] > 0.0 ? W.hi[i] : W.lo[i];
                const double tau = std::log(lim / q[i]) / r;
                if (!tw || tau < *tw) {
                    tw = std::max(0.0, tau);
                    wface = {i, q[i] > 0.0 ? Side::High : Side::Low};
                }
            }
            if (tw && (!te || *tw < *te)) {
                const double t1 = t0 + sign * *tw;
                ps.t_lo = std::min(t0, t1);
                ps.t_hi = std::max(t0, t1);
                out.passages.push_back(ps);
                out.t_face = t1;
                out.face = wface;
                return out;
            }
            if (!te) {
                out.to_z = true;
                if (sign > 0) {
                    ps.t_lo = t0;
                    ps.t_hi = std::numeric_limits<double>::infinity();
                } else {
                    ps.t_lo = -std::numeric_limits<double>::infinity();
                    ps.t_hi = t0;
                }
                out.passages.push_back(ps);
                return out;
            }
            const double t1 = t0 + sign * *te;
            ps.t_lo = std::min(t0, t1);
            ps.t_hi = std::max(t0, t1);
            out.passages.push_back(ps);
            used += *te;
            q = frame_.propagate(q, sign * *te);
            t0 = t1;
            if (used > R_.T_max) throw TraceError("trajectory unresolved within T_max");
            // step off the rim so the stop test does not fire at once
            if (M_.planar_distance(q) < R_trigger_) throw TraceError("zone exit inside trigger radius");
        }
        throw TraceError("too many linear-zone passages");
    }

    Model M_;
    ReconstructParams R_;
    EigenFrame frame_;
    double kappa_T_ = 0.0;
    std::vector<double> expo_;
    HSet H1_, H2_;
    double K_fade_ = 0.0;
    double R_lin_ = 0.0, R_trigger_ = 0.0, R_leave_ = 0.0;
    SmoothScalar1D phi_profile_, psi_profile_;
    Box Wf_;
    mutable std::mutex cache_mu_;
    mutable std::unordered_map<Key, KnotSchedule, KeyHash> cache_;
};

}  // namespace mmerge
