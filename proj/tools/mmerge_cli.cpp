// mmerge: scenario-driven pipeline (portrait, sweep, reconstruct, verify).
//
// Exit codes: 0 success, 1 verification failure, 2 configuration error or
// missing upstream cache.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>

#include <mmerge/flow.hpp>
#include <mmerge/reconstruct.hpp>
#include <mmerge/scenario.hpp>
#include <mmerge/verify.hpp>

namespace fs = std::filesystem;
using namespace mmerge;

namespace {

constexpr int kOk = 0, kVerifyFail = 1, kConfig = 2;

struct MissingCache : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Json scenario_json(const Scenario& s) {
    const auto& M = s.model;
    const auto& R = s.reconstruct;
    const auto& V = s.verify;
    Json j;
    j["model"] = {{"n", M.n},
                  {"k", M.k},
                  {"w_scale", M.w_scale},
                  {"alpha", {M.alpha_outer_lo, M.alpha_inner_lo, M.alpha_inner_hi, M.alpha_outer_hi}},
                  {"beta", {M.beta_lo, M.beta_hi}},
                  {"beta_kind", M.beta_kind},
                  {"delta", {M.delta_inner, M.delta_outer}},
                  {"c", M.c},
                  {"r_z", M.r_z},
                  {"window", {M.window_y, M.window_x_lo, M.window_x_hi}},
                  {"inner", {M.inner_y, M.inner_x_lo, M.inner_x_hi}},
                  {"u_halfwidth", M.u_halfwidth}};
    j["reconstruct"] = {{"rho", R.rho},         {"eps1", R.eps1},   {"eps2", R.eps2},
                        {"a", R.a},             {"b", R.b},         {"frame_scale", R.frame_scale},
                        {"T_max", R.T_max},     {"tol", R.tol},     {"lattice", R.lattice},
                        {"window_margin", R.window_margin}};
    // threads are left out: they do not change any output
    j["verify"] = {{"sweep_seeds", V.sweep_seeds},
                   {"T_max", V.T_max},
                   {"T_extra", V.T_extra},
                   {"seed", V.seed},
                   {"gradient_samples", V.gradient_samples},
                   {"boundary_samples", V.boundary_samples},
                   {"face_samples", V.face_samples},
                   {"straddle_samples", V.straddle_samples},
                   {"c0_halvings", V.c0_halvings},
                   {"c0_grid", V.c0_grid},
                   {"census_grid", V.census_grid},
                   {"fail_fast", V.fail_fast}};
    j["portrait"] = {{"fan", s.portrait.fan},
                     {"T_max", s.portrait.T_max},
                     {"nullcline_samples", s.portrait.nullcline_samples}};
    j["gfield"] = {{"ny", s.gfield.ny}, {"nx", s.gfield.nx}};
    return j;
}

std::string scenario_hash(const Scenario& s) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char ch : scenario_json(s).dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct Run {
    Scenario s;
    fs::path out;
    std::string hash;

    fs::path file(const std::string& name) const { return out / name; }

    void stamp(const std::string& stage) const {
        std::ofstream f(file(stage + ".stamp"));
        f << hash << '\n';
    }
    void require(const std::string& stage) const {
        std::ifstream f(file(stage + ".stamp"));
        std::string h;
        if (!(f >> h)) throw MissingCache("missing upstream cache: run '" + stage + "' first");
        if (h != hash)
            throw MissingCache("upstream cache from '" + stage + "' belongs to another scenario");
    }
};

std::vector<std::string> point_cells(const ChartPoint& p) {
    std::vector<std::string> c;
    for (int i = 0; i < p.size(); ++i) c.push_back(fmt(p[i]));
    return c;
}

// ---- portrait ----------------------------------------------------------------

int run_portrait(const Run& r) {
    const auto& P = r.s.model;
    const Model m(P);
    const auto nc = make_nullclines(P, r.s.portrait.nullcline_samples);
    {
        CsvWriter w(r.file("nullclines.csv").string(), {"curve", "y", "x"});
        for (const auto& v : nc.gamma_x_kappa) w.row({"gamma_x_kappa", fmt(v[0]), fmt(v[1])});
        for (const auto& v : nc.gamma_x_0) w.row({"gamma_x_0", fmt(v[0]), fmt(v[1])});
        for (const auto& v : nc.gamma_y) w.row({"gamma_y", fmt(v[0]), fmt(v[1])});
    }
    // fan: starts spread along y = 0.6 over x in [-0.2, 1.2], each integrated
    // forward and backward under xi (before) and xi' (after)
    auto header = std::vector<std::string>{"field", "direction", "traj", "t"};
    for (const auto& h : chart_header(P.n)) header.push_back(h);
    header.push_back("class");
    CsvWriter w(r.file("trajectories.csv").string(), header);
    const int N = r.s.portrait.fan;
    for (auto kind : {FieldKind::Xi, FieldKind::XiPrime}) {
        if (kind == FieldKind::XiPrime && !m.has_z()) {
            std::cerr << "portrait: no merged zero (" << m.z_error() << "); xi' fan skipped\n";
            continue;
        }
        for (int i = 0; i < N; ++i) {
            const double x = N == 1 ? 0.5 : -0.2 + 1.4 * i / (N - 1);
            for (bool back : {false, true}) {
                IntegrateOptions o;
                o.T_max = r.s.portrait.T_max;
                o.backward = back;
                o.detect_convergence = kind == FieldKind::XiPrime;
                const auto tr = integrate(m, kind, make_point(0.6, x, P.n), o);
                for (std::size_t j = 0; j < tr.p.size(); ++j) {
                    std::vector<std::string> row{to_string(kind), back ? "backward" : "forward",
                                                 std::to_string(i), fmt(tr.t[j])};
                    for (auto& c : point_cells(tr.p[j])) row.push_back(c);
                    row.push_back(to_string(tr.cls));
                    w.row(row);
                }
            }
        }
    }
    r.stamp("portrait");
    return kOk;
}

// ---- sweep -------------------------------------------------------------------

int run_sweep(const Run& r) {
    const auto& P = r.s.model;
    const auto& V = r.s.verify;
    const Model m(P);
    auto header = std::vector<std::string>{"direction", "seed"};
    for (const auto& h : chart_header(P.n)) header.push_back(h + "_0");
    for (const auto& h : std::vector<std::string>{"class", "exit_face", "exit_time"}) header.push_back(h);
    CsvWriter w(r.file("sweep.csv").string(), header);
    CsvWriter sum(r.file("sweep_summary.csv").string(),
                  {"direction", "n", "converges_to_z", "leaves_w", "unresolved"});
    int unresolved = 0;
    for (bool back : {false, true}) {
        const auto res = dichotomy_sweep(m, V.sweep_seeds, V.T_max, V.seed, back, V.threads);
        const std::string dir = back ? "backward" : "forward";
        for (std::size_t i = 0; i < res.trajectories.size(); ++i) {
            const auto& tr = res.trajectories[i];
            std::vector<std::string> row{dir, std::to_string(res.seeds[i])};
            for (auto& c : point_cells(res.starts[i])) row.push_back(c);
            row.push_back(to_string(tr.cls));
            row.push_back(tr.cls == TrajClass::LeavesW ? tr.exit_face.name() : "");
            row.push_back(tr.cls == TrajClass::LeavesW ? fmt(tr.exit_time) : "");
            w.row(row);
        }
        sum.row({dir, std::to_string(V.sweep_seeds), std::to_string(res.converges),
                 std::to_string(res.leaves), std::to_string(res.unresolved)});
        unresolved += res.unresolved;
    }
    r.stamp("sweep");
    if (unresolved > 0) {
        std::cerr << "sweep: " << unresolved << " unresolved trajectories\n";
        return kVerifyFail;
    }
    return kOk;
}

// ---- reconstruct -------------------------------------------------------------

int write_grid(const GField& G, const Box& B, const GFieldGrid& grid, const std::string& path) {
    const int n = G.model().dim();
    auto header = chart_header(n);
    for (const auto& h : std::vector<std::string>{"g", "dg_along_xi_prime", "zone"}) header.push_back(h);
    CsvWriter w(path, header);
    int failures = 0;
    for (int i = 0; i < grid.ny; ++i) {
        for (int j = 0; j < grid.nx; ++j) {
            const double y = B.lo[0] + (B.hi[0] - B.lo[0]) * i / (grid.ny - 1);
            const double x = B.lo[1] + (B.hi[1] - B.lo[1]) * j / (grid.nx - 1);
            const ChartPoint p = make_point(y, x, n);
            auto row = point_cells(p);
            try {
                row.push_back(fmt(G.g(p)));
                row.push_back(fmt(G.dg_along(p)));
                row.push_back(to_string(G.zone(p)));
            } catch (const TraceError&) {
                ++failures;
                row.insert(row.end(), {"nan", "nan", "untraced"});
            }
            w.row(row);
        }
    }
    return failures;
}

int run_reconstruct(const Run& r) {
    r.require("sweep");
    const auto& P = r.s.model;
    std::optional<GField> G;
    try {
        G.emplace(Model(P), r.s.reconstruct);
    } catch (const ConfigError& e) {
        // the scenario itself loaded; the model just admits no reconstruction
        std::cerr << "reconstruct: " << e.what() << '\n';
        fs::remove(r.file("gfield.csv"));
        fs::remove(r.file("gfield_local.csv"));
        r.stamp("reconstruct");
        return kVerifyFail;
    }
    // two grids: the whole window, and a square of half-width r_z around z
    const Box& B = G->window();
    const auto& z = G->model().z().location;
    const double hw = G->model().r_z();
    Box L = B;
    L.lo[0] = std::max(B.lo[0], z[0] - hw);
    L.hi[0] = z[0] + hw;
    L.lo[1] = z[1] - hw;
    L.hi[1] = z[1] + hw;
    int failures = 0;
    failures += write_grid(*G, B, r.s.gfield, r.file("gfield.csv").string());
    failures += write_grid(*G, L, r.s.gfield, r.file("gfield_local.csv").string());
    r.stamp("reconstruct");
    if (failures > 0) {
        std::cerr << "reconstruct: " << failures << " grid nodes could not be traced\n";
        return kVerifyFail;
    }
    return kOk;
}

// ---- verify ------------------------------------------------------------------

int run_verify(const Run& r) {
    r.require("reconstruct");
    const auto rep = merge_report(r.s.model, r.s.reconstruct, r.s.verify);
    Json j = to_json(rep);
    j["scenario"] = scenario_json(r.s);
    std::ofstream(r.file("report.json")) << j.dump(2) << '\n';
    {
        CsvWriter w(r.file("stages.csv").string(), {"stage", "pass"});
        for (const auto& st : rep.stages) w.row({st.name, st.pass ? "pass" : "fail"});
    }
    r.stamp("verify");
    if (!rep.overall) {
        std::cerr << "verification failed at stage \"" << rep.first_failure() << "\"\n";
        return kVerifyFail;
    }
    std::cout << "verification passed (" << rep.stages.size() << " stages)\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Merge two boundary critical points into one interior critical point."};
    app.require_subcommand(1);
    std::string scenario_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    app.add_option("--scenario", scenario_path, "scenario file (defaults when omitted)");
    app.add_option("--out", out_dir, "output directory (overrides the scenario)");
    app.add_option("--seed", seed, "deterministic seed (overrides the scenario)");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    auto* portrait = app.add_subcommand("portrait", "nullclines and a trajectory fan");
    auto* sweep = app.add_subcommand("sweep", "dichotomy sweep of random starts");
    auto* recon = app.add_subcommand("reconstruct", "sample the reconstructed function g");
    auto* verify = app.add_subcommand("verify", "run the verification stages");
    auto* all = app.add_subcommand("all", "run every stage in order");
    for (auto* sc : {portrait, sweep, recon, verify, all}) sc->fallthrough();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfig;
    }

    Run r;
    try {
        r.s = scenario_path.empty() ? default_scenario() : load_scenario(scenario_path);
        if (seed) r.s.verify.seed = *seed;
        if (threads) r.s.verify.threads = *threads;
        if (!out_dir.empty()) r.s.out = out_dir;
        validate(r.s);
        r.out = r.s.out;
        fs::create_directories(r.out);
        r.hash = scenario_hash(r.s);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfig;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfig;
    }

    try {
        if (*portrait) return run_portrait(r);
        if (*sweep) return run_sweep(r);
        if (*recon) return run_reconstruct(r);
        if (*verify) return run_verify(r);
        int rc = run_portrait(r);
        rc = std::max(rc, run_sweep(r));
        rc = std::max(rc, run_reconstruct(r));
        rc = std::max(rc, run_verify(r));
        return rc;
    } catch (const MissingCache& e) {
        std::cerr << e.what() << '\n';
        return kConfig;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kVerifyFail;
    }
}
