#pragma once
// Scenario files: a flat "key = value" format with [section] headers.
//
//   # comment
//   [model]
//   n = 3
//   beta_kind = "monotone"
//
// Values are numbers, true/false, or double-quoted strings. Unknown sections or
// keys are configuration errors, as are duplicate keys.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "model_chart.hpp"
#include "reconstruct.hpp"
#include "verify.hpp"

namespace mmerge {

struct PortraitOptions {
    int fan = 48;              // trajectories per field in the fan
    double T_max = 60.0;
    int nullcline_samples = 500;
};

struct GFieldGrid {
    int ny = 41;
    int nx = 41;
};

struct Scenario {
    ModelParams model;
    ReconstructParams reconstruct;
    MergeOptions verify;
    PortraitOptions portrait;
    GFieldGrid gfield;
    std::string out = "out";
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct RawValue {
    std::string text;
    bool quoted = false;
    int line = 0;
};

inline std::string where(const std::string& key, const RawValue& v) {
    return "line " + std::to_string(v.line) + " (" + key + ")";
}

inline double as_double(const std::string& key, const RawValue& v) {
    if (v.quoted) throw ConfigError(where(key, v) + ": expected a number");
    double d = 0.0;
    const char* b = v.text.data();
    const char* e = b + v.text.size();
    if (*b == '+') ++b;
    auto [ptr, ec] = std::from_chars(b, e, d);
    if (ec != std::errc() || ptr != e) throw ConfigError(where(key, v) + ": expected a number");
    return d;
}

inline long long as_int(const std::string& key, const RawValue& v) {
    const double d = as_double(key, v);
    if (d != static_cast<double>(static_cast<long long>(d)))
        throw ConfigError(where(key, v) + ": expected an integer");
    return static_cast<long long>(d);
}

inline bool as_bool(const std::string& key, const RawValue& v) {
    if (!v.quoted && v.text == "true") return true;
    if (!v.quoted && v.text == "false") return false;
    throw ConfigError(where(key, v) + ": expected true or false");
}

inline std::string as_string(const std::string& key, const RawValue& v) {
    if (!v.quoted) throw ConfigError(where(key, v) + ": expected a quoted string");
    return v.text;
}

using Setter = std::function<void(const std::string&, const RawValue&)>;

inline Setter set(double& d) {
    return [&d](const std::string& k, const RawValue& v) { d = as_double(k, v); };
}
inline Setter set(int& i) {
    return [&i](const std::string& k, const RawValue& v) { i = static_cast<int>(as_int(k, v)); };
}
inline Setter set(std::uint64_t& u) {
    return [&u](const std::string& k, const RawValue& v) {
        const auto x = as_int(k, v);
        if (x < 0) throw ConfigError(where(k, v) + ": must be non-negative");
        u = static_cast<std::uint64_t>(x);
    };
}
inline Setter set(bool& b) {
    return [&b](const std::string& k, const RawValue& v) { b = as_bool(k, v); };
}
inline Setter set(std::string& s) {
    return [&s](const std::string& k, const RawValue& v) { s = as_string(k, v); };
}

}  // namespace detail

/// Checks the parts of the scenario that the model and reconstruction do not
/// check themselves (those run when the objects are built).
inline void validate(const Scenario& s) {
    const auto& R = s.reconstruct;
    if (!(0.0 < R.eps2 && R.eps2 < R.eps1 && R.eps1 < R.rho))
        throw ConfigError("need 0 < eps2 < eps1 < rho");
    if (!(R.a < R.m() - R.eps1 * R.eps1 && R.b > R.m() + R.eps1 * R.eps1))
        throw ConfigError("face values must bracket m -+ eps1^2");
    if (!(R.tol > 0.0 && R.lattice > 0.0 && R.T_max > 0.0))
        throw ConfigError("reconstruct: tol, lattice and T_max must be positive");
    const auto& V = s.verify;
    if (V.sweep_seeds < 1 || V.threads < 1 || V.gradient_samples < 1 || V.boundary_samples < 0 ||
        V.face_samples < 1 || V.straddle_samples < 1 || V.c0_halvings < 2 || V.c0_grid < 3 ||
        V.census_grid < 0 || !(V.T_max > 0.0) || !(V.T_extra > 0.0))
        throw ConfigError("verify: sample counts and times out of range");
    if (s.portrait.fan < 1 || !(s.portrait.T_max > 0.0) || s.portrait.nullcline_samples < 2)
        throw ConfigError("portrait: fan, T_max and nullcline_samples out of range");
    if (s.gfield.ny < 2 || s.gfield.nx < 2) throw ConfigError("gfield: need at least 2x2 nodes");
    if (s.out.empty()) throw ConfigError("out must not be empty");
}

inline Scenario parse_scenario(std::istream& in) {
    using detail::set;
    Scenario s;
    auto& M = s.model;
    auto& R = s.reconstruct;
    auto& V = s.verify;
    std::map<std::string, std::map<std::string, detail::Setter>> schema;
    schema[""] = {{"out", set(s.out)}};
    schema["model"] = {
        {"n", set(M.n)},
        {"k", set(M.k)},
        {"w_scale", set(M.w_scale)},
        {"alpha_outer_lo", set(M.alpha_outer_lo)},
        {"alpha_inner_lo", set(M.alpha_inner_lo)},
        {"alpha_inner_hi", set(M.alpha_inner_hi)},
        {"alpha_outer_hi", set(M.alpha_outer_hi)},
        {"beta_lo", set(M.beta_lo)},
        {"beta_hi", set(M.beta_hi)},
        {"beta_kind", set(M.beta_kind)},
        {"delta_inner", set(M.delta_inner)},
        {"delta_outer", set(M.delta_outer)},
        {"c", set(M.c)},
        {"r_z", set(M.r_z)},
        {"window_y", set(M.window_y)},
        {"window_x_lo", set(M.window_x_lo)},
        {"window_x_hi", set(M.window_x_hi)},
        {"inner_y", set(M.inner_y)},
        {"inner_x_lo", set(M.inner_x_lo)},
        {"inner_x_hi", set(M.inner_x_hi)},
        {"u_halfwidth", set(M.u_halfwidth)},
    };
    schema["reconstruct"] = {
        {"rho", set(R.rho)},       {"eps1", set(R.eps1)},
        {"eps2", set(R.eps2)},     {"a", set(R.a)},
        {"b", set(R.b)},           {"frame_scale", set(R.frame_scale)},
        {"T_max", set(R.T_max)},   {"tol", set(R.tol)},
        {"lattice", set(R.lattice)}, {"window_margin", set(R.window_margin)},
    };
    schema["verify"] = {
        {"sweep_seeds", set(V.sweep_seeds)},
        {"T_max", set(V.T_max)},
        {"T_extra", set(V.T_extra)},
        {"seed", set(V.seed)},
        {"threads", set(V.threads)},
        {"gradient_samples", set(V.gradient_samples)},
        {"boundary_samples", set(V.boundary_samples)},
        {"face_samples", set(V.face_samples)},
        {"straddle_samples", set(V.straddle_samples)},
        {"c0_halvings", set(V.c0_halvings)},
        {"c0_grid", set(V.c0_grid)},
        {"census_grid", set(V.census_grid)},
        {"fail_fast", set(V.fail_fast)},
    };
    schema["portrait"] = {
        {"fan", set(s.portrait.fan)},
        {"T_max", set(s.portrait.T_max)},
        {"nullcline_samples", set(s.portrait.nullcline_samples)},
    };
    schema["gfield"] = {{"ny", set(s.gfield.ny)}, {"nx", set(s.gfield.nx)}};

    std::string section;
    std::map<std::string, int> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // strip comments outside quotes
        bool q = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') q = !q;
            if (line[i] == '#' && !q) {
                line.resize(i);
                break;
            }
        }
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string at = "line " + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(at + ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (!schema.count(section) || section.empty())
                throw ConfigError(at + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(at + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty() || val.empty()) throw ConfigError(at + ": expected key = value");
        detail::RawValue rv{val, false, lineno};
        if (val.front() == '"') {
            if (val.size() < 2 || val.back() != '"' || val.find('"', 1) != val.size() - 1)
                throw ConfigError(at + ": malformed string");
            rv.text = val.substr(1, val.size() - 2);
            rv.quoted = true;
        }
        auto& keys = schema[section];
        auto it = keys.find(key);
        const std::string full = section.empty() ? key : section + "." + key;
        if (it == keys.end()) throw ConfigError(at + ": unknown key " + full);
        if (seen[full]++) throw ConfigError(at + ": duplicate key " + full);
        it->second(full, rv);
    }
    build(s.model);
    validate(s);
    return s;
}

inline Scenario parse_scenario_string(const std::string& text) {
    std::istringstream in(text);
    return parse_scenario(in);
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read scenario " + path);
    return parse_scenario(in);
}

inline Scenario default_scenario() {
    Scenario s;
    build(s.model);
    return s;
}

// ---------------------------------------------------------------------------
// CSV output: header row, "," separator, 17 significant digits, C locale.

inline std::string fmt(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw std::runtime_error("cannot write " + path);
        row(header);
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }
    bool ok() const { return static_cast<bool>(out_); }

private:
    std::ofstream out_;
};

inline std::vector<std::string> chart_header(int n) {
    std::vector<std::string> h{"y", "x"};
    for (int i = 2; i < n; ++i) h.push_back("u" + std::to_string(i - 1));
    return h;
}

}  // namespace mmerge
