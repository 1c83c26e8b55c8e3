#pragma once

// Scenario configuration: a JSON document describing grid, initial data,
// flow parameters, spectral/entropy settings and the verification suite.
// Every field is optional; unknown fields are rejected so that typos surface
// as usage errors rather than silently ignored settings.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "listflow/entropy.hpp"
#include "listflow/errors.hpp"
#include "listflow/flow.hpp"
#include "listflow/geometry.hpp"
#include "listflow/presets.hpp"
#include "listflow/spectral.hpp"

namespace listflow {

struct VerifyConfig {
    std::optional<std::vector<std::string>> checks;  // absent: every check
    std::map<std::string, double> tolerances;
    bool refine = false;
    double theta = 0.5;   // pinching constant for the Laplacian lower bound
    double b = 0.5;       // coefficient of S in the shifted operator
    int sample = 0;       // steps between eigenvalue samples, 0 = automatic
    int branch_mode = 0;  // eigenvalue branch followed by the spectral checks
    int branch_index = 1;
};

struct ScenarioConfig {
    std::string name;
    std::filesystem::path source_dir = ".";

    int N = 256;
    double Lx = 2.0 * std::numbers::pi;
    double Ly = 0.5 * std::numbers::pi;

    std::string preset = "flat";
    PresetParams params;
    std::filesystem::path init_file;

    double alpha = 2.0;
    std::string policy = "zero";
    double r_const = 0.0;
    double T = 0.1;
    std::optional<double> dt;  // default: stability bound with safety factor
    int stride = 1;

    OperatorSpec spectral{1.0, 0.0, 0, 6};

    double k = 1.0;
    double tau0 = 1.0;
    std::string terminal = "ground_state";
    std::filesystem::path terminal_file;

    VerifyConfig verify;
    std::filesystem::path out_dir = ".";

    std::vector<std::filesystem::path> suite;  // member scenarios of a suite file

    TorusGrid grid() const { return TorusGrid::make(N, Lx, Ly); }

    RescalePolicy rescale_policy() const {
        if (policy == "average_s") return RescalePolicy::average_s();
        if (policy == "constant") return RescalePolicy::prescribed(r_const);
        return RescalePolicy::zero();
    }

    InitialData initial_data() const {
        const auto g = grid();
        if (preset == "flat") return presets::flat(g, params);
        if (preset == "winding") return presets::winding(g, params);
        if (preset == "bump_a") return presets::bump_a(g, params);
        if (preset == "bump_b") return presets::bump_b(g, params);
        if (preset == "dilaton_bump") return presets::dilaton_bump(g, params);
        if (preset == "from_file") return presets::from_file(g, resolve(init_file), params.mu);
        throw Error(ErrorKind::UsageError, "init.preset: unknown preset '" + preset + "'");
    }

    FlowState initial_state() const {
        auto d = initial_data();
        return make_state(grid(), std::move(d.metric), std::move(d.dilaton), alpha, rescale_policy());
    }

    /// Configured dt, or the largest step below the default stability-scaled
    /// step that divides T into whole steps.
    double resolved_dt() const {
        if (dt) return *dt;
        const double d = default_dt(initial_state());
        if (T <= 0.0) return d;
        return T / std::ceil(T / d * (1.0 - 1e-12));
    }

    /// Steps between eigenvalue samples: about 100 samples over the run.
    int resolved_sample() const {
        if (verify.sample > 0) return verify.sample;
        const long steps = std::max(1L, std::lround(T / resolved_dt()));
        return static_cast<int>(std::max(1L, steps / 100));
    }

    /// Same scenario with (h, dt) -> (h/2, dt/4); eigenvalue samples keep
    /// their count so the sample spacing also shrinks by 4.
    ScenarioConfig refined() const {
        ScenarioConfig c = *this;
        c.dt = resolved_dt() / 4.0;
        c.verify.sample = resolved_sample();
        c.N = 2 * N;
        return c;
    }

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : source_dir / p;
    }
};

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) line += text[i] == '\n';
    return line;
}

/// Typed accessors that report the dotted field path on failure.
class JsonReader {
public:
    JsonReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("", "expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!ok.count(it.key())) fail(it.key(), "unknown field");
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    double number(const char* key, double fallback) const {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number()) fail(key, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(key, "must be finite");
        return x;
    }

    int integer(const char* key, int fallback) const {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) fail(key, "expected an integer");
        return v.get<int>();
    }

    bool boolean(const char* key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }

    std::string string(const char* key, const std::string& fallback) const {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }

    std::string choice(const char* key, const std::string& fallback, std::initializer_list<const char*> options) const {
        const auto s = string(key, fallback);
        for (const char* o : options)
            if (s == o) return s;
        fail(key, "unknown value '" + s + "'");
    }

    JsonReader object(const char* key) const {
        static const nlohmann::json empty = nlohmann::json::object();
        return JsonReader(has(key) ? j_.at(key) : empty, field(key));
    }

    const nlohmann::json& raw(const char* key) const { return j_.at(key); }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw Error(ErrorKind::UsageError, "field '" + field(key) + "': " + what);
    }

    std::string field(const std::string& key) const {
        if (key.empty()) return path_.empty() ? "<root>" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    const nlohmann::json& j_;
    std::string path_;
};

} // namespace detail

inline ScenarioConfig parse_config_json(const nlohmann::json& doc, const std::filesystem::path& source_dir = ".") {
    using detail::JsonReader;
    const JsonReader root(doc, "");
    root.allow({"name", "grid", "init", "flow", "spectral", "entropy", "verify", "output", "suite"});

    ScenarioConfig c;
    c.source_dir = source_dir;
    c.name = root.string("name", "");

    const auto grid = root.object("grid");
    grid.allow({"N", "Lx", "Ly"});
    c.N = grid.integer("N", c.N);
    c.Lx = grid.number("Lx", c.Lx);
    c.Ly = grid.number("Ly", c.Ly);
    if (c.N < 16 || c.N % 2 != 0) grid.fail("N", "must be even and at least 16");
    if (c.N > 1024) grid.fail("N", "must not exceed 1024 (dense eigensolver limit)");
    if (!(c.Lx > 0.0)) grid.fail("Lx", "must be positive");
    if (!(c.Ly > 0.0)) grid.fail("Ly", "must be positive");

    const auto init = root.object("init");
    init.allow({"preset", "params", "file"});
    c.preset = init.choice("preset", c.preset, {"flat", "bump_a", "bump_b", "winding", "dilaton_bump", "from_file"});
    const auto params = init.object("params");
    params.allow({"a0", "b0", "mu", "eps", "k", "eps_b"});
    c.params.a0 = params.number("a0", c.params.a0);
    c.params.b0 = params.number("b0", c.params.b0);
    c.params.mu = params.number("mu", c.preset == "winding" ? 1.0 : c.params.mu);
    c.params.eps = params.number("eps", c.params.eps);
    c.params.k = params.integer("k", c.params.k);
    c.params.eps_b = params.number("eps_b", c.params.eps_b);
    if (!(c.params.a0 > 0.0)) params.fail("a0", "must be positive");
    if (!(c.params.b0 > 0.0)) params.fail("b0", "must be positive");
    if (std::abs(c.params.eps) >= 1.0 && c.preset != "dilaton_bump") params.fail("eps", "must satisfy |eps| < 1");
    if (std::abs(c.params.eps_b) >= 1.0) params.fail("eps_b", "must satisfy |eps_b| < 1");
    if (c.params.k < 0) params.fail("k", "must be non-negative");
    c.init_file = init.string("file", "");
    if (c.preset == "from_file" && c.init_file.empty()) init.fail("file", "required by preset 'from_file'");

    const auto flow = root.object("flow");
    flow.allow({"alpha", "policy", "r_const", "T", "dt", "stride"});
    c.alpha = flow.number("alpha", c.alpha);
    c.policy = flow.choice("policy", c.policy, {"zero", "average_s", "constant"});
    c.r_const = flow.number("r_const", c.r_const);
    c.T = flow.number("T", c.T);
    if (flow.has("dt")) c.dt = flow.number("dt", 0.0);
    c.stride = flow.integer("stride", c.stride);
    if (!(c.alpha > 0.0)) flow.fail("alpha", "must be positive");
    if (!(c.T >= 0.0)) flow.fail("T", "must be non-negative");
    if (c.dt && !(*c.dt > 0.0)) flow.fail("dt", "must be positive");
    if (c.stride < 1) flow.fail("stride", "must be at least 1");

    const auto spec = root.object("spectral");
    spec.allow({"c2", "c0", "m_max", "count"});
    c.spectral.c2 = spec.number("c2", c.spectral.c2);
    c.spectral.c0 = spec.number("c0", c.spectral.c0);
    c.spectral.m_max = spec.integer("m_max", c.spectral.m_max);
    c.spectral.count = spec.integer("count", c.spectral.count);
    if (!(c.spectral.c2 > 0.0)) spec.fail("c2", "must be positive");
    if (c.spectral.m_max < 0) spec.fail("m_max", "must be non-negative");
    if (c.spectral.count < 1) spec.fail("count", "must be at least 1");

    const auto ent = root.object("entropy");
    ent.allow({"k", "tau0", "terminal", "file"});
    c.k = ent.number("k", c.k);
    c.tau0 = ent.number("tau0", c.tau0);
    c.terminal = ent.choice("terminal", c.terminal, {"ground_state", "from_file"});
    c.terminal_file = ent.string("file", "");
    if (!(c.k >= 1.0)) ent.fail("k", "must be >= 1");
    if (!(c.tau0 > 0.0)) ent.fail("tau0", "must be positive");
    if (c.terminal == "from_file" && c.terminal_file.empty()) ent.fail("file", "required by terminal 'from_file'");

    const auto ver = root.object("verify");
    ver.allow({"checks", "tolerances", "refine", "theta", "b", "sample", "branch"});
    if (ver.has("checks")) {
        const auto& list = ver.raw("checks");
        if (!list.is_array()) ver.fail("checks", "expected an array of check names");
        std::vector<std::string> names;
        for (const auto& item : list) {
            if (!item.is_string()) ver.fail("checks", "expected an array of check names");
            names.push_back(item.get<std::string>());
        }
        c.verify.checks = std::move(names);
    }
    if (ver.has("tolerances")) {
        const auto& tol = ver.raw("tolerances");
        if (!tol.is_object()) ver.fail("tolerances", "expected an object of name: tolerance");
        for (auto it = tol.begin(); it != tol.end(); ++it) {
            if (!it.value().is_number() || !(it.value().get<double>() > 0.0)) {
                ver.fail("tolerances." + it.key(), "must be a positive number");
            }
            c.verify.tolerances[it.key()] = it.value().get<double>();
        }
    }
    c.verify.refine = ver.boolean("refine", c.verify.refine);
    c.verify.theta = ver.number("theta", c.verify.theta);
    c.verify.b = ver.number("b", c.verify.b);
    c.verify.sample = ver.integer("sample", c.verify.sample);
    if (c.verify.sample < 0) ver.fail("sample", "must be non-negative");
    const auto branch = ver.object("branch");
    branch.allow({"mode", "index"});
    c.verify.branch_mode = branch.integer("mode", c.verify.branch_mode);
    c.verify.branch_index = branch.integer("index", c.verify.branch_index);
    if (c.verify.branch_mode < 0) branch.fail("mode", "must be non-negative");
    if (c.verify.branch_index < 0) branch.fail("index", "must be non-negative");

    const auto out = root.object("output");
    out.allow({"dir"});
    c.out_dir = out.string("dir", c.out_dir.string());

    if (root.has("suite")) {
        const auto& list = root.raw("suite");
        if (!list.is_array()) root.fail("suite", "expected an array of scenario paths");
        for (const auto& item : list) {
            if (!item.is_string()) root.fail("suite", "expected an array of scenario paths");
            c.suite.push_back(item.get<std::string>());
        }
    }
    return c;
}

/// Reads and validates a scenario file. Malformed JSON is reported with the
/// line of the offending byte.
inline ScenarioConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::UsageError, "cannot open config " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::UsageError, path.string() + ": line " +
                                               std::to_string(detail::line_of_offset(text, e.byte)) +
                                               ": malformed JSON");
    }
    try {
        auto c = parse_config_json(doc, path.parent_path());
        if (c.name.empty()) c.name = path.stem().string();
        return c;
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.message());
    }
}

/// Terminal f for the entropy pass: the ground state of -4 Lap + k S at the
/// final state, or a CSV with header x,f.
inline std::vector<double> terminal_f(const ScenarioConfig& cfg, const FlowState& final_state) {
    if (cfg.terminal == "ground_state") return ground_state_terminal(final_state, cfg.k);
    const auto path = cfg.resolve(cfg.terminal_file);
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::UsageError, "entropy.file: cannot open " + path.string());
    }
    std::string line;
    std::getline(in, line);
    if (line.rfind("x,f", 0) != 0) {
        throw Error(ErrorKind::UsageError, "entropy.file: expected header x,f in " + path.string());
    }
    std::vector<double> f;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument("columns");
            f.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw Error(ErrorKind::UsageError, "entropy.file: line " + std::to_string(row) + " is malformed");
        }
    }
    if (static_cast<int>(f.size()) != final_state.grid.n) {
        throw Error(ErrorKind::UsageError, "entropy.file: " + std::to_string(f.size()) + " rows but grid.N = " +
                                               std::to_string(final_state.grid.n));
    }
    return f;
}

} // namespace listflow
