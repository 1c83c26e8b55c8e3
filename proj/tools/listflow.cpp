// Command-line front end: listflow <command> --config <path> [--out <dir>] [--quiet]
//
// Exit codes: 0 success, 1 a verification check failed, 2 usage error,
// 3 numerical failure (stability, metric or weight positivity, blow-up).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "listflow/verify.hpp"

namespace fs = std::filesystem;
using namespace listflow;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kUsage = 2, kNumerical = 3 };

struct Options {
    std::string command;
    std::string config;
    std::string out;
    bool quiet = false;
    // oracle
    std::optional<double> a0, mu, alpha, t, r, smin0;
    int n = 2;
};

void say(const Options& o, const std::string& line) {
    if (!o.quiet) std::cout << line << '\n';
}

fs::path output_dir(const Options& o, const ScenarioConfig& cfg) {
    const fs::path dir = o.out.empty() ? cfg.out_dir : fs::path(o.out);
    fs::create_directories(dir);
    return dir;
}

ScenarioConfig load(const Options& o) {
    if (o.config.empty()) {
        throw Error(ErrorKind::UsageError, "command '" + o.command + "' requires --config");
    }
    auto cfg = parse_config(o.config);
    if (!cfg.suite.empty() && o.command != "verify") {
        throw Error(ErrorKind::UsageError, "suite files are only accepted by 'verify'");
    }
    return cfg;
}

int cmd_flow(const Options& o) {
    const auto cfg = load(o);
    const auto traj = run(cfg.initial_state(), cfg.T, cfg.resolved_dt(), cfg.stride);
    const auto path = output_dir(o, cfg) / "trajectory.csv";
    write_trajectory_csv(traj, path);
    const auto& last = traj.states.back();
    say(o, "flow " + cfg.name + ": t = " + format_double(last.t) + ", dt = " + format_double(traj.dt) +
               ", min a = " + format_double(last.metric.min_a()) + ", min b = " + format_double(last.metric.min_b()));
    say(o, "wrote " + path.string());
    return kOk;
}

int cmd_spectrum(const Options& o) {
    const auto cfg = load(o);
    const auto s = cfg.initial_state();
    const auto pairs = lowest_spectrum(s, cfg.spectral);
    const auto path = output_dir(o, cfg) / "spectrum.csv";
    write_spectrum_csv({pairs}, path);
    std::string head;
    for (std::size_t i = 0; i < pairs.size() && i < 8; ++i) head += (i ? ", " : "") + format_double(pairs[i].lambda);
    say(o, "spectrum " + cfg.name + " at t = 0: " + head + (pairs.size() > 8 ? ", ..." : ""));
    say(o, "wrote " + path.string());
    return kOk;
}

/// Every branch of every mode followed along the run; the index column is the
/// branch label (rank at t = 0), not the rank at time t.
int cmd_eigentrace(const Options& o) {
    const auto cfg = load(o);
    const auto traj = run(cfg.initial_state(), cfg.T, cfg.resolved_dt(), 1);
    const int sample = cfg.resolved_sample();
    std::vector<std::vector<EigenPair>> prev(cfg.spectral.m_max + 1);
    std::vector<std::vector<EigenPair>> snapshots;
    for (std::size_t j = 0; j < traj.states.size(); j += sample) {
        const auto& s = traj.states[j];
        const auto cache = s.geometry();
        std::vector<EigenPair> snap;
        for (int m = 0; m <= cfg.spectral.m_max; ++m) {
            auto next = solve_mode(s, cache, cfg.spectral, m);
            if (!prev[m].empty()) {
                const auto corr = track(prev[m], next, cache, s.grid);
                std::vector<EigenPair> ordered;
                for (std::size_t b = 0; b < prev[m].size(); ++b) {
                    if (corr.target[b] < 0) {
                        throw Error(ErrorKind::AllZero, "mode " + std::to_string(m) + " branch " + std::to_string(b) +
                                                            " lost at t = " + format_double(s.t));
                    }
                    ordered.push_back(next[corr.target[b]]);
                }
                next = std::move(ordered);
            }
            snap.insert(snap.end(), next.begin(), next.end());
            prev[m] = std::move(next);
        }
        snapshots.push_back(std::move(snap));
    }
    const auto path = output_dir(o, cfg) / "spectrum.csv";
    write_spectrum_csv(snapshots, path);
    say(o, "eigentrace " + cfg.name + ": " + std::to_string(snapshots.size()) + " samples, modes 0.." +
               std::to_string(cfg.spectral.m_max) + ", " + std::to_string(cfg.spectral.count) + " branches each");
    say(o, "wrote " + path.string());
    return kOk;
}

int cmd_entropy(const Options& o) {
    const auto cfg = load(o);
    const auto traj = run(cfg.initial_state(), cfg.T, cfg.resolved_dt(), 1);
    const auto conj = conjugate_backward(traj, terminal_f(cfg, traj.states.back()), cfg.tau0);
    const auto es = entropy_series(traj, conj, cfg.k);
    const auto path = output_dir(o, cfg) / "entropy.csv";
    write_entropy_csv(es, path);
    say(o, "entropy " + cfg.name + " (k = " + format_double(cfg.k) + "): F(0) = " + format_double(es.F.front()) +
               ", F(T) = " + format_double(es.F.back()) + ", W(0) = " + format_double(es.W.front()) +
               ", W(T) = " + format_double(es.W.back()));
    say(o, "wrote " + path.string());
    return kOk;
}

int cmd_verify(const Options& o) {
    const auto cfg = load(o);
    const auto result = run_suite(cfg);
    const auto dir = output_dir(o, cfg);
    write_report(result, dir);
    if (!o.quiet) {
        for (const auto& r : result.reports) {
            char line[160];
            std::snprintf(line, sizeof line, "  %-48s %-24s residual %.3e", r.check.name.c_str(), r.status().c_str(),
                          r.residual_max);
            std::string text = line;
            if (r.order_estimate) text += "  order " + format_double(*r.order_estimate);
            std::cout << text << '\n';
        }
        std::cout << "verify " << result.name << ": " << (result.pass() ? "PASS" : "FAIL") << '\n';
        std::cout << "wrote " << (dir / "report.json").string() << '\n';
    }
    return result.pass() ? kOk : kCheckFailed;
}

/// Closed-form winding solution and the curvature comparison ODE. Values come
/// from the flags, falling back to the scenario (if any), then to the unit
/// winding torus with alpha = 2.
int cmd_oracle(const Options& o) {
    ScenarioConfig cfg;
    cfg.params.mu = 1.0;
    if (!o.config.empty()) cfg = load(o);
    const double a0 = o.a0.value_or(cfg.params.a0);
    const double mu = o.mu.value_or(cfg.params.mu);
    const double alpha = o.alpha.value_or(cfg.alpha);
    const double t = o.t.value_or(cfg.T);
    const double r = o.r.value_or(cfg.policy == "constant" ? cfg.r_const : 0.0);
    const double smin0 = o.smin0.value_or(-alpha * mu * mu / (a0 * a0));
    if (!(t >= 0.0)) throw Error(ErrorKind::UsageError, "--t must be non-negative");

    const double a = exact_winding_solution(a0, mu, alpha, t);
    const auto rs = RSeries::constant(r, t > 0.0 ? t : 1.0);
    std::cout << "t " << format_double(t) << '\n';
    std::cout << "winding_a " << format_double(a) << '\n';
    std::cout << "winding_S " << format_double(-alpha * mu * mu / (a * a)) << '\n';
    std::cout << "comparison_smin0 " << format_double(smin0) << '\n';
    std::cout << "comparison_x " << format_double(comparison_solution(smin0, o.n, rs, t)) << '\n';
    std::cout << "comparison_x_riccati " << format_double(comparison_riccati(smin0, o.n, rs, t)) << '\n';
    return kOk;
}

int dispatch(const Options& o) {
    if (o.command == "flow") return cmd_flow(o);
    if (o.command == "spectrum") return cmd_spectrum(o);
    if (o.command == "eigentrace") return cmd_eigentrace(o);
    if (o.command == "entropy") return cmd_entropy(o);
    if (o.command == "verify") return cmd_verify(o);
    return cmd_oracle(o);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical lab for the rescaled List extended Ricci flow on 1D-symmetric tori"};
    Options o;
    app.add_option("command", o.command, "flow | spectrum | eigentrace | entropy | verify | oracle")
        ->required()
        ->check(CLI::IsMember({"flow", "spectrum", "eigentrace", "entropy", "verify", "oracle"}));
    app.add_option("--config", o.config, "scenario JSON file");
    app.add_option("--out", o.out, "output directory (overrides output.dir)");
    app.add_flag("--quiet", o.quiet, "suppress progress output");
    auto* oracle = app.add_option_group("oracle", "inputs for the oracle command");
    oracle->add_option("--a0", o.a0, "initial a of the winding torus");
    oracle->add_option("--mu", o.mu, "winding number of the dilaton");
    oracle->add_option("--alpha", o.alpha, "dilaton coupling");
    oracle->add_option("--t", o.t, "evaluation time");
    oracle->add_option("--r", o.r, "constant rescale function");
    oracle->add_option("--smin0", o.smin0, "initial minimum of S (default: winding value)");
    oracle->add_option("--n", o.n, "dimension in the comparison ODE")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        return dispatch(o);
    } catch (const Error& e) {
        std::cerr << "listflow " << o.command << ": " << e.what() << '\n';
        return e.is_numerical() ? kNumerical : kUsage;
    } catch (const std::exception& e) {
        std::cerr << "listflow " << o.command << ": " << e.what() << '\n';
        return kUsage;
    }
}
