#pragma once

// Named initial data for the symmetric class. Every preset is built from
// constants a0, b0 and a winding slope mu; the bumps perturb one profile by
// eps * cos(2 pi k x / Lx) (or sin for the dilaton).

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "listflow/errors.hpp"
#include "listflow/geometry.hpp"

namespace listflow {

struct InitialData {
    MetricProfile metric;
    DilatonProfile dilaton;
};

struct PresetParams {
    double a0 = 1.0;
    double b0 = 1.0;
    double mu = 0.0;
    double eps = 0.1;
    int k = 1;
    double eps_b = 0.0;  // dilaton_bump only: optional b perturbation
};

namespace presets {

inline std::vector<double> constant(const TorusGrid& g, double value) { return std::vector<double>(g.n, value); }

inline std::vector<double> cosine(const TorusGrid& g, double base, double eps, int k) {
    std::vector<double> out(g.n);
    for (int i = 0; i < g.n; ++i) out[i] = base * (1.0 + eps * std::cos(2.0 * std::numbers::pi * k * g.x(i) / g.lx));
    return out;
}

inline InitialData flat(const TorusGrid& g, const PresetParams& p = {}) {
    return {{constant(g, p.a0), constant(g, p.b0)}, {p.mu, constant(g, 0.0)}};
}

inline InitialData winding(const TorusGrid& g, const PresetParams& p) { return flat(g, p); }

inline InitialData bump_a(const TorusGrid& g, const PresetParams& p) {
    return {{cosine(g, p.a0, p.eps, p.k), constant(g, p.b0)}, {p.mu, constant(g, 0.0)}};
}

inline InitialData bump_b(const TorusGrid& g, const PresetParams& p) {
    return {{constant(g, p.a0), cosine(g, p.b0, p.eps, p.k)}, {p.mu, constant(g, 0.0)}};
}

inline InitialData dilaton_bump(const TorusGrid& g, const PresetParams& p) {
    InitialData d{{constant(g, p.a0), cosine(g, p.b0, p.eps_b, p.k)}, {p.mu, std::vector<double>(g.n)}};
    for (int i = 0; i < g.n; ++i) d.dilaton.p[i] = p.eps * std::sin(2.0 * std::numbers::pi * p.k * g.x(i) / g.lx);
    return d;
}

/// CSV with header x,a,b,p and exactly N rows at x_i = i h.
inline InitialData from_file(const TorusGrid& g, const std::filesystem::path& path, double mu) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::UsageError, "init.file: cannot open " + path.string());
    }
    std::string line;
    std::getline(in, line);
    if (line.rfind("x,a,b,p", 0) != 0) {
        throw Error(ErrorKind::UsageError, "init.file: expected header x,a,b,p in " + path.string());
    }
    InitialData d{{{}, {}}, {mu, {}}};
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        double vals[4];
        for (int c = 0; c < 4; ++c) {
            if (!std::getline(ss, cell, ',')) {
                throw Error(ErrorKind::UsageError, "init.file: line " + std::to_string(row) + " has fewer than 4 columns");
            }
            try {
                vals[c] = std::stod(cell);
            } catch (const std::exception&) {
                throw Error(ErrorKind::UsageError, "init.file: line " + std::to_string(row) + " is not numeric");
            }
        }
        d.metric.a.push_back(vals[1]);
        d.metric.b.push_back(vals[2]);
        d.dilaton.p.push_back(vals[3]);
    }
    if (static_cast<int>(d.metric.a.size()) != g.n) {
        throw Error(ErrorKind::UsageError, "init.file: " + std::to_string(d.metric.a.size()) +
                                               " rows but grid.N = " + std::to_string(g.n));
    }
    return d;
}

} // namespace presets
} // namespace listflow
