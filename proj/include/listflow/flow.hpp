#pragma once

// Rescaled List extended Ricci flow restricted to the symmetric class
//
//     d/dt g_ij = -2 (S_ij - (r/n) g_ij),   d/dt phi = Lap phi,
//
// which for g = a^2 dx^2 + b^2 dy^2, phi = mu x + p reduces to
//
//     a_t = -K a + alpha (mu + p')^2 / a + (r/n) a
//     b_t = -K b + (r/n) b
//     p_t = Lap phi.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "listflow/errors.hpp"
#include "listflow/geometry.hpp"
#include "listflow/io.hpp"

namespace listflow {

struct RescalePolicy {
    enum class Kind { Zero, AverageS, PrescribedConstant };
    Kind kind = Kind::Zero;
    double constant = 0.0;

    static RescalePolicy zero() { return {Kind::Zero, 0.0}; }
    static RescalePolicy average_s() { return {Kind::AverageS, 0.0}; }
    static RescalePolicy prescribed(double c) { return {Kind::PrescribedConstant, c}; }

    double evaluate(const GeometryCache& cache, const TorusGrid& grid) const {
        switch (kind) {
        case Kind::Zero: return 0.0;
        case Kind::AverageS: return integrate(cache.S, cache, grid) / cache.area;
        case Kind::PrescribedConstant: return constant;
        }
        return 0.0;
    }
};

struct FlowState {
    double t = 0.0;
    TorusGrid grid;
    MetricProfile metric;
    DilatonProfile dilaton;
    double alpha = 2.0;
    int n = 2;
    RescalePolicy policy;
    double Ir = 0.0;     // accumulated integral of r over [0, t]
    double Smin0 = 0.0;  // min S at construction, never updated

    GeometryCache geometry() const { return compute_geometry(grid, metric, dilaton, alpha); }
};

inline FlowState make_state(const TorusGrid& grid, MetricProfile metric, DilatonProfile dilaton, double alpha,
                            RescalePolicy policy = RescalePolicy::zero()) {
    if (!(alpha > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "coupling alpha must be positive");
    }
    FlowState s;
    s.grid = grid;
    s.metric = std::move(metric);
    s.dilaton = std::move(dilaton);
    s.alpha = alpha;
    s.policy = policy;
    const auto cache = s.geometry();
    s.Smin0 = *std::min_element(cache.S.begin(), cache.S.end());
    return s;
}

struct FlowRhs {
    std::vector<double> da;
    std::vector<double> db;
    std::vector<double> dp;
    double r = 0.0;
};

inline FlowRhs flow_rhs(const FlowState& s, const GeometryCache& c) {
    const int n = s.grid.n;
    FlowRhs out{std::vector<double>(n), std::vector<double>(n), c.lapPhi, s.policy.evaluate(c, s.grid)};
    const double shift = out.r / s.n;
    for (int i = 0; i < n; ++i) {
        const double a = s.metric.a[i];
        const double b = s.metric.b[i];
        out.da[i] = -c.K[i] * a + s.alpha * c.dphi[i] * c.dphi[i] / a + shift * a;
        out.db[i] = -c.K[i] * b + shift * b;
    }
    return out;
}

inline FlowRhs flow_rhs(const FlowState& s) { return flow_rhs(s, s.geometry()); }

/// Safety factor of the stability guard. RK4 is stable for dt * lambda <= 2.78
/// on the negative real axis; the stiffest diffusive mode has
/// lambda = 4 / (h^2 min a^2), so 2.0 keeps the guard inside that region.
inline constexpr double kStabilityGuard = 2.0;
/// Safety factor of the default step.
inline constexpr double kDefaultSafety = 0.5;
/// Flow collapse threshold on min(a, b).
inline constexpr double kCollapseThreshold = 1e-6;

/// dt_max = sigma h^2 min(a^2) / 4.
inline double dt_max(const FlowState& s, double sigma = kStabilityGuard) {
    const double amin = s.metric.min_a();
    return sigma * s.grid.h * s.grid.h * amin * amin / 4.0;
}

inline double default_dt(const FlowState& s) { return dt_max(s, kDefaultSafety); }

namespace detail {

inline FlowState advance(const FlowState& s, const FlowRhs& k, double dt) {
    FlowState out = s;
    for (int i = 0; i < s.grid.n; ++i) {
        out.metric.a[i] += dt * k.da[i];
        out.metric.b[i] += dt * k.db[i];
        out.dilaton.p[i] += dt * k.dp[i];
    }
    out.t += dt;
    return out;
}

inline void check_collapse(const FlowState& s) {
    const double m = std::min(s.metric.min_a(), s.metric.min_b());
    if (!(m >= kCollapseThreshold)) {
        throw Error(ErrorKind::NonPositiveMetric, "flow collapse: min(a, b) = " + format_double(m));
    }
}

} // namespace detail

/// Classical RK4 step; r is re-evaluated at every stage and Ir advances by the
/// Simpson combination of the stage values.
inline FlowState step_rk4(const FlowState& s, double dt) {
    if (!(dt > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "time step must be positive");
    }
    const double limit = dt_max(s);
    if (dt > limit * (1.0 + 1e-12)) {
        throw Error(ErrorKind::StabilityViolation,
                    "dt = " + format_double(dt) + " exceeds dt_max = " + format_double(limit));
    }
    const FlowRhs k1 = flow_rhs(s);
    FlowState s2 = detail::advance(s, k1, 0.5 * dt);
    detail::check_collapse(s2);
    const FlowRhs k2 = flow_rhs(s2);
    FlowState s3 = detail::advance(s, k2, 0.5 * dt);
    detail::check_collapse(s3);
    const FlowRhs k3 = flow_rhs(s3);
    FlowState s4 = detail::advance(s, k3, dt);
    detail::check_collapse(s4);
    const FlowRhs k4 = flow_rhs(s4);

    FlowState out = s;
    const double c = dt / 6.0;
    for (int i = 0; i < s.grid.n; ++i) {
        out.metric.a[i] += c * (k1.da[i] + 2.0 * k2.da[i] + 2.0 * k3.da[i] + k4.da[i]);
        out.metric.b[i] += c * (k1.db[i] + 2.0 * k2.db[i] + 2.0 * k3.db[i] + k4.db[i]);
        out.dilaton.p[i] += c * (k1.dp[i] + 2.0 * k2.dp[i] + 2.0 * k3.dp[i] + k4.dp[i]);
    }
    out.t = s.t + dt;
    out.Ir = s.Ir + c * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r);
    detail::check_collapse(out);
    return out;
}

struct Trajectory {
    std::vector<FlowState> states;
    double dt = 0.0;
    int stride = 1;
    std::vector<double> r_series;

    std::vector<double> times() const {
        std::vector<double> t;
        t.reserve(states.size());
        for (const auto& s : states) t.push_back(s.t);
        return t;
    }

    std::vector<double> Ir_series() const {
        std::vector<double> out;
        out.reserve(states.size());
        for (const auto& s : states) out.push_back(s.Ir);
        return out;
    }

    double spacing() const { return dt * stride; }
};

/// Integrates to T (rounded to a whole number of strides) storing every
/// `stride`-th state. Step errors are re-thrown with the failing time.
inline Trajectory run(const FlowState& s0, double T, double dt, int stride = 1) {
    if (!(T >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "final time T must be non-negative");
    }
    if (stride < 1) {
        throw Error(ErrorKind::InvalidArgument, "stride must be >= 1");
    }
    Trajectory traj;
    traj.dt = dt;
    traj.stride = stride;
    traj.states.push_back(s0);
    traj.r_series.push_back(s0.policy.evaluate(s0.geometry(), s0.grid));
    if (T == 0.0) {
        return traj;
    }
    if (!(dt > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "time step must be positive");
    }
    long steps = std::max(1L, std::lround(T / dt));
    steps = ((steps + stride - 1) / stride) * stride;

    FlowState s = s0;
    for (long k = 1; k <= steps; ++k) {
        try {
            s = step_rk4(s, dt);
        } catch (const Error& e) {
            throw e.annotated("step " + std::to_string(k) + " from t = " + format_double(s.t));
        }
        s.t = s0.t + k * dt;
        if (k % stride == 0) {
            traj.states.push_back(s);
            traj.r_series.push_back(s.policy.evaluate(s.geometry(), s.grid));
        }
    }
    return traj;
}

inline void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
    CsvWriter csv(path, {"t", "r", "Ir", "area", "Smin", "Smax", "min_a", "min_b"});
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        const auto& s = traj.states[i];
        const auto c = s.geometry();
        const auto [smin, smax] = std::minmax_element(c.S.begin(), c.S.end());
        csv.row({format_double(s.t), format_double(traj.r_series[i]), format_double(s.Ir), format_double(c.area),
                 format_double(*smin), format_double(*smax), format_double(s.metric.min_a()),
                 format_double(s.metric.min_b())});
    }
}

// ---------------------------------------------------------------------------
// Oracles

/// a(t) for a = a0, b const, p = 0, r = 0: a a_t = alpha mu^2.
inline double exact_winding_solution(double a0, double mu, double alpha, double t) {
    if (!(a0 > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "a0 must be positive");
    }
    const double sq = a0 * a0 + 2.0 * alpha * mu * mu * t;
    if (!(sq > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "winding solution undefined at t = " + format_double(t));
    }
    return std::sqrt(sq);
}

/// r sampled on increasing times, linearly interpolated in between.
struct RSeries {
    std::vector<double> t;
    std::vector<double> r;

    static RSeries constant(double value, double T, int samples = 2) {
        RSeries s;
        for (int i = 0; i < samples; ++i) {
            s.t.push_back(T * i / (samples - 1));
            s.r.push_back(value);
        }
        return s;
    }

    static RSeries from(const Trajectory& traj) { return {traj.times(), traj.r_series}; }

    double at(double time) const {
        if (t.size() == 1) return r.front();
        auto it = std::upper_bound(t.begin(), t.end(), time);
        std::size_t j = it == t.begin() ? 0 : static_cast<std::size_t>(it - t.begin()) - 1;
        j = std::min(j, t.size() - 2);
        const double u = (time - t[j]) / (t[j + 1] - t[j]);
        return r[j] + u * (r[j + 1] - r[j]);
    }
};

namespace detail {

inline void check_series(const RSeries& rs, double time) {
    if (rs.t.empty() || rs.t.size() != rs.r.size()) {
        throw Error(ErrorKind::InvalidArgument, "r series is empty or ragged");
    }
    const double tol = 1e-12 * (1.0 + std::abs(rs.t.back()));
    if (time < rs.t.front() - tol || time > rs.t.back() + tol) {
        throw Error(ErrorKind::InvalidArgument, "time " + format_double(time) + " outside the r series");
    }
}

} // namespace detail

/// Closed-form comparison solution
///   x(t) = Smin0 e^{-(2/n) Ir(t)} / (1 - (2/n) Smin0 int_0^t e^{-(2/n) Ir(s)} ds)
/// with trapezoidal quadrature on the sampled r.
inline double comparison_solution(double smin0, int n, const RSeries& rs, double time) {
    detail::check_series(rs, time);
    const double c = 2.0 / n;
    double Ir = 0.0, J = 0.0;
    double e_prev = 1.0;
    double t_prev = rs.t.front();
    double r_prev = rs.r.front();
    for (std::size_t j = 1; j <= rs.t.size(); ++j) {
        const bool last = j == rs.t.size() || rs.t[j] >= time;
        const double t_next = last ? time : rs.t[j];
        const double r_next = last ? rs.at(time) : rs.r[j];
        const double dt = t_next - t_prev;
        Ir += 0.5 * dt * (r_prev + r_next);
        const double e_next = std::exp(-c * Ir);
        J += 0.5 * dt * (e_prev + e_next);
        e_prev = e_next;
        t_prev = t_next;
        r_prev = r_next;
        if (last) break;
    }
    const double denom = 1.0 - c * smin0 * J;
    if (!(denom > 0.0)) {
        throw Error(ErrorKind::BoundBlowup, "comparison solution blows up before t = " + format_double(time));
    }
    return smin0 * std::exp(-c * Ir) / denom;
}

/// Closed-form comparison solution at every sample time of `rs`, O(samples).
inline std::vector<double> comparison_series(double smin0, int n, const RSeries& rs) {
    detail::check_series(rs, rs.t.front());
    const double c = 2.0 / n;
    std::vector<double> x(rs.t.size());
    double Ir = 0.0, J = 0.0, e_prev = 1.0;
    for (std::size_t j = 0; j < rs.t.size(); ++j) {
        if (j > 0) {
            const double dt = rs.t[j] - rs.t[j - 1];
            Ir += 0.5 * dt * (rs.r[j - 1] + rs.r[j]);
            const double e = std::exp(-c * Ir);
            J += 0.5 * dt * (e_prev + e);
            e_prev = e;
        }
        const double denom = 1.0 - c * smin0 * J;
        if (!(denom > 0.0)) {
            throw Error(ErrorKind::BoundBlowup, "comparison solution blows up before t = " + format_double(rs.t[j]));
        }
        x[j] = smin0 * std::exp(-c * Ir) / denom;
    }
    return x;
}

/// Same quantity from RK4 on dx/dt = (2/n) x^2 - (2r/n) x, x(0) = Smin0.
inline double comparison_riccati(double smin0, int n, const RSeries& rs, double time, int steps = 2000) {
    detail::check_series(rs, time);
    const double c = 2.0 / n;
    auto rhs = [&](double t, double x) { return c * x * x - c * rs.at(t) * x; };
    const double t0 = rs.t.front();
    const double dt = (time - t0) / steps;
    double x = smin0;
    for (int k = 0; k < steps; ++k) {
        const double t = t0 + k * dt;
        const double k1 = rhs(t, x);
        const double k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1);
        const double k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2);
        const double k4 = rhs(t + dt, x + dt * k3);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!std::isfinite(x) || std::abs(x) > 1e100) {
            throw Error(ErrorKind::BoundBlowup, "Riccati comparison ODE blew up near t = " + format_double(t));
        }
    }
    return x;
}

} // namespace listflow
