#pragma once

// Entropy functionals along a stored trajectory.
//
// The weight w = e^{-f} of the coupled system  f_t = -Lap f + |grad f|^2 - S + r
// solves the conjugate heat equation  w_t = -Lap w + (S - r) w,  which is
// well-posed backward in time. The two-pass scheme integrates
//
//     dw/ds = Lap_{g(T-s)} w - (S - r) w,   s = T - t,
//
// with RK4 over a stride-1 trajectory. Stage metrics at half steps come from
// cubic Hermite interpolation of the stored states and their flow velocities.
//
// Discretization of the weighted Dirichlet energy: on each cell
//     int |grad f|^2 w dv  ->  sum (b/a)_{i+1/2} ((f_{i+1} - f_i)/h)^2 L(w_i, w_{i+1}) Ly h
// with L the logarithmic mean. Since w_{i+1} - w_i = -L (f_{i+1} - f_i) exactly,
// this equals sum (Lap f) w rho h, the discrete weighted integration by parts
// that makes the two algebraic forms of each derivative formula agree to
// roundoff.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "listflow/errors.hpp"
#include "listflow/flow.hpp"
#include "listflow/geometry.hpp"
#include "listflow/io.hpp"
#include "listflow/spectral.hpp"

namespace listflow {

struct ConjugateState {
    std::vector<double> w;  // e^{-f}
    double t = 0.0;
    double mass = 0.0;      // int w dv
    double tau = 1.0;       // tau0 + t
};

enum class RhsForm { A, B };

namespace detail {

inline void check_weight(std::span<const double> w, const char* where) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(w[i] > 0.0)) {
            throw Error(ErrorKind::NonPositiveWeight,
                        std::string(where) + ": weight not positive at index " + std::to_string(i));
        }
    }
}

inline void check_tau(double tau) {
    if (!(tau > 0.0)) {
        throw Error(ErrorKind::NonPositiveTau, "tau = " + format_double(tau) + " is not positive");
    }
}

/// Logarithmic mean (x - y) / (ln x - ln y), with its series near x = y.
inline double log_mean(double x, double y) {
    const double m = 0.5 * (x + y);
    const double d = 0.5 * (x - y) / m;
    if (std::abs(d) < 1e-4) return m * (1.0 - d * d / 3.0 - 4.0 * d * d * d * d / 45.0);
    return (x - y) / (std::log(x) - std::log(y));
}

inline std::vector<double> neg_log(std::span<const double> w) {
    std::vector<double> f(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) f[i] = -std::log(w[i]);
    return f;
}

/// Pointwise blocks shared by the derivative formulas.
struct PointwiseTerms {
    std::vector<double> fx;        // f' (central)
    std::vector<double> fxx, fyy;  // covariant Hessian
};

inline PointwiseTerms pointwise_terms(const FlowState& s, std::span<const double> f) {
    PointwiseTerms t;
    t.fx = central_diff(f, s.grid);
    auto h = hessian_terms(f, s.metric, s.grid);
    t.fxx = std::move(h.fxx);
    t.fyy = std::move(h.fyy);
    return t;
}

} // namespace detail

/// int |grad f|^2 w dv with the log-mean cell weights (f = -ln w).
inline double weighted_dirichlet(const FlowState& s, std::span<const double> w) {
    const auto& g = s.grid;
    const auto flux = flux_weights(s.metric, g);
    double sum = 0.0;
    for (int i = 0; i < g.n; ++i) {
        const int j = g.next(i);
        const double df = (std::log(w[i]) - std::log(w[j])) / g.h;
        sum += flux[i] * df * df * detail::log_mean(w[i], w[j]);
    }
    return sum * g.ly * g.h;
}

inline double mass(const GeometryCache& cache, const TorusGrid& grid, std::span<const double> w) {
    return integrate(w, cache, grid);
}

/// F_k = int (|grad f|^2 + k S) e^{-f} dv.
inline double F_k(const FlowState& s, const GeometryCache& cache, std::span<const double> w, double k) {
    detail::check_size(w, s.grid, "weight");
    detail::check_weight(w, "F_k");
    std::vector<double> Sw(s.grid.n);
    for (int i = 0; i < s.grid.n; ++i) Sw[i] = cache.S[i] * w[i];
    return weighted_dirichlet(s, w) + k * integrate(Sw, cache, s.grid);
}

/// W_k = tau^2 int [k (S + n/(2 tau)) + |grad f|^2] e^{-f} dv.
inline double W_k(const FlowState& s, const GeometryCache& cache, std::span<const double> w, double k, double tau) {
    detail::check_tau(tau);
    detail::check_size(w, s.grid, "weight");
    detail::check_weight(w, "W_k");
    std::vector<double> integrand(s.grid.n);
    for (int i = 0; i < s.grid.n; ++i) integrand[i] = k * (cache.S[i] + s.n / (2.0 * tau)) * w[i];
    return tau * tau * (integrate(integrand, cache, s.grid) + weighted_dirichlet(s, w));
}

namespace detail {

/// int (|S_ij + f_ij + c g_ij|^2 + alpha (Lap phi - <grad f, grad phi>)^2) w dv
/// and int (|S_ij + c g_ij|^2 + alpha (Lap phi)^2) w dv.
struct Blocks {
    double with_f = 0.0;
    double without_f = 0.0;
};

inline Blocks blocks(const FlowState& s, const GeometryCache& cache, std::span<const double> w, double c) {
    const int n = s.grid.n;
    const auto f = neg_log(w);
    const auto t = pointwise_terms(s, f);
    std::vector<double> with_f(n), without_f(n);
    for (int i = 0; i < n; ++i) {
        const double a2 = s.metric.a[i] * s.metric.a[i];
        const double b2 = s.metric.b[i] * s.metric.b[i];
        const double sx = cache.Sxx[i] / a2 + c;  // mixed components S^x_x + c
        const double sy = cache.Syy[i] / b2 + c;
        const double fx = sx + t.fxx[i] / a2;
        const double fy = sy + t.fyy[i] / b2;
        const double gfp = t.fx[i] * cache.dphi[i] / a2;
        const double lp = cache.lapPhi[i] - gfp;
        with_f[i] = (fx * fx + fy * fy + cache.alpha * lp * lp) * w[i];
        without_f[i] = (sx * sx + sy * sy + cache.alpha * cache.lapPhi[i] * cache.lapPhi[i]) * w[i];
    }
    return {integrate(with_f, cache, s.grid), integrate(without_f, cache, s.grid)};
}

} // namespace detail

/// Right-hand side of dF_k/dt. Form A:
///   -(2r/n) F_k + 2(k-1) int (|S_ij|^2 + alpha (Lap phi)^2) w
///   + 2 int (|S_ij + f_ij|^2 + alpha |Lap phi - <grad f, grad phi>|^2) w.
/// Form B shifts every tensor by -(r/n) g_ij and carries (2r/n)(F_k - k r m),
/// where m = int w dv (m = 1 under the usual normalization).
inline double dF_k_rhs(const FlowState& s, const GeometryCache& cache, std::span<const double> w, double k,
                       RhsForm form) {
    detail::check_size(w, s.grid, "weight");
    detail::check_weight(w, "dF_k_rhs");
    const double r = s.policy.evaluate(cache, s.grid);
    const double nn = s.n;
    const double F = F_k(s, cache, w, k);
    if (form == RhsForm::A) {
        const auto b = detail::blocks(s, cache, w, 0.0);
        return -2.0 * r / nn * F + 2.0 * (k - 1.0) * b.without_f + 2.0 * b.with_f;
    }
    const double m = mass(cache, s.grid, w);
    const auto b = detail::blocks(s, cache, w, -r / nn);
    return 2.0 * r / nn * (F - k * r * m) + 2.0 * (k - 1.0) * b.without_f + 2.0 * b.with_f;
}

/// Right-hand side of dW_k/dt. Form A:
///   2 tau^2 { -(r/n) F_k + (k-1) int (|S_ij + g/(2tau)|^2 + alpha (Lap phi)^2) w
///             + int (|S_ij + f_ij + g/(2tau)|^2 + alpha |Lap phi - <grad f, grad phi>|^2) w }.
/// Form B uses the shift 1/(2tau) - r/n and carries (r/n)(F_k - k r m) + k r m / tau.
inline double dW_k_rhs(const FlowState& s, const GeometryCache& cache, std::span<const double> w, double k,
                       double tau, RhsForm form) {
    detail::check_tau(tau);
    detail::check_size(w, s.grid, "weight");
    detail::check_weight(w, "dW_k_rhs");
    const double r = s.policy.evaluate(cache, s.grid);
    const double nn = s.n;
    const double F = F_k(s, cache, w, k);
    const double c = 1.0 / (2.0 * tau);
    if (form == RhsForm::A) {
        const auto b = detail::blocks(s, cache, w, c);
        return 2.0 * tau * tau * (-r / nn * F + (k - 1.0) * b.without_f + b.with_f);
    }
    const double m = mass(cache, s.grid, w);
    const auto b = detail::blocks(s, cache, w, c - r / nn);
    return 2.0 * tau * tau * (r / nn * (F - k * r * m) + k * r * m / tau + (k - 1.0) * b.without_f + b.with_f);
}

/// d/dt int S e^{-f} dv  =  int (2 |S_ij|^2 - (2r/n) S + 2 alpha (Lap phi)^2) e^{-f} dv.
inline double dS_weighted_rhs(const FlowState& s, const GeometryCache& cache, std::span<const double> w) {
    const double r = s.policy.evaluate(cache, s.grid);
    const auto norm = s_tensor_norm_sq(cache, s.metric);
    std::vector<double> integrand(s.grid.n);
    for (int i = 0; i < s.grid.n; ++i) {
        integrand[i] = (2.0 * norm[i] - 2.0 * r / s.n * cache.S[i] +
                        2.0 * cache.alpha * cache.lapPhi[i] * cache.lapPhi[i]) *
                       w[i];
    }
    return integrate(integrand, cache, s.grid);
}

inline double S_weighted(const GeometryCache& cache, const TorusGrid& grid, std::span<const double> w) {
    std::vector<double> Sw(grid.n);
    for (int i = 0; i < grid.n; ++i) Sw[i] = cache.S[i] * w[i];
    return integrate(Sw, cache, grid);
}

/// Both sides of the three weighted integration-by-parts identities built on
/// the Bochner formula  (1/2) Lap |grad f|^2 = |f_ij|^2 + <grad f, grad Lap f> + R_ij f^i f^j.
struct IntegralIdentities {
    double hess_lhs = 0.0, hess_rhs = 0.0;            // int |f_ij|^2 w
    double mixed_lhs = 0.0, mixed_rhs = 0.0;          // 2 int S^ij f_ij w
    double combined_lhs = 0.0, combined_rhs = 0.0;    // int |S_ij + f_ij|^2 w

    double max_residual() const {
        return std::max({std::abs(hess_lhs - hess_rhs), std::abs(mixed_lhs - mixed_rhs),
                         std::abs(combined_lhs - combined_rhs)});
    }
};

inline IntegralIdentities integral_identities_check(const FlowState& s, const GeometryCache& cache,
                                                    std::span<const double> w) {
    detail::check_size(w, s.grid, "weight");
    detail::check_weight(w, "integral_identities_check");
    const int n = s.grid.n;
    const auto f = detail::neg_log(w);
    const auto t = detail::pointwise_terms(s, f);
    std::vector<double> grad_sq(n);
    for (int i = 0; i < n; ++i) grad_sq[i] = t.fx[i] * t.fx[i] / (s.metric.a[i] * s.metric.a[i]);
    const auto lap_grad_sq = laplace_beltrami(grad_sq, s.metric, s.grid);
    const auto lap_f = laplace_beltrami(f, s.metric, s.grid);
    const auto bilap_f = laplace_beltrami(lap_f, s.metric, s.grid);
    const auto lap_S = laplace_beltrami(cache.S, s.metric, s.grid);

    std::vector<double> h_l(n), h_r(n), m_l(n), m_r(n), c_l(n), c_r(n);
    for (int i = 0; i < n; ++i) {
        const double a2 = s.metric.a[i] * s.metric.a[i];
        const double a4 = a2 * a2;
        const double b4 = s.metric.b[i] * s.metric.b[i] * s.metric.b[i] * s.metric.b[i];
        const double sff = cache.Sxx[i] * t.fx[i] * t.fx[i] / a4;
        const double gfp = t.fx[i] * cache.dphi[i] / a2;
        const double hess_sq = t.fxx[i] * t.fxx[i] / a4 + t.fyy[i] * t.fyy[i] / b4;
        const double s_dot_h = cache.Sxx[i] * t.fxx[i] / a4 + cache.Syy[i] * t.fyy[i] / b4;
        const double s_sq = cache.Sxx[i] * cache.Sxx[i] / a4 + cache.Syy[i] * cache.Syy[i] / b4;
        const double sx = (cache.Sxx[i] + t.fxx[i]) / a2;
        const double sy = (cache.Syy[i] + t.fyy[i]) / (s.metric.b[i] * s.metric.b[i]);
        const double alpha = cache.alpha;

        h_l[i] = hess_sq * w[i];
        h_r[i] = (0.5 * lap_grad_sq[i] - bilap_f[i] - sff - alpha * gfp * gfp) * w[i];
        m_l[i] = 2.0 * s_dot_h * w[i];
        m_r[i] = (2.0 * sff - lap_S[i] + 2.0 * alpha * cache.lapPhi[i] * gfp) * w[i];
        c_l[i] = (sx * sx + sy * sy) * w[i];
        c_r[i] = (s_sq + sff + 0.5 * lap_grad_sq[i] - bilap_f[i] - lap_S[i] - alpha * gfp * gfp +
                  2.0 * alpha * cache.lapPhi[i] * gfp) *
                 w[i];
    }
    const auto& g = s.grid;
    return {integrate(h_l, cache, g), integrate(h_r, cache, g), integrate(m_l, cache, g),
            integrate(m_r, cache, g), integrate(c_l, cache, g), integrate(c_r, cache, g)};
}

// ---------------------------------------------------------------------------
// Conjugate heat equation

namespace detail {

struct Snapshot {
    FlowState state;
    GeometryCache cache;
    std::vector<double> flux;  // (b/a)_{i+1/2}
    double r = 0.0;
};

inline Snapshot snapshot(FlowState s) {
    Snapshot out{std::move(s), {}, {}, 0.0};
    out.cache = out.state.geometry();
    out.flux = flux_weights(out.state.metric, out.state.grid);
    out.r = out.state.policy.evaluate(out.cache, out.state.grid);
    return out;
}

/// Lap w - (S - r) w on a fixed snapshot.
inline std::vector<double> conjugate_rhs(const Snapshot& sn, const std::vector<double>& w) {
    const auto& g = sn.state.grid;
    const auto& m = sn.state.metric;
    std::vector<double> out(g.n);
    const double inv_h2 = 1.0 / (g.h * g.h);
    for (int i = 0; i < g.n; ++i) {
        const int j = g.next(i);
        const int k = g.prev(i);
        const double lap = (sn.flux[i] * (w[j] - w[i]) - sn.flux[k] * (w[i] - w[k])) * inv_h2 / (m.a[i] * m.b[i]);
        out[i] = lap - (sn.cache.S[i] - sn.r) * w[i];
    }
    return out;
}

/// Cubic Hermite midpoint of two states dt apart.
inline FlowState hermite_midpoint(const FlowState& s0, const FlowRhs& d0, const FlowState& s1, const FlowRhs& d1,
                                  double dt) {
    FlowState mid = s0;
    const double c = dt / 8.0;
    for (int i = 0; i < s0.grid.n; ++i) {
        mid.metric.a[i] = 0.5 * (s0.metric.a[i] + s1.metric.a[i]) + c * (d0.da[i] - d1.da[i]);
        mid.metric.b[i] = 0.5 * (s0.metric.b[i] + s1.metric.b[i]) + c * (d0.db[i] - d1.db[i]);
        mid.dilaton.p[i] = 0.5 * (s0.dilaton.p[i] + s1.dilaton.p[i]) + c * (d0.dp[i] - d1.dp[i]);
    }
    mid.t = 0.5 * (s0.t + s1.t);
    return mid;
}

} // namespace detail

/// Integrates the conjugate heat equation from w_T = e^{-f_T} at the final
/// snapshot back to the first. Output is ordered by forward time. Mass is
/// measured, never renormalized.
inline std::vector<ConjugateState> conjugate_backward(const Trajectory& traj, std::span<const double> f_T,
                                                      double tau0 = 1.0) {
    if (traj.stride != 1) {
        throw Error(ErrorKind::StrideError, "conjugate heat integration needs every step stored (stride = " +
                                                std::to_string(traj.stride) + ")");
    }
    if (traj.states.empty()) {
        throw Error(ErrorKind::InvalidArgument, "empty trajectory");
    }
    const auto& last = traj.states.back();
    detail::check_size(f_T, last.grid, "terminal f");
    detail::check_tau(tau0 + traj.states.front().t);
    std::vector<double> w(f_T.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!std::isfinite(f_T[i])) {
            throw Error(ErrorKind::InvalidArgument, "terminal f is not finite at index " + std::to_string(i));
        }
        w[i] = std::exp(-f_T[i]);
    }

    const std::size_t count = traj.states.size();
    std::vector<ConjugateState> out(count);
    auto upper = detail::snapshot(last);
    FlowRhs d_upper = flow_rhs(upper.state, upper.cache);
    out[count - 1] = {w, last.t, mass(upper.cache, last.grid, w), tau0 + last.t};

    for (std::size_t j = count - 1; j-- > 0;) {
        auto lower = detail::snapshot(traj.states[j]);
        const FlowRhs d_lower = flow_rhs(lower.state, lower.cache);
        const double dt = upper.state.t - lower.state.t;
        const auto mid = detail::snapshot(detail::hermite_midpoint(lower.state, d_lower, upper.state, d_upper, dt));

        const int n = static_cast<int>(w.size());
        auto k1 = detail::conjugate_rhs(upper, w);
        std::vector<double> tmp(n);
        for (int i = 0; i < n; ++i) tmp[i] = w[i] + 0.5 * dt * k1[i];
        auto k2 = detail::conjugate_rhs(mid, tmp);
        for (int i = 0; i < n; ++i) tmp[i] = w[i] + 0.5 * dt * k2[i];
        auto k3 = detail::conjugate_rhs(mid, tmp);
        for (int i = 0; i < n; ++i) tmp[i] = w[i] + dt * k3[i];
        auto k4 = detail::conjugate_rhs(lower, tmp);
        for (int i = 0; i < n; ++i) w[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

        try {
            detail::check_weight(w, "conjugate_backward");
        } catch (const Error& e) {
            throw e.annotated("t = " + format_double(lower.state.t));
        }
        out[j] = {w, lower.state.t, mass(lower.cache, lower.state.grid, w), tau0 + lower.state.t};
        upper = std::move(lower);
        d_upper = d_lower;
    }
    return out;
}

/// f = -2 ln u for the positive ground state u of -4 Lap + k S, so that
/// int e^{-f} dv = int u^2 dv = 1.
inline std::vector<double> ground_state_terminal(const FlowState& s, double k) {
    const auto pairs = lowest_spectrum(s, OperatorSpec::entropy(k, 0, 1));
    const auto& u = pairs.front().v;
    detail::check_weight(u, "ground state");
    std::vector<double> f(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) f[i] = -2.0 * std::log(u[i]);
    return f;
}

// ---------------------------------------------------------------------------
// Series along a run

/// Derivative of uniformly spaced samples: central in the interior, second
/// order one-sided at both ends.
inline std::vector<double> finite_difference(const std::vector<double>& y, double dt) {
    const std::size_t n = y.size();
    std::vector<double> d(n, std::nan(""));
    if (n < 3) return d;
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (y[i + 1] - y[i - 1]) / (2.0 * dt);
    d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt);
    d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * dt);
    return d;
}

struct EntropySeries {
    double k = 1.0;
    std::vector<double> t, tau, mass, r, Ir;
    std::vector<double> F, W;
    std::vector<double> dF_fd, dF_A, dF_B;
    std::vector<double> dW_fd, dW_A, dW_B;
    std::vector<double> S_int, dS_fd, dS_rhs;  // int S e^{-f} dv and its derivative
};

inline EntropySeries entropy_series(const Trajectory& traj, const std::vector<ConjugateState>& conj, double k) {
    if (conj.size() != traj.states.size()) {
        throw Error(ErrorKind::InvalidArgument, "conjugate states do not match the trajectory");
    }
    EntropySeries es;
    es.k = k;
    for (std::size_t i = 0; i < conj.size(); ++i) {
        const auto& s = traj.states[i];
        const auto& c = conj[i];
        const auto cache = s.geometry();
        es.t.push_back(s.t);
        es.tau.push_back(c.tau);
        es.mass.push_back(c.mass);
        es.r.push_back(traj.r_series[i]);
        es.Ir.push_back(s.Ir);
        es.F.push_back(F_k(s, cache, c.w, k));
        es.W.push_back(W_k(s, cache, c.w, k, c.tau));
        es.dF_A.push_back(dF_k_rhs(s, cache, c.w, k, RhsForm::A));
        es.dF_B.push_back(dF_k_rhs(s, cache, c.w, k, RhsForm::B));
        es.dW_A.push_back(dW_k_rhs(s, cache, c.w, k, c.tau, RhsForm::A));
        es.dW_B.push_back(dW_k_rhs(s, cache, c.w, k, c.tau, RhsForm::B));
        es.S_int.push_back(S_weighted(cache, s.grid, c.w));
        es.dS_rhs.push_back(dS_weighted_rhs(s, cache, c.w));
    }
    const double h = traj.spacing();
    es.dF_fd = finite_difference(es.F, h);
    es.dW_fd = finite_difference(es.W, h);
    es.dS_fd = finite_difference(es.S_int, h);
    return es;
}

inline void write_entropy_csv(const EntropySeries& es, const std::filesystem::path& path) {
    CsvWriter csv(path, {"t", "tau", "mass", "F_k", "W_k", "dF_dt_fd", "dF_rhs_A", "dF_rhs_B", "dW_dt_fd",
                         "dW_rhs_A", "dW_rhs_B"});
    for (std::size_t i = 0; i < es.t.size(); ++i) {
        csv.row({format_double(es.t[i]), format_double(es.tau[i]), format_double(es.mass[i]),
                 format_double(es.F[i]), format_double(es.W[i]), format_double(es.dF_fd[i]),
                 format_double(es.dF_A[i]), format_double(es.dF_B[i]), format_double(es.dW_fd[i]),
                 format_double(es.dW_A[i]), format_double(es.dW_B[i])});
    }
}

} // namespace listflow
