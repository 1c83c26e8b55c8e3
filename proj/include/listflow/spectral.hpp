#pragma once

// Spectra of  -c2 Lap + c0 S  on the evolving surface. An eigenfunction is
// u = v(x) e_m(y) with e_0 = 1 and e_m = sqrt(2) cos(2 pi m y / Ly); the radial
// profile solves the generalized problem  A v = lambda M v  with
//
//   v^T A v = sum c2 (b/a)_{i+1/2} (v_{i+1} - v_i)^2 Ly / h
//           + sum (c2 (2 pi m / Ly)^2 / b_i^2 + c0 S_i) v_i^2 rho_i h,
//   M = diag(rho_i h).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <tuple>
#include <vector>

#include "listflow/errors.hpp"
#include "listflow/flow.hpp"
#include "listflow/geometry.hpp"
#include "listflow/io.hpp"
#include "listflow/symmetric_eigen.hpp"

namespace listflow {

struct OperatorSpec {
    double c2 = 1.0;  // coefficient of -Lap
    double c0 = 0.0;  // coefficient of S
    int m_max = 0;    // transverse modes 0..m_max
    int count = 6;    // eigenpairs kept per mode

    static OperatorSpec laplacian(int m_max = 0, int count = 6) { return {1.0, 0.0, m_max, count}; }
    /// -Lap + b S
    static OperatorSpec shifted(double b, int m_max = 0, int count = 6) { return {1.0, b, m_max, count}; }
    /// -4 Lap + k S, whose lowest eigenvalue is the infimum of F_k.
    static OperatorSpec entropy(double k, int m_max = 0, int count = 2) { return {4.0, k, m_max, count}; }
};

struct EigenPair {
    double lambda = 0.0;
    std::vector<double> v;  // radial profile, sum v_i^2 rho_i h = 1
    int mode = 0;
    double t = 0.0;
};

struct DiscreteOperator {
    DenseMatrix A;
    std::vector<double> M;  // diagonal mass
};

inline DiscreteOperator assemble(const FlowState& s, const GeometryCache& cache, const OperatorSpec& spec, int mode) {
    if (mode < 0 || mode > spec.m_max) {
        throw Error(ErrorKind::InvalidArgument, "mode " + std::to_string(mode) + " outside 0..m_max");
    }
    if (!(spec.c2 > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "operator coefficient c2 must be positive");
    }
    const auto& g = s.grid;
    const int n = g.n;
    const auto w = flux_weights(s.metric, g);
    const double kk = g.wavenumber(mode) * g.wavenumber(mode);
    DiscreteOperator op{DenseMatrix(n), std::vector<double>(n)};
    for (int i = 0; i < n; ++i) {
        const int j = g.next(i);
        const double stiff = spec.c2 * w[i] * g.ly / g.h;
        op.A(i, i) += stiff;
        op.A(j, j) += stiff;
        op.A(i, j) -= stiff;
        op.A(j, i) -= stiff;
        const double b2 = s.metric.b[i] * s.metric.b[i];
        op.A(i, i) += (spec.c2 * kk / b2 + spec.c0 * cache.S[i]) * cache.rho[i] * g.h;
        op.M[i] = cache.rho[i] * g.h;
    }
    return op;
}

/// v^T A v
inline double quadratic_form(const DenseMatrix& A, const std::vector<double>& v) {
    const auto Av = A.apply(v);
    double q = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) q += v[i] * Av[i];
    return q;
}

/// Lowest `count` pairs of A v = lambda M v, M-normalized, sign fixed so the
/// entry of largest magnitude is positive.
inline std::vector<EigenPair> solve(const DenseMatrix& A, const std::vector<double>& M, int count, int mode = 0,
                                    double t = 0.0) {
    const int n = A.size();
    if (n > 1024) {
        throw Error(ErrorKind::InvalidArgument, "dense eigensolver limited to N <= 1024");
    }
    std::vector<double> isq(n);
    for (int i = 0; i < n; ++i) isq[i] = 1.0 / std::sqrt(M[i]);
    DenseMatrix B(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) B(i, j) = A(i, j) * isq[i] * isq[j];
    // keep B exactly symmetric
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) B(j, i) = B(i, j);

    const auto eig = symmetric_eigen(B);
    std::vector<EigenPair> out;
    const int keep = std::min(count, n);
    out.reserve(keep);
    for (int k = 0; k < keep; ++k) {
        EigenPair p{eig.values[k], std::vector<double>(n), mode, t};
        double norm = 0.0;
        std::size_t imax = 0;
        for (int i = 0; i < n; ++i) {
            p.v[i] = eig.vectors[k][i] * isq[i];
            norm += p.v[i] * p.v[i] * M[i];
            if (std::abs(p.v[i]) > std::abs(p.v[imax])) imax = i;
        }
        const double scale = (p.v[imax] < 0 ? -1.0 : 1.0) / std::sqrt(norm);
        for (double& x : p.v) x *= scale;
        out.push_back(std::move(p));
    }
    return out;
}

inline std::vector<EigenPair> solve_mode(const FlowState& s, const GeometryCache& cache, const OperatorSpec& spec,
                                         int mode) {
    const auto op = assemble(s, cache, spec, mode);
    return solve(op.A, op.M, spec.count, mode, s.t);
}

/// Merged ascending spectrum over modes 0..m_max (ties ordered by mode).
inline std::vector<EigenPair> lowest_spectrum(const FlowState& s, const OperatorSpec& spec) {
    const auto cache = s.geometry();
    std::vector<EigenPair> all;
    for (int m = 0; m <= spec.m_max; ++m) {
        auto part = solve_mode(s, cache, spec, m);
        all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    std::stable_sort(all.begin(), all.end(), [](const EigenPair& x, const EigenPair& y) {
        return std::tie(x.lambda, x.mode) < std::tie(y.lambda, y.mode);
    });
    return all;
}

/// Smallest eigenvalue above 1e-8 (1 + max |lambda|).
inline const EigenPair& first_nonzero(const std::vector<EigenPair>& pairs) {
    double scale = 0.0;
    for (const auto& p : pairs) scale = std::max(scale, std::abs(p.lambda));
    const double tol = 1e-8 * (1.0 + scale);
    const EigenPair* best = nullptr;
    for (const auto& p : pairs) {
        if (p.lambda > tol && (best == nullptr || p.lambda < best->lambda)) best = &p;
    }
    if (best == nullptr) {
        throw Error(ErrorKind::AllZero, "no eigenvalue exceeds the zero tolerance");
    }
    return *best;
}

/// sum v w rho h for two radial profiles of the same transverse mode.
inline double overlap(const std::vector<double>& v, const std::vector<double>& w, const GeometryCache& cache,
                      const TorusGrid& grid) {
    double s = 0.0;
    for (int i = 0; i < grid.n; ++i) s += v[i] * w[i] * cache.rho[i];
    return s * grid.h;
}

struct Correspondence {
    std::vector<int> target;          // index into `next` for each prev pair, -1 if unmatched
    std::vector<double> overlap;      // |<u_prev, u_next>| of the chosen match
    std::vector<bool> near_degenerate;
};

inline constexpr double kDegenerateGap = 1e-4;

/// Continues eigenvalue branches by maximal |overlap| within matching mode.
/// A branch is flagged near-degenerate when another eigenvalue lies within
/// 1e-4 (1 + |lambda|) of it, unless that neighbour was already equally close
/// on the previous side (a persistent multiplicity, e.g. a cos/sin pair).
inline Correspondence track(const std::vector<EigenPair>& prev, const std::vector<EigenPair>& next,
                            const GeometryCache& cache_next, const TorusGrid& grid) {
    const std::size_t np = prev.size();
    const std::size_t nn = next.size();
    struct Candidate {
        double ov;
        std::size_t p, q;
    };
    std::vector<Candidate> cand;
    for (std::size_t p = 0; p < np; ++p)
        for (std::size_t q = 0; q < nn; ++q)
            if (prev[p].mode == next[q].mode)
                cand.push_back({std::abs(overlap(prev[p].v, next[q].v, cache_next, grid)), p, q});
    std::stable_sort(cand.begin(), cand.end(), [](const Candidate& x, const Candidate& y) { return x.ov > y.ov; });

    Correspondence out{std::vector<int>(np, -1), std::vector<double>(np, 0.0), std::vector<bool>(np, false)};
    std::vector<int> source(nn, -1);
    for (const auto& c : cand) {
        if (out.target[c.p] != -1 || source[c.q] != -1) continue;
        out.target[c.p] = static_cast<int>(c.q);
        out.overlap[c.p] = c.ov;
        source[c.q] = static_cast<int>(c.p);
    }

    for (std::size_t p = 0; p < np; ++p) {
        const int q = out.target[p];
        if (q < 0) continue;
        const double lam = next[q].lambda;
        const double tol_next = kDegenerateGap * (1.0 + std::abs(lam));
        const double tol_prev = kDegenerateGap * (1.0 + std::abs(prev[p].lambda));
        for (std::size_t k = 0; k < nn; ++k) {
            if (static_cast<int>(k) == q || std::abs(next[k].lambda - lam) >= tol_next) continue;
            const int pk = source[k];
            const bool persistent = pk >= 0 && std::abs(prev[pk].lambda - prev[p].lambda) < tol_prev;
            if (!persistent) {
                out.near_degenerate[p] = true;
                break;
            }
        }
    }
    return out;
}

/// True when some other eigenvalue in `pairs` lies within the degeneracy gap.
inline bool has_close_neighbour(const std::vector<EigenPair>& pairs, std::size_t idx) {
    const double lam = pairs[idx].lambda;
    const double tol = kDegenerateGap * (1.0 + std::abs(lam));
    for (std::size_t k = 0; k < pairs.size(); ++k)
        if (k != idx && std::abs(pairs[k].lambda - lam) < tol) return true;
    return false;
}

/// Groups an ascending spectrum into clusters of numerically equal values:
/// consecutive eigenvalues closer than rel_tol (1 + |lambda|) share a cluster.
inline std::vector<std::vector<double>> cluster_eigenvalues(const std::vector<EigenPair>& pairs, double rel_tol) {
    std::vector<double> lam;
    for (const auto& p : pairs) lam.push_back(p.lambda);
    std::sort(lam.begin(), lam.end());
    std::vector<std::vector<double>> out;
    for (double l : lam) {
        if (out.empty() || l - out.back().back() > rel_tol * (1.0 + std::abs(l))) out.emplace_back();
        out.back().push_back(l);
    }
    return out;
}

/// Spectrum export: t, mode, index, lambda, gap_flag (index is the rank within its mode).
inline void write_spectrum_csv(const std::vector<std::vector<EigenPair>>& snapshots, const std::filesystem::path& path) {
    CsvWriter csv(path, {"t", "mode", "index", "lambda", "gap_flag"});
    for (const auto& pairs : snapshots) {
        std::vector<int> rank;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            int r = 0;
            for (std::size_t j = 0; j < i; ++j) r += pairs[j].mode == pairs[i].mode;
            csv.row({format_double(pairs[i].t), std::to_string(pairs[i].mode), std::to_string(r),
                     format_double(pairs[i].lambda), has_close_neighbour(pairs, i) ? "1" : "0"});
        }
    }
}

} // namespace listflow
