#pragma once

// Surface geometry for the 1D-symmetric periodic class
//
//     g = a(x)^2 dx^2 + b(x)^2 dy^2,   phi = mu * x + p(x),
//
// on the coordinate torus [0, Lx) x [0, Ly). Every field is sampled at
// x_i = i * h, i = 0..N-1, with periodic wrap-around. Second derivatives use
// flux-form stencils (half-point coefficients, arithmetic mean of a and b),
// first derivatives used pointwise are second-order central differences.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "listflow/errors.hpp"

namespace listflow {

struct TorusGrid {
    int n = 0;
    double lx = 0.0;
    double ly = 0.0;
    double h = 0.0;

    static TorusGrid make(int n, double lx, double ly) {
        if (n < 16 || n % 2 != 0) {
            throw Error(ErrorKind::InvalidArgument, "grid size N must be even and >= 16, got " + std::to_string(n));
        }
        if (!(lx > 0.0) || !(ly > 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "grid periods Lx and Ly must be positive");
        }
        return TorusGrid{n, lx, ly, lx / n};
    }

    double x(int i) const { return i * h; }

    /// 2*pi*m/Ly, the y-wavenumber of transverse mode m.
    double wavenumber(int mode) const { return 2.0 * std::numbers::pi * mode / ly; }

    int wrap(int i) const { return ((i % n) + n) % n; }
    int next(int i) const { return i + 1 == n ? 0 : i + 1; }
    int prev(int i) const { return i == 0 ? n - 1 : i - 1; }
};

struct MetricProfile {
    std::vector<double> a;
    std::vector<double> b;

    void validate() const {
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!(a[i] > 0.0) || !(b[i] > 0.0)) {
                throw Error(ErrorKind::NonPositiveMetric,
                            "metric coefficient not positive at index " + std::to_string(i));
            }
        }
    }

    double min_a() const { return *std::min_element(a.begin(), a.end()); }
    double min_b() const { return *std::min_element(b.begin(), b.end()); }
};

/// phi = mu * x + p(x); only p evolves, so mu is constant along the flow.
struct DilatonProfile {
    double mu = 0.0;
    std::vector<double> p;
};

struct GeometryCache {
    double alpha = 0.0;
    std::vector<double> K;          // Gauss curvature, R = 2K
    std::vector<double> S;          // S = R - alpha |grad phi|^2
    std::vector<double> Sxx;        // covariant components of S_ij
    std::vector<double> Syy;
    std::vector<double> lapPhi;     // Laplacian of phi (flux form)
    std::vector<double> gradPhiSq;  // |grad phi|^2 = (mu + p')^2 / a^2
    std::vector<double> dphi;       // phi_x = mu + p' (central)
    std::vector<double> rho;        // a * b * Ly, volume per unit x
    double area = 0.0;
};

namespace detail {

inline void check_size(std::span<const double> field, const TorusGrid& grid, const char* what) {
    if (static_cast<int>(field.size()) != grid.n) {
        throw Error(ErrorKind::InvalidArgument, std::string(what) + " has length " + std::to_string(field.size()) +
                                                    ", grid has N = " + std::to_string(grid.n));
    }
}

inline std::vector<double> central_diff(std::span<const double> f, const TorusGrid& grid) {
    std::vector<double> out(grid.n);
    const double inv = 1.0 / (2.0 * grid.h);
    for (int i = 0; i < grid.n; ++i) {
        out[i] = (f[grid.next(i)] - f[grid.prev(i)]) * inv;
    }
    return out;
}

} // namespace detail

/// (b/a) at the half point i+1/2, using arithmetic means of a and b.
inline std::vector<double> flux_weights(const MetricProfile& m, const TorusGrid& grid) {
    std::vector<double> w(grid.n);
    for (int i = 0; i < grid.n; ++i) {
        const int j = grid.next(i);
        w[i] = (0.5 * (m.b[i] + m.b[j])) / (0.5 * (m.a[i] + m.a[j]));
    }
    return w;
}

inline GeometryCache compute_geometry(const TorusGrid& grid, const MetricProfile& m, const DilatonProfile& d,
                                      double alpha) {
    detail::check_size(m.a, grid, "metric a");
    detail::check_size(m.b, grid, "metric b");
    detail::check_size(d.p, grid, "dilaton p");
    m.validate();

    const int n = grid.n;
    const double h = grid.h;
    GeometryCache c;
    c.alpha = alpha;
    c.K.resize(n);
    c.S.resize(n);
    c.Sxx.resize(n);
    c.Syy.resize(n);
    c.lapPhi.resize(n);
    c.gradPhiSq.resize(n);
    c.rho.resize(n);

    // Half-point fluxes: (b'/a)_{i+1/2} and (b/a)_{i+1/2} (mu + p')_{i+1/2}.
    std::vector<double> bflux(n), phiflux(n);
    for (int i = 0; i < n; ++i) {
        const int j = grid.next(i);
        const double a_half = 0.5 * (m.a[i] + m.a[j]);
        const double b_half = 0.5 * (m.b[i] + m.b[j]);
        bflux[i] = (m.b[j] - m.b[i]) / h / a_half;
        phiflux[i] = (b_half / a_half) * (d.mu + (d.p[j] - d.p[i]) / h);
    }

    c.dphi = detail::central_diff(d.p, grid);
    double area = 0.0;
    for (int i = 0; i < n; ++i) {
        const int k = grid.prev(i);
        const double ab = m.a[i] * m.b[i];
        c.dphi[i] += d.mu;
        c.K[i] = -(bflux[i] - bflux[k]) / (ab * h);
        c.lapPhi[i] = (phiflux[i] - phiflux[k]) / (ab * h);
        c.gradPhiSq[i] = c.dphi[i] * c.dphi[i] / (m.a[i] * m.a[i]);
        c.S[i] = 2.0 * c.K[i] - alpha * c.gradPhiSq[i];
        c.Sxx[i] = c.K[i] * m.a[i] * m.a[i] - alpha * c.dphi[i] * c.dphi[i];
        c.Syy[i] = c.K[i] * m.b[i] * m.b[i];
        c.rho[i] = ab * grid.ly;
        area += c.rho[i] * h;
    }
    c.area = area;
    return c;
}

/// Integral over the torus of a y-independent field: sum_i f_i rho_i h.
inline double integrate(std::span<const double> field, const GeometryCache& cache, const TorusGrid& grid) {
    detail::check_size(field, grid, "field");
    double sum = 0.0;
    for (int i = 0; i < grid.n; ++i) {
        sum += field[i] * cache.rho[i];
    }
    return sum * grid.h;
}

/// |S_ij|^2 = Sxx^2/a^4 + Syy^2/b^4 at every node.
inline std::vector<double> s_tensor_norm_sq(const GeometryCache& c, const MetricProfile& m) {
    std::vector<double> out(c.S.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double ux = c.Sxx[i] / (m.a[i] * m.a[i]);
        const double uy = c.Syy[i] / (m.b[i] * m.b[i]);
        out[i] = ux * ux + uy * uy;
    }
    return out;
}

/// Laplace-Beltrami of u = v(x) e_m(y) reduced to the radial profile:
/// (1/(ab)) ((b/a) v')' - (2 pi m / Ly)^2 v / b^2, flux form.
inline std::vector<double> laplace_beltrami(std::span<const double> field, const MetricProfile& m,
                                            const TorusGrid& grid, int mode = 0) {
    detail::check_size(field, grid, "field");
    if (mode < 0) {
        throw Error(ErrorKind::InvalidArgument, "transverse mode must be non-negative");
    }
    m.validate();
    const auto w = flux_weights(m, grid);
    const double kk = grid.wavenumber(mode) * grid.wavenumber(mode);
    const double inv_h2 = 1.0 / (grid.h * grid.h);
    std::vector<double> out(grid.n);
    for (int i = 0; i < grid.n; ++i) {
        const int j = grid.next(i);
        const int k = grid.prev(i);
        const double flux = w[i] * (field[j] - field[i]) - w[k] * (field[i] - field[k]);
        out[i] = flux * inv_h2 / (m.a[i] * m.b[i]);
        if (mode != 0) {
            out[i] -= kk * field[i] / (m.b[i] * m.b[i]);
        }
    }
    return out;
}

struct HessianTerms {
    std::vector<double> fxx;
    std::vector<double> fyy;
};

/// Covariant Hessian components of a y-independent function.
///
/// f_;yy = (b b' / a^2) f' with central differences. f_;xx (continuum
/// f'' - (a'/a) f') is taken as a^2 (Lap f - f_;yy / b^2) with the flux-form
/// Laplacian, so the discrete trace f_;xx/a^2 + f_;yy/b^2 is exactly the
/// flux-form Laplacian and the weighted integration by parts
/// sum (Lap f) e^{-f} rho h = sum |grad f|^2_w e^{-f} rho h holds to roundoff.
inline HessianTerms hessian_terms(std::span<const double> f, const MetricProfile& m, const TorusGrid& grid) {
    detail::check_size(f, grid, "f");
    const auto fp = detail::central_diff(f, grid);
    const auto bp = detail::central_diff(m.b, grid);
    const auto lap = laplace_beltrami(f, m, grid, 0);
    HessianTerms out{std::vector<double>(grid.n), std::vector<double>(grid.n)};
    for (int i = 0; i < grid.n; ++i) {
        const double a2 = m.a[i] * m.a[i];
        const double b2 = m.b[i] * m.b[i];
        out.fyy[i] = m.b[i] * bp[i] * fp[i] / a2;
        out.fxx[i] = a2 * (lap[i] - out.fyy[i] / b2);
    }
    return out;
}

/// Half-point quadrature of  integral coeff |d_x v|^2 / a^2 dv
///   = sum_i avg(coeff)_{i+1/2} (b/a)_{i+1/2} ((v_{i+1} - v_i)/h)^2 Ly h.
/// With coeff == 1 this is exactly the Dirichlet form used by the eigensolver.
inline double integrate_gradient_sq(std::span<const double> coeff, std::span<const double> v,
                                    const MetricProfile& m, const TorusGrid& grid) {
    const auto w = flux_weights(m, grid);
    double sum = 0.0;
    for (int i = 0; i < grid.n; ++i) {
        const int j = grid.next(i);
        const double dv = (v[j] - v[i]) / grid.h;
        const double c = coeff.empty() ? 1.0 : 0.5 * (coeff[i] + coeff[j]);
        sum += c * w[i] * dv * dv;
    }
    return sum * grid.ly * grid.h;
}

inline double integrate_gradient_sq(std::span<const double> v, const MetricProfile& m, const TorusGrid& grid) {
    return integrate_gradient_sq(std::span<const double>{}, v, m, grid);
}

} // namespace listflow
