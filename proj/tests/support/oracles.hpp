#pragma once

// Test-only oracles that share as little code as possible with the library
// hot paths: a dense system matrix assembled entry by entry from the affine
// pose map, and Bessel-series evaluations of the blob profile built from the
// power series instead of std::cyl_bessel_i.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "optcalib/geometry.hpp"
#include "optcalib/kb_basis.hpp"
#include "optcalib/projector.hpp"
#include "optcalib/rng.hpp"

namespace testsupport {

using namespace optcalib;

inline double rel_err(double got, double want, double floor = 1e-12) {
    return std::abs(got - want) / std::max(std::abs(want), floor);
}

inline double l2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline void fill_normal(std::vector<double>& v, Rng& rng) {
    for (double& x : v) x = rng.normal();
}

// Modified Bessel function of the first kind by its power series; terms are
// accumulated incrementally so large arguments do not overflow intermediates.
inline double series_besseli(double nu, double x) {
    double term = std::pow(0.5 * x, nu) / std::tgamma(nu + 1.0);
    double sum = term;
    for (int k = 0; k < 500; ++k) {
        term *= 0.25 * x * x / ((k + 1.0) * (nu + k + 1.0));
        sum += term;
        if (term < 1e-30 * sum) break;
    }
    return sum;
}

inline double series_blob_value(const BlobParams& p, double r) {
    if (std::abs(r) >= p.radius) return 0.0;
    const double w = std::sqrt(1.0 - (r / p.radius) * (r / p.radius));
    return std::pow(w, p.m) * series_besseli(p.m, p.alpha * w) /
           series_besseli(p.m, p.alpha);
}

inline double series_xray_profile(const BlobParams& p, double s) {
    if (std::abs(s) >= p.radius) return 0.0;
    const double w = std::sqrt(1.0 - (s / p.radius) * (s / p.radius));
    const double nu = p.m + 0.5;
    return p.radius * std::sqrt(2.0 * std::numbers::pi / p.alpha) * std::pow(w, nu) *
           series_besseli(nu, p.alpha * w) / series_besseli(p.m, p.alpha);
}

// d/ds of the x-ray profile:
//   p'(s) = -C * alpha * (s / a^2) * w^(m-1/2) * I_(m-1/2)(alpha * w)
// with C = a * sqrt(2*pi/alpha) / I_m(alpha).
inline double series_xray_profile_deriv(const BlobParams& p, double s) {
    if (std::abs(s) >= p.radius) return 0.0;
    const double w2 = 1.0 - (s / p.radius) * (s / p.radius);
    if (w2 <= 0.0) return 0.0;
    const double w = std::sqrt(w2);
    const double c = p.radius * std::sqrt(2.0 * std::numbers::pi / p.alpha) /
                     series_besseli(p.m, p.alpha);
    return -c * p.alpha * (s / (p.radius * p.radius)) * std::pow(w, p.m - 0.5) *
           series_besseli(p.m - 0.5, p.alpha * w);
}

// Dense H with rows indexed like ProjectionStack ((p*neta + e)*nxi + j) and
// columns like Volume ((iz*ny + iy)*nx + ix). Every entry is evaluated
// independently from project_point and the footprint table, so this never
// touches the projector's splatting loops. Keep the sizes tiny.
struct DenseOperator {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;  // row-major

    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> y(rows, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            const double* row = a.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) s += row[c] * x[c];
            y[r] = s;
        }
        return y;
    }

    std::vector<double> apply_transpose(const std::vector<double>& y) const {
        std::vector<double> x(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* row = a.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) x[c] += row[c] * y[r];
        }
        return x;
    }
};

inline DenseOperator dense_system_matrix(const VolumeGrid& grid, const GeometryParams& g,
                                         const DetectorGrid& det, const BlobProfile& blob) {
    DenseOperator op;
    op.rows = g.projections() * det.pixels();
    op.cols = grid.size();
    op.a.assign(op.rows * op.cols, 0.0);
    for (std::size_t p = 0; p < g.projections(); ++p) {
        const Pose pose = g.pose(p);
        for (int iz = 0; iz < grid.nz; ++iz)
            for (int iy = 0; iy < grid.ny; ++iy)
                for (int ix = 0; ix < grid.nx; ++ix) {
                    const std::size_t col = grid.index(ix, iy, iz);
                    const Vec2 v = project_point({grid.x(ix), grid.y(iy), grid.z(iz)}, pose);
                    for (int e = 0; e < det.neta; ++e)
                        for (int j = 0; j < det.nxi; ++j) {
                            const double dx = det.xi(j) - v.x;
                            const double dy = det.eta(e) - v.y;
                            const double s2 = dx * dx + dy * dy;
                            if (s2 >= blob.radius_sq()) continue;
                            const std::size_t row =
                                (p * det.neta + e) * det.nxi + j;
                            op.a[row * op.cols + col] = blob.eval_sq(s2);
                        }
                }
    }
    return op;
}

}  // namespace testsupport
