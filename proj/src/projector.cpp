#include "optcalib/projector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace optcalib {

namespace {

void check_consistent(const VolumeCoeffs& c, const GeometryParams& g) {
    g.validate();
    c.grid.validate();
    if (c.data.size() != c.grid.size())
        throw ConfigError("projector: coefficient tensor does not match its grid");
}

struct PixelWindow {
    int j0, j1, e0, e1;
    bool empty() const { return j0 > j1 || e0 > e1; }
};

// Detector pixels within `radius` of the projected center v (world units).
PixelWindow footprint_window(const DetectorGrid& det, const Vec2& v, double radius) {
    PixelWindow w;
    w.j0 = std::max(0, static_cast<int>(std::ceil(det.xi_index(v.x - radius))));
    w.j1 = std::min(det.nxi - 1, static_cast<int>(std::floor(det.xi_index(v.x + radius))));
    w.e0 = std::max(0, static_cast<int>(std::ceil(det.eta_index(v.y - radius))));
    w.e1 = std::min(det.neta - 1, static_cast<int>(std::floor(det.eta_index(v.y + radius))));
    return w;
}

// Splat one weighted footprint. The loop body is shared between forward and
// the single-projection variant.
inline void splat(const DetectorGrid& det, const BlobProfile& blob, const Vec2& v,
                  double weight, double* out) {
    const double a = blob.radius();
    const double a2 = blob.radius_sq();
    const PixelWindow w = footprint_window(det, v, a);
    for (int e = w.e0; e <= w.e1; ++e) {
        const double deta = det.eta(e) - v.y;
        const double deta2 = deta * deta;
        double* row = out + static_cast<std::size_t>(e) * det.nxi;
        for (int j = w.j0; j <= w.j1; ++j) {
            const double dxi = det.xi(j) - v.x;
            const double s2 = dxi * dxi + deta2;
            if (s2 < a2) row[j] += weight * blob.eval_sq(s2);
        }
    }
}

}  // namespace

void forward_one(const VolumeCoeffs& c, const Pose& pose, const DetectorGrid& det,
                 const BlobProfile& blob, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    const ProjectionMap map = projection_map(pose);
    const VolumeGrid& vol = c.grid;
    std::size_t k = 0;
    for (int iz = 0; iz < vol.nz; ++iz) {
        const double z = vol.z(iz);
        for (int iy = 0; iy < vol.ny; ++iy) {
            const double y = vol.y(iy);
            for (int ix = 0; ix < vol.nx; ++ix, ++k) {
                const double ck = c.data[k];
                if (ck == 0.0) continue;
                const Vec2 v = map.apply({vol.x(ix), y, z});
                splat(det, blob, v, ck, out.data());
            }
        }
    }
}

ProjectionStack forward(const VolumeCoeffs& c, const GeometryParams& g,
                        const DetectorGrid& det, const BlobProfile& blob) {
    check_consistent(c, g);
    det.validate();

    ProjectionStack b(det, g.projections());
    const int p = static_cast<int>(g.projections());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < p; ++i)
        forward_one(c, g.pose(i), det, blob, b.projection(i));
    return b;
}

VolumeCoeffs adjoint(const ProjectionStack& b, const GeometryParams& g,
                     const VolumeGrid& vol, const BlobProfile& blob) {
    g.validate();
    vol.validate();
    if (b.count != g.projections())
        throw ConfigError("adjoint: stack has " + std::to_string(b.count) +
                          " projections, geometry has " + std::to_string(g.projections()));
    if (b.data.size() != b.det.pixels() * b.count)
        throw ConfigError("adjoint: stack payload does not match its detector grid");

    const std::size_t p = g.projections();
    std::vector<ProjectionMap> maps(p);
    for (std::size_t i = 0; i < p; ++i) maps[i] = projection_map(g.pose(i));

    const DetectorGrid& det = b.det;
    const double a = blob.radius();
    const double a2 = blob.radius_sq();

    VolumeCoeffs out(vol);
    // Gather per blob center; threads own disjoint z-slabs of the output.
#pragma omp parallel for schedule(static)
    for (int iz = 0; iz < vol.nz; ++iz) {
        const double z = vol.z(iz);
        for (int iy = 0; iy < vol.ny; ++iy) {
            const double y = vol.y(iy);
            for (int ix = 0; ix < vol.nx; ++ix) {
                const Vec3 u{vol.x(ix), y, z};
                double acc = 0.0;
                for (std::size_t i = 0; i < p; ++i) {
                    const Vec2 v = maps[i].apply(u);
                    const PixelWindow w = footprint_window(det, v, a);
                    if (w.empty()) continue;
                    const double* proj = b.data.data() + i * det.pixels();
                    for (int e = w.e0; e <= w.e1; ++e) {
                        const double deta = det.eta(e) - v.y;
                        const double deta2 = deta * deta;
                        const double* row = proj + static_cast<std::size_t>(e) * det.nxi;
                        for (int j = w.j0; j <= w.j1; ++j) {
                            const double dxi = det.xi(j) - v.x;
                            const double s2 = dxi * dxi + deta2;
                            if (s2 < a2) acc += row[j] * blob.eval_sq(s2);
                        }
                    }
                }
                out.at(ix, iy, iz) = acc;
            }
        }
    }
    return out;
}

Volume render_volume(const VolumeCoeffs& c, const BlobParams& blob) {
    const VolumeGrid& vol = c.grid;
    const int reach = static_cast<int>(std::ceil(blob.radius / vol.h)) - 1;

    // Stencil of blob values at grid offsets within the support.
    struct Tap {
        int dx, dy, dz;
        double w;
    };
    std::vector<Tap> taps;
    BlobParams p = blob;
    for (int dz = -reach; dz <= reach; ++dz)
        for (int dy = -reach; dy <= reach; ++dy)
            for (int dx = -reach; dx <= reach; ++dx) {
                const double r = vol.h * std::sqrt(double(dx * dx + dy * dy + dz * dz));
                if (r < blob.radius) taps.push_back({dx, dy, dz, blob_value(p, r)});
            }

    Volume out(vol);
#pragma omp parallel for schedule(static)
    for (int iz = 0; iz < vol.nz; ++iz)
        for (int iy = 0; iy < vol.ny; ++iy)
            for (int ix = 0; ix < vol.nx; ++ix) {
                double acc = 0.0;
                for (const Tap& t : taps) {
                    const int sx = ix - t.dx, sy = iy - t.dy, sz = iz - t.dz;
                    if (sx < 0 || sx >= vol.nx || sy < 0 || sy >= vol.ny || sz < 0 ||
                        sz >= vol.nz)
                        continue;
                    acc += t.w * c.at(sx, sy, sz);
                }
                out.at(ix, iy, iz) = acc;
            }
    return out;
}

}  // namespace optcalib
