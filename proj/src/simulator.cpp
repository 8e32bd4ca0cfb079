#include "optcalib/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "optcalib/rng.hpp"

namespace optcalib {

namespace {

constexpr int kSupersample = 4;  // 4^3 subsamples per voxel

// Fraction of a voxel covered by the predicate, from a fixed subsample grid.
template <typename Inside>
double coverage(const VolumeGrid& vol, int ix, int iy, int iz, Inside&& inside) {
    const double step = vol.h / kSupersample;
    const double off = -0.5 * vol.h + 0.5 * step;
    int hits = 0;
    for (int a = 0; a < kSupersample; ++a)
        for (int b = 0; b < kSupersample; ++b)
            for (int c = 0; c < kSupersample; ++c) {
                const Vec3 p{vol.x(ix) + off + a * step, vol.y(iy) + off + b * step,
                             vol.z(iz) + off + c * step};
                if (inside(p)) ++hits;
            }
    return hits / static_cast<double>(kSupersample * kSupersample * kSupersample);
}

}  // namespace

void ErrorModel::validate() const {
    if (angle_walk_sigma < 0 || shift_walk_sigma < 0 || noise_sigma < 0)
        throw ConfigError("error model: sigmas must be >= 0");
    if (!std::isfinite(psi1_true) || !std::isfinite(psi2_true) ||
        !std::isfinite(static_cor_offset.x) || !std::isfinite(static_cor_offset.y))
        throw ConfigError("error model: non-finite parameter");
}

BeadPhantom make_bead_phantom(const VolumeGrid& vol, int n_beads, double bead_radius,
                              std::uint64_t seed) {
    vol.validate();
    if (n_beads < 1) throw ConfigError("bead phantom: need at least one bead");
    if (!(bead_radius > 0)) throw ConfigError("bead phantom: radius must be > 0");

    const double cyl = 0.45 * std::min(vol.nx, vol.ny) * vol.h;
    const double r_max = cyl - bead_radius;
    const double z_max = 0.5 * vol.nz * vol.h - bead_radius - vol.h;
    if (r_max <= 0 || z_max <= 0)
        throw ConfigError("bead phantom: bead radius too large for the volume");

    // Rejection-sample disjoint centers; beads are kept a couple of voxels
    // apart so thresholded components stay separable.
    // Keep beads far enough apart that per-bead measurement windows
    // (bead radius + a few voxels) never overlap a neighbour.
    const double min_gap = 2.0 * bead_radius + 6.0 * vol.h;
    Rng rng(seed);
    std::vector<Vec3> centers;
    if (n_beads == 1) centers.push_back({0.0, 0.0, 0.0});  // single bead sits at the origin
    int attempts = 0, stale = 0;
    while (static_cast<int>(centers.size()) < n_beads) {
        if (++attempts > 20000 * n_beads)
            throw ConfigError("bead phantom: could not place " + std::to_string(n_beads) +
                              " disjoint beads; reduce count or radius");
        const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double rad = r_max * std::sqrt(rng.uniform());
        const Vec3 c{rad * std::cos(ang), rad * std::sin(ang), rng.uniform(-z_max, z_max)};
        bool ok = true;
        for (const Vec3& o : centers)
            if ((c - o).norm() < min_gap) {
                ok = false;
                break;
            }
        if (ok) {
            centers.push_back(c);
            stale = 0;
        } else if (++stale > 2000) {
            // A bad early placement can make the rest infeasible; start over.
            centers.clear();
            stale = 0;
        }
    }

    BeadPhantom out{VolumeCoeffs(vol), centers, bead_radius};
    const double rb2 = bead_radius * bead_radius;
    const int reach = static_cast<int>(std::ceil(bead_radius / vol.h)) + 1;
    for (const Vec3& c : centers) {
        const int cx = static_cast<int>(std::round(c.x / vol.h + 0.5 * (vol.nx - 1)));
        const int cy = static_cast<int>(std::round(c.y / vol.h + 0.5 * (vol.ny - 1)));
        const int cz = static_cast<int>(std::round(c.z / vol.h + 0.5 * (vol.nz - 1)));
        for (int iz = std::max(0, cz - reach); iz <= std::min(vol.nz - 1, cz + reach); ++iz)
            for (int iy = std::max(0, cy - reach); iy <= std::min(vol.ny - 1, cy + reach); ++iy)
                for (int ix = std::max(0, cx - reach); ix <= std::min(vol.nx - 1, cx + reach);
                     ++ix) {
                    const double frac = coverage(vol, ix, iy, iz, [&](const Vec3& p) {
                        const Vec3 d = p - c;
                        return d.dot(d) < rb2;
                    });
                    if (frac > 0) out.coeffs.at(ix, iy, iz) += frac;
                }
    }
    return out;
}

VolumeCoeffs make_helix_phantom(const VolumeGrid& vol, const HelixSpec& spec,
                                std::uint64_t seed) {
    vol.validate();
    if (!(spec.tube_radius > 0)) throw ConfigError("helix phantom: degenerate tube radius");
    if (!std::isfinite(spec.turns) || spec.turns < 0)
        throw ConfigError("helix phantom: turns must be finite and >= 0");

    const double half_extent = 0.5 * std::min(vol.nx, vol.ny) * vol.h;
    const double helix_r = spec.helix_radius > 0 ? spec.helix_radius : 0.3 * half_extent;
    const double z_span = 0.375 * vol.nz * vol.h;  // +-z_span along the axis direction
    const double phase0 = Rng(seed).uniform(0.0, 2.0 * std::numbers::pi);

    // The tube lives in axis-aligned coordinates q = R_y(-tilt) p, where the
    // centerline is (helix_r cos(w q.z + phase0), helix_r sin(...), q.z).
    const double ct = std::cos(spec.axis_tilt);
    const double st = std::sin(spec.axis_tilt);
    const double omega = 2.0 * std::numbers::pi * spec.turns / (2.0 * z_span);
    const double rt2 = spec.tube_radius * spec.tube_radius;

    auto inside = [&](const Vec3& p) {
        const Vec3 q{ct * p.x - st * p.z, p.y, st * p.x + ct * p.z};
        if (std::abs(q.z) > z_span) return false;
        const double cx = helix_r * std::cos(omega * q.z + phase0);
        const double cy = helix_r * std::sin(omega * q.z + phase0);
        const double dx = q.x - cx, dy = q.y - cy;
        return dx * dx + dy * dy < rt2;
    };

    // Conservative cull before supersampling: a voxel whose center is more
    // than half a diagonal away from the tube shell cannot intersect it.
    const double slack = 0.5 * std::sqrt(3.0) * vol.h;
    auto near_tube = [&](const Vec3& p) {
        const Vec3 q{ct * p.x - st * p.z, p.y, st * p.x + ct * p.z};
        if (std::abs(q.z) > z_span + slack) return false;
        const double ring = std::abs(std::hypot(q.x, q.y) - helix_r);
        return ring < spec.tube_radius + slack;
    };

    VolumeCoeffs out(vol);
#pragma omp parallel for schedule(static)
    for (int iz = 0; iz < vol.nz; ++iz)
        for (int iy = 0; iy < vol.ny; ++iy)
            for (int ix = 0; ix < vol.nx; ++ix) {
                const Vec3 center{vol.x(ix), vol.y(iy), vol.z(iz)};
                if (!near_tube(center)) continue;
                const double frac = coverage(vol, ix, iy, iz, inside);
                if (frac > 0) out.at(ix, iy, iz) = frac;
            }
    return out;
}

GeometryParams perturb_geometry(const GeometryParams& nominal, const ErrorModel& err,
                                double detector_spacing) {
    nominal.validate();
    err.validate();

    GeometryParams g = nominal;
    g.psi1 = err.psi1_true;
    g.psi2 = err.psi2_true;

    Rng rng(err.seed);
    double walk = 0.0;
    for (double& phi : g.phi) {
        walk += rng.normal(0.0, err.angle_walk_sigma);
        phi += walk;
    }

    const Vec2 static_world = err.static_cor_offset * detector_spacing;
    if (err.shift_walk_sigma > 0) {
        g.t.assign(g.phi.size(), Vec2{});
        Vec2 w{};
        for (Vec2& t : g.t) {
            w.x += rng.normal(0.0, err.shift_walk_sigma) * detector_spacing;
            w.y += rng.normal(0.0, err.shift_walk_sigma) * detector_spacing;
            t = nominal.shift(0) + static_world + w;
        }
    } else {
        for (Vec2& t : g.t) t = t + static_world;
    }
    return g;
}

ProjectionStack simulate_measurements(const VolumeCoeffs& c, const GeometryParams& g_true,
                                      const DetectorGrid& det, const BlobProfile& blob,
                                      double noise_sigma_abs, std::uint64_t seed) {
    if (noise_sigma_abs < 0) throw ConfigError("simulate: noise sigma must be >= 0");
    ProjectionStack b = forward(c, g_true, det, blob);
    if (noise_sigma_abs > 0) {
        Rng rng(seed);
        for (double& v : b.data) v += rng.normal(0.0, noise_sigma_abs);
    }
    return b;
}

}  // namespace optcalib
