#include "optcalib/artifact_catalog.hpp"

#include "optcalib/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

namespace optcalib {

namespace {

struct BeadStat {
    double dispersion = 0.0;  // voxels (= px at spacing h)
    double doubling = 0.0;
    double radius = 0.0;  // axis distance in voxels
};

// Positive-mass centroid of a clipped box window, in voxel index coordinates.
// Returns false when the window carries no positive mass.
bool window_centroid(const Volume& v, int x0, int x1, int y0, int y1, int z0, int z1,
                     double out[3]) {
    double wsum = 0.0, mx = 0.0, my = 0.0, mz = 0.0;
    for (int iz = z0; iz <= z1; ++iz)
        for (int iy = y0; iy <= y1; ++iy)
            for (int ix = x0; ix <= x1; ++ix) {
                const double w = std::max(v.at(ix, iy, iz), 0.0);
                wsum += w;
                mx += w * ix;
                my += w * iy;
                mz += w * iz;
            }
    if (wsum <= 0.0) return false;
    out[0] = mx / wsum;
    out[1] = my / wsum;
    out[2] = mz / wsum;
    return true;
}

// Strict 26-neighborhood maxima above half the window peak; candidates are
// kept one voxel inside the window so every neighbor is comparable.
int count_peaks(const Volume& v, int x0, int x1, int y0, int y1, int z0, int z1) {
    double peak = 0.0;
    for (int iz = z0; iz <= z1; ++iz)
        for (int iy = y0; iy <= y1; ++iy)
            for (int ix = x0; ix <= x1; ++ix) peak = std::max(peak, v.at(ix, iy, iz));
    if (peak <= 0.0) return 0;
    const double thresh = 0.5 * peak;
    int count = 0;
    for (int iz = z0 + 1; iz < z1; ++iz)
        for (int iy = y0 + 1; iy < y1; ++iy)
            for (int ix = x0 + 1; ix < x1; ++ix) {
                const double c = v.at(ix, iy, iz);
                if (c < thresh) continue;
                bool is_max = true;
                for (int dz = -1; dz <= 1 && is_max; ++dz)
                    for (int dy = -1; dy <= 1 && is_max; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            if (!dx && !dy && !dz) continue;
                            if (v.at(ix + dx, iy + dy, iz + dz) >= c) {
                                is_max = false;
                                break;
                            }
                        }
                if (is_max) ++count;
            }
    return count;
}

// Per-bead regression of centroid displacement against distance from the
// rotation axis; angle errors displace beads proportionally to their radius.
double fov_slope(const std::vector<BeadStat>& stats) {
    const double n = static_cast<double>(stats.size());
    if (stats.size() < 2) return 0.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& s : stats) {
        const double x = s.radius;
        sx += x;
        sy += s.dispersion;
        sxx += x * x;
        sxy += x * s.dispersion;
    }
    const double denom = n * sxx - sx * sx;
    if (denom <= 1e-12) return 0.0;
    return (n * sxy - sx * sy) / denom;
}

// How fast the slice centroid drifts with height: a mass-weighted linear fit
// of the per-slice in-plane centroid displacement vector (recon vs an
// ideal-geometry reference reconstruction) against signed z, returning the
// norm of the fitted drift rate (voxels per voxel). An axis tilt tips the
// bead cloud so centroids trace a line in (x,z); ring artifacts (COR offset,
// doubling ghosts) stay centered on each bead and noise has no systematic
// odd-in-z component, so both fit to ~0. Weights come from the ground-truth
// rendering; slices carrying under 5% of its peak slice mass are skipped
// because their centroids are dominated by reconstruction noise.
double slice_height_slope(const Volume& recon, const Volume& ref, const Volume& gt,
                          double mask_r2) {
    const VolumeGrid& grid = recon.grid;
    std::vector<double> zs, dxs, dys, ws;
    double wmax = 0.0;
    for (int iz = 0; iz < grid.nz; ++iz) {
        double wr = 0, rx = 0, ry = 0, wf = 0, fx = 0, fy = 0, wg = 0;
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix) {
                const double x = grid.x(ix), y = grid.y(iy);
                if (x * x + y * y > mask_r2) continue;
                const double a = std::max(recon.at(ix, iy, iz), 0.0);
                wr += a;
                rx += a * ix;
                ry += a * iy;
                const double f = std::max(ref.at(ix, iy, iz), 0.0);
                wf += f;
                fx += f * ix;
                fy += f * iy;
                wg += std::max(gt.at(ix, iy, iz), 0.0);
            }
        if (wr <= 0.0 || wf <= 0.0 || wg <= 0.0) continue;
        zs.push_back(grid.z(iz) / grid.h);
        dxs.push_back(rx / wr - fx / wf);
        dys.push_back(ry / wr - fy / wf);
        ws.push_back(wg);
        wmax = std::max(wmax, wg);
    }
    double sw = 0, sz = 0;
    for (std::size_t i = 0; i < zs.size(); ++i) {
        if (ws[i] < 0.05 * wmax) ws[i] = 0.0;
        sw += ws[i];
        sz += ws[i] * zs[i];
    }
    if (sw <= 0.0) return 0.0;
    const double mz = sz / sw;
    double szz = 0, mdx = 0, mdy = 0;
    for (std::size_t i = 0; i < zs.size(); ++i) {
        szz += ws[i] * (zs[i] - mz) * (zs[i] - mz);
        mdx += ws[i] * dxs[i];
        mdy += ws[i] * dys[i];
    }
    mdx /= sw;
    mdy /= sw;
    if (szz <= 1e-12) return 0.0;
    double szx = 0, szy = 0;
    for (std::size_t i = 0; i < zs.size(); ++i) {
        szx += ws[i] * (zs[i] - mz) * (dxs[i] - mdx);
        szy += ws[i] * (zs[i] - mz) * (dys[i] - mdy);
    }
    return std::hypot(szx / szz, szy / szz);
}

std::uint64_t noise_seed(const CatalogConfig& cfg, double magnitude) {
    // Kind-independent so magnitude 0 is the clean baseline for every kind.
    return cfg.seed ^ (std::bit_cast<std::uint64_t>(magnitude) * 0x9e3779b97f4a7c15ULL);
}

void append_row(std::string& out, const CatalogRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  to_string(r.kind), r.magnitude, r.metrics.rmse,
                  r.metrics.mean_dispersion, r.metrics.mean_doubling,
                  r.metrics.height_slope, r.metrics.fov_slope);
    out += buf;
}

}  // namespace

const char* to_string(ArtifactKind k) {
    switch (k) {
        case ArtifactKind::cor_offset: return "cor_offset";
        case ArtifactKind::angle_jitter: return "angle_jitter";
        case ArtifactKind::axis_tilt_psi1: return "axis_tilt_psi1";
        case ArtifactKind::detector_tilt_psi2: return "detector_tilt_psi2";
        case ArtifactKind::combined: return "combined";
    }
    return "?";
}

ArtifactKind artifact_kind_from_string(const std::string& s) {
    for (ArtifactKind k : {ArtifactKind::cor_offset, ArtifactKind::angle_jitter,
                           ArtifactKind::axis_tilt_psi1, ArtifactKind::detector_tilt_psi2,
                           ArtifactKind::combined})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown artifact kind: " + s);
}

void CatalogConfig::validate() const {
    grid.validate();
    det.validate();
    blob.validate();
    if (projections < 2) throw ConfigError("catalog needs at least two projections");
    if (n_beads < 1) throw ConfigError("catalog needs at least one bead");
    if (!(bead_radius > 0)) throw ConfigError("bead radius must be > 0");
    if (noise < 0) throw ConfigError("noise fraction must be >= 0");
}

ArtifactCase generate_case(ArtifactKind kind, double magnitude, const CatalogConfig& cfg) {
    cfg.validate();
    if (!std::isfinite(magnitude) || magnitude < 0)
        throw ConfigError("artifact magnitude must be finite and >= 0");
    const double deg10 = 10.0 * std::numbers::pi / 180.0;
    switch (kind) {
        case ArtifactKind::cor_offset:
            if (magnitude > 0.25 * cfg.det.nxi)
                throw ConfigError("cor_offset magnitude above a quarter detector");
            break;
        case ArtifactKind::angle_jitter:
            if (magnitude > 0.2) throw ConfigError("angle_jitter step sigma above 0.2 rad");
            break;
        case ArtifactKind::axis_tilt_psi1:
        case ArtifactKind::detector_tilt_psi2:
            if (magnitude > deg10) throw ConfigError("tilt magnitude above 10 degrees");
            break;
        case ArtifactKind::combined:
            if (magnitude > 4.0) throw ConfigError("combined scale above 4");
            break;
    }

    ArtifactCase c;
    c.kind = kind;
    c.magnitude = magnitude;
    c.cfg = cfg;
    c.phantom = make_bead_phantom(cfg.grid, cfg.n_beads, cfg.bead_radius, cfg.seed);

    ErrorModel em;
    em.seed = cfg.seed * 0x9e3779b97f4a7c15ULL + 12345;  // one walk stream per suite
    switch (kind) {
        case ArtifactKind::cor_offset: em.static_cor_offset = {magnitude, 0.0}; break;
        case ArtifactKind::angle_jitter: em.angle_walk_sigma = magnitude; break;
        case ArtifactKind::axis_tilt_psi1: em.psi1_true = magnitude; break;
        case ArtifactKind::detector_tilt_psi2: em.psi2_true = magnitude; break;
        case ArtifactKind::combined:
            em.angle_walk_sigma = 0.01 * magnitude;
            em.static_cor_offset = {1.5 * magnitude, 0.0};
            em.psi1_true = 0.0175 * magnitude;
            break;
    }

    GeometryParams nominal;
    nominal.phi = uniform_angles(cfg.projections);
    nominal.t = {Vec2{0.0, 0.0}};
    c.assumed_geometry = nominal;
    c.true_geometry = perturb_geometry(nominal, em, cfg.det.spacing);

    const BlobProfile blob(cfg.blob);
    double sigma_abs = 0.0;
    if (cfg.noise > 0) {
        ProjectionStack clean = forward(c.phantom.coeffs, c.true_geometry, cfg.det, blob);
        double peak = 0.0;
        for (double v : clean.data) peak = std::max(peak, std::abs(v));
        sigma_abs = cfg.noise * peak;
    }
    c.measurements = simulate_measurements(c.phantom.coeffs, c.true_geometry, cfg.det, blob,
                                           sigma_abs, noise_seed(cfg, magnitude));
    return c;
}

Volume naive_recon(const ArtifactCase& c) {
    return fbp_stack(c.measurements, c.assumed_geometry.phi, c.cfg.grid, false);
}

ArtifactMetrics measure(const ArtifactCase& c, const Volume& recon) {
    const VolumeGrid& grid = c.cfg.grid;
    if (recon.grid.nx != grid.nx || recon.grid.ny != grid.ny || recon.grid.nz != grid.nz)
        throw ConfigError("reconstruction grid does not match the case grid");
    if (c.phantom.centers.empty()) throw ConfigError("case is missing ground-truth beads");

    const Volume gt = render_volume(c.phantom.coeffs, c.cfg.blob);
    // Reference for the drift fit: the same reconstruction pipeline fed
    // noiseless, perfect-geometry measurements of the same phantom.
    // Differencing against it cancels the reconstruction's own systematic
    // centroid drift, isolating what the injected error adds.
    const ProjectionStack ideal =
        forward(c.phantom.coeffs, c.assumed_geometry, c.cfg.det, BlobProfile(c.cfg.blob));
    const Volume ref = fbp_stack(ideal, c.assumed_geometry.phi, grid, false);

    ArtifactMetrics m;
    // RMSE over the inscribed cylinder (the region all projections see).
    const double mask_r2 = 0.25 * std::min(grid.nx, grid.ny) * std::min(grid.nx, grid.ny)
                           * grid.h * grid.h;
    double acc = 0.0;
    std::size_t count = 0;
    for (int iz = 0; iz < grid.nz; ++iz)
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix) {
                const double x = grid.x(ix), y = grid.y(iy);
                if (x * x + y * y > mask_r2) continue;
                const double d = recon.at(ix, iy, iz) - gt.at(ix, iy, iz);
                acc += d * d;
                ++count;
            }
    m.rmse = count ? std::sqrt(acc / count) : 0.0;

    const int wv = static_cast<int>(std::ceil(c.phantom.bead_radius / grid.h)) + 4;
    std::vector<BeadStat> stats;
    for (const Vec3& ctr : c.phantom.centers) {
        const int ix = static_cast<int>(std::lround(ctr.x / grid.h + 0.5 * (grid.nx - 1)));
        const int iy = static_cast<int>(std::lround(ctr.y / grid.h + 0.5 * (grid.ny - 1)));
        const int iz = static_cast<int>(std::lround(ctr.z / grid.h + 0.5 * (grid.nz - 1)));
        const int x0 = std::max(ix - wv, 0), x1 = std::min(ix + wv, grid.nx - 1);
        const int y0 = std::max(iy - wv, 0), y1 = std::min(iy + wv, grid.ny - 1);
        const int z0 = std::max(iz - wv, 0), z1 = std::min(iz + wv, grid.nz - 1);

        BeadStat s;
        // Centroid displacement of the reconstructed bead against the rendered
        // truth; the rendered reference cancels rasterization offsets so a
        // perfect reconstruction scores exactly zero.
        double cr[3], cg[3];
        if (window_centroid(recon, x0, x1, y0, y1, z0, z1, cr) &&
            window_centroid(gt, x0, x1, y0, y1, z0, z1, cg))
            s.dispersion = std::hypot(cr[0] - cg[0], cr[1] - cg[1], cr[2] - cg[2]);
        s.doubling = std::max(count_peaks(recon, x0, x1, y0, y1, z0, z1) - 1, 0);
        s.radius = std::hypot(ctr.x, ctr.y) / grid.h;
        stats.push_back(s);

        m.mean_dispersion += s.dispersion;
        m.mean_doubling += s.doubling;
    }
    m.mean_dispersion /= stats.size();
    m.mean_doubling /= stats.size();
    m.height_slope = slice_height_slope(recon, ref, gt, mask_r2);
    m.fov_slope = fov_slope(stats);
    return m;
}

std::vector<double> default_magnitudes(ArtifactKind kind) {
    const double deg = std::numbers::pi / 180.0;
    switch (kind) {
        // 3 px keeps the largest COR ring inside the reconstructed FOV for
        // edge beads; bigger offsets clip the ring at the boundary, which
        // drags centroids and muddies the height-slope signature.
        case ArtifactKind::cor_offset: return {0.5, 1.5, 3.0};
        case ArtifactKind::angle_jitter: return {0.005, 0.015, 0.045};
        case ArtifactKind::axis_tilt_psi1:
        case ArtifactKind::detector_tilt_psi2: return {0.5 * deg, 1.5 * deg, 4.5 * deg};
        case ArtifactKind::combined: return {0.5, 1.0, 2.0};
    }
    return {};
}

std::vector<ArtifactKind> default_kinds() {
    return {ArtifactKind::cor_offset, ArtifactKind::angle_jitter,
            ArtifactKind::axis_tilt_psi1, ArtifactKind::detector_tilt_psi2};
}

std::vector<CatalogRow> run_catalog(const CatalogConfig& cfg,
                                    const std::vector<ArtifactKind>& kinds) {
    std::vector<CatalogRow> rows;
    for (ArtifactKind k : kinds)
        for (double mag : default_magnitudes(k)) {
            ArtifactCase c = generate_case(k, mag, cfg);
            CatalogRow row{k, mag, measure(c, naive_recon(c))};
            rows.push_back(row);
        }
    return rows;
}

std::string catalog_csv(const std::vector<CatalogRow>& rows) {
    std::string out = "kind,magnitude,rmse,dispersion_px,doubling,height_slope,fov_slope\n";
    for (const CatalogRow& r : rows) append_row(out, r);
    return out;
}

std::string catalog_text(const std::vector<CatalogRow>& rows) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-20s %10s %10s %12s %9s %12s %12s\n", "kind",
                  "magnitude", "rmse", "dispersion", "doubling", "height_slope",
                  "fov_slope");
    out += buf;
    for (const CatalogRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-20s %10.4g %10.4g %12.4g %9.4g %12.4g %12.4g\n",
                      to_string(r.kind), r.magnitude, r.metrics.rmse,
                      r.metrics.mean_dispersion, r.metrics.mean_doubling,
                      r.metrics.height_slope, r.metrics.fov_slope);
        out += buf;
    }
    return out;
}

}  // namespace optcalib
