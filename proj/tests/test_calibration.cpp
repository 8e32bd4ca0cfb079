#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "optcalib/calibration.hpp"
#include "optcalib/simulator.hpp"
#include "support/oracles.hpp"

using namespace optcalib;
using namespace testsupport;

namespace {

constexpr double kPi = std::numbers::pi;

GeometryParams plain_geometry(std::size_t count) {
    GeometryParams g;
    g.phi = uniform_angles(count);
    return g;
}

}  // namespace

TEST_CASE("objective matches its closed forms") {
    const VolumeGrid grid{16, 16, 16, 1.0};
    const DetectorGrid det{32, 32, 1.0};
    const BlobProfile blob{BlobParams{}};
    const GeometryParams g = plain_geometry(6);
    const BeadPhantom ph = make_bead_phantom(grid, 3, 1.5, 3);
    const ProjectionStack b = forward(ph.coeffs, g, det, blob);

    CHECK(objective(ph.coeffs, g, b, blob) == 0.0);
    const VolumeCoeffs zero(grid);
    CHECK(objective(zero, g, b, blob) ==
          doctest::Approx(0.5 * dot(b.data, b.data)).epsilon(1e-14));
}

TEST_CASE("objective is quadratically homogeneous in residual scale") {
    const VolumeGrid grid{10, 10, 10, 1.0};
    const DetectorGrid det{20, 20, 1.0};
    const BlobProfile blob{BlobParams{}};
    const GeometryParams g = plain_geometry(5);
    Rng rng(53);
    VolumeCoeffs c(grid);
    fill_normal(c.data, rng);
    ProjectionStack b(det, 5);
    fill_normal(b.data, rng);

    const double beta = 2.5;
    VolumeCoeffs cb = c;
    for (double& v : cb.data) v *= beta;
    ProjectionStack bb = b;
    for (double& v : bb.data) v *= beta;
    CHECK(objective(cb, g, bb, blob) ==
          doctest::Approx(beta * beta * objective(c, g, b, blob)).epsilon(1e-12));
}

TEST_CASE("forward and objective agree with a dense matrix oracle") {
    const VolumeGrid grid{8, 8, 8, 1.0};
    const DetectorGrid det{16, 16, 1.0};
    const BlobProfile blob{BlobParams{}};
    GeometryParams g = plain_geometry(4);
    g.psi1 = 0.05;
    g.psi2 = -0.08;
    g.t = {Vec2{0.6, -0.3}};

    const DenseOperator H = dense_system_matrix(grid, g, det, blob);
    Rng rng(59);
    VolumeCoeffs c(grid);
    fill_normal(c.data, rng);
    ProjectionStack b(det, 4);
    fill_normal(b.data, rng);

    const ProjectionStack hc = forward(c, g, det, blob);
    const std::vector<double> dense_hc = H.apply(c.data);
    double worst = 0.0;
    for (std::size_t i = 0; i < dense_hc.size(); ++i)
        worst = std::max(worst, std::abs(dense_hc[i] - hc.data[i]));
    CHECK(worst < 1e-10 * blob.center_value());

    double dense_cost = 0.0;
    for (std::size_t i = 0; i < dense_hc.size(); ++i) {
        const double d = dense_hc[i] - b.data[i];
        dense_cost += d * d;
    }
    dense_cost *= 0.5;
    CHECK(rel_err(objective(c, g, b, blob), dense_cost) < 1e-8);

    // The adjoint agrees with the dense transpose as well.
    const VolumeCoeffs hty = adjoint(b, g, grid, blob);
    const std::vector<double> dense_hty = H.apply_transpose(b.data);
    worst = 0.0;
    for (std::size_t i = 0; i < dense_hty.size(); ++i)
        worst = std::max(worst, std::abs(dense_hty[i] - hty.data[i]));
    CHECK(worst < 1e-10 * l2(b.data));
}

TEST_CASE("shift gradient matches the analytic translation derivative") {
    const VolumeGrid grid{16, 16, 16, 1.0};
    const DetectorGrid det{32, 32, 1.0};
    const BlobParams bp;
    const BlobProfile blob(bp);
    const GeometryParams g = plain_geometry(8);
    const BeadPhantom ph = make_bead_phantom(grid, 3, 1.5, 5);

    GeometryParams g_shift = g;
    g_shift.t = {Vec2{1.3, -0.6}};
    const ProjectionStack b = forward(ph.coeffs, g_shift, det, blob);

    CalibConfig cfg;
    cfg.fit_phi = false;
    cfg.fit_shift = true;
    const std::vector<double> grad = param_gradient(ph.coeffs, g, b, blob, cfg);
    REQUIRE(grad.size() == 2);

    // <Hc - b, d(Hc)/dt> assembled from the series profile derivative; no
    // code shared with the footprint table or the central differences.
    const ProjectionStack model = forward(ph.coeffs, g, det, blob);
    double oracle[2] = {0.0, 0.0};
    const double a = bp.radius;
    for (std::size_t p = 0; p < g.projections(); ++p) {
        const Pose pose = g.pose(p);
        for (int iz = 0; iz < grid.nz; ++iz)
            for (int iy = 0; iy < grid.ny; ++iy)
                for (int ix = 0; ix < grid.nx; ++ix) {
                    const double ck = ph.coeffs.at(ix, iy, iz);
                    if (ck == 0.0) continue;
                    const Vec2 v =
                        project_point({grid.x(ix), grid.y(iy), grid.z(iz)}, pose);
                    for (int e = 0; e < det.neta; ++e)
                        for (int j = 0; j < det.nxi; ++j) {
                            const double dx = det.xi(j) - v.x;
                            const double dy = det.eta(e) - v.y;
                            const double d = std::hypot(dx, dy);
                            if (d < 1e-12 || d >= a) continue;
                            const double r = model.at(p, e, j) - b.at(p, e, j);
                            const double slope =
                                ck * series_xray_profile_deriv(bp, d) / d;
                            // Moving t by +dt moves each footprint center with
                            // it, so the model changes by -profile' per unit.
                            oracle[0] -= r * slope * dx;
                            oracle[1] -= r * slope * dy;
                        }
                }
    }
    oracle[0] *= det.spacing;  // packed shifts are in pixels
    oracle[1] *= det.spacing;

    CHECK(rel_err(grad[0], oracle[0]) < 1e-3);
    CHECK(rel_err(grad[1], oracle[1]) < 1e-3);
}

TEST_CASE("the gradient vanishes at the generating parameters") {
    const VolumeGrid grid{16, 16, 16, 1.0};
    const DetectorGrid det{32, 32, 1.0};
    const BlobProfile blob{BlobParams{}};
    GeometryParams g = plain_geometry(8);
    g.t = {Vec2{1.3, -0.6}};
    const BeadPhantom ph = make_bead_phantom(grid, 3, 1.5, 5);
    const ProjectionStack b = forward(ph.coeffs, g, det, blob);

    CalibConfig cfg;  // phi and shift free
    const std::vector<double> grad = param_gradient(ph.coeffs, g, b, blob, cfg);
    double bb = dot(b.data, b.data);
    CHECK(l2(grad) < 1e-6 * bb);

    bool failed = false;
    double cost_after = -1.0;
    const GeometryParams upd = update_params(ph.coeffs, g, b, blob, cfg, &cost_after, &failed);
    for (std::size_t i = 0; i < g.phi.size(); ++i)
        CHECK(std::abs(upd.phi[i] - g.phi[i]) <= 1e-8);
    CHECK(std::abs(upd.t[0].x - g.t[0].x) <= 1e-8);
    CHECK(std::abs(upd.t[0].y - g.t[0].y) <= 1e-8);
}

TEST_CASE("repeated parameter updates recover a pure detector shift") {
    const VolumeGrid grid{16, 16, 16, 1.0};
    const DetectorGrid det{32, 32, 1.0};
    const BlobProfile blob{BlobParams{}};
    const GeometryParams g_true = [&] {
        GeometryParams g = plain_geometry(8);
        g.t = {Vec2{3.0, 0.0}};  // px at unit spacing
        return g;
    }();
    const BeadPhantom ph = make_bead_phantom(grid, 3, 1.5, 5);
    const ProjectionStack b = forward(ph.coeffs, g_true, det, blob);

    CalibConfig cfg;
    cfg.fit_phi = false;
    cfg.fit_shift = true;

    GeometryParams g = plain_geometry(8);
    double prev = objective(ph.coeffs, g, b, blob);
    for (int k = 0; k < 40; ++k) {
        double cost_after = prev;
        g = update_params(ph.coeffs, g, b, blob, cfg, &cost_after);
        CHECK(cost_after <= prev * (1.0 + 1e-12));
        prev = cost_after;
        if (std::abs(g.t[0].x - 3.0) < 0.02) break;
    }
    CHECK(std::abs(g.t[0].x - 3.0) <= 0.05);
    CHECK(std::abs(g.t[0].y) <= 0.05);
}

TEST_CASE("calibrate is a fixed point on noiseless consistent data") {
    const VolumeGrid grid{16, 16, 16, 1.0};
    const DetectorGrid det{32, 32, 1.0};
    const BlobProfile blob{BlobParams{}};
    GeometryParams g = plain_geometry(8);
    g.t = {Vec2{0.8, -0.2}};
    const BeadPhantom ph = make_bead_phantom(grid, 4, 1.5, 23);
    const ProjectionStack b = forward(ph.coeffs, g, det, blob);

    CalibConfig cfg;
    cfg.outer_iters = 6;
    cfg.inner.max_iters = 40;
    const CalibrationReport rep = calibrate(b, g, grid, blob, cfg);
    CHECK(rep.converged);
    CHECK(rep.outer_iterations == 1);  // nothing to move on the first pass
    // The finite inner solve leaves a ~1e-9 residual, so the update may inch
    // the parameters by a few 1e-6; anything beyond the stopping tolerances
    // would mean the alternation walks away from a consistent optimum.
    for (std::size_t i = 0; i < g.phi.size(); ++i)
        CHECK(std::abs(rep.params.phi[i] - g.phi[i]) < 5e-5);
    CHECK(std::abs(rep.params.t[0].x - g.t[0].x) < 5e-5);
    CHECK(std::abs(rep.params.t[0].y - g.t[0].y) < 5e-5);
    CHECK(rep.final_cost() < 1e-8 * dot(b.data, b.data));
}

TEST_CASE("two outer iterations strictly reduce a miscalibrated objective") {
    const VolumeGrid grid{16, 16, 16, 1.0};
    const DetectorGrid det{32, 32, 1.0};
    const BlobProfile blob{BlobParams{}};
    const GeometryParams nominal = plain_geometry(12);

    ErrorModel em;
    em.angle_walk_sigma = 0.005;
    em.static_cor_offset = {1.5, 0.0};
    em.seed = 6;
    const GeometryParams g_true = perturb_geometry(nominal, em, det.spacing);
    const BeadPhantom ph = make_bead_phantom(grid, 4, 1.5, 29);
    const ProjectionStack b = forward(ph.coeffs, g_true, det, blob);

    CalibConfig cfg;
    cfg.outer_iters = 2;
    cfg.inner.max_iters = 8;
    const CalibrationReport rep = calibrate(b, nominal, grid, blob, cfg);
    REQUIRE(rep.cost_trace.size() >= 3);
    for (std::size_t i = 1; i < rep.cost_trace.size(); ++i)
        CHECK(rep.cost_trace[i] <= rep.cost_trace[i - 1] * (1.0 + 1e-12));
    CHECK(rep.final_cost() < 0.9 * rep.cost_trace.front());
    CHECK(rep.outer_iterations == 2);
    REQUIRE(rep.trajectory.size() == std::size_t(rep.outer_iterations) + 1);
}

TEST_CASE("pack and unpack round-trip every enabled layout") {
    const double px = 0.5;
    GeometryParams g = plain_geometry(5);
    g.psi1 = 0.02;
    g.psi2 = -0.04;
    g.t = {Vec2{0.75, -0.25}};

    auto roundtrip = [&](CalibConfig cfg, const GeometryParams& base) {
        const std::vector<double> x = pack_params(base, cfg, px);
        const GeometryParams back = unpack_params(x, base, cfg, px);
        CHECK(back.phi == base.phi);
        CHECK(back.psi1 == base.psi1);
        CHECK(back.psi2 == base.psi2);
        REQUIRE(back.t.size() == base.t.size());
        for (std::size_t i = 0; i < base.t.size(); ++i) {
            CHECK(back.t[i].x == doctest::Approx(base.t[i].x).epsilon(1e-15));
            CHECK(back.t[i].y == doctest::Approx(base.t[i].y).epsilon(1e-15));
        }
        return x.size();
    };

    CalibConfig cfg;  // phi + global shift
    CHECK(roundtrip(cfg, g) == 5 + 2);

    cfg.fit_psi1 = true;
    cfg.fit_psi2 = true;
    CHECK(roundtrip(cfg, g) == 5 + 1 + 1 + 2);

    cfg = CalibConfig{};
    cfg.fit_phi = false;
    cfg.fit_psi2 = true;
    cfg.fit_shift = false;
    CHECK(roundtrip(cfg, g) == 1);

    cfg = CalibConfig{};
    cfg.per_projection_shift = true;
    GeometryParams gp = g;
    gp.t.assign(5, Vec2{0.3, 0.1});
    gp.t[3] = {-0.2, 0.4};
    CHECK(roundtrip(cfg, gp) == 5 + 10);

    // Pixel conversion: packed shifts are in detector pixels.
    cfg = CalibConfig{};
    cfg.fit_phi = false;
    const std::vector<double> x = pack_params(g, cfg, px);
    REQUIRE(x.size() == 2);
    CHECK(x[0] == doctest::Approx(g.t[0].x / px).epsilon(1e-15));
    CHECK(x[1] == doctest::Approx(g.t[0].y / px).epsilon(1e-15));
}

TEST_CASE("a quarter-turn relabeling is an exact gauge of the objective") {
    const int n = 12;
    const VolumeGrid grid{n, n, n, 1.0};
    const DetectorGrid det{24, 24, 1.0};
    const BlobProfile blob{BlobParams{}};
    Rng rng(61);
    VolumeCoeffs c(grid);
    fill_normal(c.data, rng);
    ProjectionStack b(det, 5);
    fill_normal(b.data, rng);

    GeometryParams g;
    g.phi = {0.2, 0.9, 2.0, 3.3, 4.4};
    g.psi2 = -0.07;  // in-plane tilt commutes with the relabeling
    g.t = {Vec2{0.4, 0.2}};

    GeometryParams g_rot = g;
    for (double& phi : g_rot.phi) phi += kPi / 2.0;

    // Rotating every blob center by a quarter turn about z maps the grid to
    // itself: c'(ix, iy, iz) = c(iy, n-1-ix, iz).
    VolumeCoeffs c_rot(grid);
    for (int iz = 0; iz < n; ++iz)
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix)
                c_rot.at(ix, iy, iz) = c.at(iy, n - 1 - ix, iz);

    CHECK(rel_err(objective(c, g_rot, b, blob), objective(c_rot, g, b, blob)) < 1e-10);
}

TEST_CASE("downsample pools blocks and validates its factor") {
    DetectorGrid det{64, 32, 0.5};
    ProjectionStack b(det, 2);
    Rng rng(67);
    fill_normal(b.data, rng);

    const ProjectionStack same = downsample(b, 1);
    CHECK(same.data == b.data);
    CHECK(same.det.nxi == 64);

    const ProjectionStack small = downsample(b, 8);
    CHECK(small.det.nxi == 8);
    CHECK(small.det.neta == 4);
    CHECK(small.det.spacing == doctest::Approx(4.0));
    for (std::size_t p = 0; p < 2; ++p)
        for (int e = 0; e < 4; ++e)
            for (int j = 0; j < 8; ++j) {
                double want = 0.0;
                for (int de = 0; de < 8; ++de)
                    for (int dj = 0; dj < 8; ++dj) want += b.at(p, e * 8 + de, j * 8 + dj);
                want /= 64.0;
                CHECK(small.at(p, e, j) == doctest::Approx(want).epsilon(1e-14));
            }

    ProjectionStack flat(det, 1);
    for (double& v : flat.data) v = 3.25;
    const ProjectionStack pooled = downsample(flat, 4);
    for (double v : pooled.data) CHECK(v == doctest::Approx(3.25).epsilon(1e-15));

    CHECK_THROWS_AS(downsample(b, 0), ConfigError);
    CHECK_THROWS_AS(downsample(b, 3), ConfigError);  // 32 % 3 != 0
}

TEST_CASE("multiscale with factor one matches plain calibration") {
    const VolumeGrid grid{16, 16, 16, 1.0};
    const DetectorGrid det{32, 32, 1.0};
    const BlobParams bp;
    const GeometryParams nominal = plain_geometry(10);

    ErrorModel em;
    em.static_cor_offset = {1.0, 0.0};
    em.seed = 9;
    const GeometryParams g_true = perturb_geometry(nominal, em, det.spacing);
    const BeadPhantom ph = make_bead_phantom(grid, 3, 1.5, 31);
    const ProjectionStack b = forward(ph.coeffs, g_true, det, BlobProfile(bp));

    CalibConfig cfg;
    cfg.outer_iters = 3;
    cfg.inner.max_iters = 10;
    cfg.coarse_size = det.nxi;   // factor 1
    cfg.fine_outer_iters = 0;    // refinement reduces to a final solve

    const CalibrationReport plain = calibrate(b, nominal, grid, BlobProfile(bp), cfg);
    const MultiscaleResult ms = run_multiscale(b, nominal, grid, bp, cfg);

    CHECK(ms.params.phi == plain.params.phi);
    CHECK(ms.params.psi1 == plain.params.psi1);
    CHECK(ms.params.psi2 == plain.params.psi2);
    REQUIRE(ms.params.t.size() == plain.params.t.size());
    for (std::size_t i = 0; i < ms.params.t.size(); ++i) {
        CHECK(ms.params.t[i].x == plain.params.t[i].x);
        CHECK(ms.params.t[i].y == plain.params.t[i].y);
    }
}

TEST_CASE("configuration and divisibility are validated") {
    CalibConfig cfg;
    CHECK_NOTHROW(cfg.validate());

    cfg.fit_phi = false;
    cfg.fit_shift = false;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);  // nothing left to fit

    cfg = CalibConfig{};
    cfg.armijo = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = CalibConfig{};
    cfg.coarse_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    const DetectorGrid det{32, 32, 1.0};
    ProjectionStack b(det, 4);
    const VolumeGrid grid{8, 8, 8, 1.0};
    cfg = CalibConfig{};
    cfg.coarse_size = 20;  // does not divide 32
    CHECK_THROWS_AS(run_multiscale(b, plain_geometry(4), grid, BlobParams{}, cfg),
                    ConfigError);
}
