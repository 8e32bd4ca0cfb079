#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "optcalib/recon.hpp"
#include "optcalib/simulator.hpp"
#include "support/oracles.hpp"

using namespace optcalib;
using namespace testsupport;

namespace {

GeometryParams plain_geometry(std::size_t count) {
    GeometryParams g;
    g.phi = uniform_angles(count);
    return g;
}

}  // namespace

TEST_CASE("zero data yields the zero volume at zero cost") {
    const VolumeGrid grid{12, 12, 12, 1.0};
    const DetectorGrid det{24, 24, 1.0};
    const ProjectionStack b(det, 6);
    const SolveResult r =
        solve_volume(b, plain_geometry(6), grid, BlobProfile(BlobParams{}), SolverConfig{});
    CHECK(r.converged);
    CHECK(r.final_cost() == 0.0);
    for (double v : r.coeffs.data) CHECK(v == 0.0);
}

TEST_CASE("data_cost matches its closed forms") {
    const VolumeGrid grid{12, 12, 12, 1.0};
    const DetectorGrid det{24, 24, 1.0};
    const BlobProfile blob{BlobParams{}};
    const GeometryParams g = plain_geometry(6);
    const BeadPhantom ph = make_bead_phantom(grid, 2, 1.5, 3);
    const ProjectionStack b = forward(ph.coeffs, g, det, blob);

    CHECK(data_cost(ph.coeffs, g, b, blob) == 0.0);
    const VolumeCoeffs zero(grid);
    CHECK(data_cost(zero, g, b, blob) ==
          doctest::Approx(0.5 * dot(b.data, b.data)).epsilon(1e-14));
}

TEST_CASE("the cost trace never increases") {
    const VolumeGrid grid{16, 16, 16, 1.0};
    const DetectorGrid det{32, 32, 1.0};
    const BlobProfile blob{BlobParams{}};
    const GeometryParams g = plain_geometry(12);
    const BeadPhantom ph = make_bead_phantom(grid, 4, 1.5, 11);
    ProjectionStack b = simulate_measurements(ph.coeffs, g, det, blob, 0.02, 5);

    SolverConfig cfg;
    cfg.max_iters = 25;
    const SolveResult r = solve_volume(b, g, grid, blob, cfg);
    REQUIRE(r.cost_trace.size() >= 2);
    for (std::size_t i = 1; i < r.cost_trace.size(); ++i)
        CHECK(r.cost_trace[i] <= r.cost_trace[i - 1]);
    CHECK(r.final_cost() < r.cost_trace.front());
}

TEST_CASE("noiseless data inverts back to the generating volume") {
    const VolumeGrid grid{32, 32, 32, 1.0};
    const DetectorGrid det{64, 64, 1.0};
    const BlobProfile blob{BlobParams{}};
    const GeometryParams g = plain_geometry(64);  // at least 2 * nx views
    const BeadPhantom ph = make_bead_phantom(grid, 12, 2.0, 7);
    const ProjectionStack b = forward(ph.coeffs, g, det, blob);

    SolverConfig cfg;
    cfg.max_iters = 100;
    cfg.tolerance = 1e-8;
    const SolveResult r = solve_volume(b, g, grid, blob, cfg);

    // The overlapping blob basis leaves the high-frequency coefficient modes
    // nearly unobserved, so raw coefficients are not identifiable. What must
    // come back is the data fit and the rendered field.
    ProjectionStack hb = forward(r.coeffs, g, det, blob);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < hb.data.size(); ++i) {
        const double d = hb.data[i] - b.data[i];
        num += d * d;
        den += b.data[i] * b.data[i];
    }
    CHECK(std::sqrt(num / den) < 2e-3);

    const Volume got = render_volume(r.coeffs, BlobParams{});
    const Volume want = render_volume(ph.coeffs, BlobParams{});
    num = den = 0.0;
    for (std::size_t i = 0; i < got.data.size(); ++i) {
        const double d = got.data[i] - want.data[i];
        num += d * d;
        den += want.data[i] * want.data[i];
    }
    CHECK(std::sqrt(num / den) < 0.08);
}

TEST_CASE("warm starting at the truth is a fixed point") {
    const VolumeGrid grid{16, 16, 16, 1.0};
    const DetectorGrid det{32, 32, 1.0};
    const BlobProfile blob{BlobParams{}};
    const GeometryParams g = plain_geometry(10);
    const BeadPhantom ph = make_bead_phantom(grid, 3, 1.5, 13);
    const ProjectionStack b = forward(ph.coeffs, g, det, blob);

    const SolveResult r = solve_volume(b, g, grid, blob, SolverConfig{}, &ph.coeffs);
    CHECK(r.cost_trace.front() < 1e-10 * dot(b.data, b.data));
    CHECK(r.converged);
    CHECK(r.iterations == 0);
    CHECK(r.coeffs.data == ph.coeffs.data);
}

TEST_CASE("the converged iterate satisfies the normal-equation stopping rule") {
    const VolumeGrid grid{16, 16, 16, 1.0};
    const DetectorGrid det{32, 32, 1.0};
    const BlobProfile blob{BlobParams{}};
    const GeometryParams g = plain_geometry(32);
    const BeadPhantom ph = make_bead_phantom(grid, 4, 1.5, 17);
    const ProjectionStack b = forward(ph.coeffs, g, det, blob);

    SolverConfig cfg;
    cfg.max_iters = 300;
    cfg.tolerance = 1e-4;  // the normal residual plateaus near 1e-5 here
    const SolveResult r = solve_volume(b, g, grid, blob, cfg);
    REQUIRE(r.converged);

    ProjectionStack resid = forward(r.coeffs, g, det, blob);
    for (std::size_t i = 0; i < resid.data.size(); ++i)
        resid.data[i] -= b.data[i];
    const Volume normal = adjoint(resid, g, grid, blob);
    const Volume htb = adjoint(b, g, grid, blob);
    CHECK(l2(normal.data) <= cfg.tolerance * l2(htb.data) * 1.0001);
}

TEST_CASE("non-finite measurements raise a numerical error") {
    const VolumeGrid grid{8, 8, 8, 1.0};
    const DetectorGrid det{16, 16, 1.0};
    ProjectionStack b(det, 4);
    b.data[10] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(
        solve_volume(b, plain_geometry(4), grid, BlobProfile(BlobParams{}), SolverConfig{}),
        NumericalError);
}

TEST_CASE("the non-negative solver respects the constraint and decreases cost") {
    const VolumeGrid grid{12, 12, 12, 1.0};
    const DetectorGrid det{24, 24, 1.0};
    const BlobProfile blob{BlobParams{}};
    const GeometryParams g = plain_geometry(10);
    const BeadPhantom ph = make_bead_phantom(grid, 2, 1.5, 19);
    const ProjectionStack b = forward(ph.coeffs, g, det, blob);

    SolverConfig cfg;
    cfg.nonneg = true;
    cfg.max_iters = 60;
    const SolveResult r = solve_volume(b, g, grid, blob, cfg);
    for (double v : r.coeffs.data) CHECK(v >= 0.0);
    for (std::size_t i = 1; i < r.cost_trace.size(); ++i)
        CHECK(r.cost_trace[i] <= r.cost_trace[i - 1]);
    CHECK(r.final_cost() < 0.5 * r.cost_trace.front());
}

TEST_CASE("solver configuration is validated") {
    SolverConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.max_iters = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SolverConfig{};
    cfg.tolerance = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    const VolumeGrid grid{8, 8, 8, 1.0};
    const DetectorGrid det{16, 16, 1.0};
    const ProjectionStack b(det, 4);
    VolumeCoeffs wrong{VolumeGrid{4, 4, 4, 1.0}};
    CHECK_THROWS_AS(solve_volume(b, plain_geometry(4), grid, BlobProfile(BlobParams{}),
                                 SolverConfig{}, &wrong),
                    ConfigError);
}
