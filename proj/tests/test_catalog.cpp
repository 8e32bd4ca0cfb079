#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "optcalib/artifact_catalog.hpp"

using namespace optcalib;

namespace {

CatalogConfig small_config() {
    CatalogConfig cfg;
    cfg.projections = 16;
    cfg.noise = 0.0;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("kind names round-trip and reject unknowns") {
    for (ArtifactKind k : {ArtifactKind::cor_offset, ArtifactKind::angle_jitter,
                           ArtifactKind::axis_tilt_psi1, ArtifactKind::detector_tilt_psi2,
                           ArtifactKind::combined})
        CHECK(artifact_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(artifact_kind_from_string("wobble"), ConfigError);
    CHECK_THROWS_AS(artifact_kind_from_string(""), ConfigError);
}

TEST_CASE("default suite layout") {
    const auto kinds = default_kinds();
    REQUIRE(kinds.size() == 4);
    for (ArtifactKind k : kinds) CHECK(k != ArtifactKind::combined);
    for (ArtifactKind k : kinds) CHECK(default_magnitudes(k).size() == 3);
    CHECK(default_magnitudes(ArtifactKind::combined).size() == 3);
    const auto cor = default_magnitudes(ArtifactKind::cor_offset);
    CHECK(cor == std::vector<double>{0.5, 1.5, 3.0});
}

TEST_CASE("magnitude ranges are guarded") {
    const CatalogConfig cfg = small_config();
    CHECK_THROWS_AS(generate_case(ArtifactKind::cor_offset, 17.0, cfg), ConfigError);
    CHECK_THROWS_AS(generate_case(ArtifactKind::angle_jitter, 0.25, cfg), ConfigError);
    CHECK_THROWS_AS(generate_case(ArtifactKind::axis_tilt_psi1, 0.2, cfg), ConfigError);
    CHECK_THROWS_AS(generate_case(ArtifactKind::detector_tilt_psi2, 0.2, cfg), ConfigError);
    CHECK_THROWS_AS(generate_case(ArtifactKind::combined, 5.0, cfg), ConfigError);
    CHECK_THROWS_AS(generate_case(ArtifactKind::cor_offset, -1.0, cfg), ConfigError);
    CHECK_THROWS_AS(generate_case(ArtifactKind::cor_offset, std::nan(""), cfg), ConfigError);

    CatalogConfig bad = cfg;
    bad.projections = 1;
    CHECK_THROWS_AS(generate_case(ArtifactKind::cor_offset, 1.0, bad), ConfigError);
    bad = cfg;
    bad.n_beads = 0;
    CHECK_THROWS_AS(generate_case(ArtifactKind::cor_offset, 1.0, bad), ConfigError);
    bad = cfg;
    bad.noise = -0.1;
    CHECK_THROWS_AS(generate_case(ArtifactKind::cor_offset, 1.0, bad), ConfigError);
}

TEST_CASE("magnitude zero is the same clean dataset for every kind") {
    const CatalogConfig cfg = small_config();
    const ArtifactCase base = generate_case(ArtifactKind::cor_offset, 0.0, cfg);
    for (ArtifactKind k : {ArtifactKind::angle_jitter, ArtifactKind::axis_tilt_psi1,
                           ArtifactKind::detector_tilt_psi2, ArtifactKind::combined}) {
        const ArtifactCase c = generate_case(k, 0.0, cfg);
        CHECK(c.measurements.data == base.measurements.data);
    }
    CHECK(base.true_geometry.phi == base.assumed_geometry.phi);
}

TEST_CASE("magnitude zero scores as artifact-free on the default suite") {
    // The metric expectations need the default view count; at 16 views FBP
    // streaks dominate the centroids.
    const ArtifactCase c = generate_case(ArtifactKind::cor_offset, 0.0, CatalogConfig{});
    const ArtifactMetrics m = measure(c, naive_recon(c));
    // The drift reference is the same pipeline on the same data, so the fit
    // is exactly zero; dispersion only carries the FBP's own bead bias.
    CHECK(m.height_slope <= 1e-12);
    CHECK(m.mean_doubling == 0.0);
    CHECK(m.mean_dispersion < 0.2);
}

TEST_CASE("a COR offset perturbs only the detector shift") {
    const CatalogConfig cfg = small_config();
    const ArtifactCase c = generate_case(ArtifactKind::cor_offset, 2.5, cfg);
    CHECK(c.true_geometry.phi == c.assumed_geometry.phi);
    CHECK(c.true_geometry.psi1 == 0.0);
    CHECK(c.true_geometry.psi2 == 0.0);
    REQUIRE(c.true_geometry.t.size() == 1);
    CHECK(c.true_geometry.t[0].x == 2.5 * cfg.det.spacing);
    CHECK(c.true_geometry.t[0].y == 0.0);
    CHECK(c.assumed_geometry.t[0].x == 0.0);

    const ArtifactCase tilt = generate_case(ArtifactKind::axis_tilt_psi1, 0.05, cfg);
    CHECK(tilt.true_geometry.psi1 == 0.05);
    CHECK(tilt.assumed_geometry.psi1 == 0.0);
    CHECK(tilt.true_geometry.t[0].x == 0.0);
}

TEST_CASE("cases and CSV output are reproducible") {
    const CatalogConfig cfg = small_config();
    const ArtifactCase a = generate_case(ArtifactKind::angle_jitter, 0.01, cfg);
    const ArtifactCase b = generate_case(ArtifactKind::angle_jitter, 0.01, cfg);
    CHECK(a.measurements.data == b.measurements.data);
    CHECK(a.true_geometry.phi == b.true_geometry.phi);

    const std::vector<ArtifactKind> kinds{ArtifactKind::cor_offset};
    const std::string csv1 = catalog_csv(run_catalog(cfg, kinds));
    const std::string csv2 = catalog_csv(run_catalog(cfg, kinds));
    CHECK(csv1 == csv2);
}

TEST_CASE("the CSV schema is stable") {
    const std::string header =
        "kind,magnitude,rmse,dispersion_px,doubling,height_slope,fov_slope\n";
    CHECK(catalog_csv({}) == header);

    CatalogRow row;
    row.kind = ArtifactKind::detector_tilt_psi2;
    row.magnitude = 0.5;
    row.metrics.rmse = 0.25;
    const std::string csv = catalog_csv({row});
    CHECK(csv.substr(0, header.size()) == header);
    CHECK(csv.find("detector_tilt_psi2,0.5,0.25,") != std::string::npos);

    const std::string text = catalog_text({row});
    CHECK(text.find("detector_tilt_psi2") != std::string::npos);
}

TEST_CASE("error severity grows with magnitude") {
    const CatalogConfig cfg;  // default suite
    const auto rows = run_catalog(cfg, {ArtifactKind::cor_offset});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].metrics.rmse < rows[1].metrics.rmse);
    CHECK(rows[1].metrics.rmse < rows[2].metrics.rmse);
    CHECK(rows[0].metrics.mean_dispersion <= rows[1].metrics.mean_dispersion);
    CHECK(rows[1].metrics.mean_dispersion <= rows[2].metrics.mean_dispersion);

    const ArtifactCase mild = generate_case(ArtifactKind::axis_tilt_psi1, 0.0087, cfg);
    const ArtifactCase harsh = generate_case(ArtifactKind::axis_tilt_psi1, 0.0785, cfg);
    const ArtifactMetrics mm = measure(mild, naive_recon(mild));
    const ArtifactMetrics mh = measure(harsh, naive_recon(harsh));
    CHECK(mm.rmse < mh.rmse);
    CHECK(mm.height_slope < mh.height_slope);
}

TEST_CASE("an axis tilt shows up in the height slope, a COR offset does not") {
    // Compare a clearly visible tilt against the largest default COR offset:
    // the COR case has ~4x the tilt case's rmse yet a ~3x smaller height
    // slope, which is exactly the discriminating signature.
    const CatalogConfig cfg;
    const ArtifactCase tilt = generate_case(ArtifactKind::axis_tilt_psi1, 0.05, cfg);
    const ArtifactCase cor = generate_case(ArtifactKind::cor_offset, 3.0, cfg);
    const ArtifactMetrics mt = measure(tilt, naive_recon(tilt));
    const ArtifactMetrics mc = measure(cor, naive_recon(cor));
    CHECK(mt.rmse < mc.rmse);
    CHECK(mt.height_slope > mc.height_slope + 0.01);
}

TEST_CASE("measure validates its inputs") {
    const CatalogConfig cfg = small_config();
    const ArtifactCase c = generate_case(ArtifactKind::cor_offset, 1.0, cfg);

    Volume wrong(VolumeGrid{16, 16, 16, 1.0});
    CHECK_THROWS_AS(measure(c, wrong), ConfigError);

    ArtifactCase hollow = c;
    hollow.phantom.centers.clear();
    CHECK_THROWS_AS(measure(hollow, naive_recon(c)), ConfigError);
}
