#pragma once

#include "fbp.hpp"
#include "simulator.hpp"

#include <string>
#include <vector>

namespace optcalib {

// The mechanical error kinds the catalog exercises, one dataset each.
enum class ArtifactKind { cor_offset, angle_jitter, axis_tilt_psi1, detector_tilt_psi2, combined };

const char* to_string(ArtifactKind k);
ArtifactKind artifact_kind_from_string(const std::string& s);

struct CatalogConfig {
    VolumeGrid grid{32, 32, 32, 1.0};
    DetectorGrid det{64, 64, 1.0};
    int projections = 60;
    int n_beads = 12;
    double bead_radius = 2.0;  // world units
    BlobParams blob{};
    double noise = 0.0;  // fraction of the peak measurement
    std::uint64_t seed = 7;

    void validate() const;
};

// Deterministic dataset for one (kind, magnitude): bead phantom, true vs
// assumed geometry, and simulated measurements.
struct ArtifactCase {
    ArtifactKind kind{};
    double magnitude = 0.0;
    CatalogConfig cfg;
    BeadPhantom phantom;
    GeometryParams true_geometry;
    GeometryParams assumed_geometry;
    ProjectionStack measurements;
};

// Scalar artifact signatures. Dispersion is the per-bead displacement of the
// reconstructed bead's centroid from the ground-truth rendering's centroid,
// in voxel units, so a perfect reconstruction scores 0. Doubling counts extra
// half-max peaks per bead window. The height slope is the norm of the fitted
// drift of per-slice centroid displacement against signed z (mass-weighted,
// voxels/voxel): an axis tilt makes slice centroids trace a tilted line, so
// it scores ~|psi1| and up, while COR rings stay centered on each bead and
// score ~0. The FOV slope regresses per-bead dispersion against distance
// from the rotation axis; angle errors grow with that radius.
struct ArtifactMetrics {
    double rmse = 0.0;
    double mean_dispersion = 0.0;
    double mean_doubling = 0.0;
    double height_slope = 0.0;
    double fov_slope = 0.0;
};

// Magnitude units: px for cor_offset, rad/step for angle_jitter, rad for the
// tilt kinds, dimensionless bundle scale for combined.
ArtifactCase generate_case(ArtifactKind kind, double magnitude, const CatalogConfig& cfg);

// Uncorrected slice-by-slice FBP with the assumed angles: the catalog's
// deliberately naive reconstruction.
Volume naive_recon(const ArtifactCase& c);

ArtifactMetrics measure(const ArtifactCase& c, const Volume& recon);

struct CatalogRow {
    ArtifactKind kind{};
    double magnitude = 0.0;
    ArtifactMetrics metrics;
};

std::vector<double> default_magnitudes(ArtifactKind kind);
std::vector<ArtifactKind> default_kinds();  // the four single-error kinds

std::vector<CatalogRow> run_catalog(const CatalogConfig& cfg,
                                    const std::vector<ArtifactKind>& kinds);

// CSV schema: kind,magnitude,rmse,dispersion_px,doubling,height_slope,fov_slope
std::string catalog_csv(const std::vector<CatalogRow>& rows);
std::string catalog_text(const std::vector<CatalogRow>& rows);

}  // namespace optcalib
