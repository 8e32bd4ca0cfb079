#pragma once

#include <cstdint>
#include <vector>

#include "optcalib/geometry.hpp"
#include "optcalib/projector.hpp"

namespace optcalib {

// Mechanical error model of the simulated instrument. Angle errors accumulate
// as a random walk across the projection series; the center-of-rotation error
// is a static detector shift, optionally with an additional per-projection
// random walk. noise_sigma is expressed as a fraction of the peak measurement.
struct ErrorModel {
    double angle_walk_sigma = 0.0;   // radians per step
    double shift_walk_sigma = 0.0;   // pixels per step
    Vec2 static_cor_offset{};        // pixels
    double psi1_true = 0.0;          // radians
    double psi2_true = 0.0;          // radians
    double noise_sigma = 0.0;        // fraction of peak signal
    std::uint64_t seed = 0;

    void validate() const;
};

struct BeadPhantom {
    VolumeCoeffs coeffs;
    std::vector<Vec3> centers;  // world units
    double bead_radius = 0.0;   // world units
};

// n_beads disjoint spheres with centers inside the cylinder of radius
// 0.45*min(nx,ny)*h, rasterized by 4^3-supersampled voxel coverage.
BeadPhantom make_bead_phantom(const VolumeGrid& vol, int n_beads, double bead_radius,
                              std::uint64_t seed);

// Helical tube around the volume center. The centerline runs along a direction
// tilted by axis_tilt from z in the (x,z) plane, matching a sample mounted on
// a tilted rotation axis; turns = 0 gives a straight tube. The tube has a
// constant circular cross-section in the planes normal to the axis direction's
// z parametrization (horizontal sections for axis_tilt = 0).
struct HelixSpec {
    double turns = 1.5;
    double tube_radius = 2.5;   // world units
    double helix_radius = -1.0; // world units; < 0 picks 0.3 * half-extent
    double axis_tilt = 0.0;     // radians, toward +x
};

VolumeCoeffs make_helix_phantom(const VolumeGrid& vol, const HelixSpec& spec,
                                std::uint64_t seed);

// True (perturbed) geometry for a nominal acquisition: cumulative random-walk
// angle errors, static COR offset plus optional shift walk, and the true tilts.
GeometryParams perturb_geometry(const GeometryParams& nominal, const ErrorModel& err,
                                double detector_spacing);

// forward(c, g_true) plus i.i.d. Gaussian noise of absolute standard deviation
// noise_sigma_abs (callers convert a fraction-of-peak to absolute units).
ProjectionStack simulate_measurements(const VolumeCoeffs& c, const GeometryParams& g_true,
                                      const DetectorGrid& det, const BlobProfile& blob,
                                      double noise_sigma_abs, std::uint64_t seed);

}  // namespace optcalib
