#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "optcalib/geometry.hpp"
#include "optcalib/kb_basis.hpp"

namespace optcalib {

// Blob coefficients (or any scalar field) on a VolumeGrid.
// Storage order [iz][iy][ix], ix fastest.
struct Volume {
    VolumeGrid grid;
    std::vector<double> data;

    Volume() = default;
    explicit Volume(const VolumeGrid& g) : grid(g), data(g.size(), 0.0) {}

    double& at(int ix, int iy, int iz) { return data[grid.index(ix, iy, iz)]; }
    double at(int ix, int iy, int iz) const { return data[grid.index(ix, iy, iz)]; }
};

using VolumeCoeffs = Volume;

// Measurement tensor: P projections of neta x nxi pixels,
// storage order [p][eta][xi], xi fastest.
struct ProjectionStack {
    DetectorGrid det;
    std::size_t count = 0;
    std::vector<double> data;

    ProjectionStack() = default;
    ProjectionStack(const DetectorGrid& d, std::size_t p)
        : det(d), count(p), data(d.pixels() * p, 0.0) {}

    std::span<double> projection(std::size_t i) {
        return {data.data() + i * det.pixels(), det.pixels()};
    }
    std::span<const double> projection(std::size_t i) const {
        return {data.data() + i * det.pixels(), det.pixels()};
    }
    double& at(std::size_t p, int e, int j) {
        return data[(p * det.neta + e) * det.nxi + j];
    }
    double at(std::size_t p, int e, int j) const {
        return data[(p * det.neta + e) * det.nxi + j];
    }
};

// b = H(theta, t) c. Splats each coefficient's footprint onto the detector;
// footprints falling outside the detector are clipped.
ProjectionStack forward(const VolumeCoeffs& c, const GeometryParams& g,
                        const DetectorGrid& det, const BlobProfile& blob);

// Single-projection forward into a caller-provided row buffer (length
// det.pixels(), zeroed here). Used where only one pose changed.
void forward_one(const VolumeCoeffs& c, const Pose& pose, const DetectorGrid& det,
                 const BlobProfile& blob, std::span<double> out);

// Exact matrix adjoint of forward: gathers detector values with the same
// footprint weights.
VolumeCoeffs adjoint(const ProjectionStack& b, const GeometryParams& g,
                     const VolumeGrid& vol, const BlobProfile& blob);

// Continuous field represented by the coefficients, sampled at voxel centers:
// f(x) = sum_k c_k * blob(|x - x_k|). Used for image-domain comparisons.
Volume render_volume(const VolumeCoeffs& c, const BlobParams& blob);

}  // namespace optcalib
