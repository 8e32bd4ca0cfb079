#pragma once

#include "projector.hpp"

#include <vector>

namespace optcalib {

// Projections of a single z-slice: matrix (P, n_s), s fastest.
struct Sinogram2D {
    int n_s = 0;
    double spacing = 1.0;
    std::vector<double> angles;  // radians, strictly increasing in [0, 2*pi)
    std::vector<double> data;    // angles.size() * n_s

    Sinogram2D() = default;
    Sinogram2D(int n, double sp, std::vector<double> ang)
        : n_s(n), spacing(sp), angles(std::move(ang)), data(angles.size() * n, 0.0) {}

    double& at(int p, int j) { return data[static_cast<std::size_t>(p) * n_s + j]; }
    double at(int p, int j) const { return data[static_cast<std::size_t>(p) * n_s + j]; }
    void validate() const;
};

// Ram-Lak filtered backprojection onto an nx*ny image (x fastest, pixel size
// h, centered like VolumeGrid). shift_x compensates a known detector offset
// (world units): each projection is sampled at s + shift_x.
std::vector<double> fbp_slice(const Sinogram2D& s, int nx, int ny, double h,
                              double shift_x = 0.0);

// Center-of-rotation offset along xi (world units), estimated by correlating
// each projection with the mirrored projection at phi + pi and averaging the
// correlation over all opposing pairs before peak-picking.
double estimate_cor_shift(const Sinogram2D& s);
double estimate_cor_shift(const ProjectionStack& b, const std::vector<double>& angles);

// Slice-by-slice FBP of a stack under nominal geometry (angles only; tilts are
// deliberately not modeled). With shift_correct the estimated global COR shift
// is removed first; the estimate used is returned through shift_out if given.
Volume fbp_stack(const ProjectionStack& b, const std::vector<double>& angles,
                 const VolumeGrid& grid, bool shift_correct = false,
                 double* shift_out = nullptr);

}  // namespace optcalib
