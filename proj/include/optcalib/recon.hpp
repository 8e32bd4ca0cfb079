#pragma once

#include "projector.hpp"

#include <vector>

namespace optcalib {

struct SolverConfig {
    int max_iters = 50;
    double tolerance = 1e-6;  // stop when ||H^T(Hc-b)|| / ||H^T b|| drops below this
    bool nonneg = false;      // projected-gradient variant instead of plain CG
    int verbosity = 0;

    void validate() const;
};

struct SolveResult {
    VolumeCoeffs coeffs;
    std::vector<double> cost_trace;  // 0.5*||Hc-b||^2; entry 0 is the initial guess
    int iterations = 0;
    bool converged = false;

    double final_cost() const { return cost_trace.empty() ? 0.0 : cost_trace.back(); }
};

// 0.5*||forward(c) - b||^2
double data_cost(const VolumeCoeffs& c, const GeometryParams& g, const ProjectionStack& b,
                 const BlobProfile& blob);

// Least-squares volume solve for fixed geometry: CG on the normal equations,
// warm-startable through `init`. Non-finite cost raises NumericalError.
SolveResult solve_volume(const ProjectionStack& b, const GeometryParams& g,
                         const VolumeGrid& grid, const BlobProfile& blob,
                         const SolverConfig& cfg, const VolumeCoeffs* init = nullptr);

}  // namespace optcalib
