#pragma once

#include "recon.hpp"

#include <vector>

namespace optcalib {

// Which geometry parameters the outer loop may move, plus optimizer knobs.
// Angles are handled in radians, shifts in detector-pixel units throughout.
struct CalibConfig {
    bool fit_phi = true;
    bool fit_psi1 = false;  // degenerate with psi2 for an unconstrained volume
    bool fit_psi2 = false;
    bool fit_shift = true;
    bool per_projection_shift = false;
    bool init_cor = false;  // seed t.x with the opposite-projection COR estimate

    int outer_iters = 50;
    double angle_change_tol = 1e-4;  // rad; outer loop stops when all parameter
    double shift_change_tol = 1e-2;  // px;  changes drop below these

    int param_steps = 3;           // max gradient steps per outer iteration
    double update_stall_tol = 1e-8;  // relative objective decrease that counts as stalled
    double fd_step_angle = 1e-4;   // rad
    double fd_step_shift = 1e-2;   // px
    double initial_move = 0.05;    // first line-search trial moves the largest
                                   // parameter by this much (rad or px)
    double armijo = 1e-4;
    int max_backtracks = 30;

    SolverConfig inner;          // per-outer-iteration volume solves
    int first_solve_iters = -1;  // cold-start solve budget; < 0 means 2x inner

    int coarse_size = 64;      // multiscale coarse detector size (square)
    int fine_outer_iters = 8;  // multiscale fine-stage refinement budget (0 = solve only)

    void validate() const;
};

struct CalibrationReport {
    GeometryParams params;
    VolumeCoeffs volume;  // last solved volume at the calibration scale
    std::vector<double> cost_trace;  // objective after every half-step (solve/update)
    std::vector<GeometryParams> trajectory;  // parameters after each outer iteration
    int outer_iterations = 0;
    bool converged = false;
    bool line_search_failed = false;
    double seconds_solve = 0.0;
    double seconds_update = 0.0;

    double final_cost() const { return cost_trace.empty() ? 0.0 : cost_trace.back(); }
};

// The data-fit objective 0.5*||H(g)c - b||^2 that both half-steps minimize.
double objective(const VolumeCoeffs& c, const GeometryParams& g, const ProjectionStack& b,
                 const BlobProfile& blob);

// Packed free-parameter vector. Layout, in order of the enabled blocks:
// [phi_0..phi_{P-1}] [psi1] [psi2] [tx ty] (global shift) or
// [tx_0 ty_0 .. tx_{P-1} ty_{P-1}] (per-projection), shifts in px.
std::vector<double> pack_params(const GeometryParams& g, const CalibConfig& cfg,
                                double pixel_size);
GeometryParams unpack_params(const std::vector<double>& x, const GeometryParams& base,
                             const CalibConfig& cfg, double pixel_size);

// Gradient of the objective over the packed vector, as <Hc - b, d(Hc)/dp> with
// the model differenced centrally per parameter (1e-4 rad / 1e-2 px steps by
// default). Per-projection parameters touch only their own projection's rows;
// the residual form keeps the gradient exactly zero at a zero-residual point.
std::vector<double> param_gradient(const VolumeCoeffs& c, const GeometryParams& g,
                                   const ProjectionStack& b, const BlobProfile& blob,
                                   const CalibConfig& cfg);

// Step 4: gradient descent with backtracking on (theta, t) for fixed c, until
// the decrease stalls. Never increases the objective; if no step can be taken
// the input parameters come back unchanged with *line_search_failed set.
GeometryParams update_params(const VolumeCoeffs& c, const GeometryParams& g,
                             const ProjectionStack& b, const BlobProfile& blob,
                             const CalibConfig& cfg, double* cost_after = nullptr,
                             bool* line_search_failed = nullptr);

// Alternating minimization: solve volume (Step 3), update parameters (Step 4),
// until parameter changes drop below the configured thresholds.
CalibrationReport calibrate(const ProjectionStack& b, const GeometryParams& g_init,
                            const VolumeGrid& grid, const BlobProfile& blob,
                            const CalibConfig& cfg);

// Block-mean pooling by an integer factor that divides both detector dims.
ProjectionStack downsample(const ProjectionStack& b, int factor);

struct MultiscaleResult {
    GeometryParams params;     // calibrated geometry (shifts in world units)
    VolumeCoeffs fine_volume;  // final fine-scale reconstruction
    CalibrationReport coarse;  // coarse-scale calibration report
    CalibrationReport fine;    // fine-scale refinement (solve-only if budget is 0)
};

// Downsample to cfg.coarse_size, calibrate there, then refine at the native
// scale for cfg.fine_outer_iters outer iterations (the coarse optimum carries
// a small resolution bias on the tilts that the fine stage removes). Shifts
// live in world units so they carry across scales unchanged.
MultiscaleResult run_multiscale(const ProjectionStack& b, const GeometryParams& g_init,
                                const VolumeGrid& grid, const BlobParams& blob,
                                const CalibConfig& cfg);

}  // namespace optcalib
