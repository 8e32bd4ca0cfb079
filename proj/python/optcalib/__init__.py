"""Self-calibrating straight-ray tomography.

Thin wrapper over the compiled core: blob-basis projectors, a mechanical-error
simulator, least-squares reconstruction, alternating geometry calibration,
filtered backprojection baselines and the artifact catalog. Volumes are
float64 arrays of shape (nz, ny, nx); projection stacks are (count, neta, nxi).
"""

from ._core import (
    BeadPhantom,
    BlobParams,
    CalibConfig,
    CatalogConfig,
    ConfigError,
    DetectorGrid,
    ErrorModel,
    GeometryParams,
    IoError,
    NumericalError,
    SolverConfig,
    VolumeGrid,
    adjoint,
    calibrate,
    estimate_cor_shift,
    fbp,
    forward,
    make_bead_phantom,
    make_helix_phantom,
    perturb_geometry,
    render_volume,
    run_catalog,
    run_multiscale,
    simulate_measurements,
    solve_volume,
    uniform_angles,
)

__version__ = "0.1.0"

__all__ = [
    "BeadPhantom",
    "BlobParams",
    "CalibConfig",
    "CatalogConfig",
    "ConfigError",
    "DetectorGrid",
    "ErrorModel",
    "GeometryParams",
    "IoError",
    "NumericalError",
    "SolverConfig",
    "VolumeGrid",
    "adjoint",
    "calibrate",
    "estimate_cor_shift",
    "fbp",
    "forward",
    "make_bead_phantom",
    "make_helix_phantom",
    "perturb_geometry",
    "render_volume",
    "run_catalog",
    "run_multiscale",
    "simulate_measurements",
    "solve_volume",
    "uniform_angles",
]
