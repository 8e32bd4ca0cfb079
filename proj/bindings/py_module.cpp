#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "optcalib/artifact_catalog.hpp"
#include "optcalib/calibration.hpp"
#include "optcalib/errors.hpp"
#include "optcalib/fbp.hpp"
#include "optcalib/geometry.hpp"
#include "optcalib/kb_basis.hpp"
#include "optcalib/projector.hpp"
#include "optcalib/recon.hpp"
#include "optcalib/simulator.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace optcalib;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_array(const Volume& v) {
    py::array_t<double> a({static_cast<py::ssize_t>(v.grid.nz),
                           static_cast<py::ssize_t>(v.grid.ny),
                           static_cast<py::ssize_t>(v.grid.nx)});
    std::copy(v.data.begin(), v.data.end(), a.mutable_data());
    return a;
}

Volume to_volume(const DArray& a, const VolumeGrid& grid) {
    if (a.ndim() != 3 || a.shape(0) != grid.nz || a.shape(1) != grid.ny ||
        a.shape(2) != grid.nx)
        throw ConfigError("volume array must have shape (nz, ny, nx) matching the grid");
    Volume v(grid);
    std::copy(a.data(), a.data() + a.size(), v.data.begin());
    return v;
}

py::array_t<double> to_array(const ProjectionStack& b) {
    py::array_t<double> a({static_cast<py::ssize_t>(b.count),
                           static_cast<py::ssize_t>(b.det.neta),
                           static_cast<py::ssize_t>(b.det.nxi)});
    std::copy(b.data.begin(), b.data.end(), a.mutable_data());
    return a;
}

ProjectionStack to_stack(const DArray& a, const DetectorGrid& det) {
    if (a.ndim() != 3 || a.shape(1) != det.neta || a.shape(2) != det.nxi)
        throw ConfigError("stack array must have shape (count, neta, nxi) matching the detector");
    ProjectionStack b(det, static_cast<int>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), b.data.begin());
    return b;
}

py::array_t<double> vec_array(const std::vector<double>& v) {
    return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

py::dict report_dict(const CalibrationReport& r) {
    py::dict d;
    d["params"] = r.params;
    d["volume"] = to_array(r.volume);
    d["cost_trace"] = vec_array(r.cost_trace);
    d["outer_iterations"] = r.outer_iterations;
    d["converged"] = r.converged;
    d["line_search_failed"] = r.line_search_failed;
    return d;
}

py::dict row_dict(const CatalogRow& r) {
    py::dict d;
    d["kind"] = std::string(to_string(r.kind));
    d["magnitude"] = r.magnitude;
    d["rmse"] = r.metrics.rmse;
    d["dispersion"] = r.metrics.mean_dispersion;
    d["doubling"] = r.metrics.mean_doubling;
    d["height_slope"] = r.metrics.height_slope;
    d["fov_slope"] = r.metrics.fov_slope;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Self-calibrating straight-ray tomography: projectors, simulation, "
              "reconstruction, geometry calibration, FBP and the artifact catalog.";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<VolumeGrid>(m, "VolumeGrid")
        .def(py::init<>())
        .def(py::init([](int nx, int ny, int nz, double spacing) {
                 VolumeGrid g{nx, ny, nz, spacing};
                 g.validate();
                 return g;
             }),
             py::arg("nx"), py::arg("ny"), py::arg("nz"), py::arg("spacing") = 1.0)
        .def_readwrite("nx", &VolumeGrid::nx)
        .def_readwrite("ny", &VolumeGrid::ny)
        .def_readwrite("nz", &VolumeGrid::nz)
        .def_readwrite("spacing", &VolumeGrid::h)
        .def("__repr__", [](const VolumeGrid& g) {
            return "VolumeGrid(" + std::to_string(g.nx) + ", " + std::to_string(g.ny) + ", " +
                   std::to_string(g.nz) + ", spacing=" + std::to_string(g.h) + ")";
        });

    py::class_<DetectorGrid>(m, "DetectorGrid")
        .def(py::init<>())
        .def(py::init([](int nxi, int neta, double spacing) {
                 DetectorGrid d{nxi, neta, spacing};
                 d.validate();
                 return d;
             }),
             py::arg("nxi"), py::arg("neta"), py::arg("spacing") = 1.0)
        .def_readwrite("nxi", &DetectorGrid::nxi)
        .def_readwrite("neta", &DetectorGrid::neta)
        .def_readwrite("spacing", &DetectorGrid::spacing)
        .def("__repr__", [](const DetectorGrid& d) {
            return "DetectorGrid(" + std::to_string(d.nxi) + ", " + std::to_string(d.neta) +
                   ", spacing=" + std::to_string(d.spacing) + ")";
        });

    py::class_<BlobParams>(m, "BlobParams")
        .def(py::init<>())
        .def(py::init([](double radius, double alpha, int order) {
                 BlobParams b;
                 b.radius = radius;
                 b.alpha = alpha;
                 b.m = order;
                 b.validate();
                 return b;
             }),
             py::arg("radius") = 2.0, py::arg("alpha") = 10.8, py::arg("order") = 2)
        .def_readwrite("radius", &BlobParams::radius)
        .def_readwrite("alpha", &BlobParams::alpha)
        .def_readwrite("order", &BlobParams::m);

    py::class_<GeometryParams>(m, "GeometryParams")
        .def(py::init<>())
        .def_property(
            "phi",
            [](const GeometryParams& g) { return vec_array(g.phi); },
            [](GeometryParams& g, const DArray& a) {
                g.phi.assign(a.data(), a.data() + a.size());
            })
        .def_readwrite("psi1", &GeometryParams::psi1)
        .def_readwrite("psi2", &GeometryParams::psi2)
        .def_property(
            "t",
            [](const GeometryParams& g) {
                py::array_t<double> a(
                    {static_cast<py::ssize_t>(g.t.size()), static_cast<py::ssize_t>(2)});
                auto r = a.mutable_unchecked<2>();
                for (py::ssize_t i = 0; i < r.shape(0); ++i) {
                    r(i, 0) = g.t[static_cast<std::size_t>(i)].x;
                    r(i, 1) = g.t[static_cast<std::size_t>(i)].y;
                }
                return a;
            },
            [](GeometryParams& g, const DArray& a) {
                if (a.ndim() != 2 || a.shape(1) != 2)
                    throw ConfigError("t must be an (n, 2) array of shifts");
                auto r = a.unchecked<2>();
                g.t.resize(static_cast<std::size_t>(r.shape(0)));
                for (py::ssize_t i = 0; i < r.shape(0); ++i)
                    g.t[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1)};
            })
        .def("projections", &GeometryParams::projections)
        .def("validate", &GeometryParams::validate);

    py::class_<ErrorModel>(m, "ErrorModel")
        .def(py::init<>())
        .def_readwrite("angle_walk_sigma", &ErrorModel::angle_walk_sigma)
        .def_readwrite("shift_walk_sigma", &ErrorModel::shift_walk_sigma)
        .def_property(
            "static_cor_offset",
            [](const ErrorModel& e) { return py::make_tuple(e.static_cor_offset.x,
                                                            e.static_cor_offset.y); },
            [](ErrorModel& e, std::pair<double, double> v) {
                e.static_cor_offset = {v.first, v.second};
            })
        .def_readwrite("psi1_true", &ErrorModel::psi1_true)
        .def_readwrite("psi2_true", &ErrorModel::psi2_true)
        .def_readwrite("seed", &ErrorModel::seed);

    py::class_<SolverConfig>(m, "SolverConfig")
        .def(py::init<>())
        .def_readwrite("max_iters", &SolverConfig::max_iters)
        .def_readwrite("tolerance", &SolverConfig::tolerance)
        .def_readwrite("nonneg", &SolverConfig::nonneg)
        .def_readwrite("verbosity", &SolverConfig::verbosity);

    py::class_<CalibConfig>(m, "CalibConfig")
        .def(py::init<>())
        .def_readwrite("fit_phi", &CalibConfig::fit_phi)
        .def_readwrite("fit_psi1", &CalibConfig::fit_psi1)
        .def_readwrite("fit_psi2", &CalibConfig::fit_psi2)
        .def_readwrite("fit_shift", &CalibConfig::fit_shift)
        .def_readwrite("per_projection_shift", &CalibConfig::per_projection_shift)
        .def_readwrite("init_cor", &CalibConfig::init_cor)
        .def_readwrite("outer_iters", &CalibConfig::outer_iters)
        .def_readwrite("angle_change_tol", &CalibConfig::angle_change_tol)
        .def_readwrite("shift_change_tol", &CalibConfig::shift_change_tol)
        .def_readwrite("param_steps", &CalibConfig::param_steps)
        .def_readwrite("initial_move", &CalibConfig::initial_move)
        .def_readwrite("first_solve_iters", &CalibConfig::first_solve_iters)
        .def_readwrite("coarse_size", &CalibConfig::coarse_size)
        .def_readwrite("fine_outer_iters", &CalibConfig::fine_outer_iters)
        .def_readwrite("inner", &CalibConfig::inner);

    py::class_<BeadPhantom>(m, "BeadPhantom")
        .def_property_readonly("coeffs",
                               [](const BeadPhantom& p) { return to_array(p.coeffs); })
        .def_property_readonly("centers",
                               [](const BeadPhantom& p) {
                                   py::array_t<double> a(
                                       {static_cast<py::ssize_t>(p.centers.size()),
                                        static_cast<py::ssize_t>(3)});
                                   auto r = a.mutable_unchecked<2>();
                                   for (py::ssize_t i = 0; i < r.shape(0); ++i) {
                                       const Vec3& c = p.centers[static_cast<std::size_t>(i)];
                                       r(i, 0) = c.x;
                                       r(i, 1) = c.y;
                                       r(i, 2) = c.z;
                                   }
                                   return a;
                               })
        .def_readonly("bead_radius", &BeadPhantom::bead_radius);

    py::class_<CatalogConfig>(m, "CatalogConfig")
        .def(py::init<>())
        .def_readwrite("grid", &CatalogConfig::grid)
        .def_readwrite("detector", &CatalogConfig::det)
        .def_readwrite("projections", &CatalogConfig::projections)
        .def_readwrite("n_beads", &CatalogConfig::n_beads)
        .def_readwrite("bead_radius", &CatalogConfig::bead_radius)
        .def_readwrite("blob", &CatalogConfig::blob)
        .def_readwrite("noise", &CatalogConfig::noise)
        .def_readwrite("seed", &CatalogConfig::seed);

    m.def("uniform_angles", &uniform_angles, py::arg("count"),
          "Evenly spaced projection angles over a full turn.");

    m.def(
        "forward",
        [](const DArray& vol, const VolumeGrid& grid, const GeometryParams& g,
           const DetectorGrid& det, const BlobParams& blob) {
            return to_array(forward(to_volume(vol, grid), g, det, BlobProfile(blob)));
        },
        py::arg("coeffs"), py::arg("grid"), py::arg("geometry"), py::arg("detector"),
        py::arg("blob") = BlobParams{},
        "Project blob coefficients (nz, ny, nx) into a stack (P, neta, nxi).");

    m.def(
        "adjoint",
        [](const DArray& stack, const DetectorGrid& det, const GeometryParams& g,
           const VolumeGrid& grid, const BlobParams& blob) {
            return to_array(adjoint(to_stack(stack, det), g, grid, BlobProfile(blob)));
        },
        py::arg("stack"), py::arg("detector"), py::arg("geometry"), py::arg("grid"),
        py::arg("blob") = BlobParams{},
        "Apply the projector transpose to a stack (P, neta, nxi).");

    m.def(
        "render_volume",
        [](const DArray& coeffs, const VolumeGrid& grid, const BlobParams& blob) {
            return to_array(render_volume(to_volume(coeffs, grid), blob));
        },
        py::arg("coeffs"), py::arg("grid"), py::arg("blob") = BlobParams{},
        "Evaluate the blob expansion on its own voxel grid.");

    m.def(
        "make_bead_phantom",
        [](const VolumeGrid& grid, int n_beads, double bead_radius, std::uint64_t seed) {
            return make_bead_phantom(grid, n_beads, bead_radius, seed);
        },
        py::arg("grid"), py::arg("n_beads"), py::arg("bead_radius"), py::arg("seed") = 0);

    m.def(
        "make_helix_phantom",
        [](const VolumeGrid& grid, double turns, double tube_radius, double helix_radius,
           double axis_tilt, std::uint64_t seed) {
            HelixSpec spec;
            spec.turns = turns;
            spec.tube_radius = tube_radius;
            spec.helix_radius = helix_radius;
            spec.axis_tilt = axis_tilt;
            return to_array(make_helix_phantom(grid, spec, seed));
        },
        py::arg("grid"), py::arg("turns") = 1.5, py::arg("tube_radius") = 2.5,
        py::arg("helix_radius") = -1.0, py::arg("axis_tilt") = 0.0, py::arg("seed") = 0);

    m.def("perturb_geometry", &perturb_geometry, py::arg("nominal"), py::arg("errors"),
          py::arg("detector_spacing"),
          "True geometry for a nominal acquisition under the mechanical error model.");

    m.def(
        "simulate_measurements",
        [](const DArray& coeffs, const VolumeGrid& grid, const GeometryParams& g_true,
           const DetectorGrid& det, const BlobParams& blob, double noise_sigma_abs,
           std::uint64_t seed) {
            return to_array(simulate_measurements(to_volume(coeffs, grid), g_true, det,
                                                  BlobProfile(blob), noise_sigma_abs, seed));
        },
        py::arg("coeffs"), py::arg("grid"), py::arg("geometry"), py::arg("detector"),
        py::arg("blob") = BlobParams{}, py::arg("noise_sigma") = 0.0, py::arg("seed") = 0,
        "Forward projection plus i.i.d. Gaussian noise (absolute sigma).");

    m.def(
        "solve_volume",
        [](const DArray& stack, const DetectorGrid& det, const GeometryParams& g,
           const VolumeGrid& grid, const BlobParams& blob, const SolverConfig& cfg) {
            const SolveResult r = solve_volume(to_stack(stack, det), g, grid,
                                               BlobProfile(blob), cfg);
            py::dict d;
            d["coeffs"] = to_array(r.coeffs);
            d["cost_trace"] = vec_array(r.cost_trace);
            d["iterations"] = r.iterations;
            d["converged"] = r.converged;
            return d;
        },
        py::arg("stack"), py::arg("detector"), py::arg("geometry"), py::arg("grid"),
        py::arg("blob") = BlobParams{}, py::arg("config") = SolverConfig{},
        "Least-squares volume solve at fixed geometry (CG on the normal equations).");

    m.def(
        "calibrate",
        [](const DArray& stack, const DetectorGrid& det, const GeometryParams& g_init,
           const VolumeGrid& grid, const BlobParams& blob, const CalibConfig& cfg) {
            return report_dict(
                calibrate(to_stack(stack, det), g_init, grid, BlobProfile(blob), cfg));
        },
        py::arg("stack"), py::arg("detector"), py::arg("geometry"), py::arg("grid"),
        py::arg("blob") = BlobParams{}, py::arg("config") = CalibConfig{},
        "Alternating volume/geometry estimation from an initial geometry guess.");

    m.def(
        "run_multiscale",
        [](const DArray& stack, const DetectorGrid& det, const GeometryParams& g_init,
           const VolumeGrid& grid, const BlobParams& blob, const CalibConfig& cfg) {
            const MultiscaleResult r =
                run_multiscale(to_stack(stack, det), g_init, grid, blob, cfg);
            py::dict d;
            d["params"] = r.params;
            d["volume"] = to_array(r.fine_volume);
            d["coarse"] = report_dict(r.coarse);
            d["fine"] = report_dict(r.fine);
            return d;
        },
        py::arg("stack"), py::arg("detector"), py::arg("geometry"), py::arg("grid"),
        py::arg("blob") = BlobParams{}, py::arg("config") = CalibConfig{},
        "Coarse-scale calibration followed by native-scale refinement.");

    m.def(
        "fbp",
        [](const DArray& stack, const DetectorGrid& det, const DArray& angles,
           const VolumeGrid& grid, bool shift_correct) {
            std::vector<double> phi(angles.data(), angles.data() + angles.size());
            double shift = 0.0;
            Volume v = fbp_stack(to_stack(stack, det), phi, grid, shift_correct, &shift);
            return py::make_tuple(to_array(v), shift);
        },
        py::arg("stack"), py::arg("detector"), py::arg("angles"), py::arg("grid"),
        py::arg("shift_correct") = false,
        "Slice-by-slice filtered backprojection; returns (volume, applied COR shift).");

    m.def(
        "estimate_cor_shift",
        [](const DArray& stack, const DetectorGrid& det, const DArray& angles) {
            std::vector<double> phi(angles.data(), angles.data() + angles.size());
            return estimate_cor_shift(to_stack(stack, det), phi);
        },
        py::arg("stack"), py::arg("detector"), py::arg("angles"),
        "Center-of-rotation shift estimate from opposite-projection correlation.");

    m.def(
        "run_catalog",
        [](const CatalogConfig& cfg, const std::vector<std::string>& kinds) {
            std::vector<ArtifactKind> ks;
            if (kinds.empty()) {
                ks = default_kinds();
            } else {
                for (const std::string& s : kinds) ks.push_back(artifact_kind_from_string(s));
            }
            py::list rows;
            for (const CatalogRow& r : run_catalog(cfg, ks)) rows.append(row_dict(r));
            return rows;
        },
        py::arg("config") = CatalogConfig{}, py::arg("kinds") = std::vector<std::string>{},
        "Artifact catalog rows as dicts; empty kinds runs the default suite.");
}
