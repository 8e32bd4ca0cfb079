#pragma once

#include "calibration.hpp"
#include "projector.hpp"
#include "simulator.hpp"

#include <string>
#include <vector>

namespace optcalib {

// Raw little-endian float32 payload plus a JSON sidecar describing it. `path`
// names the payload (conventionally *.raw); the sidecar replaces the
// extension with .json. Round trips are bit-exact at float32 precision.
std::string sidecar_path(const std::string& raw_path);

void write_volume(const std::string& path, const Volume& v);
Volume read_volume(const std::string& path);

// Stack sidecars record dims (xi, eta, P), spacing, and an optional geometry
// provenance reference.
void write_stack(const std::string& path, const ProjectionStack& b,
                 const std::string& geometry_ref = "");
ProjectionStack read_stack(const std::string& path);

// Acquisition geometry document ("optcalib-geom/1"): angles and tilts in
// degrees, shifts in detector pixels, plus detector/volume grids and the
// blob basis block.
struct GeometryFile {
    GeometryParams params;  // shifts kept in world units in memory
    DetectorGrid det{1, 1, 1.0};
    VolumeGrid grid{1, 1, 1, 1.0};
    BlobParams basis{};
};

void write_geometry(const std::string& path, const GeometryFile& gf);
GeometryFile read_geometry(const std::string& path);

// One pipeline configuration document (JSON or the TOML subset). The schema
// is strict: unknown keys anywhere are a hard error.
struct RunConfig {
    VolumeGrid grid{32, 32, 32, 1.0};
    DetectorGrid det{64, 64, 1.0};
    int projections = 60;
    double noise = 0.0;  // fraction of the peak measurement
    std::uint64_t seed = 1;

    std::string phantom = "beads";  // "beads" or "helix"
    int n_beads = 12;
    double bead_radius = 2.0;
    HelixSpec helix;

    ErrorModel errors;  // seed is filled from `seed` at use time
    BlobParams basis;
    SolverConfig solver;
    CalibConfig calib;
    int threads = 0;  // 0 = leave the runtime default

    void validate() const;
};

RunConfig run_config_from_string(const std::string& text, const std::string& format);
RunConfig load_run_config(const std::string& path);  // dispatches on .json/.toml

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// iteration,cost rows; %.17g keeps reruns byte-identical.
std::string cost_trace_csv(const std::vector<double>& trace);

}  // namespace optcalib
