#include "optcalib/io.hpp"

#include "optcalib/errors.hpp"
#include "toml_lite.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

namespace optcalib {

namespace {

using nlohmann::json;

constexpr double kDegPerRad = 180.0 / std::numbers::pi;
constexpr double kRadPerDeg = std::numbers::pi / 180.0;

void ensure_raw_path(const std::string& path) {
    if (std::filesystem::path(path).extension() == ".json")
        throw ConfigError("raw payload path must not end in .json: " + path);
}

void write_raw(const std::string& path, const std::vector<double>& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    std::vector<std::uint32_t> buf(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(data[i]));
        if constexpr (std::endian::native == std::endian::big)
            bits = __builtin_bswap32(bits);
        buf[i] = bits;
    }
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * 4));
    if (!f) throw IoError("short write: " + path);
}

std::vector<double> read_raw(const std::string& path, std::size_t count, bool big_endian) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path);
    const auto bytes = static_cast<std::size_t>(f.tellg());
    if (bytes != count * 4)
        throw IoError(path + ": payload holds " + std::to_string(bytes / 4) +
                      " float32 values but the sidecar declares " + std::to_string(count));
    f.seekg(0);
    std::vector<std::uint32_t> buf(count);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw IoError("short read: " + path);

    const bool host_big = std::endian::native == std::endian::big;
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = buf[i];
        if (big_endian != host_big) bits = __builtin_bswap32(bits);
        out[i] = std::bit_cast<float>(bits);
    }
    return out;
}

json read_json_file(const std::string& path) {
    const std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw IoError("failed to parse " + path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

// Strict accessor: every key must be consumed, unknown keys are errors.
class StrictObj {
public:
    StrictObj(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
        if (!j.is_object()) throw ConfigError(ctx_ + " must be a table/object");
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    double number(const std::string& key, double def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_number()) throw ConfigError(ctx_ + "." + key + " must be a number");
        return v->get<double>();
    }

    int integer(const std::string& key, int def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_number_integer() && !v->is_number_unsigned())
            throw ConfigError(ctx_ + "." + key + " must be an integer");
        return v->get<int>();
    }

    std::uint64_t uinteger(const std::string& key, std::uint64_t def) {
        const json* v = find(key);
        if (!v) return def;
        if ((!v->is_number_integer() && !v->is_number_unsigned()) || v->get<double>() < 0)
            throw ConfigError(ctx_ + "." + key + " must be a non-negative integer");
        return v->get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_boolean()) throw ConfigError(ctx_ + "." + key + " must be a boolean");
        return v->get<bool>();
    }

    std::string str(const std::string& key, const std::string& def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_string()) throw ConfigError(ctx_ + "." + key + " must be a string");
        return v->get<std::string>();
    }

    void done() const {
        for (const auto& item : j_.items())
            if (!seen_.count(item.key()))
                throw ConfigError("unknown key '" + ctx_ + "." + item.key() + "'");
    }

    const std::string& ctx() const { return ctx_; }

private:
    const json& j_;
    std::string ctx_;
    std::set<std::string> seen_;
};

// Required field with a deg/rad unit suffix; returns radians.
double angle_field(StrictObj& o, const std::string& base, double def_rad) {
    const json* deg = o.find(base + "_deg");
    const json* rad = o.find(base + "_rad");
    if (deg && rad) throw ConfigError(o.ctx() + ": give " + base + " in deg or rad, not both");
    const json* v = deg ? deg : rad;
    if (!v) return def_rad;
    if (!v->is_number()) throw ConfigError(o.ctx() + "." + base + " must be a number");
    return v->get<double>() * (deg ? kRadPerDeg : 1.0);
}

json sidecar_common(const char* kind, double spacing) {
    json j;
    j["format"] = "optcalib-raw/1";
    j["kind"] = kind;
    j["dtype"] = "float32";
    j["byte_order"] = "little";
    j["spacing"] = spacing;
    j["units"] = "arbitrary";
    return j;
}

struct SidecarInfo {
    std::vector<std::int64_t> dims;
    double spacing = 1.0;
    bool big_endian = false;
};

SidecarInfo read_sidecar(const std::string& raw_path, const char* kind,
                         const char* layout) {
    const std::string side = sidecar_path(raw_path);
    const json j = read_json_file(side);
    StrictObj o(j, side);
    if (o.str("format", "") != "optcalib-raw/1")
        throw IoError(side + ": not an optcalib-raw/1 sidecar");
    if (o.str("kind", "") != kind)
        throw IoError(side + ": expected kind '" + kind + "'");
    if (o.str("dtype", "") != "float32")
        throw IoError(side + ": only float32 payloads are supported");
    const std::string order = o.str("byte_order", "little");
    if (order != "little" && order != "big")
        throw IoError(side + ": byte_order must be 'little' or 'big'");
    if (o.str("layout", layout) != layout)
        throw IoError(side + ": expected layout '" + layout + "'");
    o.str("units", "");
    o.str("geometry", "");

    SidecarInfo info;
    info.big_endian = order == "big";
    info.spacing = o.number("spacing", 1.0);
    if (!(info.spacing > 0)) throw IoError(side + ": spacing must be > 0");
    const json* dims = o.find("dims");
    if (!dims || !dims->is_array() || dims->size() != 3)
        throw IoError(side + ": dims must be an array of three integers");
    for (const json& d : *dims) {
        if (!d.is_number_integer() && !d.is_number_unsigned())
            throw IoError(side + ": dims must be integers");
        const auto v = d.get<std::int64_t>();
        if (v < 1) throw IoError(side + ": dims must be >= 1");
        info.dims.push_back(v);
    }
    o.done();
    return info;
}

}  // namespace

std::string sidecar_path(const std::string& raw_path) {
    std::filesystem::path p(raw_path);
    p.replace_extension(".json");
    return p.string();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("short write: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path);
    std::string text(static_cast<std::size_t>(f.tellg()), '\0');
    f.seekg(0);
    f.read(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("short read: " + path);
    return text;
}

void write_volume(const std::string& path, const Volume& v) {
    ensure_raw_path(path);
    v.grid.validate();
    if (v.data.size() != v.grid.size())
        throw ConfigError("volume data does not match its grid");
    json j = sidecar_common("volume", v.grid.h);
    j["dims"] = {v.grid.nx, v.grid.ny, v.grid.nz};
    j["layout"] = "zyx";
    write_raw(path, v.data);
    write_json_file(sidecar_path(path), j);
}

Volume read_volume(const std::string& path) {
    const SidecarInfo info = read_sidecar(path, "volume", "zyx");
    VolumeGrid grid{static_cast<int>(info.dims[0]), static_cast<int>(info.dims[1]),
                    static_cast<int>(info.dims[2]), info.spacing};
    grid.validate();
    Volume v(grid);
    v.data = read_raw(path, grid.size(), info.big_endian);
    return v;
}

void write_stack(const std::string& path, const ProjectionStack& b,
                 const std::string& geometry_ref) {
    ensure_raw_path(path);
    b.det.validate();
    if (b.data.size() != b.det.pixels() * b.count)
        throw ConfigError("stack data does not match detector dims and count");
    json j = sidecar_common("stack", b.det.spacing);
    j["dims"] = {b.det.nxi, b.det.neta, b.count};
    j["layout"] = "p_eta_xi";
    if (!geometry_ref.empty()) j["geometry"] = geometry_ref;
    write_raw(path, b.data);
    write_json_file(sidecar_path(path), j);
}

ProjectionStack read_stack(const std::string& path) {
    const SidecarInfo info = read_sidecar(path, "stack", "p_eta_xi");
    DetectorGrid det{static_cast<int>(info.dims[0]), static_cast<int>(info.dims[1]),
                     info.spacing};
    det.validate();
    ProjectionStack b(det, static_cast<std::size_t>(info.dims[2]));
    b.data = read_raw(path, b.data.size(), info.big_endian);
    return b;
}

void write_geometry(const std::string& path, const GeometryFile& gf) {
    gf.params.validate();
    gf.det.validate();
    gf.grid.validate();
    gf.basis.validate();

    json j;
    j["format"] = "optcalib-geom/1";
    json angles = json::array();
    for (double phi : gf.params.phi) angles.push_back(phi * kDegPerRad);
    j["angles_deg"] = angles;
    j["axis_tilt_deg"] = gf.params.psi1 * kDegPerRad;
    j["detector_tilt_deg"] = gf.params.psi2 * kDegPerRad;
    const double px = gf.det.spacing;
    if (gf.params.per_projection_shift()) {
        json shifts = json::array();
        for (const Vec2& t : gf.params.t) shifts.push_back({t.x / px, t.y / px});
        j["shift_px"] = shifts;
    } else {
        j["shift_px"] = {gf.params.t[0].x / px, gf.params.t[0].y / px};
    }
    j["detector"] = {{"nxi", gf.det.nxi}, {"neta", gf.det.neta}, {"spacing", gf.det.spacing}};
    j["volume"] = {{"nx", gf.grid.nx}, {"ny", gf.grid.ny}, {"nz", gf.grid.nz},
                   {"spacing", gf.grid.h}};
    j["basis"] = {{"radius", gf.basis.radius}, {"alpha", gf.basis.alpha},
                  {"order", gf.basis.m}};
    write_json_file(path, j);
}

GeometryFile read_geometry(const std::string& path) {
    const json j = read_json_file(path);
    StrictObj o(j, path);
    if (o.str("format", "") != "optcalib-geom/1")
        throw IoError(path + ": not an optcalib-geom/1 document");

    GeometryFile gf;

    const json* deg = o.find("angles_deg");
    const json* rad = o.find("angles_rad");
    if (deg && rad) throw IoError(path + ": give angles in deg or rad, not both");
    const json* ang = deg ? deg : rad;
    if (!ang || !ang->is_array() || ang->empty())
        throw IoError(path + ": angles_deg must be a non-empty array");
    for (const json& a : *ang) {
        if (!a.is_number()) throw IoError(path + ": angles must be numbers");
        gf.params.phi.push_back(a.get<double>() * (deg ? kRadPerDeg : 1.0));
    }
    gf.params.psi1 = angle_field(o, "axis_tilt", 0.0);
    gf.params.psi2 = angle_field(o, "detector_tilt", 0.0);

    {
        const json* d = o.find("detector");
        if (!d) throw IoError(path + ": missing detector block");
        StrictObj det(*d, path + ".detector");
        gf.det.nxi = det.integer("nxi", 0);
        gf.det.neta = det.integer("neta", 0);
        gf.det.spacing = det.number("spacing", 1.0);
        det.done();
        gf.det.validate();
    }
    {
        const json* v = o.find("volume");
        if (!v) throw IoError(path + ": missing volume block");
        StrictObj vol(*v, path + ".volume");
        gf.grid.nx = vol.integer("nx", 0);
        gf.grid.ny = vol.integer("ny", 0);
        gf.grid.nz = vol.integer("nz", 0);
        gf.grid.h = vol.number("spacing", 1.0);
        vol.done();
        gf.grid.validate();
    }
    {
        const json* b = o.find("basis");
        if (!b) throw IoError(path + ": missing basis block");
        StrictObj basis(*b, path + ".basis");
        gf.basis.radius = basis.number("radius", gf.basis.radius);
        gf.basis.alpha = basis.number("alpha", gf.basis.alpha);
        gf.basis.m = basis.integer("order", gf.basis.m);
        basis.done();
        gf.basis.validate();
    }

    const json* shift = o.find("shift_px");
    if (!shift || !shift->is_array() || shift->empty())
        throw IoError(path + ": shift_px must be a non-empty array");
    const double px = gf.det.spacing;
    if (shift->front().is_array()) {
        gf.params.t.clear();
        for (const json& s : *shift) {
            if (!s.is_array() || s.size() != 2 || !s[0].is_number() || !s[1].is_number())
                throw IoError(path + ": per-projection shift entries must be [x, y]");
            gf.params.t.push_back({s[0].get<double>() * px, s[1].get<double>() * px});
        }
    } else {
        if (shift->size() != 2 || !(*shift)[0].is_number() || !(*shift)[1].is_number())
            throw IoError(path + ": shift_px must be [x, y]");
        gf.params.t = {Vec2{(*shift)[0].get<double>() * px, (*shift)[1].get<double>() * px}};
    }

    o.done();
    gf.params.validate();
    return gf;
}

void RunConfig::validate() const {
    grid.validate();
    det.validate();
    basis.validate();
    solver.validate();
    calib.validate();
    if (projections < 1) throw ConfigError("acquisition.projections must be >= 1");
    if (noise < 0) throw ConfigError("acquisition.noise must be >= 0");
    if (phantom != "beads" && phantom != "helix")
        throw ConfigError("phantom.type must be 'beads' or 'helix'");
    if (n_beads < 1) throw ConfigError("phantom.beads must be >= 1");
    if (!(bead_radius > 0)) throw ConfigError("phantom.bead_radius must be > 0");
    if (threads < 0) throw ConfigError("threads must be >= 0");
    ErrorModel em = errors;
    em.seed = seed;
    em.validate();
}

namespace {

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    StrictObj top(j, "config");

    if (const json* v = top.find("volume")) {
        StrictObj o(*v, "volume");
        cfg.grid.nx = o.integer("nx", cfg.grid.nx);
        cfg.grid.ny = o.integer("ny", cfg.grid.ny);
        cfg.grid.nz = o.integer("nz", cfg.grid.nz);
        cfg.grid.h = o.number("spacing", cfg.grid.h);
        o.done();
    }
    if (const json* v = top.find("detector")) {
        StrictObj o(*v, "detector");
        cfg.det.nxi = o.integer("nxi", cfg.det.nxi);
        cfg.det.neta = o.integer("neta", cfg.det.neta);
        cfg.det.spacing = o.number("spacing", cfg.det.spacing);
        o.done();
    }
    if (const json* v = top.find("acquisition")) {
        StrictObj o(*v, "acquisition");
        cfg.projections = o.integer("projections", cfg.projections);
        cfg.noise = o.number("noise", cfg.noise);
        cfg.seed = o.uinteger("seed", cfg.seed);
        o.done();
    }
    if (const json* v = top.find("phantom")) {
        StrictObj o(*v, "phantom");
        cfg.phantom = o.str("type", cfg.phantom);
        cfg.n_beads = o.integer("beads", cfg.n_beads);
        cfg.bead_radius = o.number("bead_radius", cfg.bead_radius);
        cfg.helix.turns = o.number("turns", cfg.helix.turns);
        cfg.helix.tube_radius = o.number("tube_radius", cfg.helix.tube_radius);
        cfg.helix.helix_radius = o.number("helix_radius", cfg.helix.helix_radius);
        cfg.helix.axis_tilt = angle_field(o, "axis_tilt", cfg.helix.axis_tilt);
        o.done();
    }
    if (const json* v = top.find("errors")) {
        StrictObj o(*v, "errors");
        cfg.errors.angle_walk_sigma = o.number("angle_walk_sigma", 0.0);
        cfg.errors.shift_walk_sigma = o.number("shift_walk_sigma", 0.0);
        if (const json* c = o.find("cor_offset_px")) {
            if (c->is_number()) {
                cfg.errors.static_cor_offset = {c->get<double>(), 0.0};
            } else if (c->is_array() && c->size() == 2 && (*c)[0].is_number() &&
                       (*c)[1].is_number()) {
                cfg.errors.static_cor_offset = {(*c)[0].get<double>(), (*c)[1].get<double>()};
            } else {
                throw ConfigError("errors.cor_offset_px must be a number or [x, y]");
            }
        }
        cfg.errors.psi1_true = angle_field(o, "axis_tilt", 0.0);
        cfg.errors.psi2_true = angle_field(o, "detector_tilt", 0.0);
        o.done();
    }
    if (const json* v = top.find("basis")) {
        StrictObj o(*v, "basis");
        cfg.basis.radius = o.number("radius", cfg.basis.radius);
        cfg.basis.alpha = o.number("alpha", cfg.basis.alpha);
        cfg.basis.m = o.integer("order", cfg.basis.m);
        o.done();
    }
    if (const json* v = top.find("solver")) {
        StrictObj o(*v, "solver");
        cfg.solver.max_iters = o.integer("max_iters", cfg.solver.max_iters);
        cfg.solver.tolerance = o.number("tolerance", cfg.solver.tolerance);
        cfg.solver.nonneg = o.boolean("nonneg", cfg.solver.nonneg);
        cfg.solver.verbosity = o.integer("verbosity", cfg.solver.verbosity);
        o.done();
    }
    if (const json* v = top.find("calibration")) {
        StrictObj o(*v, "calibration");
        cfg.calib.fit_phi = o.boolean("fit_phi", cfg.calib.fit_phi);
        cfg.calib.fit_psi1 = o.boolean("fit_psi1", cfg.calib.fit_psi1);
        cfg.calib.fit_psi2 = o.boolean("fit_psi2", cfg.calib.fit_psi2);
        cfg.calib.fit_shift = o.boolean("fit_shift", cfg.calib.fit_shift);
        cfg.calib.per_projection_shift =
            o.boolean("per_projection_shift", cfg.calib.per_projection_shift);
        cfg.calib.init_cor = o.boolean("init_cor", cfg.calib.init_cor);
        cfg.calib.outer_iters = o.integer("outer_iters", cfg.calib.outer_iters);
        cfg.calib.angle_change_tol = o.number("angle_change_tol", cfg.calib.angle_change_tol);
        cfg.calib.shift_change_tol = o.number("shift_change_tol", cfg.calib.shift_change_tol);
        cfg.calib.param_steps = o.integer("param_steps", cfg.calib.param_steps);
        cfg.calib.update_stall_tol = o.number("update_stall_tol", cfg.calib.update_stall_tol);
        cfg.calib.fd_step_angle = o.number("fd_step_angle", cfg.calib.fd_step_angle);
        cfg.calib.fd_step_shift = o.number("fd_step_shift", cfg.calib.fd_step_shift);
        cfg.calib.initial_move = o.number("initial_move", cfg.calib.initial_move);
        cfg.calib.armijo = o.number("armijo", cfg.calib.armijo);
        cfg.calib.max_backtracks = o.integer("max_backtracks", cfg.calib.max_backtracks);
        cfg.calib.inner.max_iters = o.integer("inner_iters", cfg.calib.inner.max_iters);
        cfg.calib.inner.tolerance = o.number("inner_tolerance", cfg.calib.inner.tolerance);
        cfg.calib.first_solve_iters = o.integer("first_solve_iters", cfg.calib.first_solve_iters);
        cfg.calib.coarse_size = o.integer("coarse_size", cfg.calib.coarse_size);
        cfg.calib.fine_outer_iters = o.integer("fine_outer_iters", cfg.calib.fine_outer_iters);
        o.done();
    }
    cfg.threads = top.integer("threads", cfg.threads);
    top.done();

    cfg.validate();
    return cfg;
}

}  // namespace

RunConfig run_config_from_string(const std::string& text, const std::string& format) {
    if (format == "json") {
        try {
            return run_config_from_json(json::parse(text));
        } catch (const json::exception& e) {
            throw ConfigError(std::string("failed to parse JSON config: ") + e.what());
        }
    }
    if (format == "toml") return run_config_from_json(parse_toml_lite(text));
    throw ConfigError("unknown config format '" + format + "' (use json or toml)");
}

RunConfig load_run_config(const std::string& path) {
    const std::string ext = std::filesystem::path(path).extension().string();
    if (ext == ".json") return run_config_from_string(read_text_file(path), "json");
    if (ext == ".toml") return run_config_from_string(read_text_file(path), "toml");
    throw ConfigError("config file must end in .json or .toml: " + path);
}

std::string cost_trace_csv(const std::vector<double>& trace) {
    std::string out = "iteration,cost\n";
    char buf[64];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, trace[i]);
        out += buf;
    }
    return out;
}

}  // namespace optcalib
