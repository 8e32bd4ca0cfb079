#include "optcalib/calibration.hpp"

#include "optcalib/errors.hpp"
#include "optcalib/fbp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace optcalib {

namespace {

enum class ParamKind { Phi, Psi1, Psi2, Tx, Ty };

struct Entry {
    ParamKind kind;
    int proj;  // projection index, -1 for global parameters
};

bool is_angle(ParamKind k) {
    return k == ParamKind::Phi || k == ParamKind::Psi1 || k == ParamKind::Psi2;
}

std::vector<Entry> layout(const GeometryParams& g, const CalibConfig& cfg) {
    std::vector<Entry> entries;
    const int p = static_cast<int>(g.projections());
    if (cfg.fit_phi)
        for (int i = 0; i < p; ++i) entries.push_back({ParamKind::Phi, i});
    if (cfg.fit_psi1) entries.push_back({ParamKind::Psi1, -1});
    if (cfg.fit_psi2) entries.push_back({ParamKind::Psi2, -1});
    if (cfg.fit_shift) {
        if (cfg.per_projection_shift) {
            for (int i = 0; i < p; ++i) {
                entries.push_back({ParamKind::Tx, i});
                entries.push_back({ParamKind::Ty, i});
            }
        } else {
            entries.push_back({ParamKind::Tx, -1});
            entries.push_back({ParamKind::Ty, -1});
        }
    }
    if (entries.empty()) throw ConfigError("calibration needs at least one free parameter");
    return entries;
}

double read_entry(const GeometryParams& g, const Entry& e, double px) {
    switch (e.kind) {
        case ParamKind::Phi: return g.phi[e.proj];
        case ParamKind::Psi1: return g.psi1;
        case ParamKind::Psi2: return g.psi2;
        case ParamKind::Tx: return g.shift(std::max(e.proj, 0)).x / px;
        case ParamKind::Ty: return g.shift(std::max(e.proj, 0)).y / px;
    }
    return 0.0;
}

void write_entry(GeometryParams& g, const Entry& e, double v, double px) {
    switch (e.kind) {
        case ParamKind::Phi: g.phi[e.proj] = v; return;
        case ParamKind::Psi1: g.psi1 = v; return;
        case ParamKind::Psi2: g.psi2 = v; return;
        case ParamKind::Tx: g.t[std::max(e.proj, 0)].x = v * px; return;
        case ParamKind::Ty: g.t[std::max(e.proj, 0)].y = v * px; return;
    }
}

void check_shift_storage(const GeometryParams& g, const CalibConfig& cfg) {
    if (cfg.fit_shift && cfg.per_projection_shift && !g.per_projection_shift())
        throw ConfigError("per-projection shift fit needs per-projection t in the geometry");
    if (cfg.fit_shift && !cfg.per_projection_shift && g.per_projection_shift())
        throw ConfigError("global shift fit cannot start from per-projection t");
}

double wall_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

void CalibConfig::validate() const {
    if (!fit_phi && !fit_psi1 && !fit_psi2 && !fit_shift)
        throw ConfigError("calibration needs at least one free parameter");
    if (outer_iters < 0) throw ConfigError("outer_iters must be >= 0");
    if (!(angle_change_tol > 0) || !(shift_change_tol > 0))
        throw ConfigError("parameter change thresholds must be > 0");
    if (param_steps < 1) throw ConfigError("param_steps must be >= 1");
    if (!(fd_step_angle > 0) || !(fd_step_shift > 0))
        throw ConfigError("finite-difference steps must be > 0");
    if (!(initial_move > 0)) throw ConfigError("initial_move must be > 0");
    if (!(armijo > 0) || armijo >= 1) throw ConfigError("armijo constant must be in (0,1)");
    if (max_backtracks < 1) throw ConfigError("max_backtracks must be >= 1");
    if (coarse_size < 2) throw ConfigError("coarse_size must be >= 2");
    inner.validate();
}

double objective(const VolumeCoeffs& c, const GeometryParams& g, const ProjectionStack& b,
                 const BlobProfile& blob) {
    return data_cost(c, g, b, blob);
}

std::vector<double> pack_params(const GeometryParams& g, const CalibConfig& cfg,
                                double pixel_size) {
    check_shift_storage(g, cfg);
    const auto entries = layout(g, cfg);
    std::vector<double> x(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k)
        x[k] = read_entry(g, entries[k], pixel_size);
    return x;
}

GeometryParams unpack_params(const std::vector<double>& x, const GeometryParams& base,
                             const CalibConfig& cfg, double pixel_size) {
    check_shift_storage(base, cfg);
    const auto entries = layout(base, cfg);
    if (x.size() != entries.size())
        throw ConfigError("packed parameter vector has the wrong length");
    GeometryParams g = base;
    for (std::size_t k = 0; k < entries.size(); ++k)
        write_entry(g, entries[k], x[k], pixel_size);
    return g;
}

std::vector<double> param_gradient(const VolumeCoeffs& c, const GeometryParams& g,
                                   const ProjectionStack& b, const BlobProfile& blob,
                                   const CalibConfig& cfg) {
    const auto entries = layout(g, cfg);
    const double px = b.det.spacing;

    // Residual form <Hc - b, d(Hc)/dp> with the model differenced centrally per
    // parameter. Differencing the model instead of the objective drops the
    // O(h^2) <m', m''> bias, so the gradient vanishes exactly at a
    // zero-residual fixed point.
    ProjectionStack resid = forward(c, g, b.det, blob);
    for (std::size_t i = 0; i < resid.data.size(); ++i) resid.data[i] -= b.data[i];

    std::vector<double> grad(entries.size());
    std::vector<double> sp, sm;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const Entry& e = entries[k];
        const double h = is_angle(e.kind) ? cfg.fd_step_angle : cfg.fd_step_shift;
        double acc = 0.0;
        if (e.proj >= 0) {
            // Only projection e.proj sees this parameter; difference its own rows.
            const auto i = static_cast<std::size_t>(e.proj);
            Pose plus = g.pose(i), minus = g.pose(i);
            switch (e.kind) {
                case ParamKind::Phi: plus.phi += h; minus.phi -= h; break;
                case ParamKind::Tx: plus.t.x += h * px; minus.t.x -= h * px; break;
                case ParamKind::Ty: plus.t.y += h * px; minus.t.y -= h * px; break;
                default: break;
            }
            sp.resize(b.det.pixels());
            sm.resize(b.det.pixels());
            forward_one(c, plus, b.det, blob, sp);
            forward_one(c, minus, b.det, blob, sm);
            auto r = resid.projection(i);
            for (std::size_t q = 0; q < r.size(); ++q) acc += r[q] * (sp[q] - sm[q]);
        } else {
            GeometryParams gp = g, gm = g;
            const double v = read_entry(g, e, px);
            write_entry(gp, e, v + h, px);
            write_entry(gm, e, v - h, px);
            const ProjectionStack mp = forward(c, gp, b.det, blob);
            const ProjectionStack mm = forward(c, gm, b.det, blob);
            for (std::size_t q = 0; q < resid.data.size(); ++q)
                acc += resid.data[q] * (mp.data[q] - mm.data[q]);
        }
        grad[k] = acc / (2.0 * h);
        if (!std::isfinite(grad[k]))
            throw NumericalError("non-finite objective in parameter gradient");
    }
    return grad;
}

GeometryParams update_params(const VolumeCoeffs& c, const GeometryParams& g,
                             const ProjectionStack& b, const BlobProfile& blob,
                             const CalibConfig& cfg, double* cost_after,
                             bool* line_search_failed) {
    const double px = b.det.spacing;
    GeometryParams cur = g;
    std::vector<double> x = pack_params(cur, cfg, px);
    double cost = objective(c, cur, b, blob);
    if (!std::isfinite(cost)) throw NumericalError("non-finite objective");

    bool any_step = false;
    bool failed = false;
    double carried_step = 0.0;  // accepted step size, reused by the next search
    for (int s = 0; s < cfg.param_steps; ++s) {
        const std::vector<double> grad = param_gradient(c, cur, b, blob, cfg);
        double gmax = 0.0, gg = 0.0;
        for (double v : grad) {
            gmax = std::max(gmax, std::abs(v));
            gg += v * v;
        }
        if (gmax < 1e-14) break;  // flat to rounding; nothing to do

        std::vector<double> xt(x.size());
        GeometryParams gt;
        double trial = cost;
        auto eval_at = [&](double step) {
            for (std::size_t k = 0; k < x.size(); ++k) xt[k] = x[k] - step * grad[k];
            gt = unpack_params(xt, cur, cfg, px);
            trial = objective(c, gt, b, blob);
            if (!std::isfinite(trial)) throw NumericalError("non-finite objective");
            return trial <= cost - cfg.armijo * step * gg;
        };

        double step = carried_step > 0.0 ? carried_step : cfg.initial_move / gmax;
        bool accepted = false;
        for (int bt = 0; bt < cfg.max_backtracks; ++bt) {
            if (eval_at(step)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!any_step) failed = true;
            break;
        }
        // Expand while a doubled step still satisfies Armijo and improves on
        // the shorter one; keeps the fixed first-trial size from capping the
        // per-iteration travel.
        std::vector<double> xbest = xt;
        GeometryParams gbest = gt;
        double best = trial;
        while (true) {
            const double wider = 2.0 * step;
            if (!eval_at(wider) || trial >= best) break;
            step = wider;
            xbest = xt;
            gbest = gt;
            best = trial;
        }
        carried_step = step;

        any_step = true;
        const double rel_dec = (cost - best) / std::max(cost, 1e-300);
        x.swap(xbest);
        cur = std::move(gbest);
        cost = best;
        if (rel_dec < cfg.update_stall_tol) break;
    }
    if (cost_after) *cost_after = cost;
    if (line_search_failed) *line_search_failed = failed;
    return cur;
}

CalibrationReport calibrate(const ProjectionStack& b, const GeometryParams& g_init,
                            const VolumeGrid& grid, const BlobProfile& blob,
                            const CalibConfig& cfg) {
    cfg.validate();
    GeometryParams g = g_init;
    g.validate();
    if (cfg.fit_shift && cfg.per_projection_shift && !g.per_projection_shift())
        g.t.assign(g.projections(), g.t.at(0));
    check_shift_storage(g, cfg);
    layout(g, cfg);  // validates the free set against the geometry

    if (cfg.init_cor && cfg.fit_shift) {
        // A static center-of-rotation offset dominates the misfit and, left in,
        // drags the joint problem into bad basins; the opposite-projection
        // correlation estimate removes it up front.
        const double cor = estimate_cor_shift(b, g.phi);
        for (Vec2& t : g.t) t.x += cor;
    }

    CalibrationReport rep;
    rep.trajectory.push_back(g);

    SolverConfig first = cfg.inner;
    first.max_iters = cfg.first_solve_iters >= 0 ? cfg.first_solve_iters : 2 * cfg.inner.max_iters;

    double t0 = wall_seconds();
    SolveResult sol = solve_volume(b, g, grid, blob, first);
    rep.seconds_solve += wall_seconds() - t0;
    VolumeCoeffs c = std::move(sol.coeffs);
    rep.cost_trace.push_back(sol.final_cost());

    const double px = b.det.spacing;
    for (int k = 0; k < cfg.outer_iters; ++k) {
        double cost_up = 0.0;
        bool ls_failed = false;
        t0 = wall_seconds();
        GeometryParams g_new = update_params(c, g, b, blob, cfg, &cost_up, &ls_failed);
        rep.seconds_update += wall_seconds() - t0;
        rep.cost_trace.push_back(cost_up);
        if (ls_failed) rep.line_search_failed = true;

        double d_angle = std::abs(g_new.psi1 - g.psi1);
        d_angle = std::max(d_angle, std::abs(g_new.psi2 - g.psi2));
        for (std::size_t i = 0; i < g.phi.size(); ++i)
            d_angle = std::max(d_angle, std::abs(g_new.phi[i] - g.phi[i]));
        double d_shift = 0.0;
        for (std::size_t i = 0; i < g.t.size(); ++i) {
            d_shift = std::max(d_shift, std::abs(g_new.t[i].x - g.t[i].x) / px);
            d_shift = std::max(d_shift, std::abs(g_new.t[i].y - g.t[i].y) / px);
        }
        g = g_new;

        t0 = wall_seconds();
        sol = solve_volume(b, g, grid, blob, cfg.inner, &c);
        rep.seconds_solve += wall_seconds() - t0;
        c = std::move(sol.coeffs);
        rep.cost_trace.push_back(sol.final_cost());

        rep.trajectory.push_back(g);
        rep.outer_iterations = k + 1;
        if (d_angle < cfg.angle_change_tol && d_shift < cfg.shift_change_tol) {
            rep.converged = true;
            break;
        }
    }

    rep.params = g;
    rep.volume = std::move(c);
    return rep;
}

ProjectionStack downsample(const ProjectionStack& b, int factor) {
    if (factor < 1) throw ConfigError("downsample factor must be >= 1");
    if (factor == 1) return b;
    if (b.det.nxi % factor != 0 || b.det.neta % factor != 0)
        throw ConfigError("downsample factor must divide both detector dimensions");

    DetectorGrid det{b.det.nxi / factor, b.det.neta / factor, b.det.spacing * factor};
    ProjectionStack out(det, b.count);
    const double inv = 1.0 / (factor * factor);
    for (std::size_t p = 0; p < b.count; ++p)
        for (int e = 0; e < det.neta; ++e)
            for (int j = 0; j < det.nxi; ++j) {
                double s = 0.0;
                for (int de = 0; de < factor; ++de)
                    for (int dj = 0; dj < factor; ++dj)
                        s += b.at(p, e * factor + de, j * factor + dj);
                out.at(p, e, j) = s * inv;
            }
    return out;
}

MultiscaleResult run_multiscale(const ProjectionStack& b, const GeometryParams& g_init,
                                const VolumeGrid& grid, const BlobParams& blob,
                                const CalibConfig& cfg) {
    cfg.validate();
    if (b.det.nxi % cfg.coarse_size != 0)
        throw ConfigError("coarse_size must divide the detector width");
    const int factor = b.det.nxi / cfg.coarse_size;
    if (b.det.neta % factor != 0)
        throw ConfigError("coarse_size implies a factor that must divide detector height");

    // Same world extent at both scales; voxels and blobs scale together.
    VolumeGrid coarse_grid{std::max(2, grid.nx / factor), std::max(2, grid.ny / factor),
                           std::max(2, grid.nz / factor), grid.h * factor};
    BlobParams coarse_blob = blob;
    coarse_blob.radius = blob.radius * factor;

    MultiscaleResult out;
    out.coarse = calibrate(downsample(b, factor), g_init, coarse_grid,
                           BlobProfile(coarse_blob), cfg);

    if (cfg.fine_outer_iters > 0) {
        CalibConfig fine_cfg = cfg;
        fine_cfg.outer_iters = cfg.fine_outer_iters;
        fine_cfg.init_cor = false;  // the coarse stage already placed the shifts
        out.fine = calibrate(b, out.coarse.params, grid, BlobProfile(blob), fine_cfg);
    } else {
        SolverConfig fine = cfg.inner;
        fine.max_iters =
            cfg.first_solve_iters >= 0 ? cfg.first_solve_iters : 2 * cfg.inner.max_iters;
        SolveResult sol = solve_volume(b, out.coarse.params, grid, BlobProfile(blob), fine);
        out.fine.params = out.coarse.params;
        out.fine.volume = std::move(sol.coeffs);
        out.fine.cost_trace = sol.cost_trace.empty()
                                  ? std::vector<double>{}
                                  : std::vector<double>{sol.cost_trace.back()};
        out.fine.trajectory = {out.coarse.params};
        out.fine.converged = out.coarse.converged;
    }
    out.params = out.fine.params;
    out.fine_volume = out.fine.volume;
    return out;
}

}  // namespace optcalib
