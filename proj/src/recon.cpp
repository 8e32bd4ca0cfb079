#include "optcalib/recon.hpp"

#include "optcalib/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace optcalib {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
    for (size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericalError(std::string(what) + " became non-finite");
}

SolveResult solve_nonneg(const ProjectionStack& b, const GeometryParams& g,
                         const VolumeGrid& grid, const BlobProfile& blob,
                         const SolverConfig& cfg, const VolumeCoeffs* init);

}  // namespace

void SolverConfig::validate() const {
    if (max_iters < 0) throw ConfigError("solver max_iters must be >= 0");
    if (!(tolerance > 0)) throw ConfigError("solver tolerance must be > 0");
}

double data_cost(const VolumeCoeffs& c, const GeometryParams& g, const ProjectionStack& b,
                 const BlobProfile& blob) {
    ProjectionStack model = forward(c, g, b.det, blob);
    double s = 0.0;
    for (size_t i = 0; i < b.data.size(); ++i) {
        const double d = model.data[i] - b.data[i];
        s += d * d;
    }
    return 0.5 * s;
}

SolveResult solve_volume(const ProjectionStack& b, const GeometryParams& g,
                         const VolumeGrid& grid, const BlobProfile& blob,
                         const SolverConfig& cfg, const VolumeCoeffs* init) {
    cfg.validate();
    g.validate();
    if (cfg.nonneg) return solve_nonneg(b, g, grid, blob, cfg, init);

    SolveResult res;
    res.coeffs = init ? *init : VolumeCoeffs(grid);
    if (init && (init->grid.nx != grid.nx || init->grid.ny != grid.ny || init->grid.nz != grid.nz))
        throw ConfigError("warm-start volume does not match the requested grid");

    // r = b - H x, z = H^T r, p = z
    ProjectionStack r = forward(res.coeffs, g, b.det, blob);
    for (size_t i = 0; i < r.data.size(); ++i) r.data[i] = b.data[i] - r.data[i];

    Volume z = adjoint(r, g, grid, blob);

    double ref_norm;  // ||H^T b|| for the relative stopping rule
    if (init) {
        const Volume htb = adjoint(b, g, grid, blob);
        ref_norm = std::sqrt(dot(htb.data, htb.data));
    } else {
        ref_norm = std::sqrt(dot(z.data, z.data));
    }

    double cost = 0.5 * dot(r.data, r.data);
    check_finite(cost, "cost");
    res.cost_trace.push_back(cost);

    if (ref_norm == 0.0) {  // b in the null space of H^T (e.g. b = 0 with x = 0)
        res.converged = std::sqrt(dot(z.data, z.data)) == 0.0;
        return res;
    }

    Volume p = z;
    double zz = dot(z.data, z.data);

    for (int k = 0; k < cfg.max_iters; ++k) {
        if (std::sqrt(zz) <= cfg.tolerance * ref_norm) {
            res.converged = true;
            break;
        }
        ProjectionStack w = forward(p, g, b.det, blob);
        const double ww = dot(w.data, w.data);
        if (ww == 0.0) break;  // search direction annihilated by H

        const double alpha = zz / ww;
        axpy(alpha, p.data, res.coeffs.data);
        axpy(-alpha, w.data, r.data);

        const double new_cost = 0.5 * dot(r.data, r.data);
        check_finite(new_cost, "cost");
        if (new_cost > cost) break;  // rounding floor reached; keep the trace monotone
        cost = new_cost;
        res.cost_trace.push_back(cost);
        res.iterations = k + 1;

        z = adjoint(r, g, grid, blob);
        const double zz_new = dot(z.data, z.data);
        check_finite(zz_new, "normal residual");
        const double beta = zz_new / zz;
        zz = zz_new;
        for (size_t i = 0; i < p.data.size(); ++i) p.data[i] = z.data[i] + beta * p.data[i];

        if (cfg.verbosity > 0)
            std::fprintf(stderr, "cg iter %d  cost %.6e  normres %.3e\n", k + 1, cost,
                         std::sqrt(zz) / ref_norm);
    }
    if (!res.converged && std::sqrt(zz) <= cfg.tolerance * ref_norm) res.converged = true;
    return res;
}

namespace {

// Projected gradient with backtracking for the non-negativity constraint.
SolveResult solve_nonneg(const ProjectionStack& b, const GeometryParams& g,
                         const VolumeGrid& grid, const BlobProfile& blob,
                         const SolverConfig& cfg, const VolumeCoeffs* init) {
    SolveResult res;
    res.coeffs = init ? *init : VolumeCoeffs(grid);
    for (double& v : res.coeffs.data) v = std::max(v, 0.0);

    auto residual = [&](const VolumeCoeffs& x, ProjectionStack& r) {
        r = forward(x, g, b.det, blob);
        double s = 0.0;
        for (size_t i = 0; i < r.data.size(); ++i) {
            r.data[i] = b.data[i] - r.data[i];
            s += r.data[i] * r.data[i];
        }
        return 0.5 * s;
    };

    ProjectionStack r(b.det, b.count);
    double cost = residual(res.coeffs, r);
    check_finite(cost, "cost");
    res.cost_trace.push_back(cost);

    double step = 1.0;
    for (int k = 0; k < cfg.max_iters; ++k) {
        const Volume grad = adjoint(r, g, grid, blob);  // H^T r = -dJ/dx
        VolumeCoeffs trial(grid);
        double trial_cost = cost;
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
            double decrease_bound = 0.0;  // <g, x - x_trial> with g = -grad
            for (size_t i = 0; i < trial.data.size(); ++i) {
                trial.data[i] = std::max(res.coeffs.data[i] + step * grad.data[i], 0.0);
                decrease_bound += grad.data[i] * (trial.data[i] - res.coeffs.data[i]);
            }
            trial_cost = residual(trial, r);
            check_finite(trial_cost, "cost");
            if (trial_cost <= cost - 1e-4 * decrease_bound) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            residual(res.coeffs, r);  // restore r for the current iterate
            break;
        }
        double move = 0.0;
        for (size_t i = 0; i < trial.data.size(); ++i)
            move = std::max(move, std::abs(trial.data[i] - res.coeffs.data[i]));
        res.coeffs.data.swap(trial.data);
        cost = trial_cost;
        res.cost_trace.push_back(cost);
        res.iterations = k + 1;
        step *= 1.5;

        double scale = 0.0;
        for (double v : res.coeffs.data) scale = std::max(scale, std::abs(v));
        if (move <= cfg.tolerance * std::max(scale, 1e-30)) {
            res.converged = true;
            break;
        }
        if (cfg.verbosity > 0)
            std::fprintf(stderr, "pg iter %d  cost %.6e  step %.3e\n", k + 1, cost, step);
    }
    return res;
}

}  // namespace

}  // namespace optcalib
