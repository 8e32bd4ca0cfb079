#include "optcalib/fbp.hpp"

#include "optcalib/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <utility>
#include <vector>

namespace optcalib {

namespace {

constexpr double kPi = std::numbers::pi;

int pad_length(int n) {
    int l = 1;
    while (l < 2 * n) l <<= 1;
    return l;
}

// In-place Ram-Lak convolution of nrows contiguous rows of length n:
// q = spacing * (p .conv. h), h(0) = 1/(4d^2), h(odd k) = -1/(pi k d)^2.
// Zero padding to 2n keeps the circular convolution linear over the output.
void ramp_filter_rows(double* rows, std::size_t nrows, int n, double spacing) {
    const int l = pad_length(n);
    const int nc = l / 2 + 1;
    double* buf = fftw_alloc_real(l);
    fftw_complex* freq = fftw_alloc_complex(nc);
    fftw_complex* kernel = fftw_alloc_complex(nc);
    fftw_plan fwd, bwd;
    // FFTW planning is not thread-safe; execution on distinct buffers is.
#pragma omp critical(optcalib_fftw)
    {
        fwd = fftw_plan_dft_r2c_1d(l, buf, freq, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_c2r_1d(l, freq, buf, FFTW_ESTIMATE);
    }

    std::fill(buf, buf + l, 0.0);
    const double inv = 1.0 / (spacing * spacing);
    buf[0] = 0.25 * inv;
    for (int k = 1; k < n; k += 2) {
        const double v = -inv / (kPi * kPi * k * k);
        buf[k] = v;
        buf[l - k] = v;
    }
    fftw_execute_dft_r2c(fwd, buf, kernel);

    const double scale = spacing / l;  // convolution step times FFT normalization
    for (std::size_t r = 0; r < nrows; ++r) {
        double* row = rows + r * n;
        std::memcpy(buf, row, sizeof(double) * n);
        std::fill(buf + n, buf + l, 0.0);
        fftw_execute_dft_r2c(fwd, buf, freq);
        for (int k = 0; k < nc; ++k) {
            const double re = freq[k][0] * kernel[k][0] - freq[k][1] * kernel[k][1];
            const double im = freq[k][0] * kernel[k][1] + freq[k][1] * kernel[k][0];
            freq[k][0] = re;
            freq[k][1] = im;
        }
        fftw_execute_dft_c2r(bwd, freq, buf);
        for (int j = 0; j < n; ++j) row[j] = buf[j] * scale;
    }

#pragma omp critical(optcalib_fftw)
    {
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(bwd);
    }
    fftw_free(buf);
    fftw_free(freq);
    fftw_free(kernel);
}

// out[iy*nx+ix] += (pi/P) * sum_p lerp(rows_p, s + shift_x), s = x cos - y sin.
void backproject(const double* rows, int p_count, int n, double spacing,
                 const std::vector<double>& angles, double shift_x, int nx, int ny,
                 double h, double* out) {
    const double weight = kPi / p_count;
    const double cx = 0.5 * (nx - 1), cy = 0.5 * (ny - 1);
    const double center = 0.5 * (n - 1);
    for (int p = 0; p < p_count; ++p) {
        const double c = std::cos(angles[p]);
        const double s = std::sin(angles[p]);
        const double* row = rows + static_cast<std::size_t>(p) * n;
        for (int iy = 0; iy < ny; ++iy) {
            const double y = (iy - cy) * h;
            double u = ((-cx * h * c - y * s) + shift_x) / spacing + center;
            const double du = c * h / spacing;
            double* line = out + static_cast<std::size_t>(iy) * nx;
            for (int ix = 0; ix < nx; ++ix, u += du) {
                const int j0 = static_cast<int>(std::floor(u));
                if (j0 < -1 || j0 > n - 1) continue;
                const double w = u - j0;
                double v = 0.0;
                if (j0 >= 0) v += (1.0 - w) * row[j0];
                if (j0 + 1 < n && j0 + 1 >= 0) v += w * row[j0 + 1];
                line[ix] += weight * v;
            }
        }
    }
}

void check_angles(const std::vector<double>& angles) {
    if (angles.size() < 2) throw ConfigError("FBP needs at least two projection angles");
    for (std::size_t i = 0; i < angles.size(); ++i) {
        if (!std::isfinite(angles[i])) throw ConfigError("non-finite projection angle");
        if (angles[i] < 0 || angles[i] >= 2 * kPi)
            throw ConfigError("projection angles must lie in [0, 2*pi)");
        if (i > 0 && angles[i] <= angles[i - 1])
            throw ConfigError("projection angles must be strictly increasing");
    }
}

double pick_peak(const std::vector<double>& c, int maxlag, double spacing) {
    int best = 0;
    for (std::size_t i = 1; i < c.size(); ++i)
        if (c[i] > c[best]) best = static_cast<int>(i);
    double lag = best - maxlag;
    if (best > 0 && best + 1 < static_cast<int>(c.size())) {
        const double denom = c[best - 1] - 2.0 * c[best] + c[best + 1];
        if (denom < 0) lag += 0.5 * (c[best - 1] - c[best + 1]) / denom;
    }
    return 0.5 * lag * spacing;  // mirrored correlation peaks at twice the shift
}

}  // namespace

void Sinogram2D::validate() const {
    if (n_s < 1) throw ConfigError("sinogram needs at least one detector bin");
    if (!(spacing > 0)) throw ConfigError("sinogram spacing must be > 0");
    check_angles(angles);
    if (data.size() != angles.size() * static_cast<std::size_t>(n_s))
        throw ConfigError("sinogram data size does not match (P, n_s)");
    for (double v : data)
        if (!std::isfinite(v)) throw ConfigError("non-finite sinogram value");
}

std::vector<double> fbp_slice(const Sinogram2D& s, int nx, int ny, double h,
                              double shift_x) {
    s.validate();
    if (nx < 1 || ny < 1 || !(h > 0)) throw ConfigError("bad FBP output grid");
    std::vector<double> rows = s.data;
    ramp_filter_rows(rows.data(), s.angles.size(), s.n_s, s.spacing);
    std::vector<double> img(static_cast<std::size_t>(nx) * ny, 0.0);
    backproject(rows.data(), static_cast<int>(s.angles.size()), s.n_s, s.spacing,
                s.angles, shift_x, nx, ny, h, img.data());
    return img;
}

double estimate_cor_shift(const ProjectionStack& b, const std::vector<double>& angles) {
    if (angles.size() != b.count)
        throw ConfigError("angle list does not match the projection count");
    if (b.count < 2) throw ConfigError("COR estimation needs at least two projections");

    // Opposing pairs: nearest angle to phi + pi, accepted within half a step.
    const double step = 2 * kPi / static_cast<double>(b.count);
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t p = 0; p < b.count; ++p) {
        int best = -1;
        double best_err = 1e30;
        for (std::size_t q = 0; q < b.count; ++q) {
            if (q == p) continue;
            double d = std::remainder(angles[q] - angles[p] - kPi, 2 * kPi);
            if (std::abs(d) < best_err) {
                best_err = std::abs(d);
                best = static_cast<int>(q);
            }
        }
        if (best >= 0 && best_err <= 0.51 * step && static_cast<int>(p) < best)
            pairs.emplace_back(static_cast<int>(p), best);
    }
    if (pairs.empty())
        throw ConfigError("no opposing projection pairs for COR estimation");

    const int n = b.det.nxi;
    const int maxlag = n / 2;
    std::vector<double> corr(2 * maxlag + 1, 0.0);
    std::vector<double> a(n), m(n);
    for (auto [p, q] : pairs) {
        for (int e = 0; e < b.det.neta; ++e) {
            double mean_a = 0.0, mean_m = 0.0;
            for (int j = 0; j < n; ++j) {
                a[j] = b.at(p, e, j);
                m[j] = b.at(q, e, n - 1 - j);  // mirrored opposite projection
                mean_a += a[j];
                mean_m += m[j];
            }
            mean_a /= n;
            mean_m /= n;
            for (int j = 0; j < n; ++j) {
                a[j] -= mean_a;
                m[j] -= mean_m;
            }
            for (int lag = -maxlag; lag <= maxlag; ++lag) {
                double s = 0.0;
                const int k0 = std::max(0, lag), k1 = std::min(n, n + lag);
                for (int k = k0; k < k1; ++k) s += a[k] * m[k - lag];
                corr[lag + maxlag] += s;
            }
        }
    }
    return pick_peak(corr, maxlag, b.det.spacing);
}

double estimate_cor_shift(const Sinogram2D& s) {
    s.validate();
    DetectorGrid det{s.n_s, 1, s.spacing};
    ProjectionStack stack(det, s.angles.size());
    stack.data = s.data;
    return estimate_cor_shift(stack, s.angles);
}

Volume fbp_stack(const ProjectionStack& b, const std::vector<double>& angles,
                 const VolumeGrid& grid, bool shift_correct, double* shift_out) {
    check_angles(angles);
    if (angles.size() != b.count)
        throw ConfigError("angle list does not match the projection count");

    double shift = 0.0;
    if (shift_correct) shift = estimate_cor_shift(b, angles);
    if (shift_out) *shift_out = shift;

    ProjectionStack filtered = b;
    ramp_filter_rows(filtered.data.data(), b.count * b.det.neta, b.det.nxi,
                     b.det.spacing);

    Volume out(grid);
    const int p_count = static_cast<int>(b.count);
    const int n = b.det.nxi;
#pragma omp parallel for schedule(dynamic)
    for (int iz = 0; iz < grid.nz; ++iz) {
        // Row for this slice: linear interpolation between adjacent eta rows.
        const double re = grid.z(iz) / b.det.spacing + 0.5 * (b.det.neta - 1);
        const int e0 = static_cast<int>(std::floor(re));
        const double w = re - e0;
        std::vector<double> rows(static_cast<std::size_t>(p_count) * n, 0.0);
        bool any = false;
        for (int p = 0; p < p_count; ++p)
            for (int j = 0; j < n; ++j) {
                double v = 0.0;
                if (e0 >= 0 && e0 < b.det.neta) v += (1.0 - w) * filtered.at(p, e0, j);
                if (e0 + 1 >= 0 && e0 + 1 < b.det.neta) v += w * filtered.at(p, e0 + 1, j);
                rows[static_cast<std::size_t>(p) * n + j] = v;
                any = any || v != 0.0;
            }
        if (!any) continue;
        backproject(rows.data(), p_count, n, b.det.spacing, angles, shift, grid.nx,
                    grid.ny, grid.h, &out.data[static_cast<std::size_t>(iz) * grid.ny * grid.nx]);
    }
    return out;
}

}  // namespace optcalib
