#include "optcalib/kb_basis.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace optcalib {

void BlobParams::validate() const {
    if (!(radius > 0.0)) throw ConfigError("blob: radius must be > 0");
    if (!(alpha > 0.0)) throw ConfigError("blob: alpha must be > 0");
    if (m < 1) throw ConfigError("blob: order m must be >= 1, got " + std::to_string(m));
}

double blob_value(const BlobParams& p, double r) {
    const double rel = r / p.radius;
    if (rel >= 1.0) return 0.0;
    const double w = std::sqrt(1.0 - rel * rel);
    return std::pow(w, p.m) * std::cyl_bessel_i(static_cast<double>(p.m), p.alpha * w) /
           std::cyl_bessel_i(static_cast<double>(p.m), p.alpha);
}

double blob_xray_profile(const BlobParams& p, double s) {
    const double rel = std::abs(s) / p.radius;
    if (rel >= 1.0) return 0.0;
    const double w = std::sqrt(1.0 - rel * rel);
    const double nu = p.m + 0.5;
    return p.radius * std::sqrt(2.0 * std::numbers::pi / p.alpha) *
           std::pow(w, nu) * std::cyl_bessel_i(nu, p.alpha * w) /
           std::cyl_bessel_i(static_cast<double>(p.m), p.alpha);
}

BlobProfile::BlobProfile(const BlobParams& params, std::size_t table_size)
    : params_(params), radius_sq_(params.radius * params.radius) {
    params_.validate();
    if (table_size < 512) throw ConfigError("blob: footprint table needs >= 512 samples");

    const double step = radius_sq_ / static_cast<double>(table_size - 1);
    inv_step_ = 1.0 / step;
    value_.resize(table_size);
    for (std::size_t k = 0; k < table_size; ++k)
        value_[k] = blob_xray_profile(params_, std::sqrt(static_cast<double>(k) * step));
    value_.back() = 0.0;  // exact compact support

    slope_.resize(table_size);
    for (std::size_t k = 0; k + 1 < table_size; ++k) slope_[k] = value_[k + 1] - value_[k];
    slope_.back() = 0.0;
}

}  // namespace optcalib
