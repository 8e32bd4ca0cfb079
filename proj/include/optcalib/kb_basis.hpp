#pragma once

#include <cstddef>
#include <vector>

#include "optcalib/errors.hpp"

namespace optcalib {

// Kaiser-Bessel blob parameters. radius is the compact support in world
// units; alpha controls the taper; m is the smoothness order (m >= 1 keeps
// the line-integral footprint continuous at |s| = radius).
struct BlobParams {
    double radius = 2.0;
    double alpha = 10.8;
    int m = 2;

    void validate() const;
};

// Blob value at distance r from the center:
//   (1/I_m(alpha)) * w^m * I_m(alpha * w),  w = sqrt(1 - (r/radius)^2)
// and 0 outside the support. Normalized so the center value is 1.
double blob_value(const BlobParams& p, double r);

// Line integral of the blob along a ray passing at perpendicular distance s:
//   (radius/I_m(alpha)) * sqrt(2*pi/alpha) * w^(m+1/2) * I_(m+1/2)(alpha * w)
double blob_xray_profile(const BlobParams& p, double s);

// Precomputed footprint of the blob for the projector hot loop. The profile
// is tabulated against the squared offset (uniform in s^2, which still covers
// s in [0, radius] monotonically) and evaluated with linear interpolation;
// the profile is analytic in s^2 so this samples it where it is smoothest.
class BlobProfile {
  public:
    static constexpr std::size_t kDefaultTableSize = 4096;

    explicit BlobProfile(const BlobParams& params,
                         std::size_t table_size = kDefaultTableSize);

    const BlobParams& params() const { return params_; }
    double radius() const { return params_.radius; }
    double radius_sq() const { return radius_sq_; }
    std::size_t table_size() const { return value_.size(); }
    double center_value() const { return value_[0]; }

    // Footprint at squared offset s2; callers are expected to have culled
    // s2 >= radius^2 already, but out-of-support queries return 0.
    double eval_sq(double s2) const {
        if (s2 >= radius_sq_) return 0.0;
        const double u = s2 * inv_step_;
        const std::size_t k = static_cast<std::size_t>(u);
        return value_[k] + slope_[k] * (u - static_cast<double>(k));
    }

    double eval(double s) const { return eval_sq(s * s); }

  private:
    BlobParams params_;
    double radius_sq_;
    double inv_step_;            // table cells per unit s^2
    std::vector<double> value_;  // profile at q_k = k * step
    std::vector<double> slope_;  // value_[k+1] - value_[k]
};

}  // namespace optcalib
