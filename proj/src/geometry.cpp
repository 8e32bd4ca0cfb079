#include "optcalib/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace optcalib {

namespace {

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

void GeometryParams::validate() const {
    if (phi.empty()) throw ConfigError("geometry: needs at least one projection angle");
    if (!all_finite(phi) || !std::isfinite(psi1) || !std::isfinite(psi2))
        throw ConfigError("geometry: non-finite parameter");
    if (std::abs(psi1) >= std::numbers::pi / 2 || std::abs(psi2) >= std::numbers::pi / 2)
        throw ConfigError("geometry: |psi1| and |psi2| must be < pi/2");
    if (t.size() != 1 && t.size() != phi.size())
        throw ConfigError("geometry: shift list must be global or one per projection, got " +
                          std::to_string(t.size()) + " for P=" + std::to_string(phi.size()));
    for (const Vec2& s : t)
        if (!std::isfinite(s.x) || !std::isfinite(s.y))
            throw ConfigError("geometry: non-finite shift");
}

void VolumeGrid::validate() const {
    if (nx < 1 || ny < 1 || nz < 1) throw ConfigError("volume grid: dims must be >= 1");
    if (!(h > 0.0)) throw ConfigError("volume grid: spacing must be > 0");
}

void DetectorGrid::validate() const {
    if (nxi < 1 || neta < 1) throw ConfigError("detector grid: dims must be >= 1");
    if (!(spacing > 0.0)) throw ConfigError("detector grid: spacing must be > 0");
}

Mat3 rotation_matrix(double phi, double psi1) {
    // Rodrigues formula about the unit axis a = (sin psi1, 0, cos psi1).
    const double ax = std::sin(psi1);
    const double az = std::cos(psi1);
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double k = 1.0 - c;

    Mat3 r;
    r(0, 0) = c + ax * ax * k;
    r(0, 1) = -az * s;
    r(0, 2) = ax * az * k;
    r(1, 0) = az * s;
    r(1, 1) = c;
    r(1, 2) = -ax * s;
    r(2, 0) = ax * az * k;
    r(2, 1) = ax * s;
    r(2, 2) = c + az * az * k;
    return r;
}

ProjectionMap projection_map(const Pose& pose) {
    const Mat3 r = rotation_matrix(pose.phi, pose.psi1);
    const double c2 = std::cos(pose.psi2);
    const double s2 = std::sin(pose.psi2);
    // Drop the y (optical axis) component of R*u, then rotate in-plane by psi2.
    ProjectionMap map;
    map.row_xi = {c2 * r(0, 0) - s2 * r(2, 0), c2 * r(0, 1) - s2 * r(2, 1),
                  c2 * r(0, 2) - s2 * r(2, 2)};
    map.row_eta = {s2 * r(0, 0) + c2 * r(2, 0), s2 * r(0, 1) + c2 * r(2, 1),
                   s2 * r(0, 2) + c2 * r(2, 2)};
    map.t = pose.t;
    return map;
}

Vec2 project_point(const Vec3& u, const Pose& pose) {
    return projection_map(pose).apply(u);
}

std::vector<double> uniform_angles(std::size_t count) {
    std::vector<double> phi(count);
    for (std::size_t i = 0; i < count; ++i)
        phi[i] = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(count);
    return phi;
}

}  // namespace optcalib
