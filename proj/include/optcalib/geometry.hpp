#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "optcalib/errors.hpp"

namespace optcalib {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double norm() const { return std::hypot(x, y); }
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
};

// Row-major 3x3 matrix, just enough for rigid rotations.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double operator()(int r, int c) const { return m[3 * r + c]; }
    double& operator()(int r, int c) { return m[3 * r + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
};

// Pose of one projection. Angles in radians, shift in world units.
struct Pose {
    double phi = 0.0;
    double psi1 = 0.0;
    double psi2 = 0.0;
    Vec2 t{};
};

// All geometric unknowns of the acquisition: per-projection rotation angles
// phi, out-of-plane axis tilt psi1, in-plane detector tilt psi2, and the
// detector shift t (one global value or one per projection). Angles are kept
// in radians and shifts in world units; degree/pixel conversions happen at
// the CLI and file boundaries.
struct GeometryParams {
    std::vector<double> phi;
    double psi1 = 0.0;
    double psi2 = 0.0;
    std::vector<Vec2> t{{0.0, 0.0}};  // size 1 = global, size P = per projection

    std::size_t projections() const { return phi.size(); }
    bool per_projection_shift() const { return t.size() > 1; }

    const Vec2& shift(std::size_t i) const { return t.size() == 1 ? t[0] : t[i]; }
    Vec2& shift(std::size_t i) { return t.size() == 1 ? t[0] : t[i]; }

    Pose pose(std::size_t i) const { return {phi[i], psi1, psi2, shift(i)}; }

    void validate() const;
};

// Regular grid of blob centers. The grid is centered on the world origin:
// x(i) = (i - (nx-1)/2) * h, and likewise for y and z.
struct VolumeGrid {
    int nx = 0, ny = 0, nz = 0;
    double h = 1.0;  // voxel spacing, world units

    std::size_t size() const {
        return static_cast<std::size_t>(nx) * ny * nz;
    }
    double x(int i) const { return (i - 0.5 * (nx - 1)) * h; }
    double y(int i) const { return (i - 0.5 * (ny - 1)) * h; }
    double z(int i) const { return (i - 0.5 * (nz - 1)) * h; }
    // Storage order: [iz][iy][ix], ix fastest.
    std::size_t index(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(iz) * ny + iy) * nx + ix;
    }
    void validate() const;
};

// Detector sampling grid, centered on the detector origin O'.
struct DetectorGrid {
    int nxi = 0, neta = 0;
    double spacing = 1.0;  // pixel spacing, world units

    std::size_t pixels() const { return static_cast<std::size_t>(nxi) * neta; }
    double xi(int j) const { return (j - 0.5 * (nxi - 1)) * spacing; }
    double eta(int j) const { return (j - 0.5 * (neta - 1)) * spacing; }
    // Fractional pixel index of a world coordinate.
    double xi_index(double xi_w) const { return xi_w / spacing + 0.5 * (nxi - 1); }
    double eta_index(double eta_w) const { return eta_w / spacing + 0.5 * (neta - 1); }
    void validate() const;
};

// Rotation by phi about the tilted axis a(psi1) = (sin psi1, 0, cos psi1).
Mat3 rotation_matrix(double phi, double psi1);

// Affine map u -> detector coordinates for one pose:
//   v = Rot2(psi2) * drop_y(R(phi, psi1) * u) + t
// Rot2 is counterclockwise positive when looking along -y.
struct ProjectionMap {
    Vec3 row_xi{};   // v.x = row_xi . u + t.x
    Vec3 row_eta{};  // v.y = row_eta . u + t.y
    Vec2 t{};

    Vec2 apply(const Vec3& u) const {
        return {row_xi.dot(u) + t.x, row_eta.dot(u) + t.y};
    }
};

ProjectionMap projection_map(const Pose& pose);

// Detector coordinates (world units) of a sample-space point under a pose.
Vec2 project_point(const Vec3& u, const Pose& pose);

// P angles uniformly covering [0, 2*pi).
std::vector<double> uniform_angles(std::size_t count);

}  // namespace optcalib
