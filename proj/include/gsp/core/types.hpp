#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gsp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

constexpr double kPi = 3.14159265358979323846;

struct Aabb {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();

    Vec3 extent() const { return hi - lo; }
    double diagonal() const { return extent().norm(); }
    Aabb inflated(double margin) const {
        return {lo - Vec3(margin, margin, margin), hi + Vec3(margin, margin, margin)};
    }
    void expand(const Vec3& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    void expand(const Aabb& b) {
        lo = lo.cwiseMin(b.lo);
        hi = hi.cwiseMax(b.hi);
    }
    bool contains(const Vec3& p) const {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
    static Aabb empty() {
        constexpr double inf = std::numeric_limits<double>::infinity();
        return {Vec3::Constant(inf), Vec3::Constant(-inf)};
    }
};

// Surface/material attributes carried by each splat in addition to the
// usual shape parameters.
struct TransparentAttributes {
    Vec3 normal = Vec3(0, 0, 1);     // unit length
    double roughness = 0.0;          // [0,1]
    double metallic = 0.0;           // [0,1]
    double transparency = 0.0;       // [0,1]; 0 = opaque, 1 = glass
    double ior = 1.5;                // clamped to [1,3]
    Vec3 base_color = Vec3(1, 1, 1); // [0,1]^3, transmittance tint
};

// 48 spherical-harmonics coefficients: 16 basis functions x RGB,
// interleaved per basis function (c0.r, c0.g, c0.b, c1.r, ...).
// DC first, then bands 1..3 in the usual splatting order.
using ShCoeffs = std::array<float, 48>;

struct GaussianPrimitive {
    Vec3 position = Vec3::Zero();
    Vec3 scale = Vec3(1, 1, 1); // per-axis stddev, > 0
    Quat rotation = Quat::Identity();
    double opacity = 1.0; // [0,1]
    ShCoeffs sh{};
    TransparentAttributes attrs;
};

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 dir = Vec3(0, 0, 1); // unit length

    Vec3 at(double t) const { return origin + t * dir; }
};

// Pinhole camera. Convention: x right, y down, z forward in camera space
// (world-to-camera p_cam = R * p_world + t).
struct Camera {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double fx = 1, fy = 1;
    double cx = 0, cy = 0;
    int width = 0, height = 0;

    Vec3 position() const { return -(rotation.transpose() * translation); }

    Vec3 to_camera(const Vec3& p_world) const { return rotation * p_world + translation; }

    // World-space ray through pixel-center coordinates (px, py are
    // continuous; pass ix + 0.5 for the center of pixel column ix).
    Ray ray_through(double px, double py) const {
        Vec3 d_cam((px - cx) / fx, (py - cy) / fy, 1.0);
        d_cam.normalize();
        return Ray{position(), rotation.transpose() * d_cam};
    }

    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_deg,
                          int width, int height);
};

// Thrown when a covariance cannot be inverted even after eigenvalue
// clamping (all-zero or non-finite input).
class DegenerateCovarianceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline bool is_finite(const Vec3& v) {
    return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

void validate(const GaussianPrimitive& p); // throws std::invalid_argument
void validate(const Camera& c);

} // namespace gsp
