#pragma once

#include "gsp/core/image.hpp"
#include "gsp/core/types.hpp"

#include <limits>
#include <vector>

namespace gsp {

// Equirectangular color + Euclidean-depth panorama. width == 2 * height.
// Depth uses +inf as the miss sentinel.
struct Panorama {
    int width = 0, height = 0;
    Image color; // 3ch linear
    Image depth; // 1ch, world units

    static constexpr float kMiss = std::numeric_limits<float>::infinity();

    Panorama() = default;
    Panorama(int w, int h) : width(w), height(h), color(w, h, 3), depth(w, h, 1, kMiss) {}
};

class DegeneratePositionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Differential of direction normalization mu -> mu/|mu|:
//   J = (|mu|^2 I - mu mu^T) / |mu|^3,  J mu = 0.
// This is the projection Jacobian used for splatting onto unit-sphere
// tangent planes.
Mat3 optimal_jacobian(const Vec3& mu_cam);

// Equirectangular mapping. Continuous pixel coordinates with texel centers
// at half-integer offsets: u in [0,W), v in [0,H).
//   phi = pi (2u - W) / W, theta = pi (v - H/2) / H
//   d = (sin phi cos theta, sin theta, cos theta cos phi)
Vec3 pixel_to_direction(double u, double v, int width, int height);

// Inverse mapping; azimuth wraps, poles land in rows {0, H-1} with a
// deterministic u.
Vec2 direction_to_pixel(const Vec3& d, int width, int height);

struct PanoramaOptions {
    Vec3 background = Vec3::Zero();
    double miss_alpha_threshold = 0.5; // below this the depth pixel is a miss
};

// 360-degree splatting from `center`: each primitive is projected onto the
// tangent plane of the unit sphere at its own central direction, pixel rays
// are intersected with that plane, and the tangent-plane Gaussian value
// replaces the usual screen-space one in the alpha blend. Depth blends the
// Euclidean distance to the primitive with the same weights.
Panorama render_panorama(const std::vector<GaussianPrimitive>& scene, const Vec3& center,
                         int height, int width, const PanoramaOptions& opts = {});

} // namespace gsp
