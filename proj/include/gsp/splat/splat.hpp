#pragma once

#include "gsp/core/image.hpp"
#include "gsp/core/math.hpp"
#include "gsp/core/types.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace gsp {

// A primitive projected into pixel space. sigma2d already carries the
// low-pass dilation (eigenvalues >= 0.3 px^2).
struct Splat2D {
    Vec2 center = Vec2::Zero();
    Mat2 sigma2d = Mat2::Identity();
    double depth_key = 0.0; // camera-space z of mu
    int source = -1;        // index into the scene
};

// Perspective projection of one primitive. Empty result = culled (behind
// the near plane at z <= 0.01).
std::optional<Splat2D> project_pinhole(const GaussianPrimitive& prim, const Camera& camera);

struct RenderChannels {
    bool color = true;
    bool geometry = true; // blended normal + hit distance
    bool material = true; // transparency, ior, roughness, metallic, base color
};

struct RenderOptions {
    Vec3 background = Vec3::Zero();
    RenderChannels channels;
    double coverage_threshold = 0.5;
    bool tiled = true; // false selects the per-pixel full-sort reference path
};

// Per-pixel blended attributes from one splatting pass. Attribute maps are
// normalized by the accumulated alpha so that a pixel covered by a single
// primitive reproduces that primitive's values exactly; `normal_raw` keeps
// the unnormalized blend for the normal loss.
struct GBuffer {
    int width = 0, height = 0;
    Image normal_raw;   // 3ch, world space, sum of T_i a_i n_i
    Image hit_tau;      // 1ch, blended argmax distance along the pixel ray
    Image transparency; // 1ch
    Image ior;          // 1ch
    Image roughness;    // 1ch
    Image metallic;     // 1ch
    Image base_color;   // 3ch
    Image alpha;        // 1ch, accumulated alpha in [0,1]
    Vec3 background = Vec3::Zero();
    double coverage_threshold = 0.5;

    bool covered(int x, int y) const { return alpha.at(x, y) >= coverage_threshold; }
    Vec3 hit_point(int x, int y, const Camera& cam) const {
        Ray r = cam.ray_through(x + 0.5, y + 0.5);
        return r.at(hit_tau.at(x, y));
    }
};

struct RenderResult {
    Image color; // 3ch linear radiance incl. background
    GBuffer gbuffer;
};

// Forward splatting pass: front-to-back alpha blending of SH color plus
// the G-buffer attribute channels. Per-tile depth sort on camera z with
// ties broken by primitive index; blending stops once the transmittance
// drops below 1e-4.
RenderResult rasterize(const std::vector<GaussianPrimitive>& scene, const Camera& camera,
                       const RenderOptions& opts = {});

// Per-pixel blend weights of the same pass: contributions[y*width+x] lists
// (source index, T_i a_i) front to back. The fit backward distributes pixel
// gradients through this linear operator.
using PixelContributions = std::vector<std::vector<std::pair<int, double>>>;
RenderResult rasterize_collect(const std::vector<GaussianPrimitive>& scene, const Camera& camera,
                               const RenderOptions& opts, PixelContributions& contributions);

// Generic compositor over the identical traversal: shade(source, pixel_ray)
// is computed per contribution and blended with the same T_i a_i weights.
// This is the forward-shading path (shade first, blend after). When
// out_transmittance is non-null it receives the residual transmittance
// that multiplied the background.
Image rasterize_shaded(const std::vector<GaussianPrimitive>& scene, const Camera& camera,
                       const std::function<Vec3(int source, const Ray& pixel_ray)>& shade,
                       const RenderOptions& opts = {}, Image* out_transmittance = nullptr);

} // namespace gsp
