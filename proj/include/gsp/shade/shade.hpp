#pragma once

#include "gsp/iterquery/iterquery.hpp"
#include "gsp/shade/mesh.hpp"
#include "gsp/shade/optics.hpp"
#include "gsp/splat/splat.hpp"

namespace gsp {

// Two-refraction light path through the proxy mesh with at most one total
// internal reflection.
struct PathTrace {
    Vec3 entry_point = Vec3::Zero();
    Vec3 entry_normal = Vec3::Zero();
    Vec3 exit_point = Vec3::Zero();
    Vec3 exit_normal = Vec3::Zero();
    Vec3 exit_dir = Vec3::Zero();
    std::array<Vec3, 3> points{}; // entry, [bounce,] exit
    int point_count = 0;
    int tir_count = 0;           // 0 or 1
    double internal_length = 0.0;
    bool valid = false;
    // Triangles crossed, used by the fit gradients to keep the chain
    // piecewise-smooth bookkeeping explicit.
    int exit_triangle = -1, bounce_triangle = -1;
};

// Refracts the view ray into the object at (entry, normal), marches inside
// the proxy mesh and exits after the second refraction. On a first total
// internal reflection the path reflects once and tries again; a second TIR
// or a mesh leak yields an invalid path.
PathTrace trace_transparent_path(const BvhIndex& bvh, const Vec3& entry, const Vec3& normal,
                                 const Ray& view_ray, double eta, double offset_scale = 1e-4);

struct ShadeOptions {
    IterQueryOptions query;
    Vec3 background = Vec3::Zero();
    bool iterquery_enabled = true; // false falls back to the T=1 naive average
    bool absorption = true;        // tint refraction by the blended base color
    double mesh_offset_rel = 1e-4; // ray offset, relative to the mesh bbox diagonal
    double min_normal_len = 0.1;   // below this the blended normal is unusable
    bool decompose = false;        // also write reflection/refraction components
};

struct ShadeStats {
    int64_t invalid_paths = 0;
    int64_t degenerate_normals = 0;
};

struct ShadeResult {
    Image color;      // final composite
    Image reflection; // filled when opts.decompose
    Image refraction; // filled when opts.decompose
    ShadeStats stats;
};

// Physically-based deferred shading of a transparent-object G-buffer.
// env_color, when non-null, supplies the per-pixel environment composite
// (same resolution as the G-buffer); otherwise the background constant is
// used for uncovered regions.
ShadeResult shade_deferred(const GBuffer& gbuffer, const ProbeGrid& grid, const BvhIndex& bvh,
                           const Camera& camera, const ShadeOptions& opts,
                           const Image* env_color = nullptr);

// Shades one pixel given already-blended attributes; exposed for the
// deferred/forward separation tests and reused by the fit gradients.
struct PixelInputs {
    Vec3 normal_blend = Vec3::Zero(); // raw (unnormalized) blended normal
    double transparency = 1.0;
    double ior = 1.5;
    double metallic = 0.0;
    Vec3 base_color = Vec3(1, 1, 1);
    Vec3 hit_point = Vec3::Zero();
};

// Intermediate shading quantities for the fit backward pass.
struct PixelShadeDetail {
    double blend_s = 0.0; // transparent branch weight
    double fresnel = 0.0;
    double cos_theta = 0.0;
    Vec3 normal = Vec3::Zero(); // normalized, camera-facing
    Vec3 l_refl = Vec3::Zero();
    Vec3 l_refr = Vec3::Zero();
    Vec3 tint = Vec3(1, 1, 1);
    Vec3 ambient = Vec3::Zero();
    Vec3 mirror = Vec3::Zero();
    Vec3 transparent = Vec3::Zero();
    Vec3 opaque = Vec3::Zero();
    PathTrace path;
    bool degenerate_normal = false;
};

Vec3 shade_pixel(const PixelInputs& in, const Ray& view_ray, const ProbeGrid& grid,
                 const BvhIndex& bvh, const ShadeOptions& opts, ShadeStats* stats = nullptr,
                 Vec3* reflection_out = nullptr, Vec3* refraction_out = nullptr,
                 PixelShadeDetail* detail = nullptr);

// Forward-shading ablation: shade each primitive on its own attributes and
// alpha-blend the shaded colors (shade first, blend after).
Image shade_forward(const std::vector<GaussianPrimitive>& object, const ProbeGrid& grid,
                    const BvhIndex& bvh, const Camera& camera, const ShadeOptions& opts,
                    const Image* env_color = nullptr);

} // namespace gsp
