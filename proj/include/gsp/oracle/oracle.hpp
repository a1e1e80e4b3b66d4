#pragma once

#include "gsp/core/image.hpp"
#include "gsp/core/rng.hpp"
#include "gsp/core/types.hpp"
#include "gsp/panorama/panorama.hpp"
#include "gsp/shade/mesh.hpp"

#include <optional>
#include <vector>

namespace gsp {
namespace oracle {

enum class TextureKind { Constant, Checker, Gradient };

// Deterministic procedural texture on a surface's local (u, v) chart.
struct SurfaceTexture {
    TextureKind kind = TextureKind::Constant;
    Vec3 color_a = Vec3(0.9, 0.9, 0.9);
    Vec3 color_b = Vec3(0.1, 0.1, 0.1);
    double checker_scale = 8.0; // cells per unit length

    Vec3 albedo(double u, double v) const;
    // Exact mean albedo over the axis-aligned rectangle [u0,u1]x[v0,v1];
    // used to anti-alias synthesized splat colors.
    Vec3 albedo_box_average(double u0, double u1, double v0, double v1) const;
};

// Finite axis-aligned rectangle (a wall of the box room, or a free plane).
struct Rect {
    int axis = 2;        // normal axis
    double offset = 0.0; // coordinate along `axis`
    double u_lo = -1, u_hi = 1, v_lo = -1, v_hi = 1; // extents along the other two axes
    SurfaceTexture texture;
    Vec3 emission = Vec3::Zero();

    // The two in-plane axes, in the fixed order (axis+1)%3, (axis+2)%3.
    int u_axis() const { return (axis + 1) % 3; }
    int v_axis() const { return (axis + 2) % 3; }
};

struct Sphere {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
    bool glass = true;
    double eta = 1.5;             // glass only
    Vec3 absorption = Vec3::Zero(); // Beer-Lambert sigma per channel, glass only
    SurfaceTexture texture;       // diffuse only
};

// Closed-form scene for ground truth: diffuse rectangles and spheres lit by
// a constant dome, plus at most one convex glass sphere.
struct AnalyticScene {
    std::vector<Rect> rects;
    std::vector<Sphere> spheres;
    Vec3 dome = Vec3(1, 1, 1);
    bool fresnel_at_exit = false; // sensitivity study flag, default matches Eq-7-style entry-only

    void validate_scene() const; // throws on multiple glass objects
};

// Axis-aligned box room [-h,h]^3 with checkered walls (faces point inward).
AnalyticScene make_box_room(double half_extent, double checker_scale = 8.0);

struct SceneHit {
    double distance = 0.0;
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::Zero(); // oriented toward the ray origin
    bool is_glass = false;
    int rect = -1, sphere = -1;
    Vec3 albedo = Vec3::Zero();
    Vec3 emission = Vec3::Zero();
};

// Nearest surface hit; rectangles are two-sided. Glass objects are skipped
// when include_glass is false.
std::optional<SceneHit> first_hit(const AnalyticScene& scene, const Ray& ray, double t_min,
                                  bool include_glass);

// Radiance along a ray that never enters glass: first-hit albedo times the
// dome (plus emission), or the dome itself on a miss.
Vec3 env_radiance(const AnalyticScene& scene, const Ray& ray);

// Distance to the first non-glass surface; +inf on a miss. Ground truth for
// the probe-query benchmarks.
double env_distance(const AnalyticScene& scene, const Ray& ray);

// Reference renderer. Light paths are fully deterministic (delta BSDFs, no
// stochastic sampling): glass follows exactly two refractions with at most
// one internal reflection, Fresnel-weighted against the entry reflection,
// with Beer-Lambert absorption over the internal path length. spp repeats
// the identical evaluation and is kept for interface compatibility.
Image path_trace(const AnalyticScene& scene, const Camera& camera, int spp = 1);

// Exact first-hit color/depth panorama of the non-glass scene.
Panorama analytic_panorama(const AnalyticScene& scene, const Vec3& center, int height, int width);

struct EnvSynthesisOptions {
    int count = 50000;
    uint64_t seed = 1;
    double sigma_scale = 0.6;        // in-plane stddev as a fraction of cell size
    double sigma_normal_ratio = 0.1; // thin axis relative to in-plane sigma
    double opacity = 0.99;
    double backing_fraction = 0.15;  // share of count placed in a coarse layer
    double backing_offset = 0.02;    // pushed behind the surface to catch leaks
};

// Stratified surface sampling of the diffuse rectangles into flattened
// splats; colors are box-filtered albedo times the dome. Returns exactly
// `count` primitives, bit-identical for a fixed seed.
std::vector<GaussianPrimitive> synthesize_environment_gaussians(const AnalyticScene& scene,
                                                                const EnvSynthesisOptions& opts);

struct SphereSynthesisOptions {
    Vec3 center = Vec3::Zero();
    double radius = 0.3;
    double eta = 1.5;
    Vec3 base_color = Vec3(1, 1, 1);
    int count = 20000;
    uint64_t seed = 7;
    double sigma_scale = 0.8;
    double sigma_normal_ratio = 0.1;
    double opacity = 0.95;
    // Splat centers sit this many tangential sigmas inside the surface so
    // the rendered silhouette lines up with the true sphere edge.
    double surface_inset_sigmas = 1.5;
};

// Transparent splats sampled on a sphere with ground-truth attributes
// (outward radial normals, t = 1).
std::vector<GaussianPrimitive> sphere_gaussians(const SphereSynthesisOptions& opts);

// Icosphere proxy mesh with outward-facing triangles.
TriangleMesh sphere_mesh(const Vec3& center, double radius, int subdivisions);

} // namespace oracle
} // namespace gsp
