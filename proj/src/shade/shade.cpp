#include "gsp/shade/shade.hpp"

#include "gsp/core/parallel.hpp"

#include <atomic>
#include <cmath>

namespace gsp {

PathTrace trace_transparent_path(const BvhIndex& bvh, const Vec3& entry, const Vec3& normal,
                                 const Ray& view_ray, double eta, double offset_scale) {
    PathTrace pt;
    pt.entry_point = entry;
    pt.entry_normal = normal;
    pt.points[pt.point_count++] = entry;
    const double eps = offset_scale * bvh.bbox_diagonal();

    Vec3 omega_in = -view_ray.dir;
    Vec3 n = normal.dot(omega_in) >= 0.0 ? normal : Vec3(-normal);
    // Air to denser medium: refraction always exists for eta > 1.
    auto entered = refract(omega_in, n, 1.0 / eta);
    if (!entered)
        return pt;
    Vec3 travel = *entered;
    Vec3 from = entry;

    // The blended entry point sits near, not exactly on, the proxy surface;
    // skip entering crossings and march to the first exit-facing hit.
    auto march_to_exit = [&](const Vec3& start, const Vec3& dir) -> std::optional<MeshHit> {
        Vec3 origin = start + eps * dir;
        for (int guard = 0; guard < 4; ++guard) {
            auto hit = trace_mesh(bvh, Ray{origin, dir}, 0.0);
            if (!hit || dir.dot(hit->normal) > 0.0)
                return hit;
            origin = hit->point + eps * dir;
        }
        return std::nullopt;
    };

    for (int bounce = 0; bounce < 2; ++bounce) {
        auto hit = march_to_exit(from, travel);
        if (!hit)
            return pt; // geometry leak
        pt.internal_length += (hit->point - from).norm();
        Vec3 n_inside = -hit->normal; // normal on the incident (interior) side
        auto exited = refract(-travel, n_inside, eta);
        if (exited) {
            pt.exit_point = hit->point;
            pt.exit_normal = hit->normal;
            pt.exit_dir = *exited;
            pt.points[pt.point_count++] = hit->point;
            pt.exit_triangle = hit->triangle;
            pt.valid = true;
            return pt;
        }
        if (bounce == 1)
            return pt; // second TIR: give up, reflective-only
        pt.tir_count = 1;
        pt.bounce_triangle = hit->triangle;
        pt.points[pt.point_count++] = hit->point;
        travel = reflect(-travel, n_inside); // new travel direction
        from = hit->point;
    }
    return pt;
}

namespace {

inline double smoothstep01(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

} // namespace

Vec3 shade_pixel(const PixelInputs& in, const Ray& view_ray, const ProbeGrid& grid,
                 const BvhIndex& bvh, const ShadeOptions& opts, ShadeStats* stats,
                 Vec3* reflection_out, Vec3* refraction_out, PixelShadeDetail* detail) {
    IterQueryOptions q = opts.query;
    if (!opts.iterquery_enabled)
        q.iterations = 1;
    q.background = opts.background;

    double nlen = in.normal_blend.norm();
    if (nlen < opts.min_normal_len) {
        if (stats)
            ++stats->degenerate_normals;
        if (detail)
            detail->degenerate_normal = true;
        return opts.background;
    }
    Vec3 n = in.normal_blend / nlen;
    Vec3 omega_in = -view_ray.dir;
    if (n.dot(omega_in) < 0.0)
        n = -n;
    double eta = std::clamp(in.ior, 1.0, 3.0);

    Vec3 omega_r = reflect(omega_in, n);
    auto query_color = [&](const Vec3& origin, const Vec3& dir) {
        return iter_query(grid, Ray{origin, dir}, q).color;
    };

    double s = smoothstep01((in.transparency - 0.3) / 0.4);
    Vec3 reflection = Vec3::Zero(), refraction = Vec3::Zero();
    Vec3 transparent = Vec3::Zero(), opaque = Vec3::Zero();
    double fres = 0.0;
    PathTrace path;

    if (s > 0.0) {
        fres = fresnel_schlick(n.dot(omega_in), 1.0, eta);
        Vec3 l_refl = query_color(in.hit_point, omega_r);
        path = trace_transparent_path(bvh, in.hit_point, n, view_ray, eta, opts.mesh_offset_rel);
        if (path.valid) {
            Vec3 l_refr = query_color(path.exit_point, path.exit_dir);
            Vec3 tint = opts.absorption ? in.base_color : Vec3(1, 1, 1);
            reflection = fres * l_refl;
            refraction = (1.0 - fres) * tint.cwiseProduct(l_refr);
            transparent = reflection + refraction;
            if (detail) {
                detail->l_refr = l_refr;
                detail->tint = tint;
            }
        } else {
            if (stats)
                ++stats->invalid_paths;
            reflection = l_refl;
            transparent = l_refl;
        }
        if (detail)
            detail->l_refl = l_refl;
    }
    if (s < 1.0) {
        Vec3 ambient = query_color(in.hit_point, n);
        Vec3 mirror = query_color(in.hit_point, omega_r);
        opaque = (1.0 - in.metallic) * in.base_color.cwiseProduct(ambient) + in.metallic * mirror;
        if (detail) {
            detail->ambient = ambient;
            detail->mirror = mirror;
        }
    }
    if (reflection_out)
        *reflection_out = s * reflection;
    if (refraction_out)
        *refraction_out = s * refraction;
    if (detail) {
        detail->blend_s = s;
        detail->fresnel = fres;
        detail->cos_theta = n.dot(omega_in);
        detail->normal = n;
        detail->transparent = transparent;
        detail->opaque = opaque;
        detail->path = path;
    }
    return (1.0 - s) * opaque + s * transparent;
}

ShadeResult shade_deferred(const GBuffer& gb, const ProbeGrid& grid, const BvhIndex& bvh,
                           const Camera& camera, const ShadeOptions& opts,
                           const Image* env_color) {
    const int w = gb.width, h = gb.height;
    ShadeResult res;
    res.color = Image(w, h, 3);
    if (opts.decompose) {
        res.reflection = Image(w, h, 3);
        res.refraction = Image(w, h, 3);
    }
    std::atomic<int64_t> invalid{0}, degenerate{0};

    parallel_for(0, h, [&](int64_t y) {
        ShadeStats local;
        for (int x = 0; x < w; ++x) {
            Ray ray = camera.ray_through(x + 0.5, y + 0.5);
            Vec3 env = opts.background;
            if (env_color)
                env = Vec3(env_color->at(x, static_cast<int>(y), 0),
                           env_color->at(x, static_cast<int>(y), 1),
                           env_color->at(x, static_cast<int>(y), 2));
            double alpha = gb.alpha.at(x, static_cast<int>(y));
            Vec3 out = env;
            Vec3 refl = Vec3::Zero(), refr = Vec3::Zero();
            if (gb.covered(x, static_cast<int>(y))) {
                PixelInputs in;
                const int yy = static_cast<int>(y);
                in.normal_blend = Vec3(gb.normal_raw.at(x, yy, 0), gb.normal_raw.at(x, yy, 1),
                                       gb.normal_raw.at(x, yy, 2));
                in.transparency = gb.transparency.at(x, yy);
                in.ior = gb.ior.at(x, yy);
                in.metallic = gb.metallic.at(x, yy);
                in.base_color = Vec3(gb.base_color.at(x, yy, 0), gb.base_color.at(x, yy, 1),
                                     gb.base_color.at(x, yy, 2));
                in.hit_point = gb.hit_point(x, yy, camera);
                Vec3 shaded = shade_pixel(in, ray, grid, bvh, opts, &local, &refl, &refr);
                out = alpha * shaded + (1.0 - alpha) * env;
            }
            for (int c = 0; c < 3; ++c)
                res.color.at(x, static_cast<int>(y), c) = static_cast<float>(out[c]);
            if (opts.decompose) {
                for (int c = 0; c < 3; ++c) {
                    res.reflection.at(x, static_cast<int>(y), c) =
                        static_cast<float>(alpha * refl[c]);
                    res.refraction.at(x, static_cast<int>(y), c) =
                        static_cast<float>(alpha * refr[c]);
                }
            }
        }
        invalid += local.invalid_paths;
        degenerate += local.degenerate_normals;
    });
    res.stats.invalid_paths = invalid.load();
    res.stats.degenerate_normals = degenerate.load();
    return res;
}

Image shade_forward(const std::vector<GaussianPrimitive>& object, const ProbeGrid& grid,
                    const BvhIndex& bvh, const Camera& camera, const ShadeOptions& opts,
                    const Image* env_color) {
    // Per-primitive inverse covariances for the per-pixel hit points.
    std::vector<Mat3> sigma_inv(object.size());
    for (size_t i = 0; i < object.size(); ++i)
        sigma_inv[i] =
            inverse_psd_clamped(covariance_from_shape(object[i].scale, object[i].rotation));

    RenderOptions ropts;
    ropts.background = opts.background;
    Image transmittance;
    Image shaded = rasterize_shaded(
        object, camera,
        [&](int source, const Ray& pixel_ray) {
            const GaussianPrimitive& p = object[source];
            double tau =
                ray_gaussian_argmax(p.position, sigma_inv[source], pixel_ray.origin, pixel_ray.dir);
            PixelInputs in;
            in.normal_blend = p.attrs.normal;
            in.transparency = p.attrs.transparency;
            in.ior = p.attrs.ior;
            in.metallic = p.attrs.metallic;
            in.base_color = p.attrs.base_color;
            in.hit_point = pixel_ray.at(tau);
            return shade_pixel(in, pixel_ray, grid, bvh, opts);
        },
        ropts, &transmittance);
    if (!env_color)
        return shaded;

    // Swap the constant background for the environment image using the
    // residual transmittance of the same pass.
    for (int y = 0; y < shaded.height(); ++y)
        for (int x = 0; x < shaded.width(); ++x) {
            double rest = transmittance.at(x, y);
            for (int c = 0; c < 3; ++c) {
                double base = shaded.at(x, y, c) - rest * opts.background[c];
                shaded.at(x, y, c) = static_cast<float>(base + rest * env_color->at(x, y, c));
            }
        }
    return shaded;
}

} // namespace gsp
