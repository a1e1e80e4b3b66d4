#include "gsp/oracle/oracle.hpp"

#include "gsp/core/math.hpp"
#include "gsp/core/parallel.hpp"
#include "gsp/shade/optics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace gsp {
namespace oracle {

namespace {

constexpr double kRayEps = 1e-9;
constexpr double kSh0 = 0.28209479177387814;

// Mean of the even-cell indicator of floor(x) over [x0, x1].
double even_fraction(double x0, double x1) {
    if (x1 <= x0)
        return 1.0;
    auto integral = [](double x) {
        double k = std::floor(x / 2.0);
        return k + std::clamp(x - 2.0 * k, 0.0, 1.0);
    };
    return (integral(x1) - integral(x0)) / (x1 - x0);
}

Vec3 lerp3(const Vec3& a, const Vec3& b, double t) { return a + (b - a) * t; }

} // namespace

Vec3 SurfaceTexture::albedo(double u, double v) const {
    switch (kind) {
    case TextureKind::Constant:
        return color_a;
    case TextureKind::Checker: {
        long long pu = static_cast<long long>(std::floor(u * checker_scale));
        long long pv = static_cast<long long>(std::floor(v * checker_scale));
        return ((pu + pv) & 1) == 0 ? color_a : color_b;
    }
    case TextureKind::Gradient: {
        // Even in each coordinate so the field is continuous across box
        // edges, where adjacent faces swap chart axes up to sign.
        double c = 0.5 * kPi * checker_scale / 8.0;
        double m = 0.5 + 0.25 * std::cos(c * u) + 0.25 * std::cos(c * v);
        return lerp3(color_a, color_b, m);
    }
    }
    return color_a;
}

Vec3 SurfaceTexture::albedo_box_average(double u0, double u1, double v0, double v1) const {
    switch (kind) {
    case TextureKind::Constant:
        return color_a;
    case TextureKind::Checker: {
        double pu = even_fraction(u0 * checker_scale, u1 * checker_scale);
        double pv = even_fraction(v0 * checker_scale, v1 * checker_scale);
        double p_even = pu * pv + (1.0 - pu) * (1.0 - pv); // equal parities
        return p_even * color_a + (1.0 - p_even) * color_b;
    }
    case TextureKind::Gradient: {
        double c = 0.5 * kPi * checker_scale / 8.0;
        auto mean_cos = [&](double a, double b) {
            if (std::abs(c) < 1e-12 || b <= a)
                return std::cos(c * a);
            return (std::sin(c * b) - std::sin(c * a)) / (c * (b - a));
        };
        double m = 0.5 + 0.25 * mean_cos(u0, u1) + 0.25 * mean_cos(v0, v1);
        return lerp3(color_a, color_b, m);
    }
    }
    return color_a;
}

void AnalyticScene::validate_scene() const {
    int glass = 0;
    for (const Sphere& s : spheres)
        glass += s.glass ? 1 : 0;
    if (glass > 1)
        throw std::invalid_argument("analytic scene supports at most one glass object");
}

AnalyticScene make_box_room(double half_extent, double checker_scale) {
    AnalyticScene scene;
    const double h = half_extent;
    for (int axis = 0; axis < 3; ++axis) {
        for (double offset : {-h, h}) {
            Rect r;
            r.axis = axis;
            r.offset = offset;
            r.u_lo = -h;
            r.u_hi = h;
            r.v_lo = -h;
            r.v_hi = h;
            r.texture.kind = TextureKind::Checker;
            r.texture.checker_scale = checker_scale;
            scene.rects.push_back(r);
        }
    }
    return scene;
}

namespace {

struct RectHit {
    double t;
    double u, v;
};

std::optional<RectHit> intersect_rect(const Rect& r, const Ray& ray, double t_min) {
    double dz = ray.dir[r.axis];
    if (std::abs(dz) < 1e-14)
        return std::nullopt;
    double t = (r.offset - ray.origin[r.axis]) / dz;
    if (t <= t_min)
        return std::nullopt;
    double u = ray.origin[r.u_axis()] + t * ray.dir[r.u_axis()];
    double v = ray.origin[r.v_axis()] + t * ray.dir[r.v_axis()];
    if (u < r.u_lo || u > r.u_hi || v < r.v_lo || v > r.v_hi)
        return std::nullopt;
    return RectHit{t, u, v};
}

std::optional<double> intersect_sphere(const Sphere& s, const Ray& ray, double t_min) {
    Vec3 oc = ray.origin - s.center;
    double b = oc.dot(ray.dir);
    double c = oc.squaredNorm() - s.radius * s.radius;
    double disc = b * b - c;
    if (disc < 0.0)
        return std::nullopt;
    double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= t_min) {
        t = -b + sq;
        if (t <= t_min)
            return std::nullopt;
    }
    return t;
}

} // namespace

std::optional<SceneHit> first_hit(const AnalyticScene& scene, const Ray& ray, double t_min,
                                  bool include_glass) {
    std::optional<SceneHit> best;
    for (size_t i = 0; i < scene.rects.size(); ++i) {
        auto rh = intersect_rect(scene.rects[i], ray, t_min);
        if (!rh || (best && rh->t >= best->distance))
            continue;
        const Rect& r = scene.rects[i];
        SceneHit h;
        h.distance = rh->t;
        h.point = ray.at(rh->t);
        h.normal = Vec3::Zero();
        h.normal[r.axis] = ray.dir[r.axis] > 0 ? -1.0 : 1.0;
        h.rect = static_cast<int>(i);
        h.albedo = r.texture.albedo(rh->u, rh->v);
        h.emission = r.emission;
        best = h;
    }
    for (size_t i = 0; i < scene.spheres.size(); ++i) {
        const Sphere& s = scene.spheres[i];
        if (s.glass && !include_glass)
            continue;
        auto t = intersect_sphere(s, ray, t_min);
        if (!t || (best && *t >= best->distance))
            continue;
        SceneHit h;
        h.distance = *t;
        h.point = ray.at(*t);
        h.normal = (h.point - s.center) / s.radius;
        if (h.normal.dot(ray.dir) > 0.0)
            h.normal = -h.normal; // origin inside the sphere
        h.is_glass = s.glass;
        h.sphere = static_cast<int>(i);
        if (!s.glass) {
            Vec3 n = (h.point - s.center) / s.radius;
            double theta = std::acos(std::clamp(n.z(), -1.0, 1.0));
            double phi = std::atan2(n.y(), n.x());
            h.albedo = s.texture.albedo(phi * s.radius, theta * s.radius);
        }
        best = h;
    }
    return best;
}

Vec3 env_radiance(const AnalyticScene& scene, const Ray& ray) {
    auto hit = first_hit(scene, ray, kRayEps, false);
    if (!hit)
        return scene.dome;
    return hit->emission + hit->albedo.cwiseProduct(scene.dome);
}

double env_distance(const AnalyticScene& scene, const Ray& ray) {
    auto hit = first_hit(scene, ray, kRayEps, false);
    return hit ? hit->distance : std::numeric_limits<double>::infinity();
}

namespace {

// Traveling-direction refraction against an outward normal; the travel
// direction points at the surface. Returns nullopt on TIR.
std::optional<Vec3> refract_travel(const Vec3& travel, const Vec3& n_against, double eta_ratio) {
    return refract(-travel, n_against, eta_ratio);
}

Vec3 shade_glass(const AnalyticScene& scene, const Sphere& glass, const Ray& ray,
                 const SceneHit& hit) {
    Vec3 n = hit.normal; // outward at entry
    double cos_i = std::clamp(-ray.dir.dot(n), 0.0, 1.0);
    double fres = fresnel_schlick(cos_i, 1.0, glass.eta);

    Vec3 refl_travel = reflect(-ray.dir, n);
    Vec3 l_refl = env_radiance(scene, Ray{hit.point, refl_travel});

    Vec3 travel = *refract_travel(ray.dir, n, 1.0 / glass.eta); // always exists, eta > 1
    Vec3 p = hit.point;
    double path_length = 0.0;
    for (int bounce = 0; bounce < 2; ++bounce) {
        // Exit point of the internal chord.
        Vec3 oc = p - glass.center;
        double b = oc.dot(travel);
        double c = oc.squaredNorm() - glass.radius * glass.radius;
        double t = -b + std::sqrt(std::max(0.0, b * b - c));
        p = p + t * travel;
        path_length += t;
        Vec3 n_out = (p - glass.center) / glass.radius;
        auto exited = refract_travel(travel, -n_out, glass.eta);
        if (exited) {
            Vec3 transmit = *exited;
            Vec3 l_exit = env_radiance(scene, Ray{p, transmit});
            Vec3 atten(std::exp(-glass.absorption.x() * path_length),
                       std::exp(-glass.absorption.y() * path_length),
                       std::exp(-glass.absorption.z() * path_length));
            double through = 1.0 - fres;
            if (scene.fresnel_at_exit) {
                double cos_e = std::clamp(transmit.dot(n_out), 0.0, 1.0);
                through *= 1.0 - fresnel_schlick(cos_e, 1.0, glass.eta);
            }
            return fres * l_refl + through * atten.cwiseProduct(l_exit);
        }
        if (bounce == 1)
            break;           // second TIR, fall through to reflective-only
        travel = reflect(-travel, -n_out); // one internal reflection
    }
    return l_refl;
}

} // namespace

Image path_trace(const AnalyticScene& scene, const Camera& camera, int spp) {
    if (spp < 1)
        throw std::invalid_argument("path_trace: spp must be >= 1");
    scene.validate_scene();
    Image img(camera.width, camera.height, 3);
    parallel_for(0, camera.height, [&](int64_t y) {
        for (int x = 0; x < camera.width; ++x) {
            Ray ray = camera.ray_through(x + 0.5, y + 0.5);
            Vec3 color;
            auto hit = first_hit(scene, ray, kRayEps, true);
            if (!hit)
                color = scene.dome;
            else if (hit->is_glass)
                color = shade_glass(scene, scene.spheres[hit->sphere], ray, *hit);
            else
                color = hit->emission + hit->albedo.cwiseProduct(scene.dome);
            for (int c = 0; c < 3; ++c)
                img.at(x, static_cast<int>(y), c) = static_cast<float>(color[c]);
        }
    });
    return img;
}

Panorama analytic_panorama(const AnalyticScene& scene, const Vec3& center, int height, int width) {
    Panorama pano(width, height);
    parallel_for(0, height, [&](int64_t y) {
        for (int x = 0; x < width; ++x) {
            Vec3 dir = pixel_to_direction(x + 0.5, y + 0.5, width, height);
            auto hit = first_hit(scene, Ray{center, dir}, kRayEps, false);
            Vec3 color = scene.dome;
            if (hit) {
                color = hit->emission + hit->albedo.cwiseProduct(scene.dome);
                pano.depth.at(x, static_cast<int>(y)) = static_cast<float>(hit->distance);
            }
            for (int c = 0; c < 3; ++c)
                pano.color.at(x, static_cast<int>(y), c) = static_cast<float>(color[c]);
        }
    });
    return pano;
}

namespace {

Quat frame_quaternion(const Vec3& e_u, const Vec3& e_v, const Vec3& n) {
    Mat3 m;
    m.col(0) = e_u;
    m.col(1) = e_v;
    m.col(2) = n;
    return Quat(m).normalized();
}

GaussianPrimitive surface_splat(const Vec3& position, const Vec3& e_u, const Vec3& e_v,
                                const Vec3& normal, double sigma_u, double sigma_v, double sigma_n,
                                double opacity, const Vec3& color, const Vec3& albedo) {
    GaussianPrimitive g;
    g.position = position;
    g.scale = Vec3(sigma_u, sigma_v, sigma_n);
    g.rotation = frame_quaternion(e_u, e_v, normal);
    g.opacity = opacity;
    g.sh.fill(0.f);
    for (int c = 0; c < 3; ++c)
        g.sh[c] = static_cast<float>(color[c] / kSh0);
    g.attrs.normal = normal;
    g.attrs.transparency = 0.0;
    g.attrs.roughness = 1.0;
    g.attrs.metallic = 0.0;
    g.attrs.ior = 1.5;
    g.attrs.base_color = albedo;
    return g;
}

} // namespace

namespace {

// Distance from x to the nearest checker grid line (lines at k / scale).
double edge_distance(double x, double scale) {
    double s = x * scale;
    return std::abs(s - std::round(s)) / scale;
}

struct RectFrame {
    Vec3 e_u, e_v, normal;
};

RectFrame rect_frame(const Rect& r) {
    RectFrame f;
    f.e_u = Vec3::Zero();
    f.normal = Vec3::Zero();
    f.e_u[r.u_axis()] = 1.0;
    f.normal[r.axis] = r.offset > 0 ? -1.0 : 1.0; // faces the room interior
    f.e_v = f.normal.cross(f.e_u);
    return f;
}

Vec3 rect_point(const Rect& r, double u, double v, double offset_behind, const RectFrame& f) {
    Vec3 p = Vec3::Zero();
    p[r.axis] = r.offset - offset_behind * f.normal[r.axis];
    p[r.u_axis()] = u;
    p[r.v_axis()] = v;
    return p;
}

// Exact largest-remainder split of `total` across rects by area.
std::vector<int> allocate_by_area(const std::vector<Rect>& rects, int total) {
    std::vector<int> alloc(rects.size(), 0);
    if (rects.empty() || total <= 0)
        return alloc;
    double area_sum = 0.0;
    for (const Rect& r : rects)
        area_sum += (r.u_hi - r.u_lo) * (r.v_hi - r.v_lo);
    std::vector<std::pair<double, size_t>> rema;
    int assigned = 0;
    for (size_t i = 0; i < rects.size(); ++i) {
        const Rect& r = rects[i];
        double share = total * (r.u_hi - r.u_lo) * (r.v_hi - r.v_lo) / area_sum;
        alloc[i] = static_cast<int>(std::floor(share));
        assigned += alloc[i];
        rema.emplace_back(share - alloc[i], i);
    }
    std::sort(rema.begin(), rema.end(), [](auto& a, auto& b) {
        if (a.first != b.first)
            return a.first > b.first;
        return a.second < b.second;
    });
    for (int k = 0; assigned < total; ++k, ++assigned)
        ++alloc[rema[k % rema.size()].second];
    return alloc;
}

} // namespace

std::vector<GaussianPrimitive> synthesize_environment_gaussians(const AnalyticScene& scene,
                                                                const EnvSynthesisOptions& opts) {
    if (opts.count < 1)
        throw std::invalid_argument("synthesize_environment_gaussians: count must be >= 1");
    Rng rng(opts.seed);
    std::vector<GaussianPrimitive> out;
    out.reserve(opts.count);

    int backing_total = static_cast<int>(opts.count * opts.backing_fraction);
    int main_total = opts.count - backing_total;

    auto emit_splat = [&](const Rect& r, const RectFrame& f, double u, double v, double sigma_u,
                          double sigma_v, double sigma_n, double offset_behind,
                          const Vec3& albedo) {
        Vec3 color = albedo.cwiseProduct(scene.dome) + r.emission;
        out.push_back(surface_splat(rect_point(r, u, v, offset_behind, f), f.e_u, f.e_v, f.normal,
                                    sigma_u, sigma_v, sigma_n, opts.opacity, color, albedo));
    };

    // Main layer. Checkered rects resolve the texture the way a trained
    // scene would: splats shrink across nearby texture edges and dedicated
    // thin rows hug each edge line so the discontinuity stays crisp.
    auto emit_main = [&](int total) {
        auto alloc = allocate_by_area(scene.rects, total);
        for (size_t i = 0; i < scene.rects.size(); ++i) {
            const Rect& r = scene.rects[i];
            int n = alloc[i];
            if (n <= 0)
                continue;
            RectFrame f = rect_frame(r);
            const bool checker = r.texture.kind == TextureKind::Checker;
            const double du = r.u_hi - r.u_lo, dv = r.v_hi - r.v_lo;
            const double scale = r.texture.checker_scale;

            // Interior checker edge lines crossing this rect.
            std::vector<double> u_lines, v_lines;
            if (checker) {
                for (long long k = static_cast<long long>(std::ceil(r.u_lo * scale + 1e-9));
                     k * 1.0 / scale < r.u_hi - 1e-9; ++k)
                    u_lines.push_back(k / scale);
                for (long long k = static_cast<long long>(std::ceil(r.v_lo * scale + 1e-9));
                     k * 1.0 / scale < r.v_hi - 1e-9; ++k)
                    v_lines.push_back(k / scale);
            }
            double edge_len = static_cast<double>(u_lines.size()) * dv +
                              static_cast<double>(v_lines.size()) * du;

            // Three graduated rows per edge side, thin at the line and
            // widening outward, carry both the discontinuity and the
            // coverage of the band that the grid splats vacate.
            constexpr int kRows = 3;
            constexpr double kRowOffset[kRows] = {0.12, 0.4, 0.8};
            constexpr double kRowSigma[kRows] = {0.06, 0.16, 0.3};

            int grid_target = n;
            int edge_budget = 0;
            double cell = std::sqrt(du * dv / std::max(1, n));
            double band = 1.0 * cell;
            double spacing = 0.8 * cell; // along-edge spacing per row
            if (edge_len > 0.0) {
                int needed =
                    static_cast<int>(std::ceil(2.0 * kRows * edge_len / spacing));
                // Checker interiors are flat, so the grid can afford to give
                // the edges a large share of the budget.
                edge_budget = std::min(needed, n * 3 / 5);
                spacing = 2.0 * kRows * edge_len / edge_budget;
                grid_target = n - edge_budget;
            }

            // Stratified grid over the rect; splats landing inside an edge
            // band are pushed just outside it.
            int nx = std::max(1, static_cast<int>(std::round(std::sqrt(grid_target * du / dv))));
            int ny = std::max(1, (grid_target + nx - 1) / nx);
            double cu = du / nx, cv = dv / ny;
            double sig_u0 = opts.sigma_scale * cu, sig_v0 = opts.sigma_scale * cv;
            double sig_n = opts.sigma_normal_ratio * std::min(sig_u0, sig_v0);
            auto push_out = [&](double x) {
                if (!checker)
                    return x;
                double line = std::round(x * scale) / scale;
                double d = x - line;
                if (std::abs(d) >= band)
                    return x;
                double sign = d == 0.0 ? (rng.uniform() < 0.5 ? -1.0 : 1.0)
                                       : (d > 0 ? 1.0 : -1.0);
                return line + sign * (band + 0.3 * rng.uniform() * cell);
            };
            for (int k = 0; k < grid_target; ++k) {
                int gx = k % nx, gy = k / nx;
                double u = push_out(r.u_lo + (gx + rng.uniform()) * cu);
                double v = push_out(r.v_lo + (gy + rng.uniform()) * cv);
                u = std::clamp(u, r.u_lo, r.u_hi);
                v = std::clamp(v, r.v_lo, r.v_hi);
                double sig_u = sig_u0, sig_v = sig_v0;
                if (checker) {
                    sig_u = std::min(sig_u0, std::max(0.4 * edge_distance(u, scale), 0.1 * sig_u0));
                    sig_v = std::min(sig_v0, std::max(0.4 * edge_distance(v, scale), 0.1 * sig_v0));
                }
                Vec3 albedo = r.texture.albedo_box_average(u - sig_u, u + sig_u, v - sig_v,
                                                           v + sig_v);
                emit_splat(r, f, u, v, sig_u, sig_v, sig_n, 0.0, albedo);
            }

            if (edge_budget > 0) {
                int emitted = 0;
                auto emit_rows = [&](bool u_line, double line_coord, double lo, double hi) {
                    int per_row = std::max(1, static_cast<int>((hi - lo) / spacing));
                    for (int row = 0; row < kRows; ++row) {
                        double off = kRowOffset[row] * cell;
                        double sig_across = kRowSigma[row] * cell;
                        for (int side = -1; side <= 1; side += 2) {
                            for (int k = 0; k < per_row && emitted < edge_budget; ++k) {
                                double along = lo + (k + 0.5) * (hi - lo) / per_row;
                                double across = line_coord + side * off;
                                // Shrink along the row where it crosses a
                                // perpendicular edge line.
                                double sig_along =
                                    std::min(0.7 * spacing,
                                             std::max(0.4 * edge_distance(along, scale),
                                                      0.15 * spacing));
                                double u = u_line ? across : along;
                                double v = u_line ? along : across;
                                double su = u_line ? sig_across : sig_along;
                                double sv = u_line ? sig_along : sig_across;
                                emit_splat(r, f, u, v, su, sv, sig_n, 0.0,
                                           r.texture.albedo(u, v));
                                ++emitted;
                            }
                        }
                    }
                };
                for (double lu : u_lines)
                    emit_rows(true, lu, r.v_lo, r.v_hi);
                for (double lv : v_lines)
                    emit_rows(false, lv, r.u_lo, r.u_hi);
                // Rounding leftovers go back into the grid interior.
                while (emitted < edge_budget) {
                    double u = push_out(r.u_lo + rng.uniform() * du);
                    double v = push_out(r.v_lo + rng.uniform() * dv);
                    u = std::clamp(u, r.u_lo, r.u_hi);
                    v = std::clamp(v, r.v_lo, r.v_hi);
                    emit_splat(r, f, u, v, sig_u0, sig_v0, sig_n, 0.0,
                               r.texture.albedo_box_average(u - sig_u0, u + sig_u0, v - sig_v0,
                                                            v + sig_v0));
                    ++emitted;
                }
            }
        }
    };

    // Leak-catcher layer slightly behind the surface.
    auto emit_backing = [&](int total) {
        auto alloc = allocate_by_area(scene.rects, total);
        for (size_t i = 0; i < scene.rects.size(); ++i) {
            const Rect& r = scene.rects[i];
            int n = alloc[i];
            if (n <= 0)
                continue;
            RectFrame f = rect_frame(r);
            double du = r.u_hi - r.u_lo, dv = r.v_hi - r.v_lo;
            int nx = std::max(1, static_cast<int>(std::round(std::sqrt(n * du / dv))));
            int ny = std::max(1, (n + nx - 1) / nx);
            double cu = du / nx, cv = dv / ny;
            double sig_u = 1.6 * opts.sigma_scale * cu, sig_v = 1.6 * opts.sigma_scale * cv;
            double sig_n = opts.sigma_normal_ratio * std::min(sig_u, sig_v);
            for (int k = 0; k < n; ++k) {
                int gx = k % nx, gy = k / nx;
                double u = r.u_lo + (gx + rng.uniform()) * cu;
                double v = r.v_lo + (gy + rng.uniform()) * cv;
                emit_splat(r, f, u, v, sig_u, sig_v, sig_n, opts.backing_offset,
                           r.texture.albedo_box_average(u - sig_u, u + sig_u, v - sig_v,
                                                        v + sig_v));
            }
        }
    };

    emit_main(main_total);
    emit_backing(backing_total);
    return out;
}

std::vector<GaussianPrimitive> sphere_gaussians(const SphereSynthesisOptions& opts) {
    if (opts.count < 1)
        throw std::invalid_argument("sphere_gaussians: count must be >= 1");
    Rng rng(opts.seed);
    double phi_offset = rng.uniform(0.0, 2.0 * kPi);
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    double spacing = std::sqrt(4.0 * kPi * opts.radius * opts.radius / opts.count);
    double sigma_t = opts.sigma_scale * spacing;
    double sigma_n = opts.sigma_normal_ratio * sigma_t;

    const double placement_radius =
        std::max(0.5 * opts.radius, opts.radius - opts.surface_inset_sigmas * sigma_t);
    std::vector<GaussianPrimitive> out;
    out.reserve(opts.count);
    for (int i = 0; i < opts.count; ++i) {
        double z = 1.0 - 2.0 * (i + 0.5) / opts.count;
        double phi = phi_offset + golden * i;
        double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
        Vec3 n(rxy * std::cos(phi), rxy * std::sin(phi), z);
        Vec3 a = std::abs(n.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
        Vec3 e_u = n.cross(a).normalized();
        Vec3 e_v = n.cross(e_u).normalized();
        GaussianPrimitive g = surface_splat(opts.center + placement_radius * n, e_u, e_v, n,
                                            sigma_t, sigma_t, sigma_n, opts.opacity,
                                            opts.base_color, opts.base_color);
        g.attrs.transparency = 1.0;
        g.attrs.ior = opts.eta;
        g.attrs.roughness = 0.0;
        g.attrs.base_color = opts.base_color;
        out.push_back(g);
    }
    return out;
}

TriangleMesh sphere_mesh(const Vec3& center, double radius, int subdivisions) {
    if (subdivisions < 1)
        throw std::invalid_argument("sphere_mesh: subdivisions must be >= 1");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (Vec3& v : verts)
        v.normalize();
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
        {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end())
                return it->second;
            Vec3 m = (verts[a] + verts[b]).normalized();
            verts.push_back(m);
            int idx = static_cast<int>(verts.size()) - 1;
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }

    TriangleMesh mesh;
    mesh.vertices.reserve(verts.size());
    for (const Vec3& v : verts)
        mesh.vertices.push_back(center + radius * v);
    mesh.triangles = std::move(faces);
    mesh.finalize();
    // Enforce outward orientation.
    for (size_t f = 0; f < mesh.triangles.size(); ++f) {
        auto& tri = mesh.triangles[f];
        Vec3 centroid = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
        if (mesh.face_normals[f].dot(centroid - center) < 0.0)
            std::swap(tri[1], tri[2]);
    }
    mesh.finalize();
    return mesh;
}

} // namespace oracle
} // namespace gsp
