#include "gsp/splat/splat.hpp"

#include "gsp/core/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace gsp {

namespace {

constexpr double kNearPlane = 0.01;
constexpr double kAlphaClamp = 0.99;
constexpr double kAlphaSkip = 1.0 / 255.0;
constexpr double kTransmittanceFloor = 1e-4;
constexpr double kMahalanobisCutoff = 9.0; // 3-sigma ellipse
constexpr int kTileSize = 16;

struct PreparedSplat {
    Vec2 center;
    Mat2 inv2d;
    double depth = 0.0;
    int source = -1;
    double opacity = 1.0;
    Vec3 color = Vec3::Zero();
    Vec3 mu = Vec3::Zero();
    Mat3 sigma_inv_world = Mat3::Identity();
    int x0 = 0, x1 = 0, y0 = 0, y1 = 0; // pixel bounds, x1/y1 exclusive
};

Mat2 invert2x2(const Mat2& m) {
    double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    Mat2 inv;
    inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    return inv / det;
}

std::vector<PreparedSplat> prepare_splats(const std::vector<GaussianPrimitive>& scene,
                                          const Camera& camera, bool need_world_inverse) {
    const Vec3 cam_pos = camera.position();
    std::vector<PreparedSplat> out;
    out.reserve(scene.size());
    for (int i = 0; i < static_cast<int>(scene.size()); ++i) {
        const GaussianPrimitive& p = scene[i];
        auto s2d = project_pinhole(p, camera);
        if (!s2d)
            continue;
        PreparedSplat ps;
        ps.center = s2d->center;
        ps.inv2d = invert2x2(s2d->sigma2d);
        ps.depth = s2d->depth_key;
        ps.source = i;
        ps.opacity = p.opacity;
        ps.mu = p.position;
        Vec3 view_dir = p.position - cam_pos;
        double n = view_dir.norm();
        ps.color = evaluate_sh(p.sh, n > 0 ? Vec3(view_dir / n) : Vec3(0, 0, 1));
        if (need_world_inverse)
            ps.sigma_inv_world = inverse_psd_clamped(covariance_from_shape(p.scale, p.rotation));
        double rx = 3.0 * std::sqrt(s2d->sigma2d(0, 0));
        double ry = 3.0 * std::sqrt(s2d->sigma2d(1, 1));
        ps.x0 = std::max(0, static_cast<int>(std::floor(ps.center.x() - rx - 0.5)));
        ps.x1 = std::min(camera.width, static_cast<int>(std::ceil(ps.center.x() + rx + 0.5)));
        ps.y0 = std::max(0, static_cast<int>(std::floor(ps.center.y() - ry - 0.5)));
        ps.y1 = std::min(camera.height, static_cast<int>(std::ceil(ps.center.y() + ry + 0.5)));
        if (ps.x0 >= ps.x1 || ps.y0 >= ps.y1)
            continue;
        out.push_back(ps);
    }
    std::sort(out.begin(), out.end(), [](const PreparedSplat& a, const PreparedSplat& b) {
        if (a.depth != b.depth)
            return a.depth < b.depth;
        return a.source < b.source;
    });
    return out;
}

std::vector<std::vector<int>> bin_by_tile(const std::vector<PreparedSplat>& splats, int tiles_x,
                                          int tiles_y) {
    std::vector<std::vector<int>> bins(static_cast<size_t>(tiles_x) * tiles_y);
    for (size_t i = 0; i < splats.size(); ++i) {
        const PreparedSplat& s = splats[i];
        int tx0 = s.x0 / kTileSize, tx1 = (s.x1 - 1) / kTileSize;
        int ty0 = s.y0 / kTileSize, ty1 = (s.y1 - 1) / kTileSize;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                bins[static_cast<size_t>(ty) * tiles_x + tx].push_back(static_cast<int>(i));
    }
    return bins;
}

struct PixelAccum {
    double transmittance = 1.0;
    double alpha = 0.0;
    Vec3 color = Vec3::Zero();
    Vec3 normal = Vec3::Zero();
    double tau = 0.0;
    double transp = 0.0, ior = 0.0, rough = 0.0, metal = 0.0;
    Vec3 base = Vec3::Zero();
};

// One front-to-back contribution. Returns false once the pixel is saturated;
// weight_out reports the blend weight T_i a_i (-1 when the splat was skipped).
inline bool blend_one(PixelAccum& acc, const PreparedSplat& s, const GaussianPrimitive& prim,
                      const Ray& pixel_ray, double px, double py, const RenderChannels& ch,
                      double* weight_out = nullptr) {
    if (weight_out)
        *weight_out = -1.0;
    Vec2 d(px - s.center.x(), py - s.center.y());
    double q2 = d.dot(s.inv2d * d);
    if (q2 <= kMahalanobisCutoff) {
        double a = std::min(kAlphaClamp, s.opacity * std::exp(-0.5 * q2));
        if (a >= kAlphaSkip) {
            double w = acc.transmittance * a;
            if (weight_out)
                *weight_out = w;
            acc.alpha += w;
            if (ch.color)
                acc.color += w * s.color;
            if (ch.geometry) {
                acc.normal += w * prim.attrs.normal;
                acc.tau += w * ray_gaussian_argmax(s.mu, s.sigma_inv_world, pixel_ray.origin,
                                                   pixel_ray.dir);
            }
            if (ch.material) {
                acc.transp += w * prim.attrs.transparency;
                acc.ior += w * prim.attrs.ior;
                acc.rough += w * prim.attrs.roughness;
                acc.metal += w * prim.attrs.metallic;
                acc.base += w * prim.attrs.base_color;
            }
            acc.transmittance *= 1.0 - a;
            if (acc.transmittance < kTransmittanceFloor)
                return false;
        }
    }
    return true;
}

} // namespace

std::optional<Splat2D> project_pinhole(const GaussianPrimitive& prim, const Camera& camera) {
    Vec3 p_cam = camera.to_camera(prim.position);
    if (p_cam.z() <= kNearPlane)
        return std::nullopt;
    const double z = p_cam.z();
    Splat2D s;
    s.center = Vec2(camera.fx * p_cam.x() / z + camera.cx, camera.fy * p_cam.y() / z + camera.cy);
    s.depth_key = z;

    // Frustum guard band as in the reference splatting rasterizer: cull
    // primitives whose center projects far outside the image and clamp the
    // view-space tangent used in the Jacobian, otherwise grazing splats
    // near the image plane smear across the whole frame.
    const double lim_x = 1.3 * (0.5 * camera.width / camera.fx);
    const double lim_y = 1.3 * (0.5 * camera.height / camera.fy);
    double tx = p_cam.x() / z, ty = p_cam.y() / z;
    if (std::abs(tx) > lim_x || std::abs(ty) > lim_y)
        return std::nullopt;

    Eigen::Matrix<double, 2, 3> jac;
    jac << camera.fx / z, 0, -camera.fx * tx / z, //
        0, camera.fy / z, -camera.fy * ty / z;
    Mat3 sigma = covariance_from_shape(prim.scale, prim.rotation);
    Eigen::Matrix<double, 2, 3> t = jac * camera.rotation;
    s.sigma2d = t * sigma * t.transpose();
    s.sigma2d(0, 0) += 0.3; // low-pass dilation
    s.sigma2d(1, 1) += 0.3;
    return s;
}

namespace {
RenderResult rasterize_impl(const std::vector<GaussianPrimitive>& scene, const Camera& camera,
                            const RenderOptions& opts, PixelContributions* collector);
}

RenderResult rasterize(const std::vector<GaussianPrimitive>& scene, const Camera& camera,
                       const RenderOptions& opts) {
    return rasterize_impl(scene, camera, opts, nullptr);
}

RenderResult rasterize_collect(const std::vector<GaussianPrimitive>& scene, const Camera& camera,
                               const RenderOptions& opts, PixelContributions& contributions) {
    contributions.assign(static_cast<size_t>(camera.width) * camera.height, {});
    return rasterize_impl(scene, camera, opts, &contributions);
}

namespace {
RenderResult rasterize_impl(const std::vector<GaussianPrimitive>& scene, const Camera& camera,
                            const RenderOptions& opts, PixelContributions* collector) {
    validate(camera);
    const int w = camera.width, h = camera.height;
    RenderResult res;
    res.color = Image(w, h, 3);
    GBuffer& gb = res.gbuffer;
    gb.width = w;
    gb.height = h;
    gb.background = opts.background;
    gb.coverage_threshold = opts.coverage_threshold;
    gb.normal_raw = Image(w, h, 3);
    gb.hit_tau = Image(w, h, 1);
    gb.transparency = Image(w, h, 1);
    gb.ior = Image(w, h, 1);
    gb.roughness = Image(w, h, 1);
    gb.metallic = Image(w, h, 1);
    gb.base_color = Image(w, h, 3);
    gb.alpha = Image(w, h, 1);

    auto splats = prepare_splats(scene, camera, opts.channels.geometry);

    auto shade_pixel = [&](int x, int y, const std::vector<int>& candidates) {
        PixelAccum acc;
        const double px = x + 0.5, py = y + 0.5;
        Ray pixel_ray = camera.ray_through(px, py);
        std::vector<std::pair<int, double>>* record =
            collector ? &(*collector)[static_cast<size_t>(y) * w + x] : nullptr;
        for (int idx : candidates) {
            const PreparedSplat& s = splats[idx];
            if (x < s.x0 || x >= s.x1 || y < s.y0 || y >= s.y1)
                continue;
            double weight = -1.0;
            bool keep = blend_one(acc, s, scene[s.source], pixel_ray, px, py, opts.channels,
                                  record ? &weight : nullptr);
            if (record && weight >= 0.0)
                record->emplace_back(s.source, weight);
            if (!keep)
                break;
        }
        Vec3 color = acc.color + acc.transmittance * opts.background;
        for (int c = 0; c < 3; ++c) {
            res.color.at(x, y, c) = static_cast<float>(color[c]);
            gb.normal_raw.at(x, y, c) = static_cast<float>(acc.normal[c]);
        }
        gb.alpha.at(x, y) = static_cast<float>(acc.alpha);
        if (acc.alpha > 0.0) {
            gb.hit_tau.at(x, y) = static_cast<float>(acc.tau / acc.alpha);
            gb.transparency.at(x, y) = static_cast<float>(acc.transp / acc.alpha);
            gb.ior.at(x, y) = static_cast<float>(acc.ior / acc.alpha);
            gb.roughness.at(x, y) = static_cast<float>(acc.rough / acc.alpha);
            gb.metallic.at(x, y) = static_cast<float>(acc.metal / acc.alpha);
            for (int c = 0; c < 3; ++c)
                gb.base_color.at(x, y, c) = static_cast<float>(acc.base[c] / acc.alpha);
        }
    };

    if (!opts.tiled) {
        // Reference path: every pixel walks the full sorted list.
        std::vector<int> all(splats.size());
        for (size_t i = 0; i < splats.size(); ++i)
            all[i] = static_cast<int>(i);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                shade_pixel(x, y, all);
        return res;
    }

    const int tiles_x = (w + kTileSize - 1) / kTileSize;
    const int tiles_y = (h + kTileSize - 1) / kTileSize;
    auto bins = bin_by_tile(splats, tiles_x, tiles_y);

    parallel_for(0, static_cast<int64_t>(bins.size()), [&](int64_t tile) {
        int tx = static_cast<int>(tile % tiles_x);
        int ty = static_cast<int>(tile / tiles_x);
        const auto& bin = bins[tile];
        int x_end = std::min(w, (tx + 1) * kTileSize);
        int y_end = std::min(h, (ty + 1) * kTileSize);
        for (int y = ty * kTileSize; y < y_end; ++y)
            for (int x = tx * kTileSize; x < x_end; ++x)
                shade_pixel(x, y, bin);
    });
    return res;
}
} // namespace

Image rasterize_shaded(const std::vector<GaussianPrimitive>& scene, const Camera& camera,
                       const std::function<Vec3(int, const Ray&)>& shade,
                       const RenderOptions& opts, Image* out_transmittance) {
    validate(camera);
    const int w = camera.width, h = camera.height;
    Image out(w, h, 3);
    if (out_transmittance)
        *out_transmittance = Image(w, h, 1, 1.f);
    auto splats = prepare_splats(scene, camera, false);
    const int tiles_x = (w + kTileSize - 1) / kTileSize;
    const int tiles_y = (h + kTileSize - 1) / kTileSize;
    auto bins = bin_by_tile(splats, tiles_x, tiles_y);

    parallel_for(0, static_cast<int64_t>(bins.size()), [&](int64_t tile) {
        int tx = static_cast<int>(tile % tiles_x);
        int ty = static_cast<int>(tile / tiles_x);
        const auto& bin = bins[tile];
        int x_end = std::min(w, (tx + 1) * kTileSize);
        int y_end = std::min(h, (ty + 1) * kTileSize);
        for (int y = ty * kTileSize; y < y_end; ++y) {
            for (int x = tx * kTileSize; x < x_end; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                Ray pixel_ray = camera.ray_through(px, py);
                double transmittance = 1.0;
                Vec3 color = Vec3::Zero();
                for (int idx : bin) {
                    const PreparedSplat& s = splats[idx];
                    if (x < s.x0 || x >= s.x1 || y < s.y0 || y >= s.y1)
                        continue;
                    Vec2 d(px - s.center.x(), py - s.center.y());
                    double q2 = d.dot(s.inv2d * d);
                    if (q2 > kMahalanobisCutoff)
                        continue;
                    double a = std::min(kAlphaClamp, s.opacity * std::exp(-0.5 * q2));
                    if (a < kAlphaSkip)
                        continue;
                    color += transmittance * a * shade(s.source, pixel_ray);
                    transmittance *= 1.0 - a;
                    if (transmittance < kTransmittanceFloor)
                        break;
                }
                color += transmittance * opts.background;
                for (int c = 0; c < 3; ++c)
                    out.at(x, y, c) = static_cast<float>(color[c]);
                if (out_transmittance)
                    out_transmittance->at(x, y) = static_cast<float>(transmittance);
            }
        }
    });
    return out;
}

} // namespace gsp
