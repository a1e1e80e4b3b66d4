#include "gsp/panorama/panorama.hpp"

#include "gsp/core/math.hpp"
#include "gsp/core/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace gsp {

namespace {

constexpr double kAlphaClamp = 0.99;
constexpr double kAlphaSkip = 1.0 / 255.0;
constexpr double kTransmittanceFloor = 1e-4;
constexpr double kMahalanobisCutoff = 9.0;
constexpr int kTileSize = 16;

struct TangentSplat {
    Vec3 center_dir;  // unit direction to the primitive
    Vec3 e1, e2;      // tangent-plane basis at center_dir
    Mat2 inv2d;       // inverse tangent-plane covariance
    double dist;      // Euclidean distance, the depth key
    Vec3 color;
    double opacity;
    Vec3 mu;          // world position, tie-break key
    int v0, v1;       // row range, v1 exclusive
    int ua0, ua1;     // primary column range, exclusive
    int ub0, ub1;     // wrap-around column range (empty when ub0 >= ub1)
};

// Deterministic orthonormal basis of the plane orthogonal to unit d.
void tangent_basis(const Vec3& d, Vec3& e1, Vec3& e2) {
    Vec3 a = std::abs(d.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
    e1 = d.cross(a).normalized();
    e2 = d.cross(e1).normalized();
}

Mat2 invert2x2(const Mat2& m) {
    double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    Mat2 inv;
    inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    return inv / det;
}

} // namespace

Mat3 optimal_jacobian(const Vec3& mu_cam) {
    double n = mu_cam.norm();
    if (!(n > 1e-6))
        throw DegeneratePositionError("optimal_jacobian: position too close to the center");
    return (n * n * Mat3::Identity() - mu_cam * mu_cam.transpose()) / (n * n * n);
}

Vec3 pixel_to_direction(double u, double v, int width, int height) {
    double phi = kPi * (2.0 * u - width) / width;
    double theta = kPi * (v - 0.5 * height) / height;
    double ct = std::cos(theta);
    return Vec3(std::sin(phi) * ct, std::sin(theta), ct * std::cos(phi));
}

Vec2 direction_to_pixel(const Vec3& d, int width, int height) {
    double theta = std::asin(std::clamp(d.y(), -1.0, 1.0));
    double phi = std::atan2(d.x(), d.z());
    double u = (phi / (2.0 * kPi) + 0.5) * width;
    if (u >= width)
        u -= width;
    if (u < 0)
        u += width;
    double v = (theta / kPi + 0.5) * height;
    if (v >= height)
        v = std::nextafter(static_cast<double>(height), 0.0);
    if (v < 0)
        v = 0;
    return Vec2(u, v);
}

Panorama render_panorama(const std::vector<GaussianPrimitive>& scene, const Vec3& center,
                         int height, int width, const PanoramaOptions& opts) {
    if (width != 2 * height)
        throw std::invalid_argument("render_panorama: width must equal 2 * height");
    Panorama pano(width, height);
    const double texel_angle = kPi / height;
    // Same anti-collapse dilation as screen-space splatting, expressed in
    // angular units on the unit tangent plane.
    const double dilation = 0.3 * texel_angle * texel_angle;

    std::vector<TangentSplat> splats;
    splats.reserve(scene.size());
    for (const GaussianPrimitive& p : scene) {
        Vec3 mu_rel = p.position - center;
        double r = mu_rel.norm();
        if (r < 1e-9)
            continue;
        TangentSplat ts;
        ts.center_dir = mu_rel / r;
        ts.dist = r;
        ts.mu = p.position;
        ts.opacity = p.opacity;
        ts.color = evaluate_sh(p.sh, ts.center_dir);
        tangent_basis(ts.center_dir, ts.e1, ts.e2);
        Mat3 jac = optimal_jacobian(mu_rel);
        Mat3 sigma_t = jac * covariance_from_shape(p.scale, p.rotation) * jac.transpose();
        Mat2 sigma2;
        sigma2 << ts.e1.dot(sigma_t * ts.e1), ts.e1.dot(sigma_t * ts.e2),
            ts.e2.dot(sigma_t * ts.e1), ts.e2.dot(sigma_t * ts.e2);
        sigma2(0, 0) += dilation;
        sigma2(1, 1) += dilation;
        ts.inv2d = invert2x2(sigma2);

        // Angular bounding cap: tangent-plane 3-sigma radius mapped to an
        // angle, plus a texel of guard band.
        double lmax = 0.5 * (sigma2(0, 0) + sigma2(1, 1)) +
                      std::sqrt(std::max(0.0, 0.25 * (sigma2(0, 0) - sigma2(1, 1)) *
                                                  (sigma2(0, 0) - sigma2(1, 1)) +
                                              sigma2(0, 1) * sigma2(0, 1)));
        double beta = std::atan(3.0 * std::sqrt(std::max(0.0, lmax))) + texel_angle;
        double theta_c = std::asin(std::clamp(ts.center_dir.y(), -1.0, 1.0));
        double phi_c = std::atan2(ts.center_dir.x(), ts.center_dir.z());

        double theta_lo = theta_c - beta, theta_hi = theta_c + beta;
        ts.v0 = std::max(0, static_cast<int>(std::floor((theta_lo / kPi + 0.5) * height)));
        ts.v1 = std::min(height, static_cast<int>(std::ceil((theta_hi / kPi + 0.5) * height)) + 1);
        if (ts.v0 >= ts.v1)
            continue;

        double max_abs_theta = std::max(std::abs(theta_lo), std::abs(theta_hi));
        bool full_azimuth = max_abs_theta >= 0.5 * kPi - 1e-9;
        double dphi = kPi;
        if (!full_azimuth) {
            double s = std::sin(beta) / std::cos(max_abs_theta);
            dphi = s >= 1.0 ? kPi : std::asin(s) + texel_angle;
        }
        if (dphi >= kPi - 1e-12) {
            ts.ua0 = 0;
            ts.ua1 = width;
            ts.ub0 = ts.ub1 = 0;
        } else {
            double u_lo = ((phi_c - dphi) / (2.0 * kPi) + 0.5) * width;
            double u_hi = ((phi_c + dphi) / (2.0 * kPi) + 0.5) * width;
            int a = static_cast<int>(std::floor(u_lo));
            int b = static_cast<int>(std::ceil(u_hi)) + 1;
            if (a < 0) { // wraps on the left seam
                ts.ua0 = 0;
                ts.ua1 = std::min(width, b);
                ts.ub0 = std::max(0, a + width);
                ts.ub1 = width;
            } else if (b > width) { // wraps on the right seam
                ts.ua0 = std::max(0, a);
                ts.ua1 = width;
                ts.ub0 = 0;
                ts.ub1 = std::min(width, b - width);
            } else {
                ts.ua0 = a;
                ts.ua1 = b;
                ts.ub0 = ts.ub1 = 0;
            }
        }
        splats.push_back(ts);
    }

    // Input-order independent ordering: nearest first, positions as the
    // tie break so that permuting the scene cannot reorder the blend.
    std::sort(splats.begin(), splats.end(), [](const TangentSplat& a, const TangentSplat& b) {
        if (a.dist != b.dist)
            return a.dist < b.dist;
        if (a.mu.x() != b.mu.x())
            return a.mu.x() < b.mu.x();
        if (a.mu.y() != b.mu.y())
            return a.mu.y() < b.mu.y();
        return a.mu.z() < b.mu.z();
    });

    const int tiles_x = (width + kTileSize - 1) / kTileSize;
    const int tiles_y = (height + kTileSize - 1) / kTileSize;
    std::vector<std::vector<int>> bins(static_cast<size_t>(tiles_x) * tiles_y);
    auto bin_range = [&](int i, int u0, int u1, int v0, int v1) {
        if (u0 >= u1)
            return;
        int tx0 = u0 / kTileSize, tx1 = (u1 - 1) / kTileSize;
        int ty0 = v0 / kTileSize, ty1 = (v1 - 1) / kTileSize;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                bins[static_cast<size_t>(ty) * tiles_x + tx].push_back(i);
    };
    for (int i = 0; i < static_cast<int>(splats.size()); ++i) {
        bin_range(i, splats[i].ua0, splats[i].ua1, splats[i].v0, splats[i].v1);
        bin_range(i, splats[i].ub0, splats[i].ub1, splats[i].v0, splats[i].v1);
    }

    parallel_for(0, static_cast<int64_t>(bins.size()), [&](int64_t tile) {
        int tx = static_cast<int>(tile % tiles_x);
        int ty = static_cast<int>(tile / tiles_x);
        auto& bin = bins[tile];
        // Dual-range binning can insert a splat twice into the same tile.
        bin.erase(std::unique(bin.begin(), bin.end()), bin.end());
        int x_end = std::min(width, (tx + 1) * kTileSize);
        int y_end = std::min(height, (ty + 1) * kTileSize);
        for (int y = ty * kTileSize; y < y_end; ++y) {
            for (int x = tx * kTileSize; x < x_end; ++x) {
                Vec3 dir = pixel_to_direction(x + 0.5, y + 0.5, width, height);
                double transmittance = 1.0;
                double alpha_acc = 0.0, depth_acc = 0.0;
                Vec3 color = Vec3::Zero();
                for (int idx : bin) {
                    const TangentSplat& s = splats[idx];
                    if (y < s.v0 || y >= s.v1)
                        continue;
                    bool in_a = x >= s.ua0 && x < s.ua1;
                    bool in_b = x >= s.ub0 && x < s.ub1;
                    if (!in_a && !in_b)
                        continue;
                    double denom = s.center_dir.dot(dir);
                    if (denom <= 1e-9)
                        continue;
                    Vec3 x2d = dir / denom; // intersection with the tangent plane
                    Vec3 delta = x2d - s.center_dir;
                    Vec2 d2(s.e1.dot(delta), s.e2.dot(delta));
                    double q2 = d2.dot(s.inv2d * d2);
                    if (q2 > kMahalanobisCutoff)
                        continue;
                    double a = std::min(kAlphaClamp, s.opacity * std::exp(-0.5 * q2));
                    if (a < kAlphaSkip)
                        continue;
                    double w = transmittance * a;
                    alpha_acc += w;
                    depth_acc += w * s.dist;
                    color += w * s.color;
                    transmittance *= 1.0 - a;
                    if (transmittance < kTransmittanceFloor)
                        break;
                }
                Vec3 final_color = color + transmittance * opts.background;
                for (int c = 0; c < 3; ++c)
                    pano.color.at(x, y, c) = static_cast<float>(final_color[c]);
                if (alpha_acc >= opts.miss_alpha_threshold)
                    pano.depth.at(x, y) = static_cast<float>(depth_acc / alpha_acc);
            }
        }
    });

    // Equirectangular poles are degenerate: replace the two edge rows with
    // their azimuthal averages to remove seam noise.
    for (int y : {0, height - 1}) {
        Vec3 csum = Vec3::Zero();
        double dsum = 0.0;
        int dcount = 0;
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c)
                csum[c] += pano.color.at(x, y, c);
            float d = pano.depth.at(x, y);
            if (std::isfinite(d)) {
                dsum += d;
                ++dcount;
            }
        }
        Vec3 cmean = csum / width;
        float dmean = dcount > 0 ? static_cast<float>(dsum / dcount) : Panorama::kMiss;
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c)
                pano.color.at(x, y, c) = static_cast<float>(cmean[c]);
            pano.depth.at(x, y) = dmean;
        }
    }
    return pano;
}

} // namespace gsp
