#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gsp/core/rng.hpp"
#include "gsp/oracle/oracle.hpp"
#include "gsp/shade/shade.hpp"

using namespace gsp;

namespace {

struct ShadeFixture {
    oracle::AnalyticScene room = oracle::make_box_room(1.0, 2.0);
    ProbeGrid grid;
    TriangleMesh mesh;
    BvhIndex bvh;
    Camera camera;
    ShadeOptions opts;

    ShadeFixture() {
        BakeSpec spec;
        spec.bbox = {Vec3(-0.45, -0.45, -0.45), Vec3(0.45, 0.45, 0.45)};
        spec.height = 256;
        spec.width = 512;
        grid = bake_with(spec, [&](const Vec3& p) {
            return oracle::analytic_panorama(room, p, spec.height, spec.width);
        });
        mesh = oracle::sphere_mesh(Vec3::Zero(), 0.3, 4);
        bvh = BvhIndex(mesh);
        camera = Camera::look_at(Vec3(0, 0, -0.85), Vec3::Zero(), Vec3(0, 1, 0), 45.0, 64, 64);
        opts.query.iterations = 5;
    }

    // Two co-located splats at the sphere's front pole differing only in
    // their normal attribute.
    std::vector<GaussianPrimitive> two_splats(const Vec3& n1, const Vec3& n2) const {
        std::vector<GaussianPrimitive> prims(2);
        for (auto& g : prims) {
            g.position = Vec3(0, 0, -0.3);
            g.scale = Vec3(0.05, 0.05, 0.01);
            g.opacity = 0.6;
            g.sh.fill(0.f);
            g.attrs.transparency = 1.0;
            g.attrs.ior = 1.5;
            g.attrs.base_color = Vec3(1, 1, 1);
        }
        Mat3 frame;
        frame.col(0) = Vec3(1, 0, 0);
        frame.col(1) = Vec3(0, -1, 0);
        frame.col(2) = Vec3(0, 0, -1);
        prims[0].rotation = prims[1].rotation = Quat(frame).normalized();
        prims[0].attrs.normal = n1;
        prims[1].attrs.normal = n2;
        return prims;
    }
};

} // namespace

TEST_CASE("deferred equals the single blended-normal result; forward averages") {
    ShadeFixture fx;
    double tilt = 25.0 * kPi / 180.0;
    Vec3 n1(std::sin(tilt), 0, -std::cos(tilt));
    Vec3 n2(-std::sin(tilt), 0, -std::cos(tilt));
    auto prims = fx.two_splats(n1, n2);

    RenderOptions ropts;
    PixelContributions contribs;
    RenderResult pass = rasterize_collect(prims, fx.camera, ropts, contribs);
    int cx = 32, cy = 32;
    REQUIRE(pass.gbuffer.covered(cx, cy));
    const auto& contrib = contribs[static_cast<size_t>(cy) * 64 + cx];
    REQUIRE(contrib.size() == 2);

    ShadeResult deferred = shade_deferred(pass.gbuffer, fx.grid, fx.bvh, fx.camera, fx.opts);
    Vec3 deferred_px(deferred.color.at(cx, cy, 0), deferred.color.at(cx, cy, 1),
                     deferred.color.at(cx, cy, 2));

    // The independently composed blended-normal result.
    Ray ray = fx.camera.ray_through(cx + 0.5, cy + 0.5);
    double alpha = pass.gbuffer.alpha.at(cx, cy);
    PixelInputs in;
    in.normal_blend = Vec3(pass.gbuffer.normal_raw.at(cx, cy, 0),
                           pass.gbuffer.normal_raw.at(cx, cy, 1),
                           pass.gbuffer.normal_raw.at(cx, cy, 2));
    in.transparency = pass.gbuffer.transparency.at(cx, cy);
    in.ior = pass.gbuffer.ior.at(cx, cy);
    in.metallic = pass.gbuffer.metallic.at(cx, cy);
    in.base_color = Vec3(pass.gbuffer.base_color.at(cx, cy, 0),
                         pass.gbuffer.base_color.at(cx, cy, 1),
                         pass.gbuffer.base_color.at(cx, cy, 2));
    in.hit_point = pass.gbuffer.hit_point(cx, cy, fx.camera);
    Vec3 single = shade_pixel(in, ray, fx.grid, fx.bvh, fx.opts);
    Vec3 expected = alpha * single + (1.0 - alpha) * fx.opts.background;
    CHECK((deferred_px - expected).norm() < 1e-6);

    // Forward shading equals the weighted average of per-primitive results.
    Image forward = shade_forward(prims, fx.grid, fx.bvh, fx.camera, fx.opts);
    Vec3 forward_px(forward.at(cx, cy, 0), forward.at(cx, cy, 1), forward.at(cx, cy, 2));
    Vec3 manual = Vec3::Zero();
    Mat3 sig_inv = inverse_psd_clamped(covariance_from_shape(prims[0].scale, prims[0].rotation));
    for (const auto& [src, wk] : contrib) {
        PixelInputs pin = in;
        pin.normal_blend = prims[src].attrs.normal;
        pin.hit_point =
            ray.at(ray_gaussian_argmax(prims[src].position, sig_inv, ray.origin, ray.dir));
        manual += wk * shade_pixel(pin, ray, fx.grid, fx.bvh, fx.opts);
    }
    CHECK((forward_px - manual).norm() < 1e-6);

    // Opposing normals: the two strategies disagree.
    CHECK((deferred_px - forward_px).norm() > 1e-3);

    // Agreeing normals: they coincide.
    auto agree = fx.two_splats(Vec3(0, 0, -1), Vec3(0, 0, -1));
    RenderResult pass2 = rasterize(agree, fx.camera, ropts);
    ShadeResult d2 = shade_deferred(pass2.gbuffer, fx.grid, fx.bvh, fx.camera, fx.opts);
    Image f2 = shade_forward(agree, fx.grid, fx.bvh, fx.camera, fx.opts);
    CHECK(std::abs(d2.color.at(cx, cy, 0) - f2.at(cx, cy, 0)) < 1e-6);
    CHECK(std::abs(d2.color.at(cx, cy, 1) - f2.at(cx, cy, 1)) < 1e-6);
}

TEST_CASE("white base color reproduces the colorless pipeline bit-exactly") {
    ShadeFixture fx;
    oracle::SphereSynthesisOptions sopts;
    sopts.radius = 0.3;
    sopts.count = 3000;
    sopts.base_color = Vec3(1, 1, 1);
    auto object = oracle::sphere_gaussians(sopts);

    RenderResult pass = rasterize(object, fx.camera);
    ShadeOptions with_tint = fx.opts;
    with_tint.absorption = true;
    ShadeOptions no_tint = fx.opts;
    no_tint.absorption = false;
    ShadeResult a = shade_deferred(pass.gbuffer, fx.grid, fx.bvh, fx.camera, with_tint);
    ShadeResult b = shade_deferred(pass.gbuffer, fx.grid, fx.bvh, fx.camera, no_tint);
    CHECK(a.color.data() == b.color.data());
}

TEST_CASE("energy split and decomposition consistency") {
    ShadeFixture fx;
    oracle::SphereSynthesisOptions sopts;
    sopts.radius = 0.3;
    sopts.count = 3000;
    auto object = oracle::sphere_gaussians(sopts);
    RenderResult pass = rasterize(object, fx.camera);
    ShadeOptions opts = fx.opts;
    opts.decompose = true;
    ShadeResult res = shade_deferred(pass.gbuffer, fx.grid, fx.bvh, fx.camera, opts);

    // Max incident radiance bounds the transparent output (tint <= 1).
    float max_probe = 0.f;
    for (const Probe& p : fx.grid.probes)
        for (float v : p.panorama.color.data())
            max_probe = std::max(max_probe, v);
    int decomposed = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            if (!pass.gbuffer.covered(x, y))
                continue;
            for (int c = 0; c < 3; ++c) {
                float total = res.color.at(x, y, c);
                CHECK(total <= max_probe + 1e-4f);
                // reflection + refraction reassemble the shaded color.
                float sum = res.reflection.at(x, y, c) + res.refraction.at(x, y, c);
                float alpha = pass.gbuffer.alpha.at(x, y);
                float env = static_cast<float>((1.0 - alpha) * fx.opts.background[c]);
                if (res.refraction.at(x, y, c) > 0.f) {
                    CHECK(total == doctest::Approx(sum + env).epsilon(1e-4));
                    ++decomposed;
                }
            }
        }
    CHECK(decomposed > 1000);
}

TEST_CASE("invalid paths fall back to reflection only") {
    ShadeFixture fx;
    // Hit point far outside the proxy mesh: the internal march misses.
    PixelInputs in;
    in.normal_blend = Vec3(0, 0, -1);
    in.transparency = 1.0;
    in.ior = 1.5;
    in.hit_point = Vec3(0, 0, -2.5);
    Ray ray{Vec3(0, 0, -3), Vec3(0, 0, 1)};
    ShadeStats stats;
    Vec3 out = shade_pixel(in, ray, fx.grid, fx.bvh, fx.opts, &stats);
    CHECK(stats.invalid_paths == 1);
    Vec3 refl_dir = reflect(-ray.dir, Vec3(0, 0, -1));
    Vec3 expected = iter_query(fx.grid, Ray{in.hit_point, refl_dir}, fx.opts.query).color;
    CHECK((out - expected).norm() < 1e-12);
}

TEST_CASE("grazing incidence approaches the pure reflection pass") {
    ShadeFixture fx;
    // Normal nearly perpendicular to the view: F -> 1, output -> reflection.
    Vec3 n = Vec3(1, 0, -0.02).normalized();
    PixelInputs in;
    in.normal_blend = n;
    in.transparency = 1.0;
    in.ior = 1.5;
    in.hit_point = Vec3(0, 0, -0.3);
    Ray ray{Vec3(0, 0, -3), Vec3(0, 0, 1)};
    PixelShadeDetail detail;
    Vec3 out = shade_pixel(in, ray, fx.grid, fx.bvh, fx.opts, nullptr, nullptr, nullptr, &detail);
    CHECK(detail.fresnel > 0.9);
    CHECK((out - detail.l_refl).norm() < 0.1 * detail.l_refl.norm() + 1e-9);
}

TEST_CASE("degenerate blended normals shade as background") {
    ShadeFixture fx;
    PixelInputs in;
    in.normal_blend = Vec3(0.01, 0.01, 0.01); // severely cancelled blend
    in.transparency = 1.0;
    ShadeStats stats;
    ShadeOptions opts = fx.opts;
    opts.background = Vec3(0.1, 0.2, 0.3);
    Vec3 out = shade_pixel(in, Ray{Vec3(0, 0, -3), Vec3(0, 0, 1)}, fx.grid, fx.bvh, opts, &stats);
    CHECK(stats.degenerate_normals == 1);
    CHECK((out - Vec3(0.1, 0.2, 0.3)).norm() < 1e-12);
}

TEST_CASE("no-iterquery flag reproduces the T=1 naive average") {
    ShadeFixture fx;
    oracle::SphereSynthesisOptions sopts;
    sopts.radius = 0.3;
    sopts.count = 2000;
    auto object = oracle::sphere_gaussians(sopts);
    RenderResult pass = rasterize(object, fx.camera);

    ShadeOptions no_iq = fx.opts;
    no_iq.iterquery_enabled = false;
    ShadeOptions t1 = fx.opts;
    t1.query.iterations = 1;
    ShadeResult a = shade_deferred(pass.gbuffer, fx.grid, fx.bvh, fx.camera, no_iq);
    ShadeResult b = shade_deferred(pass.gbuffer, fx.grid, fx.bvh, fx.camera, t1);
    CHECK(a.color.data() == b.color.data());
}
