#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gsp/core/rng.hpp"
#include "gsp/fit/fit.hpp"
#include "gsp/oracle/oracle.hpp"

using namespace gsp;

namespace {

Image random_image(Rng& rng, int w, int h, int c = 3) {
    Image img(w, h, c);
    for (auto& v : img.data())
        v = static_cast<float>(rng.uniform());
    return img;
}

// Straightforward per-pixel SSIM with truncated, renormalized Gaussian
// windows; the independent second implementation.
double naive_ssim(const Image& x, const Image& y, int window, double sigma) {
    const int w = x.width(), h = x.height(), C = x.channels();
    const int half = window / 2;
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px)
            for (int ch = 0; ch < C; ++ch) {
                double wsum = 0, mx = 0, my = 0, exx = 0, eyy = 0, exy = 0;
                for (int dy = -half; dy <= half; ++dy)
                    for (int dx = -half; dx <= half; ++dx) {
                        int sx = px + dx, sy = py + dy;
                        if (sx < 0 || sx >= w || sy < 0 || sy >= h)
                            continue;
                        double tap = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
                        double a = x.at(sx, sy, ch), b = y.at(sx, sy, ch);
                        wsum += tap;
                        mx += tap * a;
                        my += tap * b;
                        exx += tap * a * a;
                        eyy += tap * b * b;
                        exy += tap * a * b;
                    }
                mx /= wsum;
                my /= wsum;
                exx /= wsum;
                eyy /= wsum;
                exy /= wsum;
                double sxx = exx - mx * mx, syy = eyy - my * my, sxy = exy - mx * my;
                total += (2 * mx * my + c1) * (2 * sxy + c2) /
                         ((mx * mx + my * my + c1) * (sxx + syy + c2));
            }
    return total / (static_cast<double>(w) * h * C);
}

} // namespace

TEST_CASE("loss_l1 anchors and gradient") {
    Rng rng(1);
    Image a = random_image(rng, 16, 12);
    CHECK(loss_l1(a, a) == 0.0);

    Image zeros(16, 12, 3, 0.f), ones(16, 12, 3, 1.f);
    CHECK(loss_l1(zeros, ones) == doctest::Approx(1.0));

    Image b = random_image(rng, 16, 12);
    double direct = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i)
        direct += std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]));
    direct /= a.data().size();
    CHECK(loss_l1(a, b) == doctest::Approx(direct).epsilon(1e-12));

    Image bad(4, 4, 3);
    CHECK_THROWS_AS(loss_l1(a, bad), std::invalid_argument);

    // Gradient vs finite differences on a few entries.
    Image grad = loss_l1_gradient(a, b);
    for (int trial = 0; trial < 20; ++trial) {
        size_t i = rng.uniform_u32(static_cast<uint32_t>(a.data().size()));
        Image ap = a;
        const float h = 1e-3f;
        ap.data()[i] += h;
        double fd = (loss_l1(ap, b) - loss_l1(a, b)) / h;
        CHECK(grad.data()[i] == doctest::Approx(fd).epsilon(1e-3));
    }
}

TEST_CASE("loss_dssim matches an independent implementation") {
    Rng rng(2);
    LossConfig cfg;
    for (int trial = 0; trial < 10; ++trial) {
        int w = 12 + static_cast<int>(rng.uniform_u32(16));
        int h = 12 + static_cast<int>(rng.uniform_u32(16));
        Image a = random_image(rng, w, h);
        Image b = random_image(rng, w, h);
        double expected = 0.5 * (1.0 - naive_ssim(a, b, cfg.ssim_window, cfg.ssim_sigma));
        CHECK(loss_dssim(a, b, cfg) == doctest::Approx(expected).epsilon(1e-6));
    }
    Image a = random_image(rng, 16, 16);
    CHECK(loss_dssim(a, a) == doctest::Approx(0.0).epsilon(1e-9));

    // Image against its negative around mid gray: strictly positive, <= 1.
    Image mid(16, 16, 3);
    for (auto& v : mid.data())
        v = static_cast<float>(0.5 + 0.3 * (rng.uniform() - 0.5));
    Image neg = mid;
    for (auto& v : neg.data())
        v = 1.f - v;
    double d = loss_dssim(mid, neg);
    CHECK(d > 0.0);
    CHECK(d <= 1.0);
}

TEST_CASE("loss_dssim gradient matches finite differences") {
    Rng rng(3);
    LossConfig cfg;
    Image a = random_image(rng, 14, 11);
    Image b = random_image(rng, 14, 11);
    Image grad = loss_dssim_gradient(a, b, cfg);
    const float h = 1e-4f;
    for (int trial = 0; trial < 25; ++trial) {
        size_t i = rng.uniform_u32(static_cast<uint32_t>(a.data().size()));
        Image hi = a, lo = a;
        hi.data()[i] += h;
        lo.data()[i] -= h;
        double fd = (loss_dssim(hi, b, cfg) - loss_dssim(lo, b, cfg)) / (2.0 * h);
        // Image storage is float32, so the FD itself carries ~1% noise.
        CHECK(grad.data()[i] == doctest::Approx(fd).epsilon(0.03).scale(1e-4));
    }
}

TEST_CASE("depth_to_normal closed forms") {
    Camera cam = Camera::look_at(Vec3(0, 0, -2), Vec3::Zero(), Vec3(0, 1, 0), 45.0, 64, 64);

    // Constant camera-z depth: normals (0,0,-1) everywhere interior.
    Image flat(64, 64, 1, 2.0f);
    Image n = depth_to_normal(flat, cam);
    for (int y = 2; y < 62; y += 7)
        for (int x = 2; x < 62; x += 7) {
            CHECK(n.at(x, y, 0) == doctest::Approx(0.0).epsilon(1e-6));
            CHECK(n.at(x, y, 1) == doctest::Approx(0.0).epsilon(1e-6));
            CHECK(n.at(x, y, 2) == doctest::Approx(-1.0).epsilon(1e-6));
        }

    // Tilted plane z = 2 + 0.5 x_cam: analytic normal within 1 degree.
    // On such a plane z(u) satisfies z = 2 / (1 - 0.5 (u - cx)/fx).
    Image ramp(64, 64, 1);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            double a = (x + 0.5 - cam.cx) / cam.fx;
            ramp.at(x, y) = static_cast<float>(2.0 / (1.0 - 0.5 * a));
        }
    Image nr = depth_to_normal(ramp, cam);
    Vec3 expected = Vec3(0.5, 0, -1).normalized(); // plane -0.5 x + z = 2
    for (int y = 4; y < 60; y += 9)
        for (int x = 4; x < 60; x += 9) {
            Vec3 got(nr.at(x, y, 0), nr.at(x, y, 1), nr.at(x, y, 2));
            double angle = std::acos(std::clamp(got.dot(expected), -1.0, 1.0)) * 180.0 / kPi;
            CHECK(angle < 1.0);
        }

    // Sphere depth map: normals within 3 degrees away from the silhouette.
    const Vec3 c_sph(0, 0, 0.2);
    const double r_sph = 0.5;
    Image sphere_z(64, 64, 1, 0.f);
    Image mask(64, 64, 1, 0.f);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            Ray ray = cam.ray_through(x + 0.5, y + 0.5);
            Vec3 oc = ray.origin - c_sph;
            double b = oc.dot(ray.dir);
            double disc = b * b - (oc.squaredNorm() - r_sph * r_sph);
            if (disc <= 0)
                continue;
            double t = -b - std::sqrt(disc);
            double dz = (cam.rotation * ray.dir).z();
            sphere_z.at(x, y) = static_cast<float>(t * dz);
            mask.at(x, y) = 1.f;
        }
    Image ns = depth_to_normal(sphere_z, cam, &mask);
    double err = 0.0;
    int count = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            if (mask.at(x, y) <= 0.f)
                continue;
            Ray ray = cam.ray_through(x + 0.5, y + 0.5);
            Vec3 oc = ray.origin - c_sph;
            double b = oc.dot(ray.dir);
            double disc = b * b - (oc.squaredNorm() - r_sph * r_sph);
            double t = -b - std::sqrt(disc);
            Vec3 p = ray.at(t);
            Vec3 truth_world = (p - c_sph).normalized();
            Vec3 truth_cam = cam.rotation * truth_world;
            if (truth_cam.z() > 0)
                truth_cam = -truth_cam;
            // Skip the silhouette band where one-sided differences kick in.
            double rim = (p - c_sph).normalized().dot(-ray.dir);
            if (rim < 0.45)
                continue;
            Vec3 got(ns.at(x, y, 0), ns.at(x, y, 1), ns.at(x, y, 2));
            if (got.norm() < 0.5)
                continue;
            err += std::acos(std::clamp(got.dot(truth_cam), -1.0, 1.0)) * 180.0 / kPi;
            ++count;
        }
    REQUIRE(count > 200);
    MESSAGE("sphere depth-normal MAE = " << err / count << " deg");
    CHECK(err / count < 3.0);
}

TEST_CASE("loss_normal anchors") {
    Rng rng(4);
    Image a(8, 8, 3), mask(8, 8, 1, 1.f);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            Vec3 n = rng.unit_vector();
            for (int c = 0; c < 3; ++c)
                a.at(x, y, c) = static_cast<float>(n[c]);
        }
    CHECK(loss_normal(a, a, mask) == doctest::Approx(0.0).epsilon(1e-6));

    Image b = a;
    for (auto& v : b.data())
        v = -v;
    CHECK(loss_normal(a, b, mask) == doctest::Approx(2.0).epsilon(1e-6));

    Image c(8, 8, 3);
    double direct = 0.0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            Vec3 n = rng.unit_vector();
            for (int k = 0; k < 3; ++k)
                c.at(x, y, k) = static_cast<float>(n[k]);
            Vec3 na(a.at(x, y, 0), a.at(x, y, 1), a.at(x, y, 2));
            direct += 1.0 - na.normalized().dot(n);
        }
    CHECK(loss_normal(a, c, mask) == doctest::Approx(direct / 64.0).epsilon(1e-6));
}

TEST_CASE("loss_total is the stated weighted sum") {
    LossComponents c{0.3, 0.1, 0.05, 0.2};
    LossConfig cfg;
    CHECK(loss_total(c, cfg) ==
          doctest::Approx(0.8 * 0.3 + 0.2 * 0.1 + 0.2 * 0.05 + 1.0 * 0.2));

    LossConfig zero;
    zero.lambda1 = zero.lambda2 = zero.lambda3 = 0.0;
    CHECK(loss_total(c, zero) == doctest::Approx(c.l1));

    // Linear in every component.
    LossComponents c2 = c;
    c2.normal *= 3.0;
    CHECK(loss_total(c2, cfg) - loss_total(c, cfg) ==
          doctest::Approx(cfg.lambda2 * 2.0 * c.normal));

    LossComponents perfect{0, 0, 0, 0};
    CHECK(loss_total(perfect, cfg) == 0.0);
}

namespace {

// Shared scene for the shading-chain gradient checks: glass sphere splats
// in the analytic room with probes baked from exact panoramas.
struct ChainFixture {
    oracle::AnalyticScene room = oracle::make_box_room(1.0, 2.0);
    ProbeGrid grid;
    TriangleMesh mesh;
    BvhIndex bvh;
    std::vector<GaussianPrimitive> object;
    Camera camera;
    FitOptions fit_opts;

    explicit ChainFixture(double transparency = 1.0) {
        BakeSpec spec;
        spec.bbox = {Vec3(-0.45, -0.45, -0.45), Vec3(0.45, 0.45, 0.45)};
        spec.height = 256;
        spec.width = 512;
        grid = bake_with(spec, [&](const Vec3& p) {
            return oracle::analytic_panorama(room, p, spec.height, spec.width);
        });
        mesh = oracle::sphere_mesh(Vec3::Zero(), 0.3, 4);
        bvh = BvhIndex(mesh);
        oracle::SphereSynthesisOptions sopts;
        sopts.center = Vec3::Zero();
        sopts.radius = 0.3;
        sopts.count = 4000;
        sopts.base_color = Vec3(0.9, 0.6, 0.4);
        object = oracle::sphere_gaussians(sopts);
        for (auto& g : object)
            g.attrs.transparency = transparency;
        camera = Camera::look_at(Vec3(0, 0, -0.85), Vec3::Zero(), Vec3(0, 1, 0), 45.0, 96, 96);
    }
};

// Central finite difference of the shaded pixel with consistency screening;
// returns false at non-smooth points (texel kinks, branch flips).
bool screened_fd(const std::function<Vec3(double)>& eval, double h, Vec3& out) {
    Vec3 full = (eval(h) - eval(-h)) / (2.0 * h);
    Vec3 half = (eval(0.5 * h) - eval(-0.5 * h)) / h;
    double scale = std::max({full.cwiseAbs().maxCoeff(), half.cwiseAbs().maxCoeff(), 1e-6});
    if ((full - half).cwiseAbs().maxCoeff() > 2e-3 * scale)
        return false;
    out = half;
    return true;
}

} // namespace

TEST_CASE("pixel shading chain: analytic attribute gradients match FD") {
    ChainFixture fx(0.55); // inside the branch-blend zone so t has gradient
    RenderOptions ropts;
    PixelContributions contribs;
    RenderResult pass = rasterize_collect(fx.object, fx.camera, ropts, contribs);
    const ShadeOptions& sopts = fx.fit_opts.shade;

    Rng rng(11);
    int checked_ior = 0, checked_base = 0, checked_t = 0, skipped = 0;
    int guard = 0;
    while ((checked_ior < 20 || checked_base < 20 || checked_t < 20) && guard++ < 4000) {
        int x = 20 + static_cast<int>(rng.uniform_u32(56));
        int y = 20 + static_cast<int>(rng.uniform_u32(56));
        if (!pass.gbuffer.covered(x, y))
            continue;
        const auto& contrib = contribs[static_cast<size_t>(y) * 96 + x];
        if (contrib.empty())
            continue;
        Ray ray = fx.camera.ray_through(x + 0.5, y + 0.5);
        PixelInputs in = blend_pixel_inputs(fx.object, contrib, fx.camera, x, y,
                                            pass.gbuffer.hit_tau.at(x, y));
        PixelAttributeJacobian jac = pixel_attribute_jacobian(in, ray, fx.grid, fx.bvh, sopts);
        if (!jac.valid)
            continue;

        // IOR
        {
            Vec3 fd;
            double h = 1e-4 * in.ior;
            auto eval = [&](double d) {
                PixelInputs p = in;
                p.ior += d;
                return shade_pixel(p, ray, fx.grid, fx.bvh, sopts);
            };
            if (screened_fd(eval, h, fd)) {
                double scale = std::max(fd.norm(), 1e-6);
                CHECK((jac.d_dior - fd).norm() / scale < 1e-4);
                ++checked_ior;
            } else {
                ++skipped;
            }
        }
        // Transparency
        {
            Vec3 fd;
            auto eval = [&](double d) {
                PixelInputs p = in;
                p.transparency += d;
                return shade_pixel(p, ray, fx.grid, fx.bvh, sopts);
            };
            if (screened_fd(eval, 1e-4, fd)) {
                double scale = std::max(fd.norm(), 1e-6);
                CHECK((jac.d_dtransparency - fd).norm() / scale < 1e-4);
                ++checked_t;
            }
        }
        // Base color (channel 1)
        {
            Vec3 fd;
            auto eval = [&](double d) {
                PixelInputs p = in;
                p.base_color[1] += d;
                return shade_pixel(p, ray, fx.grid, fx.bvh, sopts);
            };
            if (screened_fd(eval, 1e-4, fd)) {
                double scale = std::max(fd.norm(), 1e-6);
                CHECK((jac.d_dbase.col(1) - fd).norm() / scale < 1e-4);
                ++checked_base;
            }
        }
    }
    MESSAGE("gradient probes: ior " << checked_ior << ", t " << checked_t << ", base "
                                    << checked_base << ", skipped " << skipped);
    CHECK(checked_ior >= 20);
    CHECK(checked_t >= 20);
    CHECK(checked_base >= 20);
}

TEST_CASE("a zero learning rate step changes nothing") {
    ChainFixture fx;
    FitOptions opts = fx.fit_opts;
    opts.optimize.normal = opts.optimize.transparency = opts.optimize.ior =
        opts.optimize.base_color = true;
    opts.lr_normal = opts.lr_transparency = opts.lr_ior = opts.lr_base = 0.0;
    opts.iterations = 1;
    opts.shade.query.iterations = 5; // speed, gradients unused at lr 0

    std::vector<FitView> views;
    FitView v;
    v.camera = fx.camera;
    v.target = oracle::path_trace(fx.room, fx.camera, 1);
    v.silhouette = Image(96, 96, 1, 0.f);
    views.push_back(v);

    auto before = fx.object;
    FitState st = fit_attributes(fx.object, views, fx.grid, fx.bvh, opts);
    REQUIRE(st.primitives.size() == before.size());
    for (size_t i = 0; i < before.size(); ++i) {
        CHECK(st.primitives[i].attrs.normal == before[i].attrs.normal);
        CHECK(st.primitives[i].attrs.transparency == before[i].attrs.transparency);
        CHECK(st.primitives[i].attrs.ior == before[i].attrs.ior);
        CHECK(st.primitives[i].attrs.base_color == before[i].attrs.base_color);
    }
    CHECK(st.loss_history.size() == 1);
}
