#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gsp/core/rng.hpp"
#include "gsp/iterquery/iterquery.hpp"
#include "gsp/oracle/oracle.hpp"

#include <algorithm>

using namespace gsp;

namespace {

// Shared fixture: probes inside the analytic checker room, panoramas baked
// from the exact oracle renderer.
struct RoomFixture {
    oracle::AnalyticScene room = oracle::make_box_room(1.0);
    ProbeGrid grid;

    explicit RoomFixture(std::array<int, 3> dims = {2, 2, 2}, int height = 512) {
        BakeSpec spec;
        spec.bbox = {Vec3(-0.4, -0.4, -0.4), Vec3(0.4, 0.4, 0.4)};
        spec.dims = dims;
        spec.height = height;
        spec.width = 2 * height;
        grid = bake_with(spec, [&](const Vec3& p) {
            return oracle::analytic_panorama(room, p, spec.height, spec.width);
        });
    }

    Ray random_interior_ray(Rng& rng) const {
        Vec3 o(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4));
        return Ray{o, rng.unit_vector()};
    }
};

Probe constant_depth_probe(const Vec3& pos, float depth, const Vec3& color) {
    Probe p;
    p.position = pos;
    p.panorama = Panorama(64, 32);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 64; ++x) {
            p.panorama.depth.at(x, y) = depth;
            for (int c = 0; c < 3; ++c)
                p.panorama.color.at(x, y, c) = static_cast<float>(color[c]);
        }
    recompute_depth_cache(p);
    return p;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

} // namespace

TEST_CASE("trilinear weights basics") {
    ProbeGrid grid;
    grid.bbox = {Vec3::Zero(), Vec3(1, 1, 1)};
    grid.dims = {2, 2, 2};

    // Lattice vertex: full weight on that probe.
    CellWeights cw = trilinear_weights(Vec3(1, 0, 0), grid);
    double total = 0.0;
    for (int k = 0; k < 8; ++k) {
        total += cw.w[k];
        if (cw.w[k] > 0.0)
            CHECK(cw.probe[k] == 1); // +x corner is index 1
    }
    CHECK(total == doctest::Approx(1.0));

    // Cell center: all eight weights are 1/8.
    cw = trilinear_weights(Vec3(0.5, 0.5, 0.5), grid);
    for (int k = 0; k < 8; ++k)
        CHECK(cw.w[k] == doctest::Approx(0.125));

    // Outside the box: clamped coordinates, still summing to 1.
    cw = trilinear_weights(Vec3(3.0, -2.0, 0.5), grid);
    total = 0.0;
    for (int k = 0; k < 8; ++k) {
        CHECK(cw.w[k] >= 0.0);
        total += cw.w[k];
    }
    CHECK(total == doctest::Approx(1.0));

    // Denser grid: the enclosing cell's probes are selected.
    ProbeGrid dense;
    dense.bbox = {Vec3::Zero(), Vec3(1, 1, 1)};
    dense.dims = {4, 4, 4};
    cw = trilinear_weights(Vec3(0.4, 0.2, 0.7), dense);
    for (int k = 0; k < 8; ++k) {
        int ix = cw.probe[k] % 4;
        int iy = (cw.probe[k] / 4) % 4;
        int iz = cw.probe[k] / 16;
        CHECK(ix >= 1);
        CHECK(ix <= 2);
        CHECK(iy >= 0);
        CHECK(iy <= 1);
        CHECK(iz >= 2);
        CHECK(iz <= 3);
    }
}

TEST_CASE("single probe at the ray origin is a one-iteration fixed point") {
    ProbeGrid grid;
    grid.bbox = {Vec3(-0.1, -0.1, -0.1), Vec3(0.1, 0.1, 0.1)};
    grid.dims = {1, 1, 1};
    grid.probes.push_back(constant_depth_probe(Vec3::Zero(), 2.5f, Vec3(0.3, 0.6, 0.9)));

    Ray ray{Vec3::Zero(), Vec3(0, 0, 1)};
    IterQueryOptions opts;
    opts.iterations = 5;
    QueryResult res = iter_query(grid, ray, opts);
    CHECK(res.converged);
    CHECK(res.iterations_used == 1);
    CHECK(res.t_hat == doctest::Approx(2.5));
    CHECK(res.color.x() == doctest::Approx(0.3));
}

TEST_CASE("negative estimates are clamped and flagged") {
    ProbeGrid grid;
    grid.bbox = {Vec3(-0.1, -0.1, -0.1), Vec3(0.1, 0.1, 0.1)};
    grid.dims = {1, 1, 1};
    grid.probes.push_back(constant_depth_probe(Vec3::Zero(), 0.1f, Vec3(1, 1, 1)));
    // Origin far beyond the probe's tiny environment shell.
    Ray ray{Vec3(0.5, 0, 0), Vec3(1, 0, 0)};
    IterQueryOptions opts;
    opts.iterations = 3;
    QueryResult res = iter_query(grid, ray, opts);
    CHECK(res.clamped_negative);
    CHECK(res.t_hat >= -1e-12);
}

TEST_CASE("all-miss probes yield a miss result") {
    ProbeGrid grid;
    grid.bbox = {Vec3(-1, -1, -1), Vec3(1, 1, 1)};
    grid.dims = {2, 2, 2};
    BakeSpec spec;
    spec.bbox = grid.bbox;
    spec.height = 32;
    spec.width = 64;
    grid = bake({}, spec); // empty scene: everything is a sentinel
    IterQueryOptions opts;
    opts.background = Vec3(0.2, 0.4, 0.6);
    QueryResult res = iter_query(grid, Ray{Vec3::Zero(), Vec3(1, 0, 0)}, opts);
    CHECK(res.miss);
    CHECK(!res.converged);
    CHECK(res.color.x() == doctest::Approx(0.2));
}

TEST_CASE("invalid arguments are rejected") {
    ProbeGrid grid;
    grid.bbox = {Vec3(-1, -1, -1), Vec3(1, 1, 1)};
    grid.dims = {1, 1, 1};
    grid.probes.push_back(constant_depth_probe(Vec3::Zero(), 1.f, Vec3(1, 1, 1)));
    IterQueryOptions opts;
    opts.iterations = 0;
    CHECK_THROWS_AS(iter_query(grid, Ray{Vec3::Zero(), Vec3(0, 0, 1)}, opts),
                    std::invalid_argument);
    opts.iterations = 1;
    CHECK_THROWS_AS(iter_query(grid, Ray{Vec3::Zero(), Vec3(0, 0, 2)}, opts),
                    std::invalid_argument);
}

TEST_CASE("room benchmark: convergence, ablation, and fixed point") {
    RoomFixture fx;
    Rng rng(77);
    IterQueryOptions opts;
    opts.iterations = 5;

    const int n_rays = 10000;
    const double tolerance = 0.005 * fx.grid.bbox.diagonal();
    int within = 0;
    int checked_fixed_point = 0;
    std::vector<double> errs_t5;
    std::vector<Ray> rays;
    for (int i = 0; i < n_rays; ++i) {
        Ray ray = fx.random_interior_ray(rng);
        rays.push_back(ray);
        double t_true = oracle::env_distance(fx.room, ray);
        QueryResult res = iter_query(fx.grid, ray, opts);
        double err = std::abs(res.t_hat - t_true);
        errs_t5.push_back(err);
        if (err < tolerance)
            ++within;

        // Fixed-point certificate: one more iteration moves t_hat by <= 2 eps.
        if (res.converged && checked_fixed_point < 500) {
            ++checked_fixed_point;
            IterQueryOptions more = opts;
            more.iterations = res.iterations_used + 1;
            QueryResult res2 = iter_query(fx.grid, ray, more);
            double eps = 1e-3 * fx.grid.bbox.diagonal();
            CHECK(std::abs(res2.t_hat - res.t_hat) <= 2.0 * eps);
        }
    }
    double rate = static_cast<double>(within) / n_rays;
    MESSAGE("IterQuery convergence rate at 0.5% diag: " << rate);
    CHECK(rate >= 0.95);

    // T=1 is the naive parallax-blurred average of the initial directions.
    {
        IterQueryOptions naive;
        naive.iterations = 1;
        for (int i = 0; i < 50; ++i) {
            const Ray& ray = rays[i];
            QueryResult res = iter_query(fx.grid, ray, naive);
            CellWeights cw = trilinear_weights(ray.origin, fx.grid);
            Vec3 expected = Vec3::Zero();
            for (int k = 0; k < 8; ++k)
                if (cw.w[k] > 0.0)
                    expected += cw.w[k] * sample(fx.grid.probes[cw.probe[k]], ray.dir).color;
            CHECK((res.color - expected).norm() < 1e-12);
            CHECK(!res.converged);
        }
    }

    // Median error decreases monotonically with T on this benchmark.
    std::vector<double> medians;
    for (int t = 1; t <= 5; ++t) {
        IterQueryOptions o;
        o.iterations = t;
        std::vector<double> errs;
        for (int i = 0; i < 2000; ++i) {
            double t_true = oracle::env_distance(fx.room, rays[i]);
            errs.push_back(std::abs(iter_query(fx.grid, rays[i], o).t_hat - t_true));
        }
        medians.push_back(median(errs));
    }
    MESSAGE("median |t_hat - t_true| by T: " << medians[0] << " " << medians[1] << " "
                                             << medians[2] << " " << medians[3] << " "
                                             << medians[4]);
    for (size_t t = 1; t < medians.size(); ++t)
        CHECK(medians[t] <= medians[t - 1] + 1e-12);
}

TEST_CASE("denser probe grids converge at least as fast") {
    RoomFixture coarse({2, 2, 2}, 256);
    RoomFixture dense({4, 4, 4}, 256);
    Rng rng(99);
    IterQueryOptions two;
    two.iterations = 2;
    std::vector<double> err_coarse, err_dense;
    for (int i = 0; i < 3000; ++i) {
        Ray ray = coarse.random_interior_ray(rng);
        double t_true = oracle::env_distance(coarse.room, ray);
        err_coarse.push_back(std::abs(iter_query(coarse.grid, ray, two).t_hat - t_true));
        err_dense.push_back(std::abs(iter_query(dense.grid, ray, two).t_hat - t_true));
    }
    double mc = median(err_coarse), md = median(err_dense);
    MESSAGE("iteration-2 medians: dims(2,2,2) " << mc << ", dims(4,4,4) " << md);
    CHECK(md <= mc);
}

TEST_CASE("weight-zero probes cannot influence the result") {
    RoomFixture fx({2, 2, 2}, 128);
    // Query from a lattice corner: seven of the eight weights vanish.
    Vec3 corner = fx.grid.probes[0].position;
    Ray ray{corner, Vec3(0.3, 0.4, std::sqrt(1.0 - 0.09 - 0.16))};
    IterQueryOptions opts;
    QueryResult base = iter_query(fx.grid, ray, opts);

    ProbeGrid mangled = fx.grid;
    Rng rng(5);
    for (int i = 1; i < 8; ++i) { // probe 0 keeps its panorama
        for (auto& d : mangled.probes[i].panorama.depth.data())
            d = static_cast<float>(rng.uniform(0.01, 100.0));
        for (auto& c : mangled.probes[i].panorama.color.data())
            c = static_cast<float>(rng.uniform());
        recompute_depth_cache(mangled.probes[i]);
    }
    QueryResult mangled_res = iter_query(mangled, ray, opts);
    CHECK(mangled_res.t_hat == base.t_hat);
    CHECK(mangled_res.color == base.color);
    CHECK(mangled_res.converged == base.converged);
}

TEST_CASE("batch equals scalar and is deterministic") {
    RoomFixture fx({2, 2, 2}, 128);
    Rng rng(13);
    std::vector<Ray> rays;
    for (int i = 0; i < 500; ++i)
        rays.push_back(fx.random_interior_ray(rng));
    IterQueryOptions opts;
    auto batch = query_batch(fx.grid, rays, opts, true);
    auto batch_serial = query_batch(fx.grid, rays, opts, false);
    REQUIRE(batch.size() == rays.size());
    for (size_t i = 0; i < rays.size(); ++i) {
        QueryResult s = iter_query(fx.grid, rays[i], opts);
        CHECK(batch[i].t_hat == s.t_hat);
        CHECK(batch[i].color == s.color);
        CHECK(batch_serial[i].t_hat == s.t_hat);
        CHECK(batch[i].iterations_used == s.iterations_used);
    }
}
