#include "gsp/iterquery/iterquery.hpp"

#include "gsp/core/parallel.hpp"

#include <cmath>

namespace gsp {

CellWeights trilinear_weights(const Vec3& o, const ProbeGrid& grid) {
    CellWeights cw;
    Vec3 ext = grid.bbox.extent();
    std::array<int, 3> cell{};
    Vec3 frac;
    for (int a = 0; a < 3; ++a) {
        int n = grid.dims[a];
        if (n <= 1 || ext[a] <= 0.0) {
            cell[a] = 0;
            frac[a] = 0.0;
            continue;
        }
        double s = (o[a] - grid.bbox.lo[a]) / ext[a] * (n - 1);
        int c = std::clamp(static_cast<int>(std::floor(s)), 0, n - 2);
        cell[a] = c;
        frac[a] = std::clamp(s - c, 0.0, 1.0);
    }
    int k = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx, ++k) {
                int ix = std::min(cell[0] + dx, grid.dims[0] - 1);
                int iy = std::min(cell[1] + dy, grid.dims[1] - 1);
                int iz = std::min(cell[2] + dz, grid.dims[2] - 1);
                cw.probe[k] = ix + grid.dims[0] * (iy + grid.dims[1] * iz);
                double wx = dx ? frac[0] : 1.0 - frac[0];
                double wy = dy ? frac[1] : 1.0 - frac[1];
                double wz = dz ? frac[2] : 1.0 - frac[2];
                cw.w[k] = wx * wy * wz;
            }
    return cw;
}

QueryResult iter_query(const ProbeGrid& grid, const Ray& ray, const IterQueryOptions& opts) {
    if (opts.iterations < 1)
        throw std::invalid_argument("iter_query: T must be >= 1");
    if (std::abs(ray.dir.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("iter_query: ray direction must be unit length");
    double eps = opts.epsilon > 0.0 ? opts.epsilon : 1e-3 * grid.bbox.diagonal();
    if (!(eps > 0.0))
        throw std::invalid_argument("iter_query: epsilon must be positive");

    CellWeights cw = trilinear_weights(ray.origin, grid);

    // Probes with weight exactly zero must not influence anything, and
    // probes whose panorama is entirely missing are dropped (weights
    // renormalized). If nothing remains the query is a miss.
    std::array<int, 8> sel{};
    std::array<double, 8> w{};
    std::array<const Probe*, 8> probes{};
    int n_sel = 0;
    double wsum = 0.0;
    for (int k = 0; k < 8; ++k) {
        if (cw.w[k] == 0.0)
            continue;
        const Probe& p = grid.probes[cw.probe[k]];
        if (p.max_finite_depth <= 0.f)
            continue;
        sel[n_sel] = cw.probe[k];
        w[n_sel] = cw.w[k];
        probes[n_sel] = &p;
        wsum += cw.w[k];
        ++n_sel;
    }
    QueryResult res;
    if (n_sel == 0 || wsum <= 0.0) {
        res.color = opts.background;
        res.miss = true;
        return res;
    }
    for (int k = 0; k < n_sel; ++k)
        w[k] /= wsum;

    const Vec3 o = ray.origin, d = ray.dir;
    std::array<double, 8> delta{}; // (p_i - o) . d, the ray-projected probe offset
    std::array<Vec3, 8> dir{};
    for (int k = 0; k < n_sel; ++k) {
        delta[k] = (probes[k]->position - o).dot(d);
        dir[k] = d;
    }

    auto probe_depth = [&](int k, const Vec3& query_dir) {
        double t = sample(*probes[k], query_dir).depth;
        // A miss inside an otherwise finite panorama substitutes the
        // largest finite depth so the update stays defined near holes.
        return std::isfinite(t) ? t : static_cast<double>(probes[k]->max_finite_depth);
    };

    std::array<double, 8> depth{};
    double t_hat = 0.0;
    for (int iter = 1; iter <= opts.iterations; ++iter) {
        res.iterations_used = iter;
        t_hat = 0.0;
        for (int k = 0; k < n_sel; ++k) {
            depth[k] = probe_depth(k, dir[k]);
            t_hat += w[k] * (depth[k] * d.dot(dir[k]) + delta[k]);
        }
        if (iter == opts.iterations)
            break;
        if (t_hat < 0.0) {
            t_hat = 0.0;
            res.clamped_negative = true;
        }
        bool all_converged = true;
        for (int k = 0; k < n_sel; ++k) {
            Vec3 to_hit = o + t_hat * d - probes[k]->position;
            double n = to_hit.norm();
            Vec3 nd = n > 0.0 ? Vec3(to_hit / n) : d;
            all_converged &= std::abs(depth[k] - probe_depth(k, nd)) <= eps;
            dir[k] = nd;
        }
        if (all_converged) {
            res.converged = true;
            break;
        }
    }
    res.t_hat = t_hat;
    for (int k = 0; k < n_sel; ++k)
        res.color += w[k] * sample(*probes[k], dir[k]).color;
    return res;
}

std::vector<QueryResult> query_batch(const ProbeGrid& grid, const std::vector<Ray>& rays,
                                     const IterQueryOptions& opts, bool parallel) {
    std::vector<QueryResult> out(rays.size());
    if (parallel) {
        parallel_for(0, static_cast<int64_t>(rays.size()),
                     [&](int64_t i) { out[i] = iter_query(grid, rays[i], opts); });
    } else {
        for (size_t i = 0; i < rays.size(); ++i)
            out[i] = iter_query(grid, rays[i], opts);
    }
    return out;
}

} // namespace gsp
