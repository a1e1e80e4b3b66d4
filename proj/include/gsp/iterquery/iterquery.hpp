#pragma once

#include "gsp/probes/probes.hpp"

#include <array>

namespace gsp {

struct QueryResult {
    Vec3 color = Vec3::Zero();
    double t_hat = 0.0; // estimated distance along the ray to the environment
    int iterations_used = 0;
    bool converged = false;
    bool miss = false;         // every selected probe had an all-miss panorama
    bool clamped_negative = false; // t_hat went behind the origin at least once
};

struct CellWeights {
    std::array<int, 8> probe{};  // indices into grid.probes
    std::array<double, 8> w{};   // non-negative, sum to 1
};

// Standard trilinear weights of the lattice cell enclosing `o` (nearest
// cell with clamped coordinates when o lies outside the grid).
CellWeights trilinear_weights(const Vec3& o, const ProbeGrid& grid);

struct IterQueryOptions {
    int iterations = 5;     // T
    double epsilon = -1.0;  // <= 0 selects 1e-3 * bbox diagonal
    Vec3 background = Vec3::Zero();
};

// Depth-based iterative probes query. Directions start at the ray
// direction; each iteration projects the per-probe depth hits onto the ray
// and re-aims the probes at the interpolated point:
//   t_i  = depth(p_i, d_i)
//   t_hat = sum_i w_i (t_i (d . d_i) + (p_i - o) . d)
//   d_i <- normalize(o + t_hat d - p_i)
// The final iteration samples color without a further update, so T=1
// reproduces the naive parallax-blurred average.
QueryResult iter_query(const ProbeGrid& grid, const Ray& ray, const IterQueryOptions& opts = {});

std::vector<QueryResult> query_batch(const ProbeGrid& grid, const std::vector<Ray>& rays,
                                     const IterQueryOptions& opts = {}, bool parallel = true);

} // namespace gsp
