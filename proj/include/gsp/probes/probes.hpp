#pragma once

#include "gsp/panorama/panorama.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <string>

namespace gsp {

struct Probe {
    Vec3 position = Vec3::Zero();
    Panorama panorama;
    float max_finite_depth = 0.f; // cached at bake/load, not serialized
};

// Regular lattice of probes over an (inflated) bounding box. Probe i is at
// lattice index (ix, iy, iz) with x fastest: i = ix + dims.x*(iy + dims.y*iz).
struct ProbeGrid {
    Aabb bbox; // the inflated box whose corners/subdivisions carry probes
    std::array<int, 3> dims{2, 2, 2};
    std::vector<Probe> probes;

    int probe_count() const { return dims[0] * dims[1] * dims[2]; }
    Vec3 lattice_position(int ix, int iy, int iz) const;
};

// Lattice positions over bbox inflated by margin; dims=(2,2,2) yields the
// inflated box's 8 corners.
std::vector<Vec3> place_probes(const Aabb& bbox, const std::array<int, 3>& dims, double margin);

struct BakeSpec {
    Aabb bbox;
    std::array<int, 3> dims{2, 2, 2};
    double margin = 0.0;
    int height = 512;
    int width = 1024;
};

// Bakes one panorama per probe position; `renderer` maps a probe center to
// its panorama. Probes are baked in parallel.
ProbeGrid bake_with(const BakeSpec& spec, const std::function<Panorama(const Vec3&)>& renderer);

// Standard bake from a Gaussian environment (the transparent object removed).
ProbeGrid bake(const std::vector<GaussianPrimitive>& environment, const BakeSpec& spec,
               const PanoramaOptions& opts = {});

struct ProbeSample {
    Vec3 color = Vec3::Zero();
    double depth = 0.0; // +inf when all contributing texels are misses
};

// Bilinear lookup on the equirectangular grid with azimuth wrap. Depth
// interpolation skips miss sentinels: if any contributing texel is a miss
// the nearest finite texel wins, and if all four are misses the sample is
// a miss.
ProbeSample sample(const Probe& probe, const Vec3& dir);

// Sample plus derivatives with respect to the (unit) direction, defined
// almost everywhere (bilinear kinks at texel boundaries, chart poles and
// sentinel fallbacks excluded). Feeds the analytic fit gradients.
struct ProbeSampleGrad {
    Vec3 color = Vec3::Zero();
    double depth = 0.0;
    Mat3 dcolor_ddir = Mat3::Zero(); // row c = gradient of color[c]
    Vec3 ddepth_ddir = Vec3::Zero();
};
ProbeSampleGrad sample_with_gradient(const Probe& probe, const Vec3& dir);

void recompute_depth_cache(Probe& probe);

class AtlasFormatError : public std::runtime_error {
  public:
    AtlasFormatError(const std::string& what, uint64_t byte_offset);
    uint64_t byte_offset() const { return offset_; }

  private:
    uint64_t offset_;
};

// GPRB binary atlas, little-endian:
//   magic "GPRB", version u32=1, dims 3xu32, bbox 6xf32 (lo,hi), H u32,
//   W u32, then per probe: position 3xf32, color H*W*3 f32 row-major,
//   depth H*W f32 (miss = +inf).
void save_atlas(const ProbeGrid& grid, const std::filesystem::path& path);
ProbeGrid load_atlas(const std::filesystem::path& path);

} // namespace gsp
