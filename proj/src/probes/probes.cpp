#include "gsp/probes/probes.hpp"

#include "gsp/core/parallel.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace gsp {

Vec3 ProbeGrid::lattice_position(int ix, int iy, int iz) const {
    Vec3 e = bbox.extent();
    auto coord = [&](int i, int n, int axis) {
        return n <= 1 ? bbox.lo[axis] + 0.5 * e[axis]
                      : bbox.lo[axis] + e[axis] * (static_cast<double>(i) / (n - 1));
    };
    return Vec3(coord(ix, dims[0], 0), coord(iy, dims[1], 1), coord(iz, dims[2], 2));
}

std::vector<Vec3> place_probes(const Aabb& bbox, const std::array<int, 3>& dims, double margin) {
    Vec3 ext = bbox.extent();
    if (!(ext.x() >= 0 && ext.y() >= 0 && ext.z() >= 0) || ext.maxCoeff() <= 0.0)
        throw std::invalid_argument("place_probes: degenerate bounding box");
    if (margin < 0)
        throw std::invalid_argument("place_probes: negative margin");
    for (int a = 0; a < 3; ++a)
        if (ext[a] > 0 && dims[a] < 2)
            throw std::invalid_argument("place_probes: dims must be >= 2 along extended axes");
    ProbeGrid tmp;
    tmp.bbox = bbox.inflated(margin);
    tmp.dims = dims;
    std::vector<Vec3> out;
    out.reserve(tmp.probe_count());
    for (int iz = 0; iz < dims[2]; ++iz)
        for (int iy = 0; iy < dims[1]; ++iy)
            for (int ix = 0; ix < dims[0]; ++ix)
                out.push_back(tmp.lattice_position(ix, iy, iz));
    return out;
}

void recompute_depth_cache(Probe& probe) {
    float m = 0.f;
    for (float d : probe.panorama.depth.data())
        if (std::isfinite(d))
            m = std::max(m, d);
    probe.max_finite_depth = m;
}

ProbeGrid bake_with(const BakeSpec& spec, const std::function<Panorama(const Vec3&)>& renderer) {
    ProbeGrid grid;
    grid.bbox = spec.bbox.inflated(spec.margin);
    grid.dims = spec.dims;
    auto positions = place_probes(spec.bbox, spec.dims, spec.margin);
    grid.probes.resize(positions.size());
    parallel_for(0, static_cast<int64_t>(positions.size()), [&](int64_t i) {
        grid.probes[i].position = positions[i];
        grid.probes[i].panorama = renderer(positions[i]);
        recompute_depth_cache(grid.probes[i]);
    });
    return grid;
}

ProbeGrid bake(const std::vector<GaussianPrimitive>& environment, const BakeSpec& spec,
               const PanoramaOptions& opts) {
    return bake_with(spec, [&](const Vec3& p) {
        return render_panorama(environment, p, spec.height, spec.width, opts);
    });
}

ProbeSample sample(const Probe& probe, const Vec3& dir) {
    const Panorama& pano = probe.panorama;
    const int w = pano.width, h = pano.height;
    Vec2 uv = direction_to_pixel(dir, w, h);
    double su = uv.x() - 0.5, sv = uv.y() - 0.5;
    int i0 = static_cast<int>(std::floor(su));
    int j0 = static_cast<int>(std::floor(sv));
    double fu = su - i0, fv = sv - j0;
    int i1 = i0 + 1;
    if (i0 < 0)
        i0 += w;
    if (i1 >= w)
        i1 -= w;
    int j1 = std::clamp(j0 + 1, 0, h - 1);
    j0 = std::clamp(j0, 0, h - 1);

    const int xs[4] = {i0, i1, i0, i1};
    const int ys[4] = {j0, j0, j1, j1};
    const double ws[4] = {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv};

    ProbeSample s;
    for (int k = 0; k < 4; ++k)
        for (int c = 0; c < 3; ++c)
            s.color[c] += ws[k] * pano.color.at(xs[k], ys[k], c);

    float depths[4];
    bool all_finite = true, any_finite = false;
    for (int k = 0; k < 4; ++k) {
        depths[k] = pano.depth.at(xs[k], ys[k]);
        bool f = std::isfinite(depths[k]);
        all_finite &= f;
        any_finite |= f;
    }
    if (all_finite) {
        s.depth = ws[0] * depths[0] + ws[1] * depths[1] + ws[2] * depths[2] + ws[3] * depths[3];
    } else if (any_finite) {
        int best = -1;
        double best_w = -1.0;
        for (int k = 0; k < 4; ++k)
            if (std::isfinite(depths[k]) && ws[k] > best_w) {
                best_w = ws[k];
                best = k;
            }
        s.depth = depths[best];
    } else {
        s.depth = Panorama::kMiss;
    }
    return s;
}

ProbeSampleGrad sample_with_gradient(const Probe& probe, const Vec3& dir) {
    const Panorama& pano = probe.panorama;
    const int w = pano.width, h = pano.height;
    Vec2 uv = direction_to_pixel(dir, w, h);
    double su = uv.x() - 0.5, sv = uv.y() - 0.5;
    int i0 = static_cast<int>(std::floor(su));
    int j0 = static_cast<int>(std::floor(sv));
    double fu = su - i0, fv = sv - j0;
    int i1 = i0 + 1;
    if (i0 < 0)
        i0 += w;
    if (i1 >= w)
        i1 -= w;
    int j1 = std::clamp(j0 + 1, 0, h - 1);
    j0 = std::clamp(j0, 0, h - 1);

    // Chart Jacobian d(u,v)/d(dir) for a unit direction.
    const double x = dir.x(), y = dir.y(), z = dir.z();
    double xz2 = std::max(x * x + z * z, 1e-30);
    Vec3 du_ddir(w / (2.0 * kPi) * z / xz2, 0.0, -w / (2.0 * kPi) * x / xz2);
    double root = std::sqrt(std::max(1.0 - y * y, 1e-30));
    Vec3 dv_ddir(0.0, h / kPi / root, 0.0);

    ProbeSampleGrad g;
    auto tex = [&](int xi, int yi, int c) { return static_cast<double>(pano.color.at(xi, yi, c)); };
    for (int c = 0; c < 3; ++c) {
        double c00 = tex(i0, j0, c), c10 = tex(i1, j0, c);
        double c01 = tex(i0, j1, c), c11 = tex(i1, j1, c);
        g.color[c] = (1 - fu) * (1 - fv) * c00 + fu * (1 - fv) * c10 + (1 - fu) * fv * c01 +
                     fu * fv * c11;
        double dfu = (1 - fv) * (c10 - c00) + fv * (c11 - c01);
        double dfv = (1 - fu) * (c01 - c00) + fu * (c11 - c10);
        g.dcolor_ddir.row(c) = (dfu * du_ddir + dfv * dv_ddir).transpose();
    }
    double d00 = pano.depth.at(i0, j0), d10 = pano.depth.at(i1, j0);
    double d01 = pano.depth.at(i0, j1), d11 = pano.depth.at(i1, j1);
    if (std::isfinite(d00) && std::isfinite(d10) && std::isfinite(d01) && std::isfinite(d11)) {
        g.depth = (1 - fu) * (1 - fv) * d00 + fu * (1 - fv) * d10 + (1 - fu) * fv * d01 +
                  fu * fv * d11;
        double dfu = (1 - fv) * (d10 - d00) + fv * (d11 - d01);
        double dfv = (1 - fu) * (d01 - d00) + fu * (d11 - d10);
        g.ddepth_ddir = dfu * du_ddir + dfv * dv_ddir;
    } else {
        // Sentinel fallback: piecewise-constant substitute, zero gradient.
        g.depth = sample(probe, dir).depth;
        if (!std::isfinite(g.depth))
            g.depth = probe.max_finite_depth;
    }
    return g;
}

namespace {

constexpr char kMagic[4] = {'G', 'P', 'R', 'B'};
constexpr uint32_t kVersion = 1;

class Writer {
  public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_)
            throw std::runtime_error("save_atlas: cannot open " + path.string());
    }
    void u32(uint32_t v) { raw(&v, 4); }
    void f32(float v) { raw(&v, 4); }
    void f32s(const float* v, size_t n) { raw(v, 4 * n); }
    void raw(const void* p, size_t n) { out_.write(static_cast<const char*>(p), n); }
    void close() {
        out_.close();
        if (!out_)
            throw std::runtime_error("save_atlas: write failed");
    }

  private:
    std::ofstream out_;
};

class Reader {
  public:
    explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
        if (!in_)
            throw AtlasFormatError("cannot open atlas file", 0);
    }
    uint32_t u32(const char* what) {
        uint32_t v;
        raw(&v, 4, what);
        return v;
    }
    float f32(const char* what) {
        float v;
        raw(&v, 4, what);
        return v;
    }
    void f32s(float* v, size_t n, const char* what) { raw(v, 4 * n, what); }
    void raw(void* p, size_t n, const char* what) {
        in_.read(static_cast<char*>(p), n);
        if (static_cast<size_t>(in_.gcount()) != n)
            throw AtlasFormatError(std::string("truncated while reading ") + what, offset_);
        offset_ += n;
    }
    uint64_t offset() const { return offset_; }

  private:
    std::ifstream in_;
    uint64_t offset_ = 0;
};

} // namespace

AtlasFormatError::AtlasFormatError(const std::string& what, uint64_t byte_offset)
    : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
      offset_(byte_offset) {}

void save_atlas(const ProbeGrid& grid, const std::filesystem::path& path) {
    Writer w(path);
    w.raw(kMagic, 4);
    w.u32(kVersion);
    for (int d : grid.dims)
        w.u32(static_cast<uint32_t>(d));
    for (int a = 0; a < 3; ++a)
        w.f32(static_cast<float>(grid.bbox.lo[a]));
    for (int a = 0; a < 3; ++a)
        w.f32(static_cast<float>(grid.bbox.hi[a]));
    const int h = grid.probes.empty() ? 0 : grid.probes.front().panorama.height;
    const int wres = grid.probes.empty() ? 0 : grid.probes.front().panorama.width;
    w.u32(static_cast<uint32_t>(h));
    w.u32(static_cast<uint32_t>(wres));
    for (const Probe& p : grid.probes) {
        for (int a = 0; a < 3; ++a)
            w.f32(static_cast<float>(p.position[a]));
        w.f32s(p.panorama.color.data().data(), p.panorama.color.data().size());
        w.f32s(p.panorama.depth.data().data(), p.panorama.depth.data().size());
    }
    w.close();
}

ProbeGrid load_atlas(const std::filesystem::path& path) {
    Reader r(path);
    char magic[4];
    r.raw(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw AtlasFormatError("bad magic, expected GPRB", 0);
    uint32_t version = r.u32("version");
    if (version != kVersion)
        throw AtlasFormatError("unsupported version " + std::to_string(version), 4);
    ProbeGrid grid;
    for (int a = 0; a < 3; ++a)
        grid.dims[a] = static_cast<int>(r.u32("dims"));
    for (int a = 0; a < 3; ++a)
        grid.bbox.lo[a] = r.f32("bbox lo");
    for (int a = 0; a < 3; ++a)
        grid.bbox.hi[a] = r.f32("bbox hi");
    int h = static_cast<int>(r.u32("height"));
    int wres = static_cast<int>(r.u32("width"));
    if (grid.dims[0] <= 0 || grid.dims[1] <= 0 || grid.dims[2] <= 0)
        throw AtlasFormatError("non-positive probe dims", 8);
    if (h < 0 || wres < 0 || (h > 0 && wres != 2 * h))
        throw AtlasFormatError("panorama width must be twice the height", r.offset() - 8);
    grid.probes.resize(grid.probe_count());
    for (Probe& p : grid.probes) {
        for (int a = 0; a < 3; ++a)
            p.position[a] = r.f32("probe position");
        p.panorama = Panorama(wres, h);
        r.f32s(p.panorama.color.data().data(), p.panorama.color.data().size(), "probe color");
        r.f32s(p.panorama.depth.data().data(), p.panorama.depth.data().size(), "probe depth");
        recompute_depth_cache(p);
    }
    return grid;
}

} // namespace gsp
