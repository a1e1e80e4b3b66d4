#include "gsp/shade/mesh.hpp"

#include <algorithm>
#include <cmath>

namespace gsp {

void TriangleMesh::finalize() {
    face_normals.resize(triangles.size());
    const int nv = static_cast<int>(vertices.size());
    for (size_t f = 0; f < triangles.size(); ++f) {
        const auto& t = triangles[f];
        for (int k = 0; k < 3; ++k)
            if (t[k] < 0 || t[k] >= nv)
                throw std::invalid_argument("mesh: triangle index out of range");
        Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
        double area2 = n.norm();
        if (area2 * 0.5 <= 1e-12)
            throw std::invalid_argument("mesh: degenerate face " + std::to_string(f));
        face_normals[f] = n / area2;
    }
}

Aabb TriangleMesh::bounds() const {
    Aabb box = Aabb::empty();
    for (const Vec3& v : vertices)
        box.expand(v);
    return box;
}

std::optional<double> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b,
                                         const Vec3& c, double t_min) {
    constexpr double kEps = 1e-12;
    Vec3 e1 = b - a, e2 = c - a;
    Vec3 pvec = ray.dir.cross(e2);
    double det = e1.dot(pvec);
    if (std::abs(det) < kEps)
        return std::nullopt;
    double inv_det = 1.0 / det;
    Vec3 tvec = ray.origin - a;
    double u = tvec.dot(pvec) * inv_det;
    if (u < 0.0 || u > 1.0)
        return std::nullopt;
    Vec3 qvec = tvec.cross(e1);
    double v = ray.dir.dot(qvec) * inv_det;
    if (v < 0.0 || u + v > 1.0)
        return std::nullopt;
    double t = e2.dot(qvec) * inv_det;
    if (t <= t_min)
        return std::nullopt;
    return t;
}

BvhIndex::BvhIndex(const TriangleMesh& mesh) : mesh_(&mesh) {
    order_.resize(mesh.triangles.size());
    for (size_t i = 0; i < order_.size(); ++i)
        order_[i] = static_cast<int>(i);
    if (!order_.empty()) {
        nodes_.reserve(2 * order_.size());
        build(order_, 0, static_cast<int>(order_.size()));
    }
}

int BvhIndex::build(std::vector<int>& items, int begin, int end) {
    int node_index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Aabb box = Aabb::empty();
    for (int i = begin; i < end; ++i)
        for (int k = 0; k < 3; ++k)
            box.expand(mesh_->vertices[mesh_->triangles[items[i]][k]]);
    nodes_[node_index].box = box;

    constexpr int kLeafSize = 4;
    if (end - begin <= kLeafSize) {
        nodes_[node_index].first = begin;
        nodes_[node_index].count = end - begin;
        return node_index;
    }
    Vec3 ext = box.extent();
    int axis = 0;
    if (ext.y() > ext.x())
        axis = 1;
    if (ext.z() > ext[axis])
        axis = 2;
    int mid = (begin + end) / 2;
    std::nth_element(items.begin() + begin, items.begin() + mid, items.begin() + end,
                     [&](int a, int b) {
                         auto centroid = [&](int tri, int ax) {
                             const auto& t = mesh_->triangles[tri];
                             return mesh_->vertices[t[0]][ax] + mesh_->vertices[t[1]][ax] +
                                    mesh_->vertices[t[2]][ax];
                         };
                         return centroid(a, axis) < centroid(b, axis);
                     });
    int left = build(items, begin, mid);
    int right = build(items, mid, end);
    nodes_[node_index].left = left;
    nodes_[node_index].right = right;
    return node_index;
}

namespace {

bool hit_box(const Aabb& box, const Ray& ray, const Vec3& inv_dir, double t_max) {
    double t0 = 0.0, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
        double lo = (box.lo[a] - ray.origin[a]) * inv_dir[a];
        double hi = (box.hi[a] - ray.origin[a]) * inv_dir[a];
        if (inv_dir[a] < 0.0)
            std::swap(lo, hi);
        t0 = std::max(t0, lo);
        t1 = std::min(t1, hi);
        if (t0 > t1)
            return false;
    }
    return true;
}

} // namespace

std::optional<MeshHit> BvhIndex::trace(const Ray& ray, double t_min) const {
    if (nodes_.empty())
        return std::nullopt;
    Vec3 inv_dir;
    for (int a = 0; a < 3; ++a)
        inv_dir[a] = 1.0 / ray.dir[a]; // +-inf for zero components is fine for slabs
    double best_t = std::numeric_limits<double>::infinity();
    int best_tri = -1;

    int stack[64];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
        const Node& node = nodes_[stack[--sp]];
        if (!hit_box(node.box, ray, inv_dir, best_t))
            continue;
        if (node.count > 0) {
            for (int i = node.first; i < node.first + node.count; ++i) {
                int tri = order_[i];
                const auto& t = mesh_->triangles[tri];
                ++triangle_tests;
                auto hit = intersect_triangle(ray, mesh_->vertices[t[0]], mesh_->vertices[t[1]],
                                              mesh_->vertices[t[2]], t_min);
                if (hit && *hit < best_t) {
                    best_t = *hit;
                    best_tri = tri;
                }
            }
        } else {
            stack[sp++] = node.left;
            stack[sp++] = node.right;
        }
    }
    if (best_tri < 0)
        return std::nullopt;
    MeshHit h;
    h.distance = best_t;
    h.point = ray.at(best_t);
    h.normal = mesh_->face_normals[best_tri];
    h.triangle = best_tri;
    return h;
}

std::optional<MeshHit> trace_mesh(const BvhIndex& bvh, const Ray& ray, double t_min) {
    return bvh.trace(ray, t_min);
}

} // namespace gsp
