#pragma once

#include "gsp/core/types.hpp"

#include <optional>
#include <vector>

namespace gsp {

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> face_normals; // unit, filled by finalize()

    // Computes face normals and validates indices / degenerate faces.
    void finalize();
    Aabb bounds() const;
};

struct MeshHit {
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::Zero(); // face normal, outward for well-oriented meshes
    double distance = 0.0;
    int triangle = -1;
};

// Binary BVH over triangles (median split on the longest axis).
class BvhIndex {
  public:
    BvhIndex() = default;
    explicit BvhIndex(const TriangleMesh& mesh);

    // Nearest intersection with distance > t_min; nullopt on miss.
    std::optional<MeshHit> trace(const Ray& ray, double t_min) const;

    const TriangleMesh& mesh() const { return *mesh_; }
    double bbox_diagonal() const { return nodes_.empty() ? 0.0 : nodes_[0].box.diagonal(); }

    // Instrumentation for the culling tests.
    mutable uint64_t triangle_tests = 0;

  private:
    struct Node {
        Aabb box;
        int left = -1, right = -1; // internal children
        int first = 0, count = 0;  // leaf triangle range
    };
    int build(std::vector<int>& items, int begin, int end);

    const TriangleMesh* mesh_ = nullptr;
    std::vector<Node> nodes_;
    std::vector<int> order_; // triangle indices, leaf ranges are contiguous
};

std::optional<MeshHit> trace_mesh(const BvhIndex& bvh, const Ray& ray, double t_min);

// Moeller-Trumbore, shared by the BVH and the brute-force reference.
std::optional<double> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b,
                                         const Vec3& c, double t_min);

} // namespace gsp
