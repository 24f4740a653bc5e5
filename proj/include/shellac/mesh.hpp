#pragma once

#include <array>
#include <unordered_map>
#include <vector>

#include "shellac/core.hpp"

namespace shellac {

// Closed, orientable 2-manifold triangle control mesh. Vertices are
// subdivision control points and do not lie on the limit surface.
class ControlMesh {
public:
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;

    ControlMesh() = default;
    ControlMesh(std::vector<Vec3> verts, std::vector<std::array<int, 3>> tris);

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int triangle_count() const { return static_cast<int>(triangles.size()); }
    int edge_count() const { return 3 * triangle_count() / 2; }
    int genus() const;

    // Builds adjacency and validates closed-manifold invariants; throws Error
    // with a diagnostic on open edges, non-manifold fans or inconsistent
    // winding.
    void finalize();
    bool finalized() const { return !one_ring_.empty(); }

    int valence(int v) const { return static_cast<int>(one_ring_[v].size()); }
    // One-ring neighbours of v as a single cycle, ordered counter-clockwise
    // with respect to the face winding.
    const std::vector<int>& one_ring(int v) const { return one_ring_[v]; }

    // Third vertex of the triangle attached to edge (a,b) on the other side
    // from the triangle containing c.
    int opposite_vertex(int a, int b, int c) const;

    // Third vertices of the two triangles sharing edge (a,b).
    std::array<int, 2> edge_wings(int a, int b) const;

    // Triangles incident to a vertex, matching one_ring order: tri i contains
    // (v, ring[i], ring[i+1]).
    const std::vector<int>& vertex_triangles(int v) const { return vertex_tris_[v]; }

    double signed_volume() const;
    // Flips winding if the volume sign says normals point inward.
    void ensure_outward_orientation();

private:
    std::vector<std::vector<int>> one_ring_;
    std::vector<std::vector<int>> vertex_tris_;
    std::unordered_map<std::uint64_t, std::array<int, 2>> edge_tris_;

    std::uint64_t edge_key(int a, int b) const;
};

// One Loop refinement step: V' = V + E, F' = 4F. Children of triangle t are
// 4t..4t+3 with the parent corner leading in children 0..2 and the interior
// triangle last. New edge-vertex ids are V + (rank of the sorted edge).
ControlMesh loop_subdivide(const ControlMesh& mesh);

// Loop vertex-smoothing weight beta(n), original Loop variant.
double loop_beta(int valence);
// Limit-mask ring weight l(n): limit = (1 - n l) v + l * sum(ring).
double loop_limit_weight(int valence);

// Parameter map from a parent element into its children under
// loop_subdivide: (element, v, w) -> (child offset 0..3, v', w').
struct ChildParam {
    int child;
    double v, w;
};
ChildParam refined_param(double v, double w);

ControlMesh make_icosahedron(double radius);

}  // namespace shellac
