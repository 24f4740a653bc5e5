#include "shellac/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace shellac {

ControlMesh::ControlMesh(std::vector<Vec3> verts, std::vector<std::array<int, 3>> tris)
    : vertices(std::move(verts)), triangles(std::move(tris)) {
    finalize();
}

std::uint64_t ControlMesh::edge_key(int a, int b) const {
    const std::uint64_t lo = static_cast<std::uint64_t>(std::min(a, b));
    const std::uint64_t hi = static_cast<std::uint64_t>(std::max(a, b));
    return (hi << 32) | lo;
}

int ControlMesh::genus() const {
    const int chi = vertex_count() - edge_count() + triangle_count();
    return (2 - chi) / 2;
}

void ControlMesh::finalize() {
    const int nv = vertex_count();
    const int nt = triangle_count();
    if (nt == 0) throw Error("mesh: empty triangle list");
    if (nt % 2 != 0) throw Error("mesh: odd triangle count, cannot be closed");

    for (int t = 0; t < nt; ++t) {
        const auto& tri = triangles[t];
        for (int c = 0; c < 3; ++c) {
            if (tri[c] < 0 || tri[c] >= nv) {
                std::ostringstream os;
                os << "mesh: triangle " << t << " references vertex " << tri[c] << " out of range";
                throw Error(os.str());
            }
        }
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
            std::ostringstream os;
            os << "mesh: triangle " << t << " is degenerate";
            throw Error(os.str());
        }
    }

    // Directed-edge map; each directed edge must appear exactly once for a
    // consistently wound closed surface.
    std::unordered_map<std::uint64_t, int> directed;
    directed.reserve(3 * nt);
    edge_tris_.clear();
    edge_tris_.reserve(3 * nt / 2);
    for (int t = 0; t < nt; ++t) {
        const auto& tri = triangles[t];
        for (int c = 0; c < 3; ++c) {
            const int a = tri[c], b = tri[(c + 1) % 3];
            const std::uint64_t dk = (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
            if (!directed.emplace(dk, t).second) {
                std::ostringstream os;
                os << "mesh: directed edge (" << a << "," << b << ") appears twice; non-manifold or inconsistent winding near triangle " << t;
                throw Error(os.str());
            }
            auto [it, inserted] = edge_tris_.try_emplace(edge_key(a, b), std::array<int, 2>{t, -1});
            if (!inserted) {
                if (it->second[1] != -1) {
                    std::ostringstream os;
                    os << "mesh: edge (" << a << "," << b << ") shared by more than two triangles";
                    throw Error(os.str());
                }
                it->second[1] = t;
            }
        }
    }
    for (const auto& [key, tris] : edge_tris_) {
        if (tris[1] == -1) {
            const int a = static_cast<int>(key & 0xffffffffu);
            const int b = static_cast<int>(key >> 32);
            std::ostringstream os;
            os << "mesh: boundary edge (" << a << "," << b << "); closed surfaces only";
            throw Error(os.str());
        }
    }

    // Ordered one-rings by walking the triangle fan counter-clockwise
    // (winding (v, a, b) means b follows a around v).
    std::vector<std::unordered_map<int, std::pair<int, int>>> next_around(nv);
    for (int t = 0; t < nt; ++t) {
        const auto& tri = triangles[t];
        for (int c = 0; c < 3; ++c) {
            next_around[tri[c]].emplace(tri[(c + 1) % 3], std::make_pair(tri[(c + 2) % 3], t));
        }
    }
    one_ring_.assign(nv, {});
    vertex_tris_.assign(nv, {});
    for (int v = 0; v < nv; ++v) {
        auto& fan = next_around[v];
        if (fan.empty()) throw Error("mesh: isolated vertex " + std::to_string(v));
        const int start = fan.begin()->first;
        int cur = start;
        do {
            auto it = fan.find(cur);
            if (it == fan.end()) throw Error("mesh: broken fan at vertex " + std::to_string(v));
            one_ring_[v].push_back(cur);
            vertex_tris_[v].push_back(it->second.second);
            cur = it->second.first;
            if (one_ring_[v].size() > fan.size()) {
                throw Error("mesh: one-ring of vertex " + std::to_string(v) + " is not a single cycle");
            }
        } while (cur != start);
        if (one_ring_[v].size() != fan.size()) {
            throw Error("mesh: one-ring of vertex " + std::to_string(v) + " is not a single cycle");
        }
        if (one_ring_[v].size() < 3) {
            throw Error("mesh: vertex " + std::to_string(v) + " has valence < 3");
        }
    }

    const int chi = nv - edge_count() + nt;
    if (chi % 2 != 0 || chi > 2) {
        throw Error("mesh: Euler characteristic " + std::to_string(chi) + " inconsistent with a closed orientable surface");
    }
}

int ControlMesh::opposite_vertex(int a, int b, int c) const {
    const auto it = edge_tris_.find(edge_key(a, b));
    if (it == edge_tris_.end()) throw Error("mesh: no edge between requested vertices");
    for (int t : it->second) {
        const auto& tri = triangles[t];
        if (tri[0] == c || tri[1] == c || tri[2] == c) continue;
        for (int k = 0; k < 3; ++k) {
            if (tri[k] != a && tri[k] != b) return tri[k];
        }
    }
    throw Error("mesh: opposite_vertex query does not match edge/triangle structure");
}

std::array<int, 2> ControlMesh::edge_wings(int a, int b) const {
    const auto it = edge_tris_.find(edge_key(a, b));
    if (it == edge_tris_.end()) throw Error("mesh: no edge between requested vertices");
    std::array<int, 2> wings{};
    for (int s = 0; s < 2; ++s) {
        const auto& tri = triangles[it->second[s]];
        for (int k = 0; k < 3; ++k) {
            if (tri[k] != a && tri[k] != b) wings[s] = tri[k];
        }
    }
    return wings;
}

double ControlMesh::signed_volume() const {
    double vol = 0.0;
    for (const auto& tri : triangles) {
        vol += vertices[tri[0]].dot(vertices[tri[1]].cross(vertices[tri[2]]));
    }
    return vol / 6.0;
}

void ControlMesh::ensure_outward_orientation() {
    if (signed_volume() < 0.0) {
        for (auto& tri : triangles) std::swap(tri[1], tri[2]);
        finalize();
    }
}

double loop_beta(int n) {
    const double c = 3.0 / 8.0 + 0.25 * std::cos(2.0 * kPi / n);
    return (5.0 / 8.0 - c * c) / n;
}

double loop_limit_weight(int n) {
    return 1.0 / (n + 3.0 / (8.0 * loop_beta(n)));
}

ControlMesh loop_subdivide(const ControlMesh& mesh) {
    if (!mesh.finalized()) throw Error("loop_subdivide: mesh not finalized");
    const int nv = mesh.vertex_count();
    const int nt = mesh.triangle_count();

    // Deterministic edge numbering: sorted (min,max) pairs.
    std::map<std::pair<int, int>, int> edge_id;
    for (const auto& tri : mesh.triangles) {
        for (int c = 0; c < 3; ++c) {
            const int a = tri[c], b = tri[(c + 1) % 3];
            edge_id.emplace(std::minmax(a, b), 0);
        }
    }
    int eid = 0;
    for (auto& [e, id] : edge_id) id = eid++;

    ControlMesh out;
    out.vertices.resize(nv + eid);

    // Smoothed vertex points.
    for (int v = 0; v < nv; ++v) {
        const int n = mesh.valence(v);
        const double beta = loop_beta(n);
        Vec3 ring_sum = Vec3::Zero();
        for (int r : mesh.one_ring(v)) ring_sum += mesh.vertices[r];
        out.vertices[v] = (1.0 - n * beta) * mesh.vertices[v] + beta * ring_sum;
    }
    // Edge points: 3/8 endpoints + 1/8 wings.
    for (const auto& [e, id] : edge_id) {
        const auto wings = mesh.edge_wings(e.first, e.second);
        out.vertices[nv + id] = 0.375 * (mesh.vertices[e.first] + mesh.vertices[e.second]) +
                                0.125 * (mesh.vertices[wings[0]] + mesh.vertices[wings[1]]);
    }

    out.triangles.reserve(4 * nt);
    for (int t = 0; t < nt; ++t) {
        const auto& tri = mesh.triangles[t];
        const int m01 = nv + edge_id.at(std::minmax(tri[0], tri[1]));
        const int m12 = nv + edge_id.at(std::minmax(tri[1], tri[2]));
        const int m20 = nv + edge_id.at(std::minmax(tri[2], tri[0]));
        out.triangles.push_back({tri[0], m01, m20});
        out.triangles.push_back({tri[1], m12, m01});
        out.triangles.push_back({tri[2], m20, m12});
        out.triangles.push_back({m01, m12, m20});
    }
    out.finalize();
    return out;
}

ChildParam refined_param(double v, double w) {
    if (v + w <= 0.5) return {0, 2.0 * v, 2.0 * w};
    if (v >= 0.5) return {1, 2.0 * w, 2.0 * (1.0 - v - w)};
    if (w >= 0.5) return {2, 2.0 * (1.0 - v - w), 2.0 * v};
    return {3, 2.0 * v + 2.0 * w - 1.0, 1.0 - 2.0 * v};
}

ControlMesh make_icosahedron(double radius) {
    const double phi = 0.5 * (1.0 + std::sqrt(5.0));
    std::vector<Vec3> raw = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
    };
    for (auto& p : raw) p *= radius / p.norm();
    std::vector<std::array<int, 3>> tris = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
    };
    ControlMesh mesh(std::move(raw), std::move(tris));
    mesh.ensure_outward_orientation();
    return mesh;
}

}  // namespace shellac
