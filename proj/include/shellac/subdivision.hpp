#pragma once

#include <map>
#include <memory>
#include <vector>

#include "shellac/mesh.hpp"

namespace shellac {

// Parametric point inside an element, barycentric with respect to the stored
// corner order: corner0 <-> (0,0), corner1 <-> (1,0), corner2 <-> (0,1).
struct ParamPoint {
    int element = -1;
    double v = 0.0, w = 0.0;
};

// Basis values and parametric derivatives of the n_v patch functions that are
// non-zero on an element. `vertices` carries the global control-vertex id of
// each basis function.
struct PatchBasis {
    int element = -1;
    int n_v = 0;
    std::vector<int> vertices;
    std::vector<double> values;
    std::vector<std::array<double, 2>> d1;  // d/dv, d/dw
    std::vector<std::array<double, 3>> d2;  // d/dvv, d/dvw, d/dww
};

// Limit-surface evaluation over a control mesh. Patch topology is extracted
// once per element at construction; evaluation is pure and thread-safe.
//
// Precondition (checked): every element has at most one irregular corner,
// which holds for any mesh refined at least once by loop_subdivide.
class SubdivisionSurface {
public:
    explicit SubdivisionSurface(const ControlMesh& mesh);

    const ControlMesh& mesh() const { return *mesh_; }

    // deriv_order 0: values only; 1: +d1; 2: +d2.
    PatchBasis evaluate_basis(const ParamPoint& p, int deriv_order = 2) const;

    Vec3 limit_position(const ParamPoint& p) const;
    // Unit outward normal (requires outward-wound mesh).
    Vec3 limit_normal(const ParamPoint& p) const;

    // Limit position / normal / basis of the collocation point attached to a
    // control vertex. At irregular vertices these use the limit masks; the
    // recursive evaluation path never terminates there.
    Vec3 vertex_limit_position(int vertex) const;
    Vec3 vertex_limit_normal(int vertex) const;
    PatchBasis vertex_limit_basis(int vertex) const;

    // Patch vertex ids of an element (basis support on that element).
    const std::vector<int>& patch_vertices(int element) const { return patches_[element].verts; }
    int patch_size(int element) const { return static_cast<int>(patches_[element].verts.size()); }

    // Mean control-edge length of the limit surface image, used for
    // elements-per-wavelength reporting.
    double mean_edge_length() const;

    static constexpr int kMaxRecursionDepth = 30;

    struct IrregularOps;  // per-valence subdivision operators (internal)

private:
    struct Patch {
        int rot = 0;               // stored corner index that became local corner 0
        int irregular_valence = 6; // valence of local corner 0 (6 => regular patch)
        std::vector<int> verts;    // global ids, canonical local order
    };

    const ControlMesh* mesh_;
    std::vector<Patch> patches_;
    std::map<int, std::shared_ptr<const IrregularOps>> ops_;  // by valence

    void build_patch(int element);
    const IrregularOps& ops_for(int valence) const;

    // Basis in the local (rotated) frame.
    void eval_local(const Patch& patch, double v, double w, int deriv_order,
                    std::vector<double>& values, std::vector<std::array<double, 2>>& d1,
                    std::vector<std::array<double, 3>>& d2) const;
};

// Quartic box-spline basis on a regular patch: values / first / second
// parametric derivatives of the 12 canonical basis functions.
// Exposed for tests; production code goes through SubdivisionSurface.
void box_spline_basis(double v, double w, int deriv_order, double values[12],
                      double d1[12][2], double d2[12][3]);

}  // namespace shellac
