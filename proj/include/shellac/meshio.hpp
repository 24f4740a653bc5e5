#pragma once

#include <functional>
#include <string>

#include "shellac/subdivision.hpp"

namespace shellac {

// Implicit target shape providing a closest-point projection.
struct TargetSurface {
    std::function<Vec3(const Vec3&)> project;
};

TargetSurface sphere_target(const Vec3& center, double radius);

// ASCII OFF / OBJ, format picked by file extension. Triangles only; parse
// failures report the offending line.
ControlMesh load_mesh(const std::string& path);
void save_mesh(const ControlMesh& mesh, const std::string& path);

// Legacy ASCII VTK of the limit-surface tessellation (vertex limit positions
// + control connectivity) with named point-data fields.
struct VtkPointData {
    std::string name;
    std::vector<double> values;  // one per vertex
};
void save_vtk_surface(const SubdivisionSurface& surf, const std::string& path,
                      const std::vector<VtkPointData>& fields);

// Icosahedron-derived sphere control mesh: `levels` Loop refinements with
// control vertices renormalized onto the sphere (radius 0.5 m, diameter a=1)
// after each step. Level l has V = 10*4^l + 2 vertices.
ControlMesh make_sphere_control_mesh(int levels, double radius = 0.5);

struct GeometryErrorReport {
    double eps_g = 0.0;                    // relative L2 geometry error
    std::vector<double> element_contrib;   // integral of |x^h - P(x^h)|^2 per element
};

// eps_g = ||x^h - P(x^h)||_0 / ||P(x^h)||_0 with a shared >= 7-point rule.
GeometryErrorReport geometry_error(const ControlMesh& mesh, const TargetSurface& target,
                                   int quad_degree = 5);

// L2 projection of the limit surface onto the target: iteratively solves the
// Gram normal equations for the control positions against the closest-point
// field. Never increases eps_g.
ControlMesh l2_fit_to_target(const ControlMesh& mesh, const TargetSurface& target,
                             int iterations = 5, int quad_degree = 5);

}  // namespace shellac
