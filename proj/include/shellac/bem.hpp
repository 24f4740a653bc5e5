#pragma once

#include <optional>

#include <Eigen/Dense>

#include "shellac/quadrature.hpp"
#include "shellac/subdivision.hpp"

namespace shellac {

struct WaveContext {
    double k = 1.0;               // wavenumber (1/m)
    double c = 1482.0;            // fluid sound speed (m/s)
    double rho_f = 1000.0;        // fluid density (kg/m^3)
    double amplitude = 1.0;       // incident amplitude P (Pa)
    Vec3 direction{1.0, 0.0, 0.0};

    double omega() const { return k * c; }
    Complex incident(const Vec3& x) const;       // P e^{i k d.x}
    Complex incident_dn(const Vec3& x, const Vec3& n) const;  // directional derivative
    void validate() const;
};

// e^{ikr} / (4 pi r)
Complex helmholtz_kernel(const Vec3& x, const Vec3& y, double k);
// e^{ikr} / (4 pi r^2) (ikr - 1) dr/dn, dr/dn = (y - x).n_y / r
Complex kernel_dGdn(const Vec3& x, const Vec3& y, const Vec3& n_y, double k);

// One collocation point per control vertex, at its limit position. Normals
// are unit outward (shell -> fluid).
struct CollocationTable {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<int> owner;  // control vertex of each point
    int size() const { return static_cast<int>(points.size()); }
};
CollocationTable build_collocation_table(const SubdivisionSurface& surf);

struct AssemblyOptions {
    int far_degree = 8;        // Gauss rule away from the collocation point
    int ring_duffy_points = 12;  // tensor order of the singular-element rule
    double near_ratio = 4.0;   // adaptive splitting when dist < ratio * diameter
    int near_max_depth = 4;
    bool convergence_check = false;  // two-rule sentinel on regular elements
    double convergence_tol = 1e-6;
};

// Collocation assembly of the exterior Helmholtz operators on the limit
// surface. The assembled system follows the source convention
//     H p = G q + p_inc,   H_AB = 1/2 N_B(x_A) + int N_B dG/dn,
// whose kernels and flux q = dp/dn are taken along the fluid-domain outward
// conormal n = -(shell outward normal). The strongly singular H integral is
// regularized by static (k = 0) singularity subtraction on the one-ring and
// closed with the static identity int_Gamma dG0/dn dGamma = +1/2, so a static
// row applied to the all-ones coefficient vector returns exactly 1/2 + 1/2.
class BemAssembler {
public:
    explicit BemAssembler(const SubdivisionSurface& surf, AssemblyOptions opts = {});

    const SubdivisionSurface& surface() const { return *surf_; }
    const CollocationTable& collocation() const { return table_; }
    const AssemblyOptions& options() const { return opts_; }
    int size() const { return table_.size(); }

    // Dense operators (both in one sweep; pass nullptr to skip one).
    void assemble(const WaveContext& ctx, Eigen::MatrixXcd* H, Eigen::MatrixXcd* G) const;

    // One collocation row restricted to a column subset (nullptr: all
    // columns). Output buffers hold cols->size() (or n) entries.
    void assemble_row(const WaveContext& ctx, int row, const std::vector<int>* cols,
                      Complex* h_out, Complex* g_out) const;

    // Column segment over far rows (rows must not own the column support;
    // near rows fall back to adaptive quadrature automatically).
    void assemble_column(const WaveContext& ctx, int col, const std::vector<int>& rows,
                         Complex* h_out, Complex* g_out) const;

    Eigen::VectorXcd incident_vector(const WaveContext& ctx) const;

    // Exterior evaluation p(x) = int G q - int dG/dn p + p_inc for points in
    // the fluid. Emits a warning (returned flag) for points within one
    // element diameter of the surface.
    struct ExteriorResult {
        std::vector<Complex> values;
        bool near_surface_warning = false;
    };
    ExteriorResult exterior_pressure(const WaveContext& ctx, const Eigen::VectorXcd& p,
                                     const Eigen::VectorXcd& q, const std::vector<Vec3>& points) const;

    // Axis-aligned box containing the limit-surface support of basis A
    // (convex-hull bound through the control points).
    Eigen::AlignedBox3d support_box(int basis) const;

    // Elements where basis A is non-zero.
    const std::vector<int>& support_elements(int basis) const { return supp_[basis]; }

    double surface_area() const;
    double mean_edge_length() const { return mean_edge_; }

    // closed-surface static identity along the assembly conormal, fixed by
    // the calibration test in the suite
    static constexpr double kStaticIdentity = 0.5;

private:
    struct ElemGeom {
        Vec3 centroid;
        double diameter = 0.0;
    };
    struct FarPoint {
        Vec3 x;
        Vec3 conormal;  // -(outward normal), fluid-domain outward
        double jw = 0.0;
    };

    const SubdivisionSurface* surf_;
    AssemblyOptions opts_;
    CollocationTable table_;
    std::vector<std::vector<int>> supp_;
    std::vector<ElemGeom> geom_;
    // far-rule cache, flattened per element
    std::vector<int> qp_offset_;
    std::vector<FarPoint> qp_;
    std::vector<double> qp_basis_;  // n_qp * n_v values per element
    std::vector<std::size_t> qp_basis_offset_;
    std::vector<PatchBasis> vertex_basis_;  // limit basis at each collocation point
    double mean_edge_ = 0.0;

    void cache_element_tables();
};

// Binary dump (documented header: magic "SHELLACM", int64 rows, cols, then
// row-major re/im doubles) for debugging.
void dump_matrix(const std::string& path, const Eigen::MatrixXcd& m);
Eigen::MatrixXcd load_matrix_dump(const std::string& path);

}  // namespace shellac
