#pragma once

#include <memory>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "shellac/subdivision.hpp"

namespace shellac {

struct ShellMaterial {
    double E = 210e9;     // Young's modulus (Pa)
    double nu = 0.3;      // Poisson ratio
    double rho = 7860.0;  // density (kg/m^3)
    double h = 0.05;      // thickness (m)
    double c1 = 0.0;      // Rayleigh stiffness constant (s)
    double c2 = 0.0;      // Rayleigh mass constant (1/s)

    void validate() const;
};

using SparseReal = Eigen::SparseMatrix<double>;
using SparseComplex = Eigen::SparseMatrix<Complex>;

// Membrane + bending stiffness of the Kirchhoff-Love shell on the
// subdivision basis; 3 displacement dofs per control vertex, dof(v, i) =
// 3 v + i. Thickness scaling: membrane ~ h, bending ~ h^3/12.
SparseReal assemble_stiffness(const SubdivisionSurface& surf, const ShellMaterial& mat,
                              int quad_degree = 5);
// Consistent mass, rho h per unit mid-surface area; rotary inertia omitted.
SparseReal assemble_mass(const SubdivisionSurface& surf, const ShellMaterial& mat,
                         int quad_degree = 5);

// membrane-only / bending-only assemblies, used by scaling checks
SparseReal assemble_stiffness_part(const SubdivisionSurface& surf, const ShellMaterial& mat,
                                   bool membrane, bool bending, int quad_degree = 5);

// A(omega) = -omega^2 M + i omega (c1 K + c2 M) + K with a reusable sparse
// factorization; solves are safe to call repeatedly.
class ShellOperator {
public:
    ShellOperator(SparseReal K, SparseReal M, const ShellMaterial& mat, double omega);

    int dof_count() const { return static_cast<int>(K_.rows()); }
    double omega() const { return omega_; }
    const SparseReal& stiffness() const { return K_; }
    const SparseReal& mass() const { return M_; }
    const SparseComplex& dynamic_matrix() const { return A_; }

    Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const;

private:
    SparseReal K_, M_;
    SparseComplex A_;
    double omega_;
    std::unique_ptr<Eigen::SparseLU<SparseComplex>> lu_;
};

}  // namespace shellac
