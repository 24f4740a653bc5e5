#pragma once

#include <functional>

#include "shellac/bem.hpp"
#include "shellac/shell.hpp"

namespace shellac {

// Fluid-structure transfer operators. The vertex normal matrix uses the
// coupling conormal (fluid-domain outward, pointing into the shell), the same
// direction as the BEM flux q, which keeps the source forms
//     f = C_sf p,   q = Y p + omega^2 rho C_fs u
// sign-correct. C_fs = n~^T acts on displacement coefficients; C_sf = n~ Gram
// with the basis Gram matrix int N^T N dGamma.
struct TransferOperators {
    std::vector<Vec3> conormal;
    SparseReal gram;

    int pressure_size() const { return static_cast<int>(conormal.size()); }

    Eigen::VectorXcd apply_fs(const Eigen::VectorXcd& u) const;  // (n) from (3n)
    Eigen::VectorXcd apply_sf(const Eigen::VectorXcd& p) const;  // (3n) from (n)
    Eigen::MatrixXd dense_fs() const;
    Eigen::MatrixXd dense_sf() const;
};

TransferOperators build_transfer(const SubdivisionSurface& surf, const CollocationTable& table,
                                 int quad_degree = 5);

// uniform scalar surface admittance; Y = -i omega rho beta I
struct AdmittanceModel {
    Complex beta = 0.0;
    Complex y_factor(double omega, double rho) const { return Complex(0.0, -1.0) * omega * rho * beta; }
};

struct GmresOptions {
    double tol = 1e-8;
    int restart = 100;
    int max_iterations = 1000;
};

struct GmresResult {
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> history;
};

using ApplyFn = std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>;

// Right-preconditioned restarted GMRES (modified Gram-Schmidt, Givens
// updates; single-threaded driver).
GmresResult gmres(const ApplyFn& apply, const ApplyFn& precond, const Eigen::VectorXcd& rhs,
                  Eigen::VectorXcd& x, const GmresOptions& opts);

struct CoupledState {
    Eigen::VectorXcd u;  // 3 n_cp displacement coefficients
    Eigen::VectorXcd p;  // n_cp pressure coefficients
    Eigen::VectorXcd q;  // n_cp flux coefficients
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> residual_history;
};

// Everything the Schur-complement solve needs. H/G appliers may be dense
// matvecs or compressed operators; precond approximates the inverse of the
// assembled H (may be empty).
struct CoupledOperators {
    int size = 0;
    ApplyFn apply_H;
    ApplyFn apply_G;
    ApplyFn precond;
    const TransferOperators* transfer = nullptr;
    const ShellOperator* shell = nullptr;  // factorized A(omega)
    double rho_f = 0.0;
    double omega = 0.0;
    Complex y_factor{0.0, 0.0};  // -i omega rho beta
};

// q_s = omega^2 rho C_fs A^-1 f_s (zero when f_s is zero or rho vanishes)
Eigen::VectorXcd build_structural_sources(const CoupledOperators& ops, const Eigen::VectorXcd& f_s);

// Y_C v = omega^2 rho C_fs A^-1 C_sf v, applied through the factorization
// (never formed densely)
Eigen::VectorXcd apply_structure_admittance(const CoupledOperators& ops, const Eigen::VectorXcd& v);

// GMRES on [H - G Y - G Y_C] p = G q_s + p_inc, then u and q recovery.
CoupledState solve_coupled(const CoupledOperators& ops, const Eigen::VectorXcd& p_inc,
                           const Eigen::VectorXcd& f_s, const GmresOptions& gopts = {});

// Dense monolithic block system [A, -C_sf; -omega^2 rho G C_fs, H - G Y],
// direct solve; oracle for solve_coupled on small instances (n_cp <= 2000).
struct BlockSolution {
    Eigen::VectorXcd u, p;
};
BlockSolution solve_block_system(const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& G,
                                 const TransferOperators& transfer, const ShellOperator& shell,
                                 double rho_f, double omega, Complex y_factor,
                                 const Eigen::VectorXcd& p_inc, const Eigen::VectorXcd& f_s);

}  // namespace shellac
