#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>

#include "shellac/analytic.hpp"
#include "shellac/meshio.hpp"
#include "shellac/quadrature.hpp"
#include "shellac/shell.hpp"

using namespace shellac;

namespace {

const ControlMesh& fitted_sphere(int level) {
    static std::map<int, ControlMesh> cache;
    auto it = cache.find(level);
    if (it == cache.end()) {
        ControlMesh m = l2_fit_to_target(make_sphere_control_mesh(level), sphere_target(Vec3::Zero(), 0.5));
        it = cache.emplace(level, std::move(m)).first;
    }
    return it->second;
}

// rigid-body coefficient vectors: affine precision makes control-point
// translations/rotations exact rigid fields on the limit surface
std::vector<Eigen::VectorXd> rigid_modes(const ControlMesh& mesh) {
    const int n = mesh.vertex_count();
    std::vector<Eigen::VectorXd> modes;
    for (int i = 0; i < 3; ++i) {
        Eigen::VectorXd t = Eigen::VectorXd::Zero(3 * n);
        for (int v = 0; v < n; ++v) t(3 * v + i) = 1.0;
        modes.push_back(t);
    }
    for (int i = 0; i < 3; ++i) {
        Vec3 axis = Vec3::Zero();
        axis[i] = 1.0;
        Eigen::VectorXd t = Eigen::VectorXd::Zero(3 * n);
        for (int v = 0; v < n; ++v) {
            const Vec3 r = axis.cross(mesh.vertices[v]);
            t.segment<3>(3 * v) = r;
        }
        modes.push_back(t);
    }
    return modes;
}

// spheroidal FEM frequencies (radial-energy filter drops torsional modes)
std::vector<double> spheroidal_frequencies(const ControlMesh& mesh, const ShellMaterial& mat,
                                           int count) {
    SubdivisionSurface surf(mesh);
    const Eigen::MatrixXd K = Eigen::MatrixXd(assemble_stiffness(surf, mat));
    const Eigen::MatrixXd M = Eigen::MatrixXd(assemble_mass(surf, mat));
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, M);
    const Eigen::VectorXd lam = eig.eigenvalues();
    const Eigen::MatrixXd vec = eig.eigenvectors();
    std::vector<double> out;
    for (int i = 0; i < lam.size() && static_cast<int>(out.size()) < count; ++i) {
        if (lam(i) < 1e-4 * lam(lam.size() - 1) * 1e-4) continue;  // rigid modes
        double radial = 0.0, total = 0.0;
        for (int v = 0; v < mesh.vertex_count(); ++v) {
            const Vec3 u = vec.col(i).segment<3>(3 * v);
            const Vec3 rhat = mesh.vertices[v].normalized();
            radial += u.dot(rhat) * u.dot(rhat);
            total += u.squaredNorm();
        }
        if (radial / total < 0.3) continue;  // torsional
        out.push_back(std::sqrt(lam(i)));
    }
    return out;
}

}  // namespace

TEST(Shell, SymmetryAndRigidBodyModes) {
    const ControlMesh& mesh = fitted_sphere(1);
    SubdivisionSurface surf(mesh);
    ShellMaterial mat;
    const SparseReal K = assemble_stiffness(surf, mat);
    const SparseReal M = assemble_mass(surf, mat);

    const Eigen::MatrixXd Kd(K), Md(M);
    EXPECT_LT((Kd - Kd.transpose()).cwiseAbs().maxCoeff(), 1e-10 * Kd.cwiseAbs().maxCoeff());
    EXPECT_LT((Md - Md.transpose()).cwiseAbs().maxCoeff(), 1e-12 * Md.cwiseAbs().maxCoeff());

    const double knorm = Kd.norm();
    for (const auto& t : rigid_modes(mesh)) {
        EXPECT_LT((Kd * t).norm(), 1e-8 * knorm * t.norm());
    }
}

TEST(Shell, SixModeNullSpace) {
    const ControlMesh& mesh = fitted_sphere(1);
    SubdivisionSurface surf(mesh);
    ShellMaterial mat;
    const Eigen::MatrixXd K(assemble_stiffness(surf, mat));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
    const Eigen::VectorXd lam = eig.eigenvalues();
    const double lmax = lam(lam.size() - 1);
    for (int i = 0; i < 6; ++i) EXPECT_LT(std::abs(lam(i)), 1e-8 * lmax);
    EXPECT_GT(lam(6), 1e-6 * lmax);
}

TEST(Shell, MassTotalsAndPositivity) {
    const ControlMesh& mesh = fitted_sphere(2);
    SubdivisionSurface surf(mesh);
    ShellMaterial mat;
    const SparseReal M = assemble_mass(surf, mat);
    const int n = mesh.vertex_count();

    // quadrature area oracle, same rule as the mass assembly so the
    // partition-of-unity identity is exact
    double area = 0.0;
    {
        const auto& rule = triangle_rule(5);
        for (int e = 0; e < mesh.triangle_count(); ++e) {
            for (const auto& qp : rule) {
                const PatchBasis b = surf.evaluate_basis({e, qp.v, qp.w}, 1);
                Vec3 a1 = Vec3::Zero(), a2 = Vec3::Zero();
                for (int a = 0; a < b.n_v; ++a) {
                    a1 += b.d1[a][0] * mesh.vertices[b.vertices[a]];
                    a2 += b.d1[a][1] * mesh.vertices[b.vertices[a]];
                }
                area += qp.weight * a1.cross(a2).norm();
            }
        }
    }
    for (int comp = 0; comp < 3; ++comp) {
        Eigen::VectorXd ones = Eigen::VectorXd::Zero(3 * n);
        for (int v = 0; v < n; ++v) ones(3 * v + comp) = 1.0;
        const double total = ones.dot(M * ones);
        EXPECT_NEAR(total, mat.rho * mat.h * area, 1e-6 * mat.rho * mat.h * area);
        // fitted unit-diameter sphere: area ~ pi
        EXPECT_NEAR(total, mat.rho * mat.h * kPi, 2e-3 * mat.rho * mat.h * kPi);
    }

    const Eigen::MatrixXd Mdense(M);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Mdense);
    EXPECT_GT(eig.eigenvalues()(0), 0.0);
}

TEST(Shell, ThicknessScalingLaws) {
    const ControlMesh& mesh = fitted_sphere(1);
    SubdivisionSurface surf(mesh);
    ShellMaterial mat;
    ShellMaterial mat2 = mat;
    mat2.h = 2.0 * mat.h;

    const Eigen::MatrixXd Km(assemble_stiffness_part(surf, mat, true, false));
    const Eigen::MatrixXd Km2(assemble_stiffness_part(surf, mat2, true, false));
    const Eigen::MatrixXd Kb(assemble_stiffness_part(surf, mat, false, true));
    const Eigen::MatrixXd Kb2(assemble_stiffness_part(surf, mat2, false, true));
    EXPECT_LT((Km2 - 2.0 * Km).cwiseAbs().maxCoeff(), 1e-12 * Km.cwiseAbs().maxCoeff());
    EXPECT_LT((Kb2 - 8.0 * Kb).cwiseAbs().maxCoeff(), 1e-12 * Kb.cwiseAbs().maxCoeff());
}

TEST(Shell, DynamicOperatorContracts) {
    const ControlMesh& mesh = fitted_sphere(1);
    SubdivisionSurface surf(mesh);
    ShellMaterial mat;
    const SparseReal K = assemble_stiffness(surf, mat);
    const SparseReal M = assemble_mass(surf, mat);

    // omega = 0, no damping: A = K
    {
        ShellOperator op(K, M, mat, 0.0);
        const Eigen::MatrixXd diff =
            Eigen::MatrixXd(op.dynamic_matrix().real()) - Eigen::MatrixXd(K);
        EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-12 * Eigen::MatrixXd(K).cwiseAbs().maxCoeff());
    }
    // factorization contract: small residual on random solves
    {
        ShellOperator op(K, M, mat, 5000.0);
        Eigen::VectorXcd f = Eigen::VectorXcd::Random(op.dof_count());
        const Eigen::VectorXcd u = op.solve(f);
        const Eigen::VectorXcd r = op.dynamic_matrix() * u - f;
        EXPECT_LT(r.norm() / f.norm(), 1e-10);
    }
    // Rayleigh damping keeps A nonsingular at an undamped eigenfrequency
    {
        const Eigen::MatrixXd Kd(K), Md(M);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(Kd, Md);
        const double omega0 = std::sqrt(eig.eigenvalues()(10));
        ShellMaterial damped = mat;
        damped.c2 = 1e-3 * omega0;
        ShellOperator op(K, M, damped, omega0);
        Eigen::VectorXcd f = Eigen::VectorXcd::Random(op.dof_count());
        const Eigen::VectorXcd u = op.solve(f);
        EXPECT_LT((op.dynamic_matrix() * u - f).norm() / f.norm(), 1e-8);
    }
}

TEST(Shell, DegenerateMetricIsDiagnosed) {
    // flatten the control net onto a line: every element's metric collapses
    ControlMesh m = fitted_sphere(1);
    for (auto& p : m.vertices) {
        p[1] = 0.0;
        p[2] = 0.0;
    }
    SubdivisionSurface surf(m);
    ShellMaterial mat;
    try {
        assemble_stiffness(surf, mat);
        FAIL() << "expected degenerate-metric error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("element"), std::string::npos);
    }
}

TEST(Shell, SpectrumMatchesAnalyticQuartic) {
    // fitted-sphere eigenfrequencies against the dispersion-quartic roots
    SphereScatterParams params;  // radius 0.5, steel/water defaults
    const double cp = compressional_speed(params.solid);
    const double R = params.series_radius();
    ShellMaterial mat;

    const auto f2 = natural_frequencies(2, params);
    const auto f3 = natural_frequencies(3, params);
    const double target2 = f2.omega1, target3 = f3.omega1;

    // The FEM converges to the continuum Kirchhoff-Love solution, which
    // differs from the dispersion quartic by O(beta^2) model terms (~0.05%
    // here); monotone decrease is only observable above that floor.
    const double floor = 2e-3;
    double prev_err2 = 1e300, prev_err3 = 1e300;
    for (int level : {1, 2}) {
        const auto freqs = spheroidal_frequencies(fitted_sphere(level), mat, 16);
        ASSERT_GE(freqs.size(), 12u);
        // lowest spheroidal cluster is the 5-fold n=2 family, next the
        // 7-fold n=3 family
        double best2 = 1e300, best3 = 1e300;
        for (double w : freqs) {
            const double Omega = w * R / cp;
            best2 = std::min(best2, std::abs(Omega - target2) / target2);
            best3 = std::min(best3, std::abs(Omega - target3) / target3);
        }
        std::printf("shell spectrum level %d: n=2 err %.3f%%, n=3 err %.3f%%\n", level,
                    100 * best2, 100 * best3);
        EXPECT_LT(best2, 0.05);
        EXPECT_LT(best3, 0.05);
        EXPECT_TRUE(best2 < prev_err2 || best2 < floor);
        EXPECT_TRUE(best3 < prev_err3 || best3 < floor);
        prev_err2 = best2;
        prev_err3 = best3;
    }
}
