// Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
// Expensive artifacts (meshes, dense operators, solves) are cached across
// criteria. The full suite is sized for a desk machine.

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <random>

#include "shellac/analytic.hpp"
#include "shellac/coupling.hpp"
#include "shellac/hmatrix.hpp"
#include "shellac/meshio.hpp"
#include "shellac/quadrature.hpp"
#include "shellac/scenario.hpp"

using namespace shellac;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("[CRITERION %d] %s - %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

const ControlMesh& fitted_sphere(int level) {
    static std::map<int, ControlMesh> cache;
    auto it = cache.find(level);
    if (it == cache.end()) {
        ControlMesh m =
            l2_fit_to_target(make_sphere_control_mesh(level), sphere_target(Vec3::Zero(), 0.5));
        it = cache.emplace(level, std::move(m)).first;
    }
    return it->second;
}

std::vector<Vec3> sample_circle(int count, double radius) {
    std::vector<Vec3> pts(count);
    for (int i = 0; i < count; ++i) {
        const double th = 2.0 * kPi * i / count;
        pts[i] = Vec3(radius * std::cos(th), radius * std::sin(th), 0.0);
    }
    return pts;
}

std::vector<Complex> series_circle(double k, double h, int count, double radius, PressureMode mode) {
    SphereScatterParams params;
    params.k = k;
    params.h = h;
    std::vector<Complex> out(count);
    for (int i = 0; i < count; ++i) {
        out[i] = sphere_pressure(params, radius, 2.0 * kPi * i / count, mode);
    }
    return out;
}

// dense coupled machinery for one (mesh, k, h)
struct DenseCase {
    std::unique_ptr<SubdivisionSurface> surf;
    std::unique_ptr<BemAssembler> bem;
    Eigen::MatrixXcd H, G;
    std::unique_ptr<Eigen::PartialPivLU<Eigen::MatrixXcd>> hlu;
    WaveContext ctx;

    CoupledOperators ops_without_shell() const {
        CoupledOperators o;
        o.size = bem->size();
        o.apply_H = [this](const Eigen::VectorXcd& v) { return (H * v).eval(); };
        o.apply_G = [this](const Eigen::VectorXcd& v) { return (G * v).eval(); };
        o.precond = [this](const Eigen::VectorXcd& v) { return hlu->solve(v).eval(); };
        o.rho_f = ctx.rho_f;
        o.omega = ctx.omega();
        return o;
    }
};

DenseCase& dense_case(const ControlMesh& mesh, double k, const char* tag) {
    static std::map<std::string, std::unique_ptr<DenseCase>> cache;
    const std::string key = std::string(tag) + ":" + std::to_string(k);
    auto it = cache.find(key);
    if (it == cache.end()) {
        auto c = std::make_unique<DenseCase>();
        c->surf = std::make_unique<SubdivisionSurface>(mesh);
        c->bem = std::make_unique<BemAssembler>(*c->surf);
        c->ctx.k = k;
        c->bem->assemble(c->ctx, &c->H, &c->G);
        c->hlu = std::make_unique<Eigen::PartialPivLU<Eigen::MatrixXcd>>(c->H);
        it = cache.emplace(key, std::move(c)).first;
    }
    return *it->second;
}

struct CoupledRun {
    std::vector<Complex> samples;
    double error = 0.0;  // max pointwise vs the elastic series
    int iterations = 0;
    double epw = 0.0;
};

CoupledRun run_coupled_dense(DenseCase& c, double h, int nsamp = 360, bool vs_series = true) {
    ShellMaterial mat;
    mat.h = h;
    const SparseReal K = assemble_stiffness(*c.surf, mat);
    const SparseReal M = assemble_mass(*c.surf, mat);
    const ShellOperator shell(K, M, mat, c.ctx.omega());
    const TransferOperators transfer = build_transfer(*c.surf, c.bem->collocation());

    CoupledOperators ops = c.ops_without_shell();
    ops.transfer = &transfer;
    ops.shell = &shell;

    const Eigen::VectorXcd pinc = c.bem->incident_vector(c.ctx);
    const CoupledState state = solve_coupled(ops, pinc, Eigen::VectorXcd());

    CoupledRun out;
    out.iterations = state.iterations;
    out.epw = (2.0 * kPi / c.ctx.k) / c.bem->mean_edge_length();
    const auto pts = sample_circle(nsamp, 5.0);
    out.samples = c.bem->exterior_pressure(c.ctx, state.p, state.q, pts).values;
    if (vs_series) {
        out.error = compute_max_pointwise_error(
            out.samples, series_circle(c.ctx.k, h, nsamp, 5.0, PressureMode::Total));
    }
    return out;
}

double pairwise_profile_difference(const std::vector<Complex>& a, const std::vector<Complex>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(std::abs(a[i]) - std::abs(b[i])) / std::abs(b[i]));
    }
    return worst;
}

double g_c1_error = -1.0;  // shared with criteria 2 and 6

}  // namespace

// ---------------------------------------------------------------------------
// Criterion 1: coupled elastic sphere at ka = 10, ~16 elements/wavelength,
// dense operators, error vs the series <= 3 %.
// ---------------------------------------------------------------------------
TEST(Acceptance, C1_CoupledSphereKa10) {
    const auto t0 = Clock::now();
    DenseCase& c = dense_case(fitted_sphere(4), 10.0, "L4");
    const CoupledRun run = run_coupled_dense(c, 0.05);
    g_c1_error = run.error;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "V=%d, %.1f elements/wavelength, max pointwise error %.3f%% (gate 3%%, reference 1.46%%), "
                  "GMRES %d its, %.0f s",
                  c.bem->size(), run.epw, 100 * run.error, run.iterations, elapsed(t0));
    const bool pass = run.error <= 0.03;
    report(1, pass, buf);
    EXPECT_LE(run.error, 0.03);
    EXPECT_LE(elapsed(t0), 600.0);
}

// ---------------------------------------------------------------------------
// Criterion 2: refinement improvement with compressed operators at
// ~32 elements/wavelength: error strictly below criterion 1 and <= 0.5 %.
//
// The strict-improvement clause is knowingly left red. The measured error
// sequence over 4.2 / 8.4 / 16.7 / 33.4 elements per wavelength is
// 1.93 % / 0.23 % / 0.275 % / 0.280 %: the solver converges from ~9
// elements per wavelength onwards to a ~0.28 % plateau, which is the model
// offset between the closed-form benchmark's shell theory and the
// discretized Kirchhoff-Love formulation (mid-surface measure, vertex-normal
// coupling) for this h/R = 0.1 shell, not discretization error. Past that
// plateau one refinement moves the comparison by noise (here +0.005
// percentage points). The quantitative gates - error <= 0.5 % and storage
// < 40 % of dense - both hold.
// ---------------------------------------------------------------------------
TEST(Acceptance, C2_RefinementWithCompression) {
    const auto t0 = Clock::now();
    ASSERT_GE(g_c1_error, 0.0) << "criterion 1 must run first";

    const ControlMesh& mesh = fitted_sphere(5);
    SubdivisionSurface surf(mesh);
    BemAssembler bem(surf);
    WaveContext ctx;
    ctx.k = 10.0;

    const ClusterTree tree = build_cluster_tree(bem.collocation().points, basis_support_boxes(bem), 32);
    HMatrixOptions hopts;
    hopts.eps = 1e-6;
    const HMatrix Hc = build_hmatrix(tree, bem_h_oracle(bem, ctx), hopts);
    const HMatrix Gc = build_hmatrix(tree, bem_g_oracle(bem, ctx), hopts);
    const double ratio = 0.5 * (Hc.compression_ratio() + Gc.compression_ratio());
    const HluPreconditioner hlu(Hc);

    ShellMaterial mat;
    const SparseReal K = assemble_stiffness(surf, mat);
    const SparseReal M = assemble_mass(surf, mat);
    const ShellOperator shell(K, M, mat, ctx.omega());
    const TransferOperators transfer = build_transfer(surf, bem.collocation());

    CoupledOperators ops;
    ops.size = bem.size();
    ops.apply_H = [&](const Eigen::VectorXcd& v) { return Hc.matvec(v); };
    ops.apply_G = [&](const Eigen::VectorXcd& v) { return Gc.matvec(v); };
    ops.precond = [&](const Eigen::VectorXcd& v) { return hlu.solve(v); };
    ops.transfer = &transfer;
    ops.shell = &shell;
    ops.rho_f = ctx.rho_f;
    ops.omega = ctx.omega();

    const Eigen::VectorXcd pinc = bem.incident_vector(ctx);
    const CoupledState state = solve_coupled(ops, pinc, Eigen::VectorXcd());
    const auto pts = sample_circle(360, 5.0);
    const auto samples = bem.exterior_pressure(ctx, state.p, state.q, pts).values;
    const double err = compute_max_pointwise_error(
        samples, series_circle(10.0, 0.05, 360, 5.0, PressureMode::Total));

    const double epw = (2.0 * kPi / ctx.k) / bem.mean_edge_length();
    char buf[420];
    std::snprintf(buf, sizeof(buf),
                  "V=%d, %.1f epw, error %.4f%% vs %.4f%% one level down (both on the ~0.28%% "
                  "benchmark-model plateau; strict-improvement clause NOT met, see ledger), "
                  "error gate <= 0.5%% met, storage %.1f%% of dense (gate < 40%%) met, GMRES %d its, %.0f s",
                  bem.size(), epw, 100 * err, 100 * g_c1_error, 100 * ratio, state.iterations,
                  elapsed(t0));
    const bool pass = err < g_c1_error && err <= 0.005 && ratio < 0.40;
    report(2, pass, buf);
    EXPECT_LT(err, g_c1_error);
    EXPECT_LE(err, 0.005);
    EXPECT_LT(ratio, 0.40);
    EXPECT_LE(elapsed(t0), 3600.0);
}

// ---------------------------------------------------------------------------
// Criterion 3: geometry-error mechanism. Unfitted family keeps eps_g constant
// and a large solution error; fitting drives eps_g down >= 3x per level and
// the solution error down >= 5x at equal resolution.
// ---------------------------------------------------------------------------
TEST(Acceptance, C3_GeometryErrorMechanism) {
    const auto t0 = Clock::now();
    const TargetSurface target = sphere_target(Vec3::Zero(), 0.5);

    const ControlMesh base = make_sphere_control_mesh(2);  // on-sphere control net
    const ControlMesh mesh_a = loop_subdivide(base);
    const ControlMesh mesh_b = loop_subdivide(mesh_a);
    const double eg0 = geometry_error(base, target).eps_g;
    const double eg_a = geometry_error(mesh_a, target).eps_g;
    const double eg_b = geometry_error(mesh_b, target).eps_g;

    const ControlMesh mesh_c = l2_fit_to_target(mesh_a, target);
    const ControlMesh mesh_d = l2_fit_to_target(mesh_b, target);
    const double eg_c = geometry_error(mesh_c, target).eps_g;
    const double eg_d = geometry_error(mesh_d, target).eps_g;

    const bool unfitted_constant = (eg_a / eg0 > 0.9 && eg_a / eg0 < 1.1) &&
                                   (eg_b / eg_a > 0.9 && eg_b / eg_a < 1.1);
    const bool fitted_decreasing = (eg0 / eg_c >= 3.0) && (eg_c / eg_d >= 3.0);

    // coupled solutions at ka = 10 on the equal-resolution pair (b) and (d)
    DenseCase cb, cd;
    cb.surf = std::make_unique<SubdivisionSurface>(mesh_b);
    cb.bem = std::make_unique<BemAssembler>(*cb.surf);
    cb.ctx.k = 10.0;
    cb.bem->assemble(cb.ctx, &cb.H, &cb.G);
    cb.hlu = std::make_unique<Eigen::PartialPivLU<Eigen::MatrixXcd>>(cb.H);
    const CoupledRun run_b = run_coupled_dense(cb, 0.05);

    cd.surf = std::make_unique<SubdivisionSurface>(mesh_d);
    cd.bem = std::make_unique<BemAssembler>(*cd.surf);
    cd.ctx.k = 10.0;
    cd.bem->assemble(cd.ctx, &cd.H, &cd.G);
    cd.hlu = std::make_unique<Eigen::PartialPivLU<Eigen::MatrixXcd>>(cd.H);
    const CoupledRun run_d = run_coupled_dense(cd, 0.05);

    const bool solution_gap = run_b.error >= 5.0 * run_d.error;

    char buf[384];
    std::snprintf(buf, sizeof(buf),
                  "eps_g unfitted %.3f%% -> %.3f%% -> %.3f%% (const), fitted %.4f%% -> %.5f%% "
                  "(>=3x/level); coupled error unfitted %.2f%% vs fitted %.3f%% (>=5x), %.0f s",
                  100 * eg0, 100 * eg_a, 100 * eg_b, 100 * eg_c, 100 * eg_d, 100 * run_b.error,
                  100 * run_d.error, elapsed(t0));
    const bool pass = unfitted_constant && fitted_decreasing && solution_gap;
    report(3, pass, buf);
    EXPECT_TRUE(unfitted_constant);
    EXPECT_TRUE(fitted_decreasing);
    EXPECT_TRUE(solution_gap);
}

// ---------------------------------------------------------------------------
// Criterion 4: rigid decoupling. rho_f -> 0 in the coupling terms reproduces
// the hard-scattering solve to 1e-8; the hard sphere at ka = 6 matches the
// rigid series to <= 2 %.
// ---------------------------------------------------------------------------
TEST(Acceptance, C4_RigidDecoupling) {
    const auto t0 = Clock::now();
    DenseCase& c = dense_case(fitted_sphere(3), 6.0, "L3");

    const Eigen::VectorXcd pinc = c.bem->incident_vector(c.ctx);
    const Eigen::VectorXcd p_rigid = c.hlu->solve(pinc);

    ShellMaterial mat;
    const SparseReal K = assemble_stiffness(*c.surf, mat);
    const SparseReal M = assemble_mass(*c.surf, mat);
    const ShellOperator shell(K, M, mat, c.ctx.omega());
    const TransferOperators transfer = build_transfer(*c.surf, c.bem->collocation());
    CoupledOperators ops = c.ops_without_shell();
    ops.transfer = &transfer;
    ops.shell = &shell;
    ops.rho_f = 0.0;  // vacuum fluid in the coupling terms
    const CoupledState state = solve_coupled(ops, pinc, Eigen::VectorXcd());
    const double dec_err = (state.p - p_rigid).norm() / p_rigid.norm();

    const auto pts = sample_circle(360, 5.0);
    const Eigen::VectorXcd q0 = Eigen::VectorXcd::Zero(c.bem->size());
    const auto rigid_samples = c.bem->exterior_pressure(c.ctx, p_rigid, q0, pts).values;
    const double rigid_err = compute_max_pointwise_error(
        rigid_samples, series_circle(6.0, 0.05, 360, 5.0, PressureMode::Rigid));

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "decoupled vs rigid solve %.2e (gate 1e-8), rigid-series error %.4f%% (gate 2%%), %.0f s",
                  dec_err, 100 * rigid_err, elapsed(t0));
    const bool pass = dec_err <= 1e-8 && rigid_err <= 0.02;
    report(4, pass, buf);
    EXPECT_LE(dec_err, 1e-8);
    EXPECT_LE(rigid_err, 0.02);
}

// ---------------------------------------------------------------------------
// Criterion 5: thickness effect at ka = 6: rigid, h = 0.1 and h = 0.05
// profiles are mutually distinguishable by > 5 %.
// ---------------------------------------------------------------------------
TEST(Acceptance, C5_ThicknessEffect) {
    const auto t0 = Clock::now();
    DenseCase& c = dense_case(fitted_sphere(3), 6.0, "L3");

    const Eigen::VectorXcd pinc = c.bem->incident_vector(c.ctx);
    const Eigen::VectorXcd p_rigid = c.hlu->solve(pinc);
    const auto pts = sample_circle(360, 5.0);
    const Eigen::VectorXcd q0 = Eigen::VectorXcd::Zero(c.bem->size());
    const auto rigid = c.bem->exterior_pressure(c.ctx, p_rigid, q0, pts).values;

    const CoupledRun thick = run_coupled_dense(c, 0.10, 360, false);
    const CoupledRun thin = run_coupled_dense(c, 0.05, 360, false);

    const double d_thick_rigid = pairwise_profile_difference(thick.samples, rigid);
    const double d_thin_rigid = pairwise_profile_difference(thin.samples, rigid);
    const double d_thin_thick = pairwise_profile_difference(thin.samples, thick.samples);

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "profile differences: h=0.1 vs rigid %.1f%%, h=0.05 vs rigid %.1f%%, "
                  "h=0.05 vs h=0.1 %.1f%% (all > 5%%), %.0f s",
                  100 * d_thick_rigid, 100 * d_thin_rigid, 100 * d_thin_thick, elapsed(t0));
    const bool pass = d_thick_rigid > 0.05 && d_thin_rigid > 0.05 && d_thin_thick > 0.05;
    report(5, pass, buf);
    EXPECT_GT(d_thick_rigid, 0.05);
    EXPECT_GT(d_thin_rigid, 0.05);
    EXPECT_GT(d_thin_thick, 0.05);
}

// ---------------------------------------------------------------------------
// Criterion 6: error growth over ka in {10, 30, 40} on the criterion-1 mesh;
// the ka = 40 error lies within a factor 3 of the published 9.07 %.
//
// The two-sided bracket is knowingly left red: the reference value belongs to
// a discretization whose medium-frequency error is dominated by its ~0.24 %
// geometry error (the source itself attributes the ka = 30 discrepancy to
// geometry error). With the exact-fit surface used here the measured ka = 40
// error is ~0.6 % at the same 4 elements per wavelength, more than an order
// of magnitude below the lower bracket edge; reproducing 9 % would require
// deliberately degrading the geometry or the quadrature. The monotone-growth
// gate and the upper bracket edge both hold.
// ---------------------------------------------------------------------------
TEST(Acceptance, C6_MediumFrequencyTrend) {
    const auto t0 = Clock::now();
    ASSERT_GE(g_c1_error, 0.0) << "criterion 1 must run first";
    const double err10 = g_c1_error;

    DenseCase& c30 = dense_case(fitted_sphere(4), 30.0, "L4");
    const CoupledRun run30 = run_coupled_dense(c30, 0.05);
    DenseCase& c40 = dense_case(fitted_sphere(4), 40.0, "L4");
    const CoupledRun run40 = run_coupled_dense(c40, 0.05);
    // ka = 40 rechecked at the wavelength-resolved sampling density
    const CoupledRun run40f = run_coupled_dense(c40, 0.05, 2400);

    const bool monotone = err10 < run30.error && run30.error < run40.error;
    const double worst40 = std::max(run40.error, run40f.error);
    const bool bracket = worst40 >= 0.0907 / 3.0 && worst40 <= 0.0907 * 3.0;

    char buf[420];
    std::snprintf(buf, sizeof(buf),
                  "errors: ka=10 %.3f%%, ka=30 %.2f%% (%.1f epw), ka=40 %.2f%% at 360 / %.2f%% at "
                  "2400 samples (%.1f epw); monotone %s; two-sided 3x bracket of 9.07%% %s "
                  "(implementation is ~14x more accurate than the reference at 4 epw; see ledger), %.0f s",
                  100 * err10, 100 * run30.error, run30.epw, 100 * run40.error, 100 * run40f.error,
                  run40.epw, monotone ? "yes" : "no", bracket ? "met" : "NOT met", elapsed(t0));
    report(6, monotone && bracket, buf);
    EXPECT_TRUE(monotone);
    EXPECT_TRUE(bracket);
}

// ---------------------------------------------------------------------------
// Criterion 7: fast property suites.
// ---------------------------------------------------------------------------
TEST(Acceptance, C7_PropertySuites) {
    const auto t0 = Clock::now();
    bool pass = true;
    std::string failures;
    auto check = [&](bool ok, const char* name) {
        if (!ok) {
            pass = false;
            failures += std::string(" ") + name;
        }
        EXPECT_TRUE(ok) << name;
    };

    // subdivision: partition of unity, derivative sums, refinement invariance
    {
        const ControlMesh mesh = make_sphere_control_mesh(1);
        SubdivisionSurface surf(mesh);
        const ControlMesh fine_mesh = loop_subdivide(mesh);
        SubdivisionSurface fine(fine_mesh);
        std::mt19937 rng(42);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        bool ok = true;
        for (int t = 0; t < 100; ++t) {
            double v = uni(rng), w = uni(rng);
            if (v + w > 1.0) {
                v = 1.0 - v;
                w = 1.0 - w;
            }
            const int e = t % mesh.triangle_count();
            const PatchBasis b = surf.evaluate_basis({e, v, w}, 2);
            double s = 0, sv = 0, sw = 0;
            for (int a = 0; a < b.n_v; ++a) {
                s += b.values[a];
                sv += b.d1[a][0];
                sw += b.d1[a][1];
            }
            ok &= std::abs(s - 1.0) <= 1e-10 && std::abs(sv) <= 1e-8 && std::abs(sw) <= 1e-8;
            if (t < 50) {
                const ChildParam cp = refined_param(v, w);
                const Vec3 xa = surf.limit_position({e, v, w});
                const Vec3 xb = fine.limit_position({4 * e + cp.child, cp.v, cp.w});
                ok &= (xa - xb).norm() <= 1e-12;
            }
        }
        check(ok, "subdivision-properties");
    }

    // stiffness null space: exactly 6 rigid modes
    {
        const ControlMesh& mesh = fitted_sphere(1);
        SubdivisionSurface surf(mesh);
        ShellMaterial mat;
        const Eigen::MatrixXd K(assemble_stiffness(surf, mat));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
        const double lmax = eig.eigenvalues()(K.rows() - 1);
        bool ok = true;
        for (int i = 0; i < 6; ++i) ok &= std::abs(eig.eigenvalues()(i)) <= 1e-8 * lmax;
        ok &= eig.eigenvalues()(6) > 1e-8 * lmax;
        check(ok, "stiffness-null-space");
    }

    // mass totals against the assembly-rule area
    {
        const ControlMesh& mesh = fitted_sphere(2);
        SubdivisionSurface surf(mesh);
        ShellMaterial mat;
        const SparseReal M = assemble_mass(surf, mat);
        double area = 0.0;
        for (int e = 0; e < mesh.triangle_count(); ++e) {
            for (const auto& qp : triangle_rule(5)) {
                const PatchBasis b = surf.evaluate_basis({e, qp.v, qp.w}, 1);
                Vec3 a1 = Vec3::Zero(), a2 = Vec3::Zero();
                for (int a = 0; a < b.n_v; ++a) {
                    a1 += b.d1[a][0] * mesh.vertices[b.vertices[a]];
                    a2 += b.d1[a][1] * mesh.vertices[b.vertices[a]];
                }
                area += qp.weight * a1.cross(a2).norm();
            }
        }
        Eigen::VectorXd ones = Eigen::VectorXd::Zero(M.rows());
        for (int v = 0; v < mesh.vertex_count(); ++v) ones(3 * v) = 1.0;
        const double total = ones.dot(M * ones);
        check(std::abs(total - mat.rho * mat.h * area) <= 1e-6 * mat.rho * mat.h * area,
              "mass-total");
    }

    // Schur vs monolithic on the 42-vertex mesh
    {
        const ControlMesh& mesh = fitted_sphere(1);
        SubdivisionSurface surf(mesh);
        BemAssembler bem(surf);
        WaveContext ctx;
        ctx.k = 1.3;
        Eigen::MatrixXcd H, G;
        bem.assemble(ctx, &H, &G);
        ShellMaterial mat;
        const ShellOperator shell(assemble_stiffness(surf, mat), assemble_mass(surf, mat), mat,
                                  ctx.omega());
        const TransferOperators transfer = build_transfer(surf, bem.collocation());
        CoupledOperators ops;
        ops.size = bem.size();
        ops.apply_H = [&](const Eigen::VectorXcd& v) { return (H * v).eval(); };
        ops.apply_G = [&](const Eigen::VectorXcd& v) { return (G * v).eval(); };
        ops.transfer = &transfer;
        ops.shell = &shell;
        ops.rho_f = ctx.rho_f;
        ops.omega = ctx.omega();
        GmresOptions gopts;
        gopts.tol = 1e-12;
        const Eigen::VectorXcd pinc = bem.incident_vector(ctx);
        const CoupledState schur = solve_coupled(ops, pinc, Eigen::VectorXcd(), gopts);
        const BlockSolution mono =
            solve_block_system(H, G, transfer, shell, ctx.rho_f, ctx.omega(), 0.0, pinc, {});
        check((schur.p - mono.p).norm() / mono.p.norm() <= 1e-8, "schur-vs-monolithic");
    }

    // H-matrix matvec vs dense at 10 eps (synthetic compressible geometry
    // plus the sphere operator)
    {
        std::mt19937 rng(31);
        std::uniform_real_distribution<double> uni(-0.5, 0.5);
        std::vector<Vec3> pts;
        for (int cloud = 0; cloud < 2; ++cloud) {
            for (int i = 0; i < 256; ++i) {
                pts.push_back(Vec3(4.0 * cloud + uni(rng), uni(rng), uni(rng)));
            }
        }
        std::vector<Eigen::AlignedBox3d> boxes;
        for (const auto& p : pts) boxes.emplace_back(p, p);
        const ClusterTree tree = build_cluster_tree(pts, boxes, 16);
        auto entry = [&](int i, int j) {
            return i == j ? Complex(1.0, 0.0) : helmholtz_kernel(pts[i], pts[j], 2.0);
        };
        EntryOracle oracle;
        oracle.row_fn = [&](int r, const std::vector<int>& cols, Complex* out) {
            for (std::size_t j = 0; j < cols.size(); ++j) out[j] = entry(r, cols[j]);
        };
        oracle.near_row_fn = oracle.row_fn;
        oracle.col_fn = [&](int c, const std::vector<int>& rows, Complex* out) {
            for (std::size_t i = 0; i < rows.size(); ++i) out[i] = entry(rows[i], c);
        };
        HMatrixOptions hopts;
        hopts.eps = 1e-6;
        const HMatrix h = build_hmatrix(tree, oracle, hopts);
        const int n = tree.size();
        Eigen::MatrixXcd dense(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) dense(i, j) = entry(i, j);
        }
        bool ok = h.admissible_blocks() > 0;
        std::normal_distribution<double> gauss;
        for (int t = 0; t < 10; ++t) {
            Eigen::VectorXcd x(n);
            for (int i = 0; i < n; ++i) x(i) = Complex(gauss(rng), gauss(rng));
            const Eigen::VectorXcd yd = dense * x;
            ok &= (h.matvec(x) - yd).norm() <= 10 * hopts.eps * yd.norm();
        }
        check(ok, "hmatrix-matvec");
    }

    // special functions: Wronskian identity
    {
        bool ok = true;
        for (int n : {0, 2, 5, 11}) {
            for (double x : {0.7, 3.0, 7.0, 19.0}) {
                const double w = spherical_bessel_j(n, x) * spherical_bessel_y_deriv(n, x) -
                                 spherical_bessel_j_deriv(n, x) * spherical_bessel_y(n, x);
                ok &= std::abs(w * x * x - 1.0) <= 1e-12;
            }
        }
        check(ok, "wronskian");
    }

    // static-identity row calibration at k = 0
    {
        const ControlMesh& mesh = fitted_sphere(1);
        SubdivisionSurface surf(mesh);
        BemAssembler bem(surf);
        WaveContext ctx;
        ctx.k = 0.0;
        Eigen::MatrixXcd H;
        bem.assemble(ctx, &H, nullptr);
        const Eigen::VectorXcd sums = H * Eigen::VectorXcd::Ones(bem.size());
        bool ok = true;
        for (int i = 0; i < bem.size(); ++i) ok &= std::abs(sums(i) - Complex(1.0, 0.0)) <= 1e-6;
        check(ok, "static-row-calibration");
    }

    // interior extinction
    {
        const ControlMesh& mesh = fitted_sphere(2);
        SubdivisionSurface surf(mesh);
        BemAssembler bem(surf);
        WaveContext ctx;
        ctx.k = 3.0;
        // L2 projection of the incident trace
        const TransferOperators transfer = build_transfer(surf, bem.collocation(), 8);
        Eigen::SimplicialLDLT<SparseReal> gram(transfer.gram);
        const int n = bem.size();
        Eigen::VectorXcd rp = Eigen::VectorXcd::Zero(n), rq = Eigen::VectorXcd::Zero(n);
        for (int e = 0; e < mesh.triangle_count(); ++e) {
            for (const auto& qp : triangle_rule(5)) {
                const PatchBasis b = surf.evaluate_basis({e, qp.v, qp.w}, 1);
                Vec3 x = Vec3::Zero(), a1 = Vec3::Zero(), a2 = Vec3::Zero();
                for (int a = 0; a < b.n_v; ++a) {
                    const Vec3& P = mesh.vertices[b.vertices[a]];
                    x += b.values[a] * P;
                    a1 += b.d1[a][0] * P;
                    a2 += b.d1[a][1] * P;
                }
                const Vec3 cr = a1.cross(a2);
                const double wj = qp.weight * cr.norm();
                const Complex pv = ctx.incident(x);
                const Complex qv = ctx.incident_dn(x, Vec3(-cr.normalized()));
                for (int a = 0; a < b.n_v; ++a) {
                    rp(b.vertices[a]) += wj * b.values[a] * pv;
                    rq(b.vertices[a]) += wj * b.values[a] * qv;
                }
            }
        }
        Eigen::VectorXcd p(n), q(n);
        p.real() = gram.solve(rp.real().eval());
        p.imag() = gram.solve(rp.imag().eval());
        q.real() = gram.solve(rq.real().eval());
        q.imag() = gram.solve(rq.imag().eval());
        const std::vector<Vec3> pts = {{3.0, 0.4, 0.2}, {0.0, -4.0, 1.0}};
        const auto ext = bem.exterior_pressure(ctx, p, q, pts);
        bool ok = true;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            ok &= std::abs(ext.values[i] - ctx.incident(pts[i])) <= 1e-3;
        }
        check(ok, "interior-extinction");
    }

    char buf[256];
    std::snprintf(buf, sizeof(buf), "property suites %s in %.0f s (budget 300 s)%s",
                  pass ? "all green" : "FAILED:", elapsed(t0), failures.c_str());
    report(7, pass && elapsed(t0) < 300.0, buf);
    EXPECT_LT(elapsed(t0), 300.0);
}

// ---------------------------------------------------------------------------
// Criterion 8: shell spectrum against the dispersion quartic, converging
// under one refinement.
// ---------------------------------------------------------------------------
TEST(Acceptance, C8_ShellSpectrumOracle) {
    const auto t0 = Clock::now();
    SphereScatterParams params;
    const double cp = compressional_speed(params.solid);
    const double R = params.series_radius();
    const double target2 = natural_frequencies(2, params).omega1;
    const double target3 = natural_frequencies(3, params).omega1;

    ShellMaterial mat;
    double errs2[2], errs3[2];
    int li = 0;
    for (int level : {1, 2}) {
        const ControlMesh& mesh = fitted_sphere(level);
        SubdivisionSurface surf(mesh);
        const Eigen::MatrixXd K(assemble_stiffness(surf, mat));
        const Eigen::MatrixXd M(assemble_mass(surf, mat));
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, M);
        double best2 = 1e300, best3 = 1e300;
        for (int i = 6; i < std::min<int>(40, eig.eigenvalues().size()); ++i) {
            if (eig.eigenvalues()(i) <= 0.0) continue;
            // spheroidal filter: radial energy fraction
            double radial = 0.0, total = 0.0;
            for (int v = 0; v < mesh.vertex_count(); ++v) {
                const Vec3 u = eig.eigenvectors().col(i).segment<3>(3 * v);
                const double ur = u.dot(mesh.vertices[v].normalized());
                radial += ur * ur;
                total += u.squaredNorm();
            }
            if (radial / total < 0.3) continue;
            const double Omega = std::sqrt(eig.eigenvalues()(i)) * R / cp;
            best2 = std::min(best2, std::abs(Omega - target2) / target2);
            best3 = std::min(best3, std::abs(Omega - target3) / target3);
        }
        errs2[li] = best2;
        errs3[li] = best3;
        ++li;
    }
    // convergence down to the O(beta^2) model floor between the quartic and
    // the discretized shell theory
    const double floor = 2e-3;
    const bool within = errs2[1] <= 0.05 && errs3[1] <= 0.05 && errs2[0] <= 0.05 && errs3[0] <= 0.05;
    const bool converging = (errs2[1] < errs2[0] || errs2[1] < floor) &&
                            (errs3[1] < errs3[0] || errs3[1] < floor);

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "n=2: %.3f%% -> %.3f%%, n=3: %.3f%% -> %.3f%% (gate 5%%, converging), %.0f s",
                  100 * errs2[0], 100 * errs2[1], 100 * errs3[0], 100 * errs3[1], elapsed(t0));
    const bool pass = within && converging;
    report(8, pass, buf);
    EXPECT_TRUE(within);
    EXPECT_TRUE(converging);
}
