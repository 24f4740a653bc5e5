#include "shellac/coupling.hpp"

#include <cmath>

#include "shellac/quadrature.hpp"

namespace shellac {

Eigen::VectorXcd TransferOperators::apply_fs(const Eigen::VectorXcd& u) const {
    const int n = pressure_size();
    Eigen::VectorXcd out(n);
    for (int a = 0; a < n; ++a) {
        out(a) = conormal[a][0] * u(3 * a) + conormal[a][1] * u(3 * a + 1) + conormal[a][2] * u(3 * a + 2);
    }
    return out;
}

Eigen::VectorXcd TransferOperators::apply_sf(const Eigen::VectorXcd& p) const {
    const int n = pressure_size();
    const Eigen::VectorXcd gp = gram * p;
    Eigen::VectorXcd out(3 * n);
    for (int a = 0; a < n; ++a) {
        out(3 * a) = conormal[a][0] * gp(a);
        out(3 * a + 1) = conormal[a][1] * gp(a);
        out(3 * a + 2) = conormal[a][2] * gp(a);
    }
    return out;
}

Eigen::MatrixXd TransferOperators::dense_fs() const {
    const int n = pressure_size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, 3 * n);
    for (int a = 0; a < n; ++a) {
        for (int i = 0; i < 3; ++i) m(a, 3 * a + i) = conormal[a][i];
    }
    return m;
}

Eigen::MatrixXd TransferOperators::dense_sf() const {
    const int n = pressure_size();
    const Eigen::MatrixXd gd(gram);
    Eigen::MatrixXd m(3 * n, n);
    for (int a = 0; a < n; ++a) {
        for (int i = 0; i < 3; ++i) m.row(3 * a + i) = conormal[a][i] * gd.row(a);
    }
    return m;
}

TransferOperators build_transfer(const SubdivisionSurface& surf, const CollocationTable& table,
                                 int quad_degree) {
    const ControlMesh& mesh = surf.mesh();
    const int n = mesh.vertex_count();
    if (table.size() != n) throw Error("build_transfer: collocation table does not match mesh");

    TransferOperators t;
    t.conormal.resize(n);
    for (int v = 0; v < n; ++v) t.conormal[v] = -table.normals[v];  // into the shell

    const auto& rule = triangle_rule(std::max(quad_degree, 5));
    std::vector<Eigen::Triplet<double>> trips;
    for (int e = 0; e < mesh.triangle_count(); ++e) {
        for (const auto& qp : rule) {
            const PatchBasis basis = surf.evaluate_basis({e, qp.v, qp.w}, 1);
            Vec3 a1 = Vec3::Zero(), a2 = Vec3::Zero();
            for (int a = 0; a < basis.n_v; ++a) {
                const Vec3& P = mesh.vertices[basis.vertices[a]];
                a1 += basis.d1[a][0] * P;
                a2 += basis.d1[a][1] * P;
            }
            const double wj = qp.weight * a1.cross(a2).norm();
            for (int a = 0; a < basis.n_v; ++a) {
                for (int b = 0; b < basis.n_v; ++b) {
                    trips.emplace_back(basis.vertices[a], basis.vertices[b],
                                       wj * basis.values[a] * basis.values[b]);
                }
            }
        }
    }
    t.gram.resize(n, n);
    t.gram.setFromTriplets(trips.begin(), trips.end());
    t.gram.makeCompressed();
    return t;
}

GmresResult gmres(const ApplyFn& apply, const ApplyFn& precond, const Eigen::VectorXcd& rhs,
                  Eigen::VectorXcd& x, const GmresOptions& opts) {
    using Eigen::VectorXcd;
    const int n = static_cast<int>(rhs.size());
    if (x.size() != n) x = VectorXcd::Zero(n);

    const double bnorm = rhs.norm();
    GmresResult result;
    if (bnorm == 0.0) {
        x.setZero();
        result.converged = true;
        return result;
    }
    auto prec = [&](const VectorXcd& v) { return precond ? precond(v) : v; };

    const int m = std::max(1, opts.restart);
    Eigen::MatrixXcd V(n, m + 1);
    Eigen::MatrixXcd Hs = Eigen::MatrixXcd::Zero(m + 1, m);
    std::vector<Complex> cs(m), sn(m);
    VectorXcd g(m + 1);

    while (result.iterations < opts.max_iterations) {
        VectorXcd r = rhs - apply(x);
        const double rnorm = r.norm();
        result.residual = rnorm / bnorm;
        if (result.residual <= opts.tol) {
            result.converged = true;
            return result;
        }
        V.col(0) = r / rnorm;
        g.setZero();
        g(0) = rnorm;

        int j = 0;
        for (; j < m && result.iterations < opts.max_iterations; ++j) {
            ++result.iterations;
            VectorXcd w = apply(prec(V.col(j)));
            for (int i = 0; i <= j; ++i) {
                const Complex hij = V.col(i).dot(w);
                Hs(i, j) = hij;
                w -= hij * V.col(i);
            }
            const double hnext = w.norm();
            Hs(j + 1, j) = hnext;
            if (hnext > 0.0) V.col(j + 1) = w / hnext;

            // apply accumulated Givens rotations, then a new one
            for (int i = 0; i < j; ++i) {
                const Complex t = cs[i] * Hs(i, j) + sn[i] * Hs(i + 1, j);
                Hs(i + 1, j) = -std::conj(sn[i]) * Hs(i, j) + std::conj(cs[i]) * Hs(i + 1, j);
                Hs(i, j) = t;
            }
            const double denom = std::sqrt(std::norm(Hs(j, j)) + std::norm(Hs(j + 1, j)));
            if (denom == 0.0) {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = std::conj(Hs(j, j)) / denom;
                sn[j] = std::conj(Hs(j + 1, j)) / denom;
            }
            Hs(j, j) = cs[j] * Hs(j, j) + sn[j] * Hs(j + 1, j);
            Hs(j + 1, j) = 0.0;
            const Complex gt = cs[j] * g(j) + sn[j] * g(j + 1);
            g(j + 1) = -std::conj(sn[j]) * g(j) + std::conj(cs[j]) * g(j + 1);
            g(j) = gt;

            result.residual = std::abs(g(j + 1)) / bnorm;
            result.history.push_back(result.residual);
            if (result.residual <= opts.tol || hnext == 0.0) {
                ++j;
                break;
            }
        }
        // back-substitute y and update x
        VectorXcd y = VectorXcd::Zero(j);
        for (int i = j - 1; i >= 0; --i) {
            Complex s = g(i);
            for (int l = i + 1; l < j; ++l) s -= Hs(i, l) * y(l);
            y(i) = s / Hs(i, i);
        }
        VectorXcd z = VectorXcd::Zero(n);
        for (int i = 0; i < j; ++i) z += y(i) * V.col(i);
        x += prec(z);

        if (result.residual <= opts.tol) {
            // confirm with a true residual
            result.residual = (rhs - apply(x)).norm() / bnorm;
            if (result.residual <= 10.0 * opts.tol) {
                result.converged = true;
                return result;
            }
        }
    }
    result.residual = (rhs - apply(x)).norm() / bnorm;
    result.converged = result.residual <= opts.tol;
    return result;
}

Eigen::VectorXcd build_structural_sources(const CoupledOperators& ops, const Eigen::VectorXcd& f_s) {
    if (ops.rho_f == 0.0 || f_s.size() == 0 || f_s.isZero(0.0)) {
        return Eigen::VectorXcd::Zero(ops.size);
    }
    const Eigen::VectorXcd u = ops.shell->solve(f_s);
    return ops.omega * ops.omega * ops.rho_f * ops.transfer->apply_fs(u);
}

Eigen::VectorXcd apply_structure_admittance(const CoupledOperators& ops, const Eigen::VectorXcd& v) {
    if (ops.rho_f == 0.0) return Eigen::VectorXcd::Zero(v.size());
    const Eigen::VectorXcd f = ops.transfer->apply_sf(v);
    const Eigen::VectorXcd u = ops.shell->solve(f);
    return ops.omega * ops.omega * ops.rho_f * ops.transfer->apply_fs(u);
}

CoupledState solve_coupled(const CoupledOperators& ops, const Eigen::VectorXcd& p_inc,
                           const Eigen::VectorXcd& f_s, const GmresOptions& gopts) {
    if (!ops.apply_H || !ops.apply_G || !ops.transfer || !ops.shell) {
        throw Error("solve_coupled: incomplete operator set");
    }
    if (std::abs(ops.shell->omega() - ops.omega) > 1e-9 * std::max(1.0, ops.omega)) {
        throw Error("solve_coupled: shell operator frequency does not match");
    }
    const int n = ops.size;

    auto op = [&](const Eigen::VectorXcd& v) {
        Eigen::VectorXcd w = ops.y_factor * v;
        if (ops.rho_f != 0.0) w += apply_structure_admittance(ops, v);
        return (ops.apply_H(v) - ops.apply_G(w)).eval();
    };

    const Eigen::VectorXcd q_s = build_structural_sources(ops, f_s);
    Eigen::VectorXcd rhs = p_inc;
    if (!q_s.isZero(0.0)) rhs += ops.apply_G(q_s);

    Eigen::VectorXcd p = Eigen::VectorXcd::Zero(n);
    const GmresResult res = gmres(op, ops.precond, rhs, p, gopts);
    if (!res.converged) {
        std::string hist;
        const std::size_t tail = std::min<std::size_t>(res.history.size(), 8);
        for (std::size_t i = res.history.size() - tail; i < res.history.size(); ++i) {
            hist += " " + std::to_string(res.history[i]);
        }
        throw Error("solve_coupled: GMRES stagnated at relative residual " +
                    std::to_string(res.residual) + " (history tail:" + hist + ")");
    }

    CoupledState state;
    state.p = p;
    state.iterations = res.iterations;
    state.residual = res.residual;
    state.residual_history = res.history;
    // u responds to the pressure load even when the feedback terms vanish
    Eigen::VectorXcd load = ops.transfer->apply_sf(p);
    if (f_s.size() != 0) load += f_s;
    state.u = ops.shell->solve(load);
    state.q = ops.y_factor * p +
              ops.omega * ops.omega * ops.rho_f * ops.transfer->apply_fs(state.u);
    return state;
}

BlockSolution solve_block_system(const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& G,
                                 const TransferOperators& transfer, const ShellOperator& shell,
                                 double rho_f, double omega, Complex y_factor,
                                 const Eigen::VectorXcd& p_inc, const Eigen::VectorXcd& f_s) {
    const int n = static_cast<int>(H.rows());
    if (n > 2000) throw Error("solve_block_system: dense monolithic oracle limited to n_cp <= 2000");
    const int nu = 3 * n;
    Eigen::MatrixXcd A(nu + n, nu + n);
    A.topLeftCorner(nu, nu) = Eigen::MatrixXcd(shell.dynamic_matrix());
    A.topRightCorner(nu, n) = -transfer.dense_sf().cast<Complex>();
    A.bottomLeftCorner(n, nu) =
        -omega * omega * rho_f * (G * transfer.dense_fs().cast<Complex>());
    A.bottomRightCorner(n, n) = H - y_factor * G;

    Eigen::VectorXcd rhs(nu + n);
    rhs.head(nu) = f_s.size() ? f_s : Eigen::VectorXcd::Zero(nu);
    rhs.tail(n) = p_inc;

    const Eigen::VectorXcd sol = Eigen::PartialPivLU<Eigen::MatrixXcd>(A).solve(rhs);
    BlockSolution out;
    out.u = sol.head(nu);
    out.p = sol.tail(n);
    return out;
}

}  // namespace shellac
