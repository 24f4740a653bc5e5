#include "shellac/shell.hpp"

#include <atomic>
#include <cmath>

#include "shellac/quadrature.hpp"

namespace shellac {

void ShellMaterial::validate() const {
    if (E <= 0.0) throw Error("ShellMaterial: E must be positive");
    if (nu < 0.0 || nu >= 0.5) throw Error("ShellMaterial: Poisson ratio out of [0, 0.5)");
    if (h <= 0.0) throw Error("ShellMaterial: thickness must be positive");
    if (rho <= 0.0) throw Error("ShellMaterial: density must be positive");
}

namespace {

struct QpGeometry {
    Vec3 a1, a2, a3;          // covariant tangents, unit normal
    double jac;               // |a1 x a2|
    double am[2][2];          // metric a_{ab}
    double ai[2][2];          // inverse metric a^{ab}
    double gamma[2][2][2];    // Christoffel symbols Gamma^c_{ab}
};

// second-derivative storage order: (vv, vw, ww) -> tensor index pairs
constexpr int kSecond[3][2] = {{0, 0}, {0, 1}, {1, 1}};

bool compute_geometry(const PatchBasis& basis, const std::vector<Vec3>& verts, bool need_second,
                      QpGeometry& g, Vec3 xdd[3]) {
    g.a1 = Vec3::Zero();
    g.a2 = Vec3::Zero();
    xdd[0] = xdd[1] = xdd[2] = Vec3::Zero();
    for (int a = 0; a < basis.n_v; ++a) {
        const Vec3& P = verts[basis.vertices[a]];
        g.a1 += basis.d1[a][0] * P;
        g.a2 += basis.d1[a][1] * P;
        if (need_second) {
            xdd[0] += basis.d2[a][0] * P;
            xdd[1] += basis.d2[a][1] * P;
            xdd[2] += basis.d2[a][2] * P;
        }
    }
    const Vec3 cr = g.a1.cross(g.a2);
    g.jac = cr.norm();
    if (!(g.jac > 0.0)) return false;
    g.a3 = cr / g.jac;
    g.am[0][0] = g.a1.dot(g.a1);
    g.am[0][1] = g.am[1][0] = g.a1.dot(g.a2);
    g.am[1][1] = g.a2.dot(g.a2);
    const double det = g.am[0][0] * g.am[1][1] - g.am[0][1] * g.am[0][1];
    if (!(det > 0.0)) return false;
    g.ai[0][0] = g.am[1][1] / det;
    g.ai[1][1] = g.am[0][0] / det;
    g.ai[0][1] = g.ai[1][0] = -g.am[0][1] / det;
    if (!need_second) return true;
    // contravariant tangents
    const Vec3 ac1 = g.ai[0][0] * g.a1 + g.ai[0][1] * g.a2;
    const Vec3 ac2 = g.ai[1][0] * g.a1 + g.ai[1][1] * g.a2;
    for (int s = 0; s < 3; ++s) {
        const int al = kSecond[s][0], be = kSecond[s][1];
        g.gamma[al][be][0] = ac1.dot(xdd[s]);
        g.gamma[al][be][1] = ac2.dot(xdd[s]);
        g.gamma[be][al][0] = g.gamma[al][be][0];
        g.gamma[be][al][1] = g.gamma[al][be][1];
    }
    return true;
}

// plane-stress constitutive contraction matrix in symmetric (11, 22, 12)
// storage, off-diagonal multiplicities folded in: s : H : t = s^T D t
void constitutive(const QpGeometry& g, double E, double nu, double D[3][3]) {
    const double scale = E / (1.0 - nu * nu);
    auto H = [&](int a, int b, int c, int d) {
        return scale * (nu * g.ai[a][b] * g.ai[c][d] +
                        0.5 * (1.0 - nu) * (g.ai[a][c] * g.ai[b][d] + g.ai[a][d] * g.ai[b][c]));
    };
    for (int i = 0; i < 3; ++i) {
        const int a = kSecond[i][0], b = kSecond[i][1];
        const double mi = (a == b) ? 1.0 : 2.0;
        for (int j = 0; j < 3; ++j) {
            const int c = kSecond[j][0], d = kSecond[j][1];
            const double mj = (c == d) ? 1.0 : 2.0;
            D[i][j] = mi * mj * H(a, b, c, d);
        }
    }
}

SparseReal assemble_generic(const SubdivisionSurface& surf, const ShellMaterial& mat,
                            int quad_degree, bool with_membrane, bool with_bending,
                            bool mass_matrix) {
    mat.validate();
    const ControlMesh& mesh = surf.mesh();
    const int ne = mesh.triangle_count();
    const int ndof = 3 * mesh.vertex_count();
    const auto& rule = triangle_rule(std::max(quad_degree, 2));

    // per-element triplet buffers, merged in element order for determinism
    std::vector<std::vector<Eigen::Triplet<double>>> buffers(ne);
    std::exception_ptr failure;
    std::atomic<bool> failed{false};

#pragma omp parallel for schedule(dynamic, 16)
    for (int e = 0; e < ne; ++e) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
        const int nv = surf.patch_size(e);
        Eigen::MatrixXd local = Eigen::MatrixXd::Zero(3 * nv, 3 * nv);
        QpGeometry g;
        Vec3 xdd[3];
        std::vector<int> verts;

        for (const auto& qp : rule) {
            const PatchBasis basis = surf.evaluate_basis({e, qp.v, qp.w}, mass_matrix ? 1 : 2);
            verts = basis.vertices;
            if (!compute_geometry(basis, mesh.vertices, !mass_matrix, g, xdd)) {
                throw Error("shell assembly: degenerate surface metric in element " + std::to_string(e));
            }
            const double wj = qp.weight * g.jac;

            if (mass_matrix) {
                const double c = wj * mat.rho * mat.h;
                for (int a = 0; a < nv; ++a) {
                    for (int b = 0; b < nv; ++b) {
                        const double m = c * basis.values[a] * basis.values[b];
                        for (int i = 0; i < 3; ++i) local(3 * a + i, 3 * b + i) += m;
                    }
                }
                continue;
            }

            double D[3][3];
            constitutive(g, mat.E, mat.nu, D);
            const double cm = wj * mat.h;
            const double cb = wj * mat.h * mat.h * mat.h / 12.0;

            // strain rows per dof: membrane alpha and bending beta in
            // (11, 22, 12) storage
            // alpha_{ab}(N e_i) = 1/2 (N_{,a} a_b[i] + N_{,b} a_a[i])
            // beta_{ab}(N e_i)  = (N_{,ab} - Gamma^c_{ab} N_{,c}) a3[i]
            thread_local std::vector<double> alpha, beta;
            alpha.assign(static_cast<std::size_t>(3 * nv) * 3, 0.0);
            beta.assign(static_cast<std::size_t>(3 * nv) * 3, 0.0);
            const Vec3 tang[2] = {g.a1, g.a2};
            for (int a = 0; a < nv; ++a) {
                const double d1v = basis.d1[a][0], d1w = basis.d1[a][1];
                const double der[2] = {d1v, d1w};
                double wsec[3];
                if (with_bending) {
                    for (int s = 0; s < 3; ++s) {
                        const int al = kSecond[s][0], be = kSecond[s][1];
                        wsec[s] = basis.d2[a][s] - g.gamma[al][be][0] * d1v - g.gamma[al][be][1] * d1w;
                    }
                }
                for (int i = 0; i < 3; ++i) {
                    double* arow = &alpha[static_cast<std::size_t>(3 * a + i) * 3];
                    double* brow = &beta[static_cast<std::size_t>(3 * a + i) * 3];
                    if (with_membrane) {
                        for (int s = 0; s < 3; ++s) {
                            const int al = kSecond[s][0], be = kSecond[s][1];
                            arow[s] = 0.5 * (der[al] * tang[be][i] + der[be] * tang[al][i]);
                        }
                    }
                    if (with_bending) {
                        for (int s = 0; s < 3; ++s) brow[s] = wsec[s] * g.a3[i];
                    }
                }
            }
            for (int p = 0; p < 3 * nv; ++p) {
                const double* ap = &alpha[static_cast<std::size_t>(p) * 3];
                const double* bp = &beta[static_cast<std::size_t>(p) * 3];
                double Dap[3] = {0, 0, 0}, Dbp[3] = {0, 0, 0};
                for (int i = 0; i < 3; ++i) {
                    for (int j = 0; j < 3; ++j) {
                        Dap[i] += D[i][j] * ap[j];
                        Dbp[i] += D[i][j] * bp[j];
                    }
                }
                for (int r = p; r < 3 * nv; ++r) {
                    const double* ar = &alpha[static_cast<std::size_t>(r) * 3];
                    const double* br = &beta[static_cast<std::size_t>(r) * 3];
                    double val = 0.0;
                    if (with_membrane) val += cm * (ar[0] * Dap[0] + ar[1] * Dap[1] + ar[2] * Dap[2]);
                    if (with_bending) val += cb * (br[0] * Dbp[0] + br[1] * Dbp[1] + br[2] * Dbp[2]);
                    local(r, p) += val;
                    if (r != p) local(p, r) += val;
                }
            }
        }

        auto& buf = buffers[e];
        buf.reserve(static_cast<std::size_t>(3 * nv) * 3 * nv);
        for (int p = 0; p < 3 * nv; ++p) {
            const int gp = 3 * verts[p / 3] + p % 3;
            for (int r = 0; r < 3 * nv; ++r) {
                const double val = local(r, p);
                if (val != 0.0) buf.emplace_back(3 * verts[r / 3] + r % 3, gp, val);
            }
        }
        } catch (...) {
#pragma omp critical
            {
                if (!failure) failure = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
            }
        }
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<Eigen::Triplet<double>> trips;
    std::size_t total = 0;
    for (const auto& b : buffers) total += b.size();
    trips.reserve(total);
    for (const auto& b : buffers) trips.insert(trips.end(), b.begin(), b.end());
    SparseReal out(ndof, ndof);
    out.setFromTriplets(trips.begin(), trips.end());
    out.makeCompressed();
    return out;
}

}  // namespace

SparseReal assemble_stiffness(const SubdivisionSurface& surf, const ShellMaterial& mat, int quad_degree) {
    return assemble_generic(surf, mat, quad_degree, true, true, false);
}

SparseReal assemble_stiffness_part(const SubdivisionSurface& surf, const ShellMaterial& mat,
                                   bool membrane, bool bending, int quad_degree) {
    return assemble_generic(surf, mat, quad_degree, membrane, bending, false);
}

SparseReal assemble_mass(const SubdivisionSurface& surf, const ShellMaterial& mat, int quad_degree) {
    return assemble_generic(surf, mat, quad_degree, false, false, true);
}

ShellOperator::ShellOperator(SparseReal K, SparseReal M, const ShellMaterial& mat, double omega)
    : K_(std::move(K)), M_(std::move(M)), omega_(omega) {
    if (omega < 0.0) throw Error("ShellOperator: omega must be >= 0");
    const Complex iw(0.0, omega);
    SparseComplex Kc = K_.cast<Complex>();
    SparseComplex Mc = M_.cast<Complex>();
    A_ = (Kc - omega * omega * Mc + iw * (mat.c1 * Kc + mat.c2 * Mc)).pruned();
    A_.makeCompressed();
    lu_ = std::make_unique<Eigen::SparseLU<SparseComplex>>();
    lu_->compute(A_);
    if (lu_->info() != Eigen::Success) {
        throw Error(
            "ShellOperator: dynamic matrix is singular (undamped resonance); shift the frequency or "
            "add Rayleigh damping");
    }
}

Eigen::VectorXcd ShellOperator::solve(const Eigen::VectorXcd& rhs) const {
    return lu_->solve(rhs);
}

}  // namespace shellac
