#include "shellac/bem.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

namespace shellac {

namespace {

constexpr Complex kI{0.0, 1.0};

struct EvalPoint {
    Vec3 x;
    Vec3 conormal;
    double jw;
};

}  // namespace

Complex WaveContext::incident(const Vec3& x) const {
    return amplitude * std::exp(kI * (k * direction.dot(x)));
}

Complex WaveContext::incident_dn(const Vec3& x, const Vec3& n) const {
    return kI * k * direction.dot(n) * incident(x);
}

void WaveContext::validate() const {
    if (k < 0.0) throw Error("WaveContext: negative wavenumber");
    if (std::abs(direction.norm() - 1.0) > 1e-10) throw Error("WaveContext: direction must be unit");
    if (c <= 0.0 || rho_f < 0.0) throw Error("WaveContext: bad fluid parameters");
}

Complex helmholtz_kernel(const Vec3& x, const Vec3& y, double k) {
    const double r = (y - x).norm();
    if (r <= 0.0) throw Error("helmholtz_kernel: coincident points");
    return std::exp(kI * (k * r)) / (4.0 * kPi * r);
}

Complex kernel_dGdn(const Vec3& x, const Vec3& y, const Vec3& n_y, double k) {
    const Vec3 d = y - x;
    const double r = d.norm();
    if (r <= 0.0) throw Error("kernel_dGdn: coincident points");
    const double drdn = d.dot(n_y) / r;
    return std::exp(kI * (k * r)) / (4.0 * kPi * r * r) * (kI * k * r - 1.0) * drdn;
}

CollocationTable build_collocation_table(const SubdivisionSurface& surf) {
    const int n = surf.mesh().vertex_count();
    CollocationTable t;
    t.points.resize(n);
    t.normals.resize(n);
    t.owner.resize(n);
    for (int v = 0; v < n; ++v) {
        t.points[v] = surf.vertex_limit_position(v);
        t.normals[v] = surf.vertex_limit_normal(v);
        t.owner[v] = v;
    }
    return t;
}

BemAssembler::BemAssembler(const SubdivisionSurface& surf, AssemblyOptions opts)
    : surf_(&surf), opts_(opts) {
    table_ = build_collocation_table(surf);
    const ControlMesh& mesh = surf.mesh();
    const int n = mesh.vertex_count();

    supp_.assign(n, {});
    for (int e = 0; e < mesh.triangle_count(); ++e) {
        for (int v : surf.patch_vertices(e)) supp_[v].push_back(e);
    }
    vertex_basis_.resize(n);
    for (int v = 0; v < n; ++v) vertex_basis_[v] = surf.vertex_limit_basis(v);

    cache_element_tables();
    mean_edge_ = surf.mean_edge_length();
}

void BemAssembler::cache_element_tables() {
    const ControlMesh& mesh = surf_->mesh();
    const int ne = mesh.triangle_count();
    const auto& rule = triangle_rule(opts_.far_degree);
    const int nq = static_cast<int>(rule.size());

    geom_.resize(ne);
    qp_offset_.assign(ne + 1, 0);
    qp_basis_offset_.assign(ne + 1, 0);
    for (int e = 0; e < ne; ++e) {
        qp_offset_[e + 1] = qp_offset_[e] + nq;
        qp_basis_offset_[e + 1] =
            qp_basis_offset_[e] + static_cast<std::size_t>(nq) * surf_->patch_size(e);
    }
    qp_.resize(qp_offset_[ne]);
    qp_basis_.resize(qp_basis_offset_[ne]);

#pragma omp parallel for schedule(static)
    for (int e = 0; e < ne; ++e) {
        const auto& tri = mesh.triangles[e];
        Vec3 corners[3];
        for (int c = 0; c < 3; ++c) corners[c] = surf_->vertex_limit_position(tri[c]);
        const Vec3 centroid = (corners[0] + corners[1] + corners[2]) / 3.0;
        double diam = 0.0;
        for (int c = 0; c < 3; ++c) diam = std::max(diam, (corners[c] - corners[(c + 1) % 3]).norm());
        geom_[e] = {centroid, 1.25 * diam};

        const int nv = surf_->patch_size(e);
        for (int q = 0; q < nq; ++q) {
            const PatchBasis basis = surf_->evaluate_basis({e, rule[q].v, rule[q].w}, 1);
            Vec3 x = Vec3::Zero(), a1 = Vec3::Zero(), a2 = Vec3::Zero();
            for (int a = 0; a < basis.n_v; ++a) {
                const Vec3& P = mesh.vertices[basis.vertices[a]];
                x += basis.values[a] * P;
                a1 += basis.d1[a][0] * P;
                a2 += basis.d1[a][1] * P;
            }
            const Vec3 cr = a1.cross(a2);
            const double jac = cr.norm();
            FarPoint& fp = qp_[qp_offset_[e] + q];
            fp.x = x;
            fp.conormal = -cr / jac;  // fluid-domain outward (into the shell)
            fp.jw = rule[q].weight * jac;
            for (int a = 0; a < basis.n_v; ++a) {
                qp_basis_[qp_basis_offset_[e] + static_cast<std::size_t>(q) * nv + a] = basis.values[a];
            }
        }
    }
}

double BemAssembler::surface_area() const {
    double area = 0.0;
    for (const auto& fp : qp_) area += fp.jw;
    return area;
}

namespace {

struct SubTri {
    Eigen::Vector2d p0, p1, p2;
    int depth;
};

}  // namespace

void BemAssembler::assemble_row(const WaveContext& ctx, int row, const std::vector<int>* cols,
                                Complex* h_out, Complex* g_out) const {
    const ControlMesh& mesh = surf_->mesh();
    const int n = table_.size();
    const int ne = mesh.triangle_count();
    const Vec3 x0 = table_.points[row];
    const double k = ctx.k;

    thread_local std::vector<int> slot;
    thread_local std::vector<int> touched;
    if (static_cast<int>(slot.size()) < n) slot.assign(n, -1);
    for (int t : touched) slot[t] = -1;
    touched.clear();
    int ncols = n;
    if (cols) {
        ncols = static_cast<int>(cols->size());
        for (int i = 0; i < ncols; ++i) {
            slot[(*cols)[i]] = i;
            touched.push_back((*cols)[i]);
        }
    }
    auto colslot = [&](int g) { return cols ? slot[g] : g; };

    std::fill(h_out, h_out + ncols, Complex(0.0));
    std::fill(g_out, g_out + ncols, Complex(0.0));

    // columns receiving jump/static-identity terms: the limit basis at x_row
    const PatchBasis& lim = vertex_basis_[row];
    bool with_ring = cols == nullptr;
    if (cols) {
        for (int a = 0; a < lim.n_v && !with_ring; ++a) {
            if (lim.values[a] != 0.0 && slot[lim.vertices[a]] >= 0) with_ring = true;
        }
    }

    const std::vector<int>& ring = mesh.vertex_triangles(table_.owner[row]);
    auto in_ring = [&](int e) { return std::find(ring.begin(), ring.end(), e) != ring.end(); };
    auto lim_value = [&](int g) {
        for (int a = 0; a < lim.n_v; ++a) {
            if (lim.vertices[a] == g) return lim.values[a];
        }
        return 0.0;
    };

    double s_far = 0.0;

    const auto& far_rule = triangle_rule(opts_.far_degree);
    const auto& sentinel_rule = triangle_rule(doubled_degree(opts_.far_degree));

    auto accumulate = [&](const EvalPoint& pt, const std::vector<int>& verts, const double* nb,
                          bool subtract_static) {
        const Vec3 d = pt.x - x0;
        const double r = d.norm();
        const double drdn = d.dot(pt.conormal) / r;
        const Complex gk = std::exp(kI * (k * r)) / (4.0 * kPi * r);
        const Complex dgk = gk / r * (kI * k * r - 1.0) * drdn;
        const double dg0 = -drdn / (4.0 * kPi * r * r);
        if (!subtract_static) s_far += pt.jw * dg0;
        const int nvv = static_cast<int>(verts.size());
        for (int a = 0; a < nvv; ++a) {
            const int cs = colslot(verts[a]);
            if (cs < 0) continue;
            Complex hval = nb[a] * dgk;
            if (subtract_static) hval -= lim_value(verts[a]) * dg0;
            h_out[cs] += pt.jw * hval;
            g_out[cs] += pt.jw * nb[a] * gk;
        }
    };

    PatchBasis scratch;
    auto eval_point = [&](int e, double v, double w, double weight) {
        scratch = surf_->evaluate_basis({e, v, w}, 1);
        Vec3 x = Vec3::Zero(), a1 = Vec3::Zero(), a2 = Vec3::Zero();
        for (int a = 0; a < scratch.n_v; ++a) {
            const Vec3& P = mesh.vertices[scratch.vertices[a]];
            x += scratch.values[a] * P;
            a1 += scratch.d1[a][0] * P;
            a2 += scratch.d1[a][1] * P;
        }
        const Vec3 cr = a1.cross(a2);
        const double jac = cr.norm();
        return EvalPoint{x, -cr / jac, weight * jac};
    };

    for (int e = 0; e < ne; ++e) {
        bool patch_active = cols == nullptr;
        if (!patch_active) {
            for (int vtx : surf_->patch_vertices(e)) {
                if (slot[vtx] >= 0) {
                    patch_active = true;
                    break;
                }
            }
        }
        const bool singular = in_ring(e);
        // far elements still feed the static sweep when ring terms are live
        if (!patch_active && !(with_ring && !singular)) continue;

        if (singular) {
            int corner = -1;
            for (int c = 0; c < 3; ++c) {
                if (mesh.triangles[e][c] == table_.owner[row]) corner = c;
            }
            for (const auto& qp : duffy_rule(corner, opts_.ring_duffy_points)) {
                const EvalPoint pt = eval_point(e, qp.v, qp.w, qp.weight);
                accumulate(pt, scratch.vertices, scratch.values.data(), true);
            }
            continue;
        }

        const double dist = (geom_[e].centroid - x0).norm();
        bool adaptive = false;
        if (dist < opts_.near_ratio * geom_[e].diameter) {
            // cheap depth-0 check against the cached corner limit positions
            const auto& tri = mesh.triangles[e];
            double dmin0 = dist;
            double dloc0 = 0.0;
            for (int c = 0; c < 3; ++c) {
                dmin0 = std::min(dmin0, (table_.points[tri[c]] - x0).norm());
                dloc0 = std::max(dloc0, (table_.points[tri[c]] - table_.points[tri[(c + 1) % 3]]).norm());
            }
            adaptive = dmin0 < opts_.near_ratio * dloc0;
        }
        if (adaptive) {
            std::vector<SubTri> stack;
            stack.push_back({{0, 0}, {1, 0}, {0, 1}, 0});
            while (!stack.empty()) {
                const SubTri st = stack.back();
                stack.pop_back();
                const Vec3 x1 = surf_->limit_position({e, st.p0[0], st.p0[1]});
                const Vec3 x2 = surf_->limit_position({e, st.p1[0], st.p1[1]});
                const Vec3 x3 = surf_->limit_position({e, st.p2[0], st.p2[1]});
                const Vec3 xc = (x1 + x2 + x3) / 3.0;
                const double dloc = std::max({(x1 - x2).norm(), (x2 - x3).norm(), (x3 - x1).norm()});
                const double dmin =
                    std::min({(xc - x0).norm(), (x1 - x0).norm(), (x2 - x0).norm(), (x3 - x0).norm()});
                if (st.depth >= opts_.near_max_depth || dmin >= opts_.near_ratio * dloc) {
                    // reference weights already carry the unit-triangle area,
                    // so the affine map contributes its jacobian |J| = area2
                    const double area2 = std::abs((st.p1 - st.p0)[0] * (st.p2 - st.p0)[1] -
                                                  (st.p1 - st.p0)[1] * (st.p2 - st.p0)[0]);
                    for (const auto& qp : far_rule) {
                        const Eigen::Vector2d p =
                            st.p0 + qp.v * (st.p1 - st.p0) + qp.w * (st.p2 - st.p0);
                        const EvalPoint pt = eval_point(e, p[0], p[1], qp.weight * area2);
                        accumulate(pt, scratch.vertices, scratch.values.data(), false);
                    }
                } else {
                    const Eigen::Vector2d m01 = 0.5 * (st.p0 + st.p1);
                    const Eigen::Vector2d m12 = 0.5 * (st.p1 + st.p2);
                    const Eigen::Vector2d m20 = 0.5 * (st.p2 + st.p0);
                    stack.push_back({st.p0, m01, m20, st.depth + 1});
                    stack.push_back({st.p1, m12, m01, st.depth + 1});
                    stack.push_back({st.p2, m20, m12, st.depth + 1});
                    stack.push_back({m01, m12, m20, st.depth + 1});
                }
            }
            continue;
        }

        const auto& verts = surf_->patch_vertices(e);
        const int nvv = static_cast<int>(verts.size());
        const int nq = qp_offset_[e + 1] - qp_offset_[e];
        for (int q = 0; q < nq; ++q) {
            const FarPoint& fp = qp_[qp_offset_[e] + q];
            const double* nb = &qp_basis_[qp_basis_offset_[e] + static_cast<std::size_t>(q) * nvv];
            accumulate({fp.x, fp.conormal, fp.jw}, verts, nb, false);
        }

        if (opts_.convergence_check && patch_active) {
            // two-rule sentinel on this element's contribution
            std::vector<Complex> h1(nvv, 0.0), g1(nvv, 0.0), h2(nvv, 0.0), g2(nvv, 0.0);
            for (int q = 0; q < nq; ++q) {
                const FarPoint& fp = qp_[qp_offset_[e] + q];
                const double* nb = &qp_basis_[qp_basis_offset_[e] + static_cast<std::size_t>(q) * nvv];
                const Vec3 d = fp.x - x0;
                const double r = d.norm();
                const double drdn = d.dot(fp.conormal) / r;
                const Complex gk = std::exp(kI * (k * r)) / (4.0 * kPi * r);
                const Complex dgk = gk / r * (kI * k * r - 1.0) * drdn;
                for (int a = 0; a < nvv; ++a) {
                    h1[a] += fp.jw * nb[a] * dgk;
                    g1[a] += fp.jw * nb[a] * gk;
                }
            }
            for (const auto& qp : sentinel_rule) {
                const EvalPoint pt = eval_point(e, qp.v, qp.w, qp.weight);
                const Vec3 d = pt.x - x0;
                const double r = d.norm();
                const double drdn = d.dot(pt.conormal) / r;
                const Complex gk = std::exp(kI * (k * r)) / (4.0 * kPi * r);
                const Complex dgk = gk / r * (kI * k * r - 1.0) * drdn;
                for (int a = 0; a < nvv; ++a) {
                    h2[a] += pt.jw * scratch.values[a] * dgk;
                    g2[a] += pt.jw * scratch.values[a] * gk;
                }
            }
            double href = 1e-300, gref = 1e-300;
            for (int a = 0; a < nvv; ++a) {
                href = std::max(href, std::abs(h2[a]));
                gref = std::max(gref, std::abs(g2[a]));
            }
            for (int a = 0; a < nvv; ++a) {
                if (std::abs(h1[a] - h2[a]) > opts_.convergence_tol * href ||
                    std::abs(g1[a] - g2[a]) > opts_.convergence_tol * gref) {
                    std::ostringstream os;
                    os << "bem quadrature not converged: element " << e << ", collocation row " << row;
                    throw Error(os.str());
                }
            }
        }
    }

    if (with_ring) {
        // jump term plus the static-identity closure of the subtraction
        const double addback = 0.5 + kStaticIdentity - s_far;
        for (int a = 0; a < lim.n_v; ++a) {
            const int cs = colslot(lim.vertices[a]);
            if (cs >= 0) h_out[cs] += lim.values[a] * addback;
        }
    }
}

void BemAssembler::assemble(const WaveContext& ctx, Eigen::MatrixXcd* H, Eigen::MatrixXcd* G) const {
    ctx.validate();
    const int n = size();
    if (H) H->resize(n, n);
    if (G) G->resize(n, n);
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
#pragma omp parallel
    {
        std::vector<Complex> hrow(n), grow(n);
#pragma omp for schedule(dynamic, 8)
        for (int row = 0; row < n; ++row) {
            if (failed.load(std::memory_order_relaxed)) continue;
            try {
                assemble_row(ctx, row, nullptr, hrow.data(), grow.data());
                for (int j = 0; j < n; ++j) {
                    if (H) (*H)(row, j) = hrow[j];
                    if (G) (*G)(row, j) = grow[j];
                }
            } catch (...) {
#pragma omp critical
                {
                    if (!failure) failure = std::current_exception();
                    failed.store(true, std::memory_order_relaxed);
                }
            }
        }
    }
    if (failure) std::rethrow_exception(failure);
}

void BemAssembler::assemble_column(const WaveContext& ctx, int col, const std::vector<int>& rows,
                                   Complex* h_out, Complex* g_out) const {
    const int nr = static_cast<int>(rows.size());
    std::fill(h_out, h_out + nr, Complex(0.0));
    std::fill(g_out, g_out + nr, Complex(0.0));
    const double k = ctx.k;
    const std::vector<int> one_col{col};

    thread_local std::vector<char> near_row;
    near_row.assign(nr, 0);
    for (int i = 0; i < nr; ++i) {
        for (int e : supp_[col]) {
            if ((geom_[e].centroid - table_.points[rows[i]]).norm() <
                opts_.near_ratio * geom_[e].diameter) {
                near_row[i] = 1;
                break;
            }
        }
    }

    for (int e : supp_[col]) {
        const auto& verts = surf_->patch_vertices(e);
        const int nvv = static_cast<int>(verts.size());
        int local = -1;
        for (int a = 0; a < nvv; ++a) {
            if (verts[a] == col) local = a;
        }
        const int nq = qp_offset_[e + 1] - qp_offset_[e];
        for (int q = 0; q < nq; ++q) {
            const FarPoint& fp = qp_[qp_offset_[e] + q];
            const double nb = qp_basis_[qp_basis_offset_[e] + static_cast<std::size_t>(q) * nvv + local];
            for (int i = 0; i < nr; ++i) {
                if (near_row[i]) continue;
                const Vec3 d = fp.x - table_.points[rows[i]];
                const double r = d.norm();
                const double drdn = d.dot(fp.conormal) / r;
                const Complex gk = std::exp(kI * (k * r)) / (4.0 * kPi * r);
                const Complex dgk = gk / r * (kI * k * r - 1.0) * drdn;
                h_out[i] += fp.jw * nb * dgk;
                g_out[i] += fp.jw * nb * gk;
            }
        }
    }
    for (int i = 0; i < nr; ++i) {
        if (!near_row[i]) continue;
        Complex h1, g1;
        assemble_row(ctx, rows[i], &one_col, &h1, &g1);
        h_out[i] = h1;
        g_out[i] = g1;
    }
}

Eigen::VectorXcd BemAssembler::incident_vector(const WaveContext& ctx) const {
    const int n = size();
    Eigen::VectorXcd v(n);
    for (int i = 0; i < n; ++i) v(i) = ctx.incident(table_.points[i]);
    return v;
}

BemAssembler::ExteriorResult BemAssembler::exterior_pressure(const WaveContext& ctx,
                                                             const Eigen::VectorXcd& p,
                                                             const Eigen::VectorXcd& q,
                                                             const std::vector<Vec3>& points) const {
    const ControlMesh& mesh = surf_->mesh();
    const int ne = mesh.triangle_count();
    const int total = qp_offset_[ne];
    std::vector<Complex> ph(total), qh(total);
    for (int e = 0; e < ne; ++e) {
        const auto& verts = surf_->patch_vertices(e);
        const int nvv = static_cast<int>(verts.size());
        const int nq = qp_offset_[e + 1] - qp_offset_[e];
        for (int qi = 0; qi < nq; ++qi) {
            Complex pv = 0.0, qv = 0.0;
            const double* nb = &qp_basis_[qp_basis_offset_[e] + static_cast<std::size_t>(qi) * nvv];
            for (int a = 0; a < nvv; ++a) {
                pv += nb[a] * p(verts[a]);
                qv += nb[a] * q(verts[a]);
            }
            ph[qp_offset_[e] + qi] = pv;
            qh[qp_offset_[e] + qi] = qv;
        }
    }

    ExteriorResult out;
    out.values.resize(points.size());
    bool warn = false;
#pragma omp parallel for schedule(static) reduction(|| : warn)
    for (std::int64_t ip = 0; ip < static_cast<std::int64_t>(points.size()); ++ip) {
        const Vec3& x = points[ip];
        Complex acc = 0.0;
        for (int e = 0; e < ne; ++e) {
            if ((geom_[e].centroid - x).norm() < geom_[e].diameter) warn = true;
            const int nq = qp_offset_[e + 1] - qp_offset_[e];
            for (int qi = 0; qi < nq; ++qi) {
                const FarPoint& fp = qp_[qp_offset_[e] + qi];
                const Vec3 d = fp.x - x;
                const double r = std::max(d.norm(), 1e-300);
                const double drdn = d.dot(fp.conormal) / r;
                const Complex gk = std::exp(kI * (ctx.k * r)) / (4.0 * kPi * r);
                const Complex dgk = gk / r * (kI * ctx.k * r - 1.0) * drdn;
                acc += fp.jw * (gk * qh[qp_offset_[e] + qi] - dgk * ph[qp_offset_[e] + qi]);
            }
        }
        out.values[ip] = acc + ctx.incident(x);
    }
    out.near_surface_warning = warn;
    return out;
}

Eigen::AlignedBox3d BemAssembler::support_box(int basis) const {
    Eigen::AlignedBox3d box;
    for (int e : supp_[basis]) {
        for (int v : surf_->patch_vertices(e)) box.extend(surf_->mesh().vertices[v]);
    }
    return box;
}

void dump_matrix(const std::string& path, const Eigen::MatrixXcd& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("dump_matrix: cannot write " + path);
    const char magic[8] = {'S', 'H', 'E', 'L', 'L', 'A', 'C', 'M'};
    out.write(magic, 8);
    const std::int64_t rows = m.rows(), cols = m.cols();
    out.write(reinterpret_cast<const char*>(&rows), 8);
    out.write(reinterpret_cast<const char*>(&cols), 8);
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) {
            const double re = m(i, j).real(), im = m(i, j).imag();
            out.write(reinterpret_cast<const char*>(&re), 8);
            out.write(reinterpret_cast<const char*>(&im), 8);
        }
    }
}

Eigen::MatrixXcd load_matrix_dump(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_matrix_dump: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::string(magic, 8) != "SHELLACM") throw Error("load_matrix_dump: bad magic");
    std::int64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 8);
    in.read(reinterpret_cast<char*>(&cols), 8);
    Eigen::MatrixXcd m(rows, cols);
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) {
            double re, im;
            in.read(reinterpret_cast<char*>(&re), 8);
            in.read(reinterpret_cast<char*>(&im), 8);
            m(i, j) = Complex(re, im);
        }
    }
    return m;
}

}  // namespace shellac
