#include "shellac/subdivision.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

namespace shellac {

namespace {

// ---------------------------------------------------------------------------
// Quartic box-spline patch basis.
//
// The 12 basis polynomials on the reference triangle are reconstructed once at
// startup from the subdivision scheme itself: cascade a unit control value on
// the regular three-direction lattice two levels down, read off exact limit
// values on the principal lattice {(i/4, j/4)}, and solve for the quartic
// monomial coefficients. Coefficients snap onto twelfths and are verified
// against a third cascade level, so no transcribed polynomial tables enter
// the code.
// ---------------------------------------------------------------------------

// Canonical local ordering of the 12 patch vertices, as lattice offsets
// relative to the element (corner0 at origin, corner1 at (1,0), corner2 at
// (0,1); lattice edge directions (1,0), (0,1), (1,-1)).
constexpr int kPatchOffset[12][2] = {
    {0, 0}, {1, 0}, {0, 1}, {-1, 0}, {0, -1}, {1, -1},
    {-1, 1}, {2, -1}, {2, 0}, {1, 1}, {0, 2}, {-1, 2},
};

// monomials v^p w^q, total degree <= 4, deg-lex order
constexpr int kMono[15][2] = {
    {0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}, {3, 0}, {2, 1},
    {1, 2}, {0, 3}, {4, 0}, {3, 1}, {2, 2}, {1, 3}, {0, 4},
};

class LatticeField {
public:
    double get(int i, int j) const {
        auto it = vals_.find({i, j});
        return it == vals_.end() ? 0.0 : it->second;
    }
    void set(int i, int j, double v) {
        if (v != 0.0) vals_[{i, j}] = v;
    }

    // One Loop step on the regular lattice; `radius` bounds the output window.
    LatticeField subdivided(int radius) const {
        LatticeField out;
        for (int p = -radius; p <= radius; ++p) {
            for (int q = -radius; q <= radius; ++q) {
                const bool pe = (p & 1) == 0, qe = (q & 1) == 0;
                double v = 0.0;
                if (pe && qe) {
                    const int i = p / 2, j = q / 2;
                    v = 0.625 * get(i, j) +
                        0.0625 * (get(i + 1, j) + get(i - 1, j) + get(i, j + 1) +
                                  get(i, j - 1) + get(i + 1, j - 1) + get(i - 1, j + 1));
                } else if (!pe && qe) {
                    const int i = (p - 1) / 2, j = q / 2;
                    v = 0.375 * (get(i, j) + get(i + 1, j)) + 0.125 * (get(i, j + 1) + get(i + 1, j - 1));
                } else if (pe && !qe) {
                    const int i = p / 2, j = (q - 1) / 2;
                    v = 0.375 * (get(i, j) + get(i, j + 1)) + 0.125 * (get(i + 1, j) + get(i - 1, j + 1));
                } else {
                    const int i = (p - 1) / 2, j = (q - 1) / 2;
                    v = 0.375 * (get(i, j + 1) + get(i + 1, j)) + 0.125 * (get(i, j) + get(i + 1, j + 1));
                }
                out.set(p, q, v);
            }
        }
        return out;
    }

    double limit(int i, int j) const {
        return 0.5 * get(i, j) +
               (1.0 / 12.0) * (get(i + 1, j) + get(i - 1, j) + get(i, j + 1) +
                               get(i, j - 1) + get(i + 1, j - 1) + get(i - 1, j + 1));
    }

private:
    std::map<std::pair<int, int>, double> vals_;
};

struct BoxSplineTable {
    double coef[12][15];
};

const BoxSplineTable& box_spline_table() {
    static const BoxSplineTable table = [] {
        BoxSplineTable t{};
        Eigen::Matrix<double, 15, 15> vand;
        std::vector<std::pair<int, int>> nodes;
        for (int i = 0; i <= 4; ++i)
            for (int j = 0; i + j <= 4; ++j) nodes.push_back({i, j});
        for (int r = 0; r < 15; ++r) {
            const double v = nodes[r].first / 4.0, w = nodes[r].second / 4.0;
            for (int m = 0; m < 15; ++m) {
                vand(r, m) = std::pow(v, kMono[m][0]) * std::pow(w, kMono[m][1]);
            }
        }
        const Eigen::FullPivLU<Eigen::Matrix<double, 15, 15>> lu(vand);

        for (int b = 0; b < 12; ++b) {
            LatticeField f0;
            f0.set(kPatchOffset[b][0], kPatchOffset[b][1], 1.0);
            LatticeField f1 = f0.subdivided(12);
            LatticeField f2 = f1.subdivided(24);
            Eigen::Matrix<double, 15, 1> rhs;
            for (int r = 0; r < 15; ++r) rhs(r) = f2.limit(nodes[r].first, nodes[r].second);
            Eigen::Matrix<double, 15, 1> c = lu.solve(rhs);
            for (int m = 0; m < 15; ++m) {
                const double snapped = std::round(12.0 * c(m)) / 12.0;
                if (std::abs(snapped - c(m)) > 1e-9) {
                    throw Error("box spline construction: coefficient failed to snap");
                }
                t.coef[b][m] = snapped;
            }
        }

        // certify against one more cascade level
        {
            LatticeField f0;
            f0.set(kPatchOffset[4][0], kPatchOffset[4][1], 1.0);
            LatticeField f3 = f0.subdivided(12).subdivided(24).subdivided(48);
            for (int i = 0; i <= 8; ++i) {
                for (int j = 0; i + j <= 8; ++j) {
                    const double v = i / 8.0, w = j / 8.0;
                    double poly = 0.0;
                    for (int m = 0; m < 15; ++m) {
                        poly += t.coef[4][m] * std::pow(v, kMono[m][0]) * std::pow(w, kMono[m][1]);
                    }
                    if (std::abs(poly - f3.limit(i, j)) > 1e-12) {
                        throw Error("box spline construction: verification failed");
                    }
                }
            }
        }
        return t;
    }();
    return table;
}

// ---------------------------------------------------------------------------
// Local patch meshes for the irregular-vertex subdivision operators.
// ---------------------------------------------------------------------------

struct LocalMesh {
    std::vector<std::array<int, 3>> tris;
    std::map<std::pair<int, int>, std::array<int, 2>> edge_tris;

    void build() {
        edge_tris.clear();
        for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
            for (int c = 0; c < 3; ++c) {
                const auto key = std::minmax(tris[t][c], tris[t][(c + 1) % 3]);
                auto [it, inserted] = edge_tris.try_emplace(key, std::array<int, 2>{t, -1});
                if (!inserted) it->second[1] = t;
            }
        }
    }

    int third(int t, int a, int b) const {
        for (int k = 0; k < 3; ++k) {
            if (tris[t][k] != a && tris[t][k] != b) return tris[t][k];
        }
        return -1;
    }

    // third vertex across edge (a,b), other side from c; -1 if open
    int opp(int a, int b, int c) const {
        auto it = edge_tris.find(std::minmax(a, b));
        if (it == edge_tris.end()) return -1;
        for (int t : it->second) {
            if (t < 0) continue;
            const auto& tri = tris[t];
            if (tri[0] == c || tri[1] == c || tri[2] == c) continue;
            return third(t, a, b);
        }
        return -1;
    }

    std::array<int, 2> wings(int a, int b) const {
        auto it = edge_tris.find(std::minmax(a, b));
        if (it == edge_tris.end()) return {-1, -1};
        std::array<int, 2> w{-1, -1};
        for (int s = 0; s < 2; ++s) {
            if (it->second[s] >= 0) w[s] = third(it->second[s], a, b);
        }
        return w;
    }
};

// Canonical 12-vertex stencil of a regular element (q0,q1,q2), matching
// kPatchOffset order, from connectivity alone.
template <typename OppFn>
std::array<int, 12> canonical_stencil(const OppFn& opp, int q0, int q1, int q2) {
    std::array<int, 12> s{};
    s[0] = q0;
    s[1] = q1;
    s[2] = q2;
    s[5] = opp(q0, q1, q2);
    s[9] = opp(q1, q2, q0);
    s[6] = opp(q0, q2, q1);
    s[3] = opp(q0, s[6], q2);
    s[4] = opp(q0, s[5], q1);
    s[7] = opp(q1, s[5], q0);
    s[8] = opp(q1, s[9], q2);
    s[10] = opp(q2, s[9], q1);
    s[11] = opp(q2, s[6], q0);
    for (int v : s) {
        if (v < 0) throw Error("subdivision: incomplete regular patch stencil");
    }
    return s;
}

}  // namespace

void box_spline_basis(double v, double w, int deriv_order, double values[12],
                      double d1[12][2], double d2[12][3]) {
    const auto& table = box_spline_table();
    double pv[5] = {1, v, v * v, v * v * v, v * v * v * v};
    double pw[5] = {1, w, w * w, w * w * w, w * w * w * w};
    for (int b = 0; b < 12; ++b) {
        double f = 0, fv = 0, fw = 0, fvv = 0, fvw = 0, fww = 0;
        for (int m = 0; m < 15; ++m) {
            const double c = table.coef[b][m];
            if (c == 0.0) continue;
            const int p = kMono[m][0], q = kMono[m][1];
            f += c * pv[p] * pw[q];
            if (deriv_order >= 1) {
                if (p > 0) fv += c * p * pv[p - 1] * pw[q];
                if (q > 0) fw += c * q * pv[p] * pw[q - 1];
            }
            if (deriv_order >= 2) {
                if (p > 1) fvv += c * p * (p - 1) * pv[p - 2] * pw[q];
                if (p > 0 && q > 0) fvw += c * p * q * pv[p - 1] * pw[q - 1];
                if (q > 1) fww += c * q * (q - 1) * pv[p] * pw[q - 2];
            }
        }
        values[b] = f;
        if (deriv_order >= 1) {
            d1[b][0] = fv;
            d1[b][1] = fw;
        }
        if (deriv_order >= 2) {
            d2[b][0] = fvv;
            d2[b][1] = fvw;
            d2[b][2] = fww;
        }
    }
}

// ---------------------------------------------------------------------------
// Per-valence subdivision operators (Stam's evaluation scheme).
// ---------------------------------------------------------------------------

struct SubdivisionSurface::IrregularOps {
    int valence = 0;
    int K = 0;                 // = valence + 6
    Eigen::MatrixXd A;         // K x K, one local refinement around the irregular vertex
    Eigen::MatrixXd PA[3];     // 12 x K, child patch pick of one refinement
    Eigen::VectorXd limit_mask, tan1, tan2;  // size K
};

namespace {

std::shared_ptr<const SubdivisionSurface::IrregularOps> build_irregular_ops(int N) {
    using Ops = SubdivisionSurface::IrregularOps;
    auto ops = std::make_shared<Ops>();
    ops->valence = N;
    const int K = N + 6;
    ops->K = K;

    // Local patch: irregular vertex 0, ring 1..N, outer shell N+1..N+5.
    LocalMesh pm;
    for (int i = 0; i < N; ++i) pm.tris.push_back({0, 1 + i, 1 + (i + 1) % N});
    const int r0 = 1, r1 = 2, r2 = 3, rN = N;  // rN = last ring vertex
    const int s1 = N + 1, s2 = N + 2, s3 = N + 3, s4 = N + 4, s5 = N + 5;
    pm.tris.push_back({r0, s3, r1});
    pm.tris.push_back({r0, s2, s3});
    pm.tris.push_back({r0, s1, s2});
    pm.tris.push_back({rN, s1, r0});
    pm.tris.push_back({r1, s3, s4});
    pm.tris.push_back({r1, s4, s5});
    pm.tris.push_back({r2, r1, s5});
    pm.build();

    // Edge midpoint ids for the refined local mesh.
    std::map<std::pair<int, int>, int> mid;
    for (const auto& [e, tt] : pm.edge_tris) mid.emplace(e, 0);
    int next_id = K;
    for (auto& [e, id] : mid) id = next_id++;

    // Stencil rows (as maps from coarse patch values).
    auto ring_of = [&](int v) {
        std::map<int, int> nxt;
        for (const auto& tri : pm.tris) {
            for (int c = 0; c < 3; ++c) {
                if (tri[c] == v) nxt[tri[(c + 1) % 3]] = tri[(c + 2) % 3];
            }
        }
        std::vector<int> ring;
        int cur = nxt.begin()->first;
        const int start = cur;
        do {
            ring.push_back(cur);
            auto it = nxt.find(cur);
            if (it == nxt.end()) throw Error("subdivision: open ring in local patch");
            cur = it->second;
        } while (cur != start && ring.size() <= nxt.size());
        if (cur != start || ring.size() != nxt.size()) {
            throw Error("subdivision: local patch ring is not a closed cycle");
        }
        return ring;
    };

    auto row_for = [&](int id) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(K);
        if (id < K) {
            const auto ring = ring_of(id);
            const int n = static_cast<int>(ring.size());
            const double beta = loop_beta(n);
            row(id) = 1.0 - n * beta;
            for (int r : ring) row(r) = beta;
        } else {
            for (const auto& [e, m] : mid) {
                if (m != id) continue;
                const auto w = pm.wings(e.first, e.second);
                if (w[0] < 0 || w[1] < 0) throw Error("subdivision: midpoint stencil leaves local patch");
                row(e.first) = row(e.second) = 0.375;
                row(w[0]) = row(w[1]) = 0.125;
                return row;
            }
            throw Error("subdivision: unknown midpoint id");
        }
        return row;
    };

    // Refined local connectivity.
    LocalMesh sm;
    for (const auto& tri : pm.tris) {
        const int m01 = mid.at(std::minmax(tri[0], tri[1]));
        const int m12 = mid.at(std::minmax(tri[1], tri[2]));
        const int m20 = mid.at(std::minmax(tri[2], tri[0]));
        sm.tris.push_back({tri[0], m01, m20});
        sm.tris.push_back({tri[1], m12, m01});
        sm.tris.push_back({tri[2], m20, m12});
        sm.tris.push_back({m01, m12, m20});
    }
    sm.build();
    auto sm_opp = [&](int a, int b, int c) { return sm.opp(a, b, c); };

    // Inner child patch around the (still irregular) vertex 0.
    std::vector<int> inner;
    inner.push_back(0);
    std::vector<int> spokes(N);
    for (int i = 0; i < N; ++i) {
        spokes[i] = mid.at(std::minmax(0, 1 + i));
        inner.push_back(spokes[i]);
    }
    {
        const int t3 = sm.opp(spokes[0], spokes[1], 0);
        const int t2 = sm.opp(spokes[0], t3, spokes[1]);
        const int t1 = sm.opp(spokes[0], t2, t3);
        const int t4 = sm.opp(spokes[1], t3, spokes[0]);
        const int t5 = sm.opp(spokes[1], t4, t3);
        if (t2 != r0 || t4 != r1) throw Error("subdivision: child patch layout mismatch");
        inner.push_back(t1);
        inner.push_back(t2);
        inner.push_back(t3);
        inner.push_back(t4);
        inner.push_back(t5);
    }

    ops->A.resize(K, K);
    for (int i = 0; i < K; ++i) ops->A.row(i) = row_for(inner[i]);

    const int e01 = mid.at(std::minmax(r0, r1));
    const std::array<std::array<int, 3>, 3> child_elems = {{
        {spokes[0], r0, e01},   // child 1: (m0, r0', e01)
        {spokes[1], e01, r1},   // child 2: (m1, e01, r1')
        {e01, spokes[1], spokes[0]},  // child 3, parameter-reversed
    }};
    for (int k = 0; k < 3; ++k) {
        const auto st = canonical_stencil(sm_opp, child_elems[k][0], child_elems[k][1], child_elems[k][2]);
        ops->PA[k].resize(12, K);
        for (int j = 0; j < 12; ++j) ops->PA[k].row(j) = row_for(st[j]);
    }

    ops->limit_mask = Eigen::VectorXd::Zero(K);
    ops->tan1 = Eigen::VectorXd::Zero(K);
    ops->tan2 = Eigen::VectorXd::Zero(K);
    const double l = loop_limit_weight(N);
    ops->limit_mask(0) = 1.0 - N * l;
    for (int i = 0; i < N; ++i) {
        ops->limit_mask(1 + i) = l;
        ops->tan1(1 + i) = std::cos(2.0 * kPi * i / N);
        ops->tan2(1 + i) = std::sin(2.0 * kPi * i / N);
    }
    return ops;
}

}  // namespace

// ---------------------------------------------------------------------------
// SubdivisionSurface
// ---------------------------------------------------------------------------

SubdivisionSurface::SubdivisionSurface(const ControlMesh& mesh) : mesh_(&mesh) {
    if (!mesh.finalized()) throw Error("SubdivisionSurface: mesh not finalized");
    patches_.resize(mesh.triangle_count());
    for (int e = 0; e < mesh.triangle_count(); ++e) build_patch(e);
    for (const auto& p : patches_) {
        if (p.irregular_valence != 6 && !ops_.count(p.irregular_valence)) {
            ops_.emplace(p.irregular_valence, build_irregular_ops(p.irregular_valence));
        }
    }
}

void SubdivisionSurface::build_patch(int e) {
    const auto& mesh = *mesh_;
    const auto& tri = mesh.triangles[e];
    int irregular = -1;
    for (int c = 0; c < 3; ++c) {
        if (mesh.valence(tri[c]) != 6) {
            if (irregular >= 0) {
                std::ostringstream os;
                os << "subdivision: element " << e << " has more than one irregular corner"
                   << " (apply one loop_subdivide first)";
                throw Error(os.str());
            }
            irregular = c;
        }
    }
    Patch& patch = patches_[e];
    auto opp = [&mesh](int a, int b, int c) { return mesh.opposite_vertex(a, b, c); };
    if (irregular < 0) {
        patch.rot = 0;
        patch.irregular_valence = 6;
        const auto st = canonical_stencil(opp, tri[0], tri[1], tri[2]);
        patch.verts.assign(st.begin(), st.end());
        return;
    }
    patch.rot = irregular;
    const int q0 = tri[irregular], q1 = tri[(irregular + 1) % 3], q2 = tri[(irregular + 2) % 3];
    const int N = mesh.valence(q0);
    patch.irregular_valence = N;
    const auto& ring = mesh.one_ring(q0);
    const auto pos = std::find(ring.begin(), ring.end(), q1);
    if (pos == ring.end()) throw Error("subdivision: inconsistent one-ring");
    const int start = static_cast<int>(pos - ring.begin());
    if (ring[(start + 1) % N] != q2) throw Error("subdivision: one-ring orientation mismatch");

    patch.verts.clear();
    patch.verts.reserve(N + 6);
    patch.verts.push_back(q0);
    for (int i = 0; i < N; ++i) patch.verts.push_back(ring[(start + i) % N]);
    const int rr0 = q1, rr1 = q2;
    const int t3 = opp(rr0, rr1, q0);
    const int t2 = opp(rr0, t3, rr1);
    const int t1 = opp(rr0, t2, t3);
    const int t4 = opp(rr1, t3, rr0);
    const int t5 = opp(rr1, t4, t3);
    patch.verts.push_back(t1);
    patch.verts.push_back(t2);
    patch.verts.push_back(t3);
    patch.verts.push_back(t4);
    patch.verts.push_back(t5);
}

const SubdivisionSurface::IrregularOps& SubdivisionSurface::ops_for(int valence) const {
    const auto it = ops_.find(valence);
    if (it == ops_.end()) throw Error("subdivision: missing operators for valence " + std::to_string(valence));
    return *it->second;
}

void SubdivisionSurface::eval_local(const Patch& patch, double v, double w, int deriv_order,
                                    std::vector<double>& values, std::vector<std::array<double, 2>>& d1,
                                    std::vector<std::array<double, 3>>& d2) const {
    const int nv = static_cast<int>(patch.verts.size());
    values.assign(nv, 0.0);
    if (deriv_order >= 1) d1.assign(nv, {0.0, 0.0});
    if (deriv_order >= 2) d2.assign(nv, {0.0, 0.0, 0.0});

    if (patch.irregular_valence == 6) {
        double val[12], dd1[12][2], dd2[12][3];
        box_spline_basis(v, w, deriv_order, val, dd1, dd2);
        for (int b = 0; b < 12; ++b) {
            values[b] = val[b];
            if (deriv_order >= 1) d1[b] = {dd1[b][0], dd1[b][1]};
            if (deriv_order >= 2) d2[b] = {dd2[b][0], dd2[b][1], dd2[b][2]};
        }
        return;
    }

    const auto& ops = ops_for(patch.irregular_valence);

    if (v == 0.0 && w == 0.0) {
        // Limit masks; d1 spans the tangent plane (scale unspecified), second
        // derivatives are unbounded here and are returned as zero.
        for (int a = 0; a < nv; ++a) {
            values[a] = ops.limit_mask(a);
            if (deriv_order >= 1) d1[a] = {ops.tan1(a), ops.tan2(a)};
        }
        return;
    }

    double sum = v + w;
    // Points closer to the irregular corner than the recursion cap allows are
    // snapped outward along the same ray.
    constexpr double kSnap = 1.5 / double(1 << 30);
    if (sum < kSnap) {
        const double scale = kSnap / sum;
        v *= scale;
        w *= scale;
        sum = kSnap;
    }
    int depth = static_cast<int>(std::floor(-std::log2(sum))) + 1;
    depth = std::clamp(depth, 1, kMaxRecursionDepth);

    const double pow2 = std::ldexp(1.0, depth);
    double V = v * pow2, W = w * pow2;
    int child;
    double sign = 1.0;
    if (V > 1.0) {
        child = 0;
        V -= 1.0;
    } else if (W > 1.0) {
        child = 1;
        W -= 1.0;
    } else {
        child = 2;
        V = 1.0 - V;
        W = 1.0 - W;
        sign = -1.0;
    }

    double val[12], dd1[12][2], dd2[12][3];
    box_spline_basis(V, W, deriv_order, val, dd1, dd2);

    Eigen::RowVectorXd rv = Eigen::Map<Eigen::RowVectorXd>(val, 12) * ops.PA[child];
    Eigen::RowVectorXd rd[5];
    const int extra = deriv_order >= 2 ? 5 : deriv_order >= 1 ? 2 : 0;
    if (deriv_order >= 1) {
        double c1[12], c2[12];
        for (int b = 0; b < 12; ++b) {
            c1[b] = dd1[b][0];
            c2[b] = dd1[b][1];
        }
        rd[0] = Eigen::Map<Eigen::RowVectorXd>(c1, 12) * ops.PA[child];
        rd[1] = Eigen::Map<Eigen::RowVectorXd>(c2, 12) * ops.PA[child];
    }
    if (deriv_order >= 2) {
        double c3[12], c4[12], c5[12];
        for (int b = 0; b < 12; ++b) {
            c3[b] = dd2[b][0];
            c4[b] = dd2[b][1];
            c5[b] = dd2[b][2];
        }
        rd[2] = Eigen::Map<Eigen::RowVectorXd>(c3, 12) * ops.PA[child];
        rd[3] = Eigen::Map<Eigen::RowVectorXd>(c4, 12) * ops.PA[child];
        rd[4] = Eigen::Map<Eigen::RowVectorXd>(c5, 12) * ops.PA[child];
    }
    for (int lev = 1; lev < depth; ++lev) {
        rv = rv * ops.A;
        for (int k = 0; k < extra; ++k) rd[k] = rd[k] * ops.A;
    }

    const double s1 = sign * pow2;     // first-derivative chain factor
    const double s2 = pow2 * pow2;     // second-derivative chain factor
    for (int a = 0; a < nv; ++a) {
        values[a] = rv(a);
        if (deriv_order >= 1) d1[a] = {s1 * rd[0](a), s1 * rd[1](a)};
        if (deriv_order >= 2) d2[a] = {s2 * rd[2](a), s2 * rd[3](a), s2 * rd[4](a)};
    }
}

PatchBasis SubdivisionSurface::evaluate_basis(const ParamPoint& p, int deriv_order) const {
    if (p.element < 0 || p.element >= mesh_->triangle_count()) {
        throw Error("evaluate_basis: element id out of range");
    }
    constexpr double kTol = 1e-12;
    if (p.v < -kTol || p.w < -kTol || p.v + p.w > 1.0 + kTol) {
        std::ostringstream os;
        os << "evaluate_basis: parameter (" << p.v << "," << p.w << ") outside reference triangle";
        throw Error(os.str());
    }
    const double v0 = std::max(p.v, 0.0), w0 = std::max(p.w, 0.0);
    const Patch& patch = patches_[p.element];

    // map stored-frame coordinates into the local (rotated) frame
    double lv = v0, lw = w0;
    // jacobian d(local)/d(stored)
    double m11 = 1, m12 = 0, m21 = 0, m22 = 1;
    if (patch.rot == 1) {
        lv = w0;
        lw = 1.0 - v0 - w0;
        m11 = 0;
        m12 = 1;
        m21 = -1;
        m22 = -1;
    } else if (patch.rot == 2) {
        lv = 1.0 - v0 - w0;
        lw = v0;
        m11 = -1;
        m12 = -1;
        m21 = 1;
        m22 = 0;
    }
    lv = std::max(lv, 0.0);
    lw = std::max(lw, 0.0);

    PatchBasis out;
    out.element = p.element;
    out.vertices = patch.verts;
    out.n_v = static_cast<int>(patch.verts.size());
    eval_local(patch, lv, lw, deriv_order, out.values, out.d1, out.d2);

    if (patch.rot != 0) {
        if (deriv_order >= 1) {
            for (auto& g : out.d1) {
                const double gv = g[0], gw = g[1];
                g[0] = m11 * gv + m21 * gw;
                g[1] = m12 * gv + m22 * gw;
            }
        }
        if (deriv_order >= 2) {
            for (auto& h : out.d2) {
                const double hvv = h[0], hvw = h[1], hww = h[2];
                h[0] = m11 * m11 * hvv + 2 * m11 * m21 * hvw + m21 * m21 * hww;
                h[1] = m11 * m12 * hvv + (m11 * m22 + m12 * m21) * hvw + m21 * m22 * hww;
                h[2] = m12 * m12 * hvv + 2 * m12 * m22 * hvw + m22 * m22 * hww;
            }
        }
    }
    return out;
}

Vec3 SubdivisionSurface::limit_position(const ParamPoint& p) const {
    const PatchBasis basis = evaluate_basis(p, 0);
    Vec3 x = Vec3::Zero();
    for (int a = 0; a < basis.n_v; ++a) x += basis.values[a] * mesh_->vertices[basis.vertices[a]];
    return x;
}

Vec3 SubdivisionSurface::limit_normal(const ParamPoint& p) const {
    const PatchBasis basis = evaluate_basis(p, 1);
    Vec3 a1 = Vec3::Zero(), a2 = Vec3::Zero();
    for (int a = 0; a < basis.n_v; ++a) {
        a1 += basis.d1[a][0] * mesh_->vertices[basis.vertices[a]];
        a2 += basis.d1[a][1] * mesh_->vertices[basis.vertices[a]];
    }
    const Vec3 n = a1.cross(a2);
    const double len = n.norm();
    if (!(len > 1e-14 * a1.norm() * a2.norm())) {
        throw Error("limit_normal: degenerate tangents (bad control mesh)");
    }
    return n / len;
}

PatchBasis SubdivisionSurface::vertex_limit_basis(int vertex) const {
    const int e = mesh_->vertex_triangles(vertex)[0];
    const auto& tri = mesh_->triangles[e];
    ParamPoint p;
    p.element = e;
    if (tri[0] == vertex) {
        p.v = 0.0;
        p.w = 0.0;
    } else if (tri[1] == vertex) {
        p.v = 1.0;
        p.w = 0.0;
    } else {
        p.v = 0.0;
        p.w = 1.0;
    }
    return evaluate_basis(p, 1);
}

Vec3 SubdivisionSurface::vertex_limit_position(int vertex) const {
    const PatchBasis basis = vertex_limit_basis(vertex);
    Vec3 x = Vec3::Zero();
    for (int a = 0; a < basis.n_v; ++a) x += basis.values[a] * mesh_->vertices[basis.vertices[a]];
    return x;
}

Vec3 SubdivisionSurface::vertex_limit_normal(int vertex) const {
    const PatchBasis basis = vertex_limit_basis(vertex);
    Vec3 a1 = Vec3::Zero(), a2 = Vec3::Zero();
    for (int a = 0; a < basis.n_v; ++a) {
        a1 += basis.d1[a][0] * mesh_->vertices[basis.vertices[a]];
        a2 += basis.d1[a][1] * mesh_->vertices[basis.vertices[a]];
    }
    const Vec3 n = a1.cross(a2);
    const double len = n.norm();
    if (!(len > 0.0)) throw Error("vertex_limit_normal: degenerate tangents");
    return n / len;
}

double SubdivisionSurface::mean_edge_length() const {
    std::vector<Vec3> lim(mesh_->vertex_count());
    for (int v = 0; v < mesh_->vertex_count(); ++v) lim[v] = vertex_limit_position(v);
    double total = 0.0;
    std::size_t count = 0;
    for (int v = 0; v < mesh_->vertex_count(); ++v) {
        for (int r : mesh_->one_ring(v)) {
            if (r > v) {
                total += (lim[v] - lim[r]).norm();
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace shellac
