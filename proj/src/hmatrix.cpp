#include "shellac/hmatrix.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

namespace shellac {

// ---------------------------------------------------------------------------
// cluster tree
// ---------------------------------------------------------------------------

int ClusterTree::depth() const {
    std::function<int(int)> rec = [&](int node) {
        const Node& nd = nodes[node];
        if (nd.child0 < 0) return 1;
        return 1 + std::max(rec(nd.child0), rec(nd.child1));
    };
    return rec(0);
}

int ClusterTree::max_leaf_size() const {
    int best = 0;
    for (const auto& nd : nodes) {
        if (nd.child0 < 0) best = std::max(best, nd.end - nd.begin);
    }
    return best;
}

ClusterTree build_cluster_tree(const std::vector<Vec3>& points,
                               const std::vector<Eigen::AlignedBox3d>& support_boxes, int n_min) {
    const int n = static_cast<int>(points.size());
    if (n == 0) throw Error("build_cluster_tree: no points");
    if (support_boxes.size() != points.size()) {
        throw Error("build_cluster_tree: box/point count mismatch");
    }
    ClusterTree tree;
    tree.n_min = n_min;
    tree.perm.resize(n);
    std::iota(tree.perm.begin(), tree.perm.end(), 0);

    bool warned_degenerate = false;
    std::function<int(int, int)> build = [&](int begin, int end) {
        ClusterTree::Node node;
        node.begin = begin;
        node.end = end;
        for (int i = begin; i < end; ++i) node.box.extend(support_boxes[tree.perm[i]]);
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(node);
        if (end - begin <= n_min) return id;

        // longest axis of the point cloud, median split by point coordinate
        Eigen::AlignedBox3d pbox;
        for (int i = begin; i < end; ++i) pbox.extend(points[tree.perm[i]]);
        int axis = 0;
        pbox.sizes().maxCoeff(&axis);
        const int mid = begin + (end - begin) / 2;
        std::nth_element(tree.perm.begin() + begin, tree.perm.begin() + mid, tree.perm.begin() + end,
                         [&](int a, int b) { return points[a][axis] < points[b][axis]; });
        if (points[tree.perm[begin]][axis] == points[tree.perm[end - 1]][axis]) {
            // duplicate points beyond leaf capacity: accept a fat leaf
            if (!warned_degenerate) {
                std::cerr << "build_cluster_tree: warning: degenerate point cluster of size "
                          << (end - begin) << " kept as a single leaf\n";
                warned_degenerate = true;
            }
            return id;
        }
        const int c0 = build(begin, mid);
        const int c1 = build(mid, end);
        tree.nodes[id].child0 = c0;
        tree.nodes[id].child1 = c1;
        return id;
    };
    build(0, n);

    tree.inv_perm.resize(n);
    for (int i = 0; i < n; ++i) tree.inv_perm[tree.perm[i]] = i;
    return tree;
}

// ---------------------------------------------------------------------------
// ACA
// ---------------------------------------------------------------------------

AcaResult aca_compress(int m, int n, const std::function<void(int, Complex*)>& row_fn,
                       const std::function<void(int, Complex*)>& col_fn, double eps, int max_rank) {
    AcaResult res;
    const int rank_cap = std::min({max_rank, m, n});
    res.U.resize(m, rank_cap);
    res.V.resize(n, rank_cap);

    Eigen::VectorXcd row(n), col(m);
    std::vector<char> row_used(m, 0);
    double frob2 = 0.0;
    double scale = 0.0;  // largest raw entry seen, for the zero-residual test
    int next_row = 0;

    while (res.rank < rank_cap) {
        row_fn(next_row, row.data());
        scale = std::max(scale, row.cwiseAbs().maxCoeff());
        for (int l = 0; l < res.rank; ++l) row -= res.U(next_row, l) * res.V.col(l);
        row_used[next_row] = 1;

        int jpiv = 0;
        double rmax = row.cwiseAbs().maxCoeff(&jpiv);
        const double zero_floor = std::max(1e-300, 1e-14 * scale);
        if (rmax <= zero_floor) {
            bool found = false;
            for (int i = 0; i < m && !found; ++i) {
                if (row_used[i]) continue;
                row_fn(i, row.data());
                scale = std::max(scale, row.cwiseAbs().maxCoeff());
                for (int l = 0; l < res.rank; ++l) row -= res.U(i, l) * res.V.col(l);
                row_used[i] = 1;
                if (row.cwiseAbs().maxCoeff(&jpiv) > std::max(1e-300, 1e-14 * scale)) found = true;
            }
            if (!found) break;  // residual numerically zero
        }

        const Complex pivot = row(jpiv);
        col_fn(jpiv, col.data());
        for (int l = 0; l < res.rank; ++l) col -= res.V(jpiv, l) * res.U.col(l);

        res.V.col(res.rank) = row / pivot;
        res.U.col(res.rank) = col;

        const double unorm = res.U.col(res.rank).norm();
        const double vnorm = res.V.col(res.rank).norm();
        double cross = 0.0;
        for (int l = 0; l < res.rank; ++l) {
            cross += 2.0 * std::abs(res.U.col(l).dot(res.U.col(res.rank)) *
                                    res.V.col(res.rank).dot(res.V.col(l)));
        }
        frob2 += unorm * unorm * vnorm * vnorm + cross;
        ++res.rank;

        if (unorm * vnorm <= eps * std::sqrt(std::max(frob2, 1e-300))) break;

        next_row = -1;
        double best = -1.0;
        for (int i = 0; i < m; ++i) {
            if (row_used[i]) continue;
            const double a = std::abs(col(i));
            if (a > best) {
                best = a;
                next_row = i;
            }
        }
        if (next_row < 0) break;
    }

    if (res.rank == rank_cap && rank_cap < std::min(m, n)) res.ok = false;  // cap hit: fall back
    res.U.conservativeResize(m, res.rank);
    res.V.conservativeResize(n, res.rank);
    return res;
}

// ---------------------------------------------------------------------------
// HMatrix build
// ---------------------------------------------------------------------------

namespace {

bool admissible(const Eigen::AlignedBox3d& a, const Eigen::AlignedBox3d& b, double eta) {
    const double diam = std::min(a.diagonal().norm(), b.diagonal().norm());
    const double dist = a.exteriorDistance(b);
    return diam <= eta * dist;
}

}  // namespace

HMatrix build_hmatrix(const ClusterTree& tree, const EntryOracle& oracle, HMatrixOptions opts) {
    HMatrix h;
    h.tree = &tree;
    h.opts = opts;

    std::vector<int> lowrank_blocks, dense_blocks;
    std::function<int(int, int)> structure = [&](int rn, int cn) {
        HMatrix::Block blk;
        blk.rnode = rn;
        blk.cnode = cn;
        const auto& r = tree.nodes[rn];
        const auto& c = tree.nodes[cn];
        const int id = static_cast<int>(h.blocks.size());
        h.blocks.push_back(blk);
        if (rn != cn && admissible(r.box, c.box, opts.eta)) {
            h.blocks[id].kind = HMatrix::Block::LowRank;
            lowrank_blocks.push_back(id);
        } else if (r.child0 >= 0 && c.child0 >= 0) {
            h.blocks[id].kind = HMatrix::Block::Branch;
            const int b00 = structure(r.child0, c.child0);
            const int b01 = structure(r.child0, c.child1);
            const int b10 = structure(r.child1, c.child0);
            const int b11 = structure(r.child1, c.child1);
            h.blocks[id].child = {b00, b01, b10, b11};
        } else {
            h.blocks[id].kind = HMatrix::Block::Dense;
            dense_blocks.push_back(id);
        }
        return id;
    };
    structure(0, 0);

    std::exception_ptr failure;
    std::atomic<bool> failed{false};

    // admissible blocks by ACA
#pragma omp parallel for schedule(dynamic)
    for (std::size_t bi = 0; bi < lowrank_blocks.size(); ++bi) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
        HMatrix::Block& blk = h.blocks[lowrank_blocks[bi]];
        const auto& r = tree.nodes[blk.rnode];
        const auto& c = tree.nodes[blk.cnode];
        const int m = r.end - r.begin, n = c.end - c.begin;
        std::vector<int> rows(m), cols(n);
        for (int i = 0; i < m; ++i) rows[i] = tree.perm[r.begin + i];
        for (int j = 0; j < n; ++j) cols[j] = tree.perm[c.begin + j];
        auto row_fn = [&](int i, Complex* out) { oracle.row_fn(rows[i], cols, out); };
        auto col_fn = [&](int j, Complex* out) { oracle.col_fn(cols[j], rows, out); };
        AcaResult aca = aca_compress(m, n, row_fn, col_fn, opts.eps, opts.max_rank);
        if (!aca.ok) {
            blk.kind = HMatrix::Block::Dense;
            blk.D.resize(m, n);
            Eigen::VectorXcd buf(n);
            for (int i = 0; i < m; ++i) {
                oracle.row_fn(rows[i], cols, buf.data());
                blk.D.row(i) = buf.transpose();
            }
        } else {
            blk.U = std::move(aca.U);
            blk.V = std::move(aca.V);
        }
        } catch (...) {
#pragma omp critical
            {
                if (!failure) failure = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
            }
        }
    }

    // inadmissible blocks grouped per row cluster: each collocation row is
    // assembled once over the union of its near columns (this keeps the
    // singular-row machinery consistent with the dense path)
    std::map<int, std::vector<int>> by_rnode;
    for (int id : dense_blocks) by_rnode[h.blocks[id].rnode].push_back(id);
    std::vector<std::pair<int, std::vector<int>>> groups(by_rnode.begin(), by_rnode.end());

#pragma omp parallel for schedule(dynamic)
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
        const int rn = groups[gi].first;
        const auto& ids = groups[gi].second;
        const auto& r = tree.nodes[rn];
        const int m = r.end - r.begin;
        std::vector<int> all_cols;
        std::vector<std::pair<int, int>> spans;
        for (int id : ids) {
            const auto& c = tree.nodes[h.blocks[id].cnode];
            spans.push_back({static_cast<int>(all_cols.size()), c.end - c.begin});
            for (int j = c.begin; j < c.end; ++j) all_cols.push_back(tree.perm[j]);
            h.blocks[id].D.resize(m, c.end - c.begin);
        }
        Eigen::VectorXcd buf(all_cols.size());
        for (int i = 0; i < m; ++i) {
            oracle.near_row_fn(tree.perm[r.begin + i], all_cols, buf.data());
            for (std::size_t bi = 0; bi < ids.size(); ++bi) {
                h.blocks[ids[bi]].D.row(i) = buf.segment(spans[bi].first, spans[bi].second).transpose();
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
    return h;
}

// ---------------------------------------------------------------------------
// HMatrix apply / stats
// ---------------------------------------------------------------------------

Eigen::VectorXcd HMatrix::matvec(const Eigen::VectorXcd& x) const {
    const int n = size();
    if (x.size() != n) throw Error("HMatrix::matvec: size mismatch");
    Eigen::VectorXcd xt(n), yt = Eigen::VectorXcd::Zero(n);
    for (int i = 0; i < n; ++i) xt(i) = x(tree->perm[i]);

    std::function<void(int)> rec = [&](int bid) {
        const Block& blk = blocks[bid];
        const auto& r = tree->nodes[blk.rnode];
        const auto& c = tree->nodes[blk.cnode];
        switch (blk.kind) {
            case Block::Dense:
                yt.segment(r.begin, r.end - r.begin).noalias() +=
                    blk.D * xt.segment(c.begin, c.end - c.begin);
                break;
            case Block::LowRank:
                if (blk.U.cols() > 0) {
                    yt.segment(r.begin, r.end - r.begin).noalias() +=
                        blk.U * (blk.V.transpose() * xt.segment(c.begin, c.end - c.begin));
                }
                break;
            case Block::Branch:
                for (int ch : blk.child) rec(ch);
                break;
        }
    };
    rec(0);

    Eigen::VectorXcd y(n);
    for (int i = 0; i < n; ++i) y(tree->perm[i]) = yt(i);
    return y;
}

Eigen::MatrixXcd HMatrix::to_dense() const {
    const int n = size();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
    std::function<void(int)> rec = [&](int bid) {
        const Block& blk = blocks[bid];
        const auto& r = tree->nodes[blk.rnode];
        const auto& c = tree->nodes[blk.cnode];
        if (blk.kind == Block::Branch) {
            for (int ch : blk.child) rec(ch);
            return;
        }
        Eigen::MatrixXcd d;
        if (blk.kind == Block::Dense) {
            d = blk.D;
        } else {
            d = blk.U * blk.V.transpose();
        }
        for (int i = r.begin; i < r.end; ++i) {
            for (int j = c.begin; j < c.end; ++j) {
                out(tree->perm[i], tree->perm[j]) = d(i - r.begin, j - c.begin);
            }
        }
    };
    rec(0);
    return out;
}

std::size_t HMatrix::stored_scalars() const {
    std::size_t total = 0;
    for (const auto& blk : blocks) {
        total += static_cast<std::size_t>(blk.D.size()) + blk.U.size() + blk.V.size();
    }
    return total;
}

double HMatrix::compression_ratio() const {
    const double dense = static_cast<double>(size()) * size();
    return static_cast<double>(stored_scalars()) / dense;
}

int HMatrix::admissible_blocks() const {
    int count = 0;
    for (const auto& blk : blocks) count += blk.kind == Block::LowRank;
    return count;
}

int HMatrix::dense_blocks() const {
    int count = 0;
    for (const auto& blk : blocks) count += blk.kind == Block::Dense;
    return count;
}

void HMatrix::dump_structure_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("dump_structure_csv: cannot write " + path);
    out << "rbegin,rend,cbegin,cend,rank,kind\n";
    for (const auto& blk : blocks) {
        if (blk.kind == Block::Branch) continue;
        const auto& r = tree->nodes[blk.rnode];
        const auto& c = tree->nodes[blk.cnode];
        const int rank = blk.kind == Block::LowRank ? static_cast<int>(blk.U.cols()) : -1;
        out << r.begin << "," << r.end << "," << c.begin << "," << c.end << "," << rank << ","
            << (blk.kind == Block::LowRank ? "lowrank" : "dense") << "\n";
    }
}

// ---------------------------------------------------------------------------
// bem oracles
// ---------------------------------------------------------------------------

namespace {

EntryOracle bem_oracle(const BemAssembler& bem, const WaveContext& ctx, bool want_h) {
    EntryOracle oracle;
    auto row = [&bem, ctx, want_h](int r, const std::vector<int>& cols, Complex* out) {
        thread_local std::vector<Complex> hbuf, gbuf;
        hbuf.resize(cols.size());
        gbuf.resize(cols.size());
        bem.assemble_row(ctx, r, &cols, hbuf.data(), gbuf.data());
        const auto& src = want_h ? hbuf : gbuf;
        std::copy(src.begin(), src.end(), out);
    };
    oracle.row_fn = row;
    oracle.near_row_fn = row;
    oracle.col_fn = [&bem, ctx, want_h](int c, const std::vector<int>& rows, Complex* out) {
        thread_local std::vector<Complex> hbuf, gbuf;
        hbuf.resize(rows.size());
        gbuf.resize(rows.size());
        bem.assemble_column(ctx, c, rows, hbuf.data(), gbuf.data());
        const auto& src = want_h ? hbuf : gbuf;
        std::copy(src.begin(), src.end(), out);
    };
    return oracle;
}

}  // namespace

EntryOracle bem_h_oracle(const BemAssembler& bem, const WaveContext& ctx) {
    return bem_oracle(bem, ctx, true);
}

EntryOracle bem_g_oracle(const BemAssembler& bem, const WaveContext& ctx) {
    return bem_oracle(bem, ctx, false);
}

std::vector<Eigen::AlignedBox3d> basis_support_boxes(const BemAssembler& bem) {
    std::vector<Eigen::AlignedBox3d> boxes(bem.size());
    for (int i = 0; i < bem.size(); ++i) boxes[i] = bem.support_box(i);
    return boxes;
}

// ---------------------------------------------------------------------------
// hierarchical LU preconditioner (HODLR form: off-diagonal blocks flattened
// to low rank, exact low-rank Schur propagation)
// ---------------------------------------------------------------------------

namespace {

void truncate_lr(Eigen::MatrixXcd& U, Eigen::MatrixXcd& V, double eps, int max_rank) {
    const int r = static_cast<int>(U.cols());
    if (r == 0) return;
    const Eigen::HouseholderQR<Eigen::MatrixXcd> qru(U);
    const Eigen::HouseholderQR<Eigen::MatrixXcd> qrv(V);
    const int ru = std::min<int>(static_cast<int>(U.rows()), r);
    const int rv = std::min<int>(static_cast<int>(V.rows()), r);
    const Eigen::MatrixXcd Ru =
        Eigen::MatrixXcd(qru.matrixQR().topRows(ru).triangularView<Eigen::Upper>());
    const Eigen::MatrixXcd Rv =
        Eigen::MatrixXcd(qrv.matrixQR().topRows(rv).triangularView<Eigen::Upper>());
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Ru * Rv.transpose(),
                                           Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    int keep = 0;
    const double cutoff = eps * (s.size() ? s(0) : 0.0);
    while (keep < s.size() && s(keep) > cutoff && keep < max_rank) ++keep;

    Eigen::MatrixXcd Qu = Eigen::MatrixXcd::Identity(U.rows(), ru);
    Qu.applyOnTheLeft(qru.householderQ());
    Eigen::MatrixXcd Qv = Eigen::MatrixXcd::Identity(V.rows(), rv);
    Qv.applyOnTheLeft(qrv.householderQ());

    Eigen::MatrixXcd Unew = Qu * svd.matrixU().leftCols(keep);
    for (int k = 0; k < keep; ++k) Unew.col(k) *= s(k);
    // block = U V^T requires the (unconjugated) transpose of matrixV^H
    Eigen::MatrixXcd Vnew = Qv * svd.matrixV().conjugate().leftCols(keep);
    U = std::move(Unew);
    V = std::move(Vnew);
}

struct LrPair {
    Eigen::MatrixXcd U, V;
    int rank() const { return static_cast<int>(U.cols()); }
};

LrPair concat_lr(const LrPair& a, const LrPair& b) {
    if (a.rank() == 0) return b;
    if (b.rank() == 0) return a;
    LrPair out;
    out.U.resize(a.U.rows(), a.rank() + b.rank());
    out.V.resize(a.V.rows(), a.rank() + b.rank());
    out.U << a.U, b.U;
    out.V << a.V, b.V;
    return out;
}

}  // namespace

struct HluPreconditioner::Impl {
    struct Node {
        int begin = 0, end = 0;
        bool leaf = false;
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu;
        std::unique_ptr<Node> first, second;
        Eigen::MatrixXcd Uh12, V12;  // Uh12 = A11^{-1} U12
        Eigen::MatrixXcd U21, V21;
    };

    const ClusterTree* tree = nullptr;
    std::unique_ptr<Node> root;
    double eps = 1e-2;
    int max_rank = 64;
    bool regularized = false;

    // low-rank agglomeration of an H block (tree index space)
    LrPair block_to_lr(const HMatrix& h, int bid) {
        const auto& blk = h.blocks[bid];
        const auto& r = h.tree->nodes[blk.rnode];
        const auto& c = h.tree->nodes[blk.cnode];
        LrPair out;
        switch (blk.kind) {
            case HMatrix::Block::Dense:
                out.U = blk.D;
                out.V = Eigen::MatrixXcd::Identity(c.end - c.begin, c.end - c.begin);
                break;
            case HMatrix::Block::LowRank:
                out.U = blk.U;
                out.V = blk.V;
                break;
            case HMatrix::Block::Branch: {
                const int m = r.end - r.begin, n = c.end - c.begin;
                int total = 0;
                LrPair parts[4];
                for (int k = 0; k < 4; ++k) {
                    parts[k] = block_to_lr(h, blk.child[k]);
                    total += parts[k].rank();
                }
                out.U = Eigen::MatrixXcd::Zero(m, total);
                out.V = Eigen::MatrixXcd::Zero(n, total);
                int off = 0;
                for (int k = 0; k < 4; ++k) {
                    const auto& cr = h.tree->nodes[h.blocks[blk.child[k]].rnode];
                    const auto& cc = h.tree->nodes[h.blocks[blk.child[k]].cnode];
                    out.U.block(cr.begin - r.begin, off, cr.end - cr.begin, parts[k].rank()) =
                        parts[k].U;
                    out.V.block(cc.begin - c.begin, off, cc.end - cc.begin, parts[k].rank()) =
                        parts[k].V;
                    off += parts[k].rank();
                }
                break;
            }
        }
        truncate_lr(out.U, out.V, eps, max_rank);
        return out;
    }

    Eigen::MatrixXcd block_to_dense(const HMatrix& h, int bid) {
        const auto& blk = h.blocks[bid];
        const auto& r = h.tree->nodes[blk.rnode];
        const auto& c = h.tree->nodes[blk.cnode];
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(r.end - r.begin, c.end - c.begin);
        switch (blk.kind) {
            case HMatrix::Block::Dense:
                out = blk.D;
                break;
            case HMatrix::Block::LowRank:
                if (blk.U.cols()) out = blk.U * blk.V.transpose();
                break;
            case HMatrix::Block::Branch:
                for (int k = 0; k < 4; ++k) {
                    const auto& cr = h.tree->nodes[h.blocks[blk.child[k]].rnode];
                    const auto& cc = h.tree->nodes[h.blocks[blk.child[k]].cnode];
                    out.block(cr.begin - r.begin, cc.begin - c.begin, cr.end - cr.begin,
                              cc.end - cc.begin) = block_to_dense(h, blk.child[k]);
                }
                break;
        }
        return out;
    }

    // forward solve helper for panels against the already-factored subtree
    void solve_panel(const Node& n, Eigen::MatrixXcd& panel) const {
        if (n.leaf) {
            panel = n.lu.solve(panel);
            return;
        }
        const int m1 = n.first->end - n.first->begin;
        const int m2 = n.second->end - n.second->begin;
        Eigen::MatrixXcd top = panel.topRows(m1);
        Eigen::MatrixXcd bot = panel.bottomRows(m2);
        solve_panel(*n.first, top);
        if (n.U21.cols()) bot.noalias() -= n.U21 * (n.V21.transpose() * top);
        solve_panel(*n.second, bot);
        if (n.Uh12.cols()) top.noalias() -= n.Uh12 * (n.V12.transpose() * bot);
        panel.topRows(m1) = top;
        panel.bottomRows(m2) = bot;
    }

    // factor the diagonal H block `bid` (cluster node `cn`) with a pending
    // low-rank correction Uc Vc^T added on top
    std::unique_ptr<Node> factor(const HMatrix& h, int cn, int bid, LrPair corr) {
        const auto& cnode = h.tree->nodes[cn];
        auto node = std::make_unique<Node>();
        node->begin = cnode.begin;
        node->end = cnode.end;
        const auto& blk = h.blocks[bid];

        if (blk.kind != HMatrix::Block::Branch) {
            node->leaf = true;
            Eigen::MatrixXcd D = block_to_dense(h, bid);
            if (corr.rank()) D.noalias() += corr.U * corr.V.transpose();
            node->lu.compute(D);
            // pivot check, shift if effectively singular
            const auto& lum = node->lu.matrixLU();
            double dmax = 0.0, dmin = 1e300;
            for (int i = 0; i < lum.rows(); ++i) {
                const double d = std::abs(lum(i, i));
                dmax = std::max(dmax, d);
                dmin = std::min(dmin, d);
            }
            if (!(dmin > 1e-12 * dmax)) {
                std::cerr << "hlu: warning: near-singular diagonal block, shifting\n";
                regularized = true;
                D.diagonal().array() += Complex(1e-8 * std::max(dmax, 1e-300), 0.0);
                node->lu.compute(D);
            }
            return node;
        }

        const int mid = h.tree->nodes[h.blocks[blk.child[0]].rnode].end;
        const int m1 = mid - cnode.begin, m2 = cnode.end - mid;

        // split the pending correction
        LrPair corr11, corr22, corr12, corr21;
        if (corr.rank()) {
            corr11 = {corr.U.topRows(m1), corr.V.topRows(m1)};
            corr22 = {corr.U.bottomRows(m2), corr.V.bottomRows(m2)};
            corr12 = {corr.U.topRows(m1), corr.V.bottomRows(m2)};
            corr21 = {corr.U.bottomRows(m2), corr.V.topRows(m1)};
        }

        LrPair a12 = concat_lr(block_to_lr(h, blk.child[1]), corr12);
        truncate_lr(a12.U, a12.V, eps, max_rank);
        LrPair a21 = concat_lr(block_to_lr(h, blk.child[2]), corr21);
        truncate_lr(a21.U, a21.V, eps, max_rank);

        node->first = factor(h, h.blocks[blk.child[0]].rnode, blk.child[0], corr11);

        node->U21 = a21.U;
        node->V21 = a21.V;
        node->V12 = a12.V;
        node->Uh12 = a12.U;
        if (node->Uh12.cols()) solve_panel(*node->first, node->Uh12);

        // Schur correction: -U21 (V21^T Uh12) V12^T
        LrPair schur;
        if (node->U21.cols() && node->Uh12.cols()) {
            const Eigen::MatrixXcd W = node->V21.transpose() * node->Uh12;
            schur.U = -node->U21 * W;
            schur.V = node->V12;
        }
        LrPair corr2 = concat_lr(corr22, schur);
        truncate_lr(corr2.U, corr2.V, eps, max_rank);
        node->second = factor(h, h.blocks[blk.child[3]].rnode, blk.child[3], corr2);
        return node;
    }
};

HluPreconditioner::HluPreconditioner(const HMatrix& h, double lu_eps, int max_rank)
    : impl_(std::make_unique<Impl>()) {
    impl_->tree = h.tree;
    impl_->eps = lu_eps;
    impl_->max_rank = max_rank;
    impl_->root = impl_->factor(h, 0, 0, {});
    regularized_ = impl_->regularized;
}

HluPreconditioner::~HluPreconditioner() = default;

Eigen::VectorXcd HluPreconditioner::solve(const Eigen::VectorXcd& b) const {
    const auto& tree = *impl_->tree;
    const int n = static_cast<int>(tree.perm.size());
    Eigen::MatrixXcd panel(n, 1);
    for (int i = 0; i < n; ++i) panel(i, 0) = b(tree.perm[i]);
    impl_->solve_panel(*impl_->root, panel);
    Eigen::VectorXcd x(n);
    for (int i = 0; i < n; ++i) x(tree.perm[i]) = panel(i, 0);
    return x;
}

}  // namespace shellac
