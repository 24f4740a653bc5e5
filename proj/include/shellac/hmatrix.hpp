#pragma once

#include <array>
#include <functional>
#include <memory>

#include "shellac/bem.hpp"

namespace shellac {

// Binary cluster tree over collocation points; node boxes are unions of the
// member basis-support boxes (not just the points), which is what the
// admissibility test must see for non-local bases.
struct ClusterTree {
    struct Node {
        int begin = 0, end = 0;    // range in perm
        int child0 = -1, child1 = -1;
        Eigen::AlignedBox3d box;
    };
    std::vector<int> perm;      // tree position -> original index
    std::vector<int> inv_perm;  // original index -> tree position
    std::vector<Node> nodes;    // node 0 is the root
    int n_min = 32;

    int size() const { return static_cast<int>(perm.size()); }
    int depth() const;
    int max_leaf_size() const;
};

ClusterTree build_cluster_tree(const std::vector<Vec3>& points,
                               const std::vector<Eigen::AlignedBox3d>& support_boxes,
                               int n_min = 32);

struct HMatrixOptions {
    double eps = 1e-6;   // ACA relative accuracy
    double eta = 2.0;    // admissibility: min(diam) <= eta * dist
    int max_rank = 256;
};

// Entry generator for one operator, indexed in ORIGINAL numbering.
struct EntryOracle {
    std::function<void(int row, const std::vector<int>& cols, Complex* out)> row_fn;
    std::function<void(int col, const std::vector<int>& rows, Complex* out)> col_fn;
    // bulk near-field row: original row index, original column ids
    std::function<void(int row, const std::vector<int>& cols, Complex* out)> near_row_fn;
};

struct AcaResult {
    Eigen::MatrixXcd U, V;  // block ~ U V^T
    int rank = 0;
    bool ok = true;  // false: pivoting failed on a non-negligible block
};
AcaResult aca_compress(int m, int n, const std::function<void(int, Complex*)>& row_fn,
                       const std::function<void(int, Complex*)>& col_fn, double eps, int max_rank);

class HMatrix {
public:
    struct Block {
        int rnode = -1, cnode = -1;
        enum Kind { Dense, LowRank, Branch } kind = Dense;
        Eigen::MatrixXcd D;     // dense storage
        Eigen::MatrixXcd U, V;  // low-rank factors, block ~ U V^T
        std::array<int, 4> child{-1, -1, -1, -1};
    };

    const ClusterTree* tree = nullptr;
    HMatrixOptions opts;
    std::vector<Block> blocks;  // block 0 is the root

    int size() const { return tree->size(); }
    Eigen::VectorXcd matvec(const Eigen::VectorXcd& x) const;  // original numbering
    Eigen::MatrixXcd to_dense() const;                         // original numbering, small sizes

    std::size_t stored_scalars() const;
    double compression_ratio() const;  // stored / dense
    int admissible_blocks() const;
    int dense_blocks() const;

    // block extents (original-ordering ranges in tree layout), rank and kind
    // flag per block row: rbegin,rend,cbegin,cend,rank,kind
    void dump_structure_csv(const std::string& path) const;
};

HMatrix build_hmatrix(const ClusterTree& tree, const EntryOracle& oracle, HMatrixOptions opts);

// Approximate hierarchical block LU of an HMatrix, usable only as a
// preconditioner. Singular diagonal pivots are shifted with a warning.
class HluPreconditioner {
public:
    HluPreconditioner(const HMatrix& h, double lu_eps = 1e-2, int max_rank = 64);
    ~HluPreconditioner();
    Eigen::VectorXcd solve(const Eigen::VectorXcd& b) const;
    bool regularized() const { return regularized_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    bool regularized_ = false;
};

// H and G oracles bound to a BemAssembler (shared assembly machinery with the
// dense path, so compressed and dense operators agree entry-wise in the near
// field).
EntryOracle bem_h_oracle(const BemAssembler& bem, const WaveContext& ctx);
EntryOracle bem_g_oracle(const BemAssembler& bem, const WaveContext& ctx);

std::vector<Eigen::AlignedBox3d> basis_support_boxes(const BemAssembler& bem);

}  // namespace shellac
