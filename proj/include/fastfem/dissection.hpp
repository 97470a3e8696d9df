#pragma once

#include <vector>

#include "fastfem/csr.hpp"
#include "fastfem/graph.hpp"

namespace fastfem {

enum class BlockKind { Diagonal, Separator };

/// One node of the dissection tree. A separator block is the parent of the
/// two halves it separates; leaves are diagonal blocks.
struct DissectionBlock {
  Index begin = 0;           // first position in the permuted order
  Index end = 0;             // one past the last position
  Index subtree_begin = 0;   // first position of the whole subtree
  Index level = 0;           // 0 for leaves, 1 + max(child level) otherwise
  BlockKind kind = BlockKind::Diagonal;
  Index parent = -1;
  std::vector<Index> children;

  Index size() const { return end - begin; }
};

/// Nested dissection ordering with its block tree and level schedule.
/// perm[new] = old and iperm[old] = new.
struct DissectionPlan {
  std::vector<Index> perm;
  std::vector<Index> iperm;
  std::vector<DissectionBlock> blocks;
  /// levels[l] lists the block ids at level l.
  std::vector<std::vector<Index>> levels;
  Index root = -1;
  Index leaf_threshold = 64;

  Index size() const { return static_cast<Index>(perm.size()); }
  Index num_levels() const { return static_cast<Index>(levels.size()); }
};

/// Recursive bisection. Each connected piece is split at the BFS level set
/// of a pseudo-peripheral vertex that best halves it; a greedy vertex cover
/// of the edges crossing that cut (highest cut degree first, lowest vertex
/// index on ties) becomes the separator. Disconnected pieces are split
/// between components with an empty separator. Pieces of at most
/// `leaf_threshold` vertices become leaves ordered by original index.
DissectionPlan nested_dissection(const Graph& graph, Index leaf_threshold = 64);

/// Replicates every vertex into `block` consecutive unknowns (e.g. 3 DOFs per node).
DissectionPlan expand_plan(const DissectionPlan& plan, Index block);

/// Graph over groups of `block` consecutive rows, connected where any
/// off-diagonal entry couples two groups.
Graph pattern_graph(const CsrMatrix& a, Index block = 1);

/// Nested dissection of a matrix pattern, grouped by `block` unknowns.
DissectionPlan dissect_matrix(const CsrMatrix& a, Index leaf_threshold = 64, Index block = 3);

/// B = P A P^T, i.e. B(i, j) = A(perm[i], perm[j]).
CsrMatrix permute_symmetric(const CsrMatrix& a, const std::vector<Index>& perm);

/// Number of entries of the permuted matrix that couple two sibling
/// subtrees directly. Zero for a valid plan.
Index count_sibling_couplings(const DissectionPlan& plan, const CsrMatrix& permuted);

}  // namespace fastfem
