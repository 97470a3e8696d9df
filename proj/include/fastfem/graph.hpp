#pragma once

#include <vector>

#include "fastfem/types.hpp"

namespace fastfem {

/// Undirected graph in adjacency-list (CSR) form. Each edge appears in both
/// endpoint lists; lists are sorted ascending and free of self loops.
struct Graph {
  std::vector<Index> offsets{0};
  std::vector<Index> adjacency;

  Index num_vertices() const { return static_cast<Index>(offsets.size()) - 1; }
  Index degree(Index v) const { return offsets[v + 1] - offsets[v]; }
  const Index* begin(Index v) const { return adjacency.data() + offsets[v]; }
  const Index* end(Index v) const { return adjacency.data() + offsets[v + 1]; }
  bool has_edge(Index u, Index v) const;

  /// Builds a graph from an arbitrary (possibly duplicated, one-sided) edge list.
  static Graph from_edges(Index num_vertices, std::vector<std::pair<Index, Index>> edges);
};

}  // namespace fastfem
