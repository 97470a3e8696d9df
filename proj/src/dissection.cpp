#include "fastfem/dissection.hpp"

#include <algorithm>
#include <numeric>

namespace fastfem {

namespace {

class Dissector {
 public:
  Dissector(const Graph& g, Index leaf_threshold)
      : g_(g), leaf_threshold_(std::max<Index>(1, leaf_threshold)), mark_(g.num_vertices(), -1),
        level_(g.num_vertices(), -1) {
    plan_.leaf_threshold = leaf_threshold_;
    plan_.perm.resize(g.num_vertices());
  }

  DissectionPlan run() {
    std::vector<Index> all(g_.num_vertices());
    std::iota(all.begin(), all.end(), 0);
    if (!all.empty()) plan_.root = dissect(std::move(all), 0);
    plan_.iperm.resize(plan_.perm.size());
    for (Index i = 0; i < static_cast<Index>(plan_.perm.size()); ++i) plan_.iperm[plan_.perm[i]] = i;
    for (Index b = 0; b < static_cast<Index>(plan_.blocks.size()); ++b) {
      const Index l = plan_.blocks[b].level;
      if (static_cast<Index>(plan_.levels.size()) <= l) plan_.levels.resize(l + 1);
      plan_.levels[l].push_back(b);
    }
    return std::move(plan_);
  }

 private:
  struct Split {
    std::vector<Index> a, b, separator;
  };

  Index dissect(std::vector<Index> vertices, Index offset) {
    std::sort(vertices.begin(), vertices.end());
    const Index count = static_cast<Index>(vertices.size());
    if (count > leaf_threshold_) {
      Split s = bisect(vertices);
      if (!s.a.empty() && !s.b.empty()) {
        const Index na = static_cast<Index>(s.a.size());
        const Index nb = static_cast<Index>(s.b.size());
        const Index child_a = dissect(std::move(s.a), offset);
        const Index child_b = dissect(std::move(s.b), offset + na);
        std::sort(s.separator.begin(), s.separator.end());
        const Index sep_begin = offset + na + nb;
        std::copy(s.separator.begin(), s.separator.end(), plan_.perm.begin() + sep_begin);
        DissectionBlock block;
        block.begin = sep_begin;
        block.end = offset + count;
        block.subtree_begin = offset;
        block.kind = BlockKind::Separator;
        block.level = 1 + std::max(plan_.blocks[child_a].level, plan_.blocks[child_b].level);
        block.children = {child_a, child_b};
        const Index id = static_cast<Index>(plan_.blocks.size());
        plan_.blocks.push_back(std::move(block));
        plan_.blocks[child_a].parent = id;
        plan_.blocks[child_b].parent = id;
        return id;
      }
    }
    std::copy(vertices.begin(), vertices.end(), plan_.perm.begin() + offset);
    DissectionBlock leaf;
    leaf.begin = leaf.subtree_begin = offset;
    leaf.end = offset + count;
    plan_.blocks.push_back(std::move(leaf));
    return static_cast<Index>(plan_.blocks.size()) - 1;
  }

  /// BFS over the current piece from `root`, filling level_ and returning
  /// vertices in visit order along with per-level offsets.
  void bfs(Index root, std::vector<Index>& order, std::vector<Index>& level_start) {
    order.clear();
    level_start.clear();
    order.push_back(root);
    level_[root] = 0;
    level_start.push_back(0);
    std::size_t head = 0;
    Index current = 0;
    while (head < order.size()) {
      const Index v = order[head];
      if (level_[v] != current) {
        current = level_[v];
        level_start.push_back(static_cast<Index>(head));
      }
      ++head;
      for (const Index* w = g_.begin(v); w != g_.end(v); ++w)
        if (mark_[*w] == stamp_ && level_[*w] < 0) {
          level_[*w] = level_[v] + 1;
          order.push_back(*w);
        }
    }
    level_start.push_back(static_cast<Index>(order.size()));
  }

  void reset_levels(const std::vector<Index>& vertices) {
    for (Index v : vertices) level_[v] = -1;
  }

  Index piece_degree(Index v) const {
    Index d = 0;
    for (const Index* w = g_.begin(v); w != g_.end(v); ++w) d += mark_[*w] == stamp_;
    return d;
  }

  Split bisect(const std::vector<Index>& vertices) {
    ++stamp_;
    for (Index v : vertices) mark_[v] = stamp_;
    std::vector<Index> order, level_start;

    bfs(vertices.front(), order, level_start);
    if (order.size() != vertices.size()) {
      reset_levels(order);
      return split_components(vertices);
    }

    // George-Liu pseudo-peripheral vertex search.
    Index root = vertices.front();
    Index eccentricity = static_cast<Index>(level_start.size()) - 2;
    for (;;) {
      const Index last_begin = level_start[level_start.size() - 2];
      Index candidate = -1;
      Index best_degree = 0;
      for (Index k = last_begin; k < static_cast<Index>(order.size()); ++k) {
        const Index v = order[k];
        const Index d = piece_degree(v);
        if (candidate < 0 || d < best_degree || (d == best_degree && v < candidate)) {
          candidate = v;
          best_degree = d;
        }
      }
      reset_levels(vertices);
      bfs(candidate, order, level_start);
      const Index ecc = static_cast<Index>(level_start.size()) - 2;
      if (ecc <= eccentricity) {
        if (candidate != root) {
          reset_levels(vertices);
          bfs(root, order, level_start);
        }
        break;
      }
      root = candidate;
      eccentricity = ecc;
    }

    const Index num_levels = static_cast<Index>(level_start.size()) - 1;
    Split s;
    if (num_levels < 2) {
      reset_levels(vertices);
      return s;
    }
    // Split after the level whose cumulative count is closest to half.
    const double half = 0.5 * static_cast<double>(vertices.size());
    Index split_level = 0;
    double best = -1.0;
    for (Index l = 0; l + 1 < num_levels; ++l) {
      const double gap = std::abs(static_cast<double>(level_start[l + 1]) - half);
      if (best < 0.0 || gap < best) {
        best = gap;
        split_level = l;
      }
    }

    // Cut edges between split_level and split_level + 1.
    std::vector<std::pair<Index, Index>> cut;
    for (Index k = level_start[split_level]; k < level_start[split_level + 1]; ++k) {
      const Index u = order[k];
      for (const Index* w = g_.begin(u); w != g_.end(u); ++w)
        if (mark_[*w] == stamp_ && level_[*w] == split_level + 1) cut.emplace_back(u, *w);
    }
    // Cover ties go to the larger side so both halves keep vertices.
    const Index size_a = level_start[split_level + 1];
    const bool prefer_b = static_cast<Index>(vertices.size()) - size_a >= size_a;
    const Index cut_level = split_level;
    const std::vector<Index> cover =
        greedy_vertex_cover(cut, [&](Index v) { return (level_[v] > cut_level) == prefer_b; });
    for (Index v : cover) level_[v] = -2;  // tag separator vertices
    for (Index v : vertices) {
      if (level_[v] == -2)
        s.separator.push_back(v);
      else if (level_[v] <= split_level)
        s.a.push_back(v);
      else
        s.b.push_back(v);
    }
    if ((s.a.empty() || s.b.empty()) && num_levels >= 3) {
      // Whole level as separator: the middle level of the structure.
      const Index mid = std::max<Index>(1, std::min<Index>(split_level + 1, num_levels - 2));
      s = Split{};
      for (Index k = 0; k < static_cast<Index>(order.size()); ++k) {
        const Index v = order[k];
        if (k < level_start[mid])
          s.a.push_back(v);
        else if (k < level_start[mid + 1])
          s.separator.push_back(v);
        else
          s.b.push_back(v);
      }
    }
    reset_levels(vertices);
    return s;
  }

  template <typename Prefer>
  static std::vector<Index> greedy_vertex_cover(const std::vector<std::pair<Index, Index>>& cut, Prefer prefer) {
    std::vector<Index> ends;
    for (auto [u, w] : cut) {
      ends.push_back(u);
      ends.push_back(w);
    }
    std::sort(ends.begin(), ends.end());
    ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
    auto local = [&](Index v) { return static_cast<Index>(std::lower_bound(ends.begin(), ends.end(), v) - ends.begin()); };

    const Index m = static_cast<Index>(ends.size());
    std::vector<std::vector<Index>> incident(m);
    for (Index e = 0; e < static_cast<Index>(cut.size()); ++e) {
      incident[local(cut[e].first)].push_back(e);
      incident[local(cut[e].second)].push_back(e);
    }
    std::vector<Index> remaining(m);
    for (Index i = 0; i < m; ++i) remaining[i] = static_cast<Index>(incident[i].size());
    std::vector<char> covered(cut.size(), 0);
    std::vector<Index> cover;
    Index left = static_cast<Index>(cut.size());
    while (left > 0) {
      Index pick = 0;
      bool pick_pref = prefer(ends[0]);
      for (Index i = 1; i < m; ++i) {
        const bool pref = prefer(ends[i]);
        // ends is sorted, so remaining ties keep the lowest vertex
        if (remaining[i] > remaining[pick] || (remaining[i] == remaining[pick] && pref && !pick_pref)) {
          pick = i;
          pick_pref = pref;
        }
      }
      cover.push_back(ends[pick]);
      for (Index e : incident[pick]) {
        if (covered[e]) continue;
        covered[e] = 1;
        --left;
        --remaining[local(cut[e].first)];
        --remaining[local(cut[e].second)];
      }
    }
    return cover;
  }

  Split split_components(const std::vector<Index>& vertices) {
    // Components come out ordered by their smallest vertex. Whole components
    // go to half a until it holds half the piece; half b must not stay empty.
    std::vector<std::vector<Index>> comps;
    std::vector<Index> order, level_start;
    for (Index v : vertices) {
      if (level_[v] >= 0) continue;
      bfs(v, order, level_start);
      comps.push_back(order);
    }
    reset_levels(vertices);
    Split s;
    const std::size_t half = vertices.size() / 2;
    for (const auto& c : comps) {
      auto& target = s.a.size() < half ? s.a : s.b;
      target.insert(target.end(), c.begin(), c.end());
    }
    if (s.b.empty()) {
      const auto& c = comps.back();
      s.a.resize(s.a.size() - c.size());
      s.b.assign(c.begin(), c.end());
    }
    return s;
  }

  const Graph& g_;
  Index leaf_threshold_;
  std::vector<Index> mark_;
  std::vector<Index> level_;
  Index stamp_ = 0;
  DissectionPlan plan_;
};

}  // namespace

DissectionPlan nested_dissection(const Graph& graph, Index leaf_threshold) {
  return Dissector(graph, leaf_threshold).run();
}

DissectionPlan expand_plan(const DissectionPlan& plan, Index block) {
  DissectionPlan out;
  out.leaf_threshold = plan.leaf_threshold * block;
  out.root = plan.root;
  out.levels = plan.levels;
  out.perm.resize(plan.perm.size() * block);
  out.iperm.resize(plan.perm.size() * block);
  for (std::size_t i = 0; i < plan.perm.size(); ++i)
    for (Index c = 0; c < block; ++c) out.perm[i * block + c] = plan.perm[i] * block + c;
  for (std::size_t i = 0; i < out.perm.size(); ++i) out.iperm[out.perm[i]] = static_cast<Index>(i);
  out.blocks = plan.blocks;
  for (auto& b : out.blocks) {
    b.begin *= block;
    b.end *= block;
    b.subtree_begin *= block;
  }
  return out;
}

Graph pattern_graph(const CsrMatrix& a, Index block) {
  if (block < 1 || a.nrows % block != 0) throw InvalidArgument("pattern_graph: rows must divide into blocks");
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(a.col_ind.size() / (block * block) + 1);
  for (Index r = 0; r < a.nrows; ++r)
    for (Index k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
      const Index u = r / block;
      const Index w = a.col_ind[k] / block;
      if (u < w) edges.emplace_back(u, w);
    }
  return Graph::from_edges(a.nrows / block, std::move(edges));
}

DissectionPlan dissect_matrix(const CsrMatrix& a, Index leaf_threshold, Index block) {
  if (a.nrows % block != 0) block = 1;
  const Index node_threshold = std::max<Index>(1, leaf_threshold / block);
  DissectionPlan plan = nested_dissection(pattern_graph(a, block), node_threshold);
  if (block == 1) return plan;
  DissectionPlan out = expand_plan(plan, block);
  out.leaf_threshold = leaf_threshold;
  return out;
}

CsrMatrix permute_symmetric(const CsrMatrix& a, const std::vector<Index>& perm) {
  if (a.nrows != a.ncols || static_cast<Index>(perm.size()) != a.nrows)
    throw InvalidArgument("permute_symmetric: permutation size mismatch");
  std::vector<Index> iperm(perm.size());
  for (Index i = 0; i < a.nrows; ++i) iperm[perm[i]] = i;
  CsrMatrix b;
  b.nrows = b.ncols = a.nrows;
  b.row_ptr.assign(static_cast<std::size_t>(a.nrows) + 1, 0);
  b.col_ind.reserve(a.col_ind.size());
  b.values.reserve(a.values.size());
  std::vector<std::pair<Index, double>> row;
  for (Index i = 0; i < a.nrows; ++i) {
    const Index src = perm[i];
    row.clear();
    for (Index k = a.row_ptr[src]; k < a.row_ptr[src + 1]; ++k) row.emplace_back(iperm[a.col_ind[k]], a.values[k]);
    std::sort(row.begin(), row.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    for (auto [c, v] : row) {
      b.col_ind.push_back(c);
      b.values.push_back(v);
    }
    b.row_ptr[i + 1] = static_cast<Index>(b.col_ind.size());
  }
  return b;
}

Index count_sibling_couplings(const DissectionPlan& plan, const CsrMatrix& permuted) {
  Index violations = 0;
  for (const auto& block : plan.blocks) {
    if (block.children.size() < 2) continue;
    for (std::size_t x = 0; x < block.children.size(); ++x)
      for (std::size_t y = 0; y < block.children.size(); ++y) {
        if (x == y) continue;
        const auto& cx = plan.blocks[block.children[x]];
        const auto& cy = plan.blocks[block.children[y]];
        for (Index r = cx.subtree_begin; r < cx.end; ++r)
          for (Index k = permuted.row_ptr[r]; k < permuted.row_ptr[r + 1]; ++k) {
            const Index c = permuted.col_ind[k];
            if (c >= cy.subtree_begin && c < cy.end) ++violations;
          }
      }
  }
  return violations;
}

}  // namespace fastfem
