#include "fastfem/triangular.hpp"

#include <algorithm>
#include <atomic>

namespace fastfem {

LevelScheduledSolver::LevelScheduledSolver(std::shared_ptr<const LdltFactors> factors, Index tile)
    : factors_(std::move(factors)), tile_(std::max<Index>(1, tile)) {
  const LdltFactors& f = *factors_;
  const CsrMatrix& lc = f.lower_by_column;
  const DissectionPlan& plan = f.plan;
  if (plan.size() != f.n) throw InvalidArgument("triangular solver: plan does not match the factor size");

  past_tile_.assign(f.n, 0);
  past_block_.assign(f.n, 0);
  std::vector<Index> block_of_id(plan.blocks.size(), -1);
  for (Index id = 0; id < static_cast<Index>(plan.blocks.size()); ++id) {
    const DissectionBlock& src = plan.blocks[id];
    if (src.size() == 0) continue;
    Block b;
    b.begin = src.begin;
    b.end = src.end;
    for (Index t0 = b.begin; t0 < b.end; t0 += tile_) {
      Tile t;
      t.begin = t0;
      t.end = std::min(t0 + tile_, b.end);
      const Index w = t.end - t.begin;
      t.dense.assign(static_cast<std::size_t>(w) * w, 0.0);
      for (Index j = t.begin; j < t.end; ++j) {
        Index p = lc.row_ptr[j];
        for (; p < lc.row_ptr[j + 1] && lc.col_ind[p] < t.end; ++p)
          t.dense[(lc.col_ind[p] - t.begin) * w + (j - t.begin)] = lc.values[p];
        past_tile_[j] = p;
        for (; p < lc.row_ptr[j + 1] && lc.col_ind[p] < b.end; ++p) {}
        past_block_[j] = p;
      }
      b.tiles.push_back(std::move(t));
    }
    block_of_id[id] = static_cast<Index>(blocks_.size());
    blocks_.push_back(std::move(b));
  }
  for (const auto& level : plan.levels) {
    std::vector<Index> ids;
    for (Index id : level)
      if (block_of_id[id] >= 0) ids.push_back(block_of_id[id]);
    levels_.push_back(std::move(ids));
  }
}

void LevelScheduledSolver::lower_block(const Block& b, std::span<double> x, bool atomic) const {
  const CsrMatrix& lc = factors_->lower_by_column;
  for (const Tile& t : b.tiles) {
    const Index w = t.end - t.begin;
    double* xt = x.data() + t.begin;
    for (Index jj = 0; jj < w; ++jj) {
      const double yj = xt[jj];
      for (Index ii = jj + 1; ii < w; ++ii) xt[ii] -= t.dense[ii * w + jj] * yj;
    }
    for (Index j = t.begin; j < t.end; ++j) {
      const double yj = x[j];
      if (yj == 0.0) continue;
      for (Index p = past_tile_[j]; p < past_block_[j]; ++p) x[lc.col_ind[p]] -= lc.values[p] * yj;
      if (atomic) {
        for (Index p = past_block_[j]; p < lc.row_ptr[j + 1]; ++p)
          std::atomic_ref<double>(x[lc.col_ind[p]]).fetch_sub(lc.values[p] * yj, std::memory_order_relaxed);
      } else {
        for (Index p = past_block_[j]; p < lc.row_ptr[j + 1]; ++p) x[lc.col_ind[p]] -= lc.values[p] * yj;
      }
    }
  }
}

void LevelScheduledSolver::upper_block(const Block& b, std::span<double> x) const {
  const CsrMatrix& lc = factors_->lower_by_column;
  for (auto it = b.tiles.rbegin(); it != b.tiles.rend(); ++it) {
    const Tile& t = *it;
    const Index w = t.end - t.begin;
    for (Index i = t.begin; i < t.end; ++i) {
      double s = x[i];
      for (Index p = past_tile_[i]; p < lc.row_ptr[i + 1]; ++p) s -= lc.values[p] * x[lc.col_ind[p]];
      x[i] = s;
    }
    double* zt = x.data() + t.begin;
    for (Index ii = w - 1; ii >= 0; --ii) {
      double s = zt[ii];
      for (Index kk = ii + 1; kk < w; ++kk) s -= t.dense[kk * w + ii] * zt[kk];
      zt[ii] = s;
    }
  }
}

void LevelScheduledSolver::solve_lower(std::span<double> x, WorkerPool& pool) const {
  if (static_cast<Index>(x.size()) != factors_->n) throw InvalidArgument("solve_lower: vector length mismatch");
  const bool atomic = pool.size() > 1;
  for (const auto& level : levels_) {
    pool.parallel_for(static_cast<Index>(level.size()), [&](Index k) { lower_block(blocks_[level[k]], x, atomic); });
  }
}

void LevelScheduledSolver::solve_upper(std::span<double> x, WorkerPool& pool) const {
  if (static_cast<Index>(x.size()) != factors_->n) throw InvalidArgument("solve_upper: vector length mismatch");
  for (auto level = levels_.rbegin(); level != levels_.rend(); ++level) {
    const auto& ids = *level;
    pool.parallel_for(static_cast<Index>(ids.size()), [&](Index k) { upper_block(blocks_[ids[k]], x); });
  }
}

void LevelScheduledSolver::apply(std::span<const double> r, std::span<double> z, WorkerPool& pool) const {
  const LdltFactors& f = *factors_;
  if (static_cast<Index>(r.size()) != f.n || static_cast<Index>(z.size()) != f.n)
    throw InvalidArgument("ldlt apply: vector length mismatch");
  const auto& perm = f.plan.perm;
  std::vector<double> y(f.n);
  for (Index i = 0; i < f.n; ++i) y[i] = r[perm[i]];
  solve_lower(y, pool);
  for (Index i = 0; i < f.n; ++i) y[i] /= f.diag[i];
  solve_upper(y, pool);
  for (Index i = 0; i < f.n; ++i) z[perm[i]] = y[i];
}

}  // namespace fastfem
