#pragma once

#include <memory>
#include <span>
#include <vector>

#include "fastfem/krylov.hpp"
#include "fastfem/ldlt.hpp"
#include "fastfem/worker_pool.hpp"

namespace fastfem {

/// Level-scheduled triangular solves over the dissection blocks of an LDL^T
/// factorization.
///
/// Blocks of one level run concurrently and levels are separated by the
/// pool's fork-join barrier. Each block is cut into tiles of `tile` unknowns
/// whose diagonal triangle is stored dense.
///
/// Lower solve (column-major): a block solves its tiles in order and, right
/// after each tile, pushes that tile's column contributions into every later
/// row. Rows inside the block are updated directly; rows of ancestor
/// separators may be hit by sibling blocks at the same time and are updated
/// with atomic adds, so only the summation order differs from sequential
/// substitution.
///
/// Upper solve (row-major): levels run from the root separator down. A row
/// first gathers the already known unknowns below its tile, then the tile is
/// back-solved densely. Every block writes only its own rows.
class LevelScheduledSolver {
 public:
  explicit LevelScheduledSolver(std::shared_ptr<const LdltFactors> factors, Index tile = 16);

  const LdltFactors& factors() const { return *factors_; }
  Index tile() const { return tile_; }

  /// L y = x in place, permuted order.
  void solve_lower(std::span<double> x, WorkerPool& pool) const;
  /// L^T z = x in place, permuted order.
  void solve_upper(std::span<double> x, WorkerPool& pool) const;
  /// z = P^T L^-T D^-1 L^-1 P r, original order.
  void apply(std::span<const double> r, std::span<double> z, WorkerPool& pool) const;

 private:
  struct Tile {
    Index begin = 0;
    Index end = 0;
    std::vector<double> dense;  // strictly lower part, row-major width (end - begin)
  };
  struct Block {
    Index begin = 0;
    Index end = 0;
    std::vector<Tile> tiles;
  };

  void lower_block(const Block& b, std::span<double> x, bool atomic) const;
  void upper_block(const Block& b, std::span<double> x) const;

  std::shared_ptr<const LdltFactors> factors_;
  Index tile_;
  std::vector<Block> blocks_;
  std::vector<std::vector<Index>> levels_;
  // Per column j of L: first entry with row >= end of j's tile, and first
  // entry with row >= end of j's block.
  std::vector<Index> past_tile_;
  std::vector<Index> past_block_;
};

/// Preconditioner applying exact LDL^T factors through the level schedule.
class LdltPreconditioner final : public Preconditioner {
 public:
  LdltPreconditioner(std::shared_ptr<const LevelScheduledSolver> solver, WorkerPool& pool)
      : solver_(std::move(solver)), pool_(pool) {}
  void apply(std::span<const double> r, std::span<double> z) const override { solver_->apply(r, z, pool_); }

 private:
  std::shared_ptr<const LevelScheduledSolver> solver_;
  WorkerPool& pool_;
};

}  // namespace fastfem
