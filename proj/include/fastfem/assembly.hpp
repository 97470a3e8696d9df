#pragma once

#include <span>
#include <utility>
#include <vector>

#include "fastfem/csr.hpp"
#include "fastfem/types.hpp"
#include "fastfem/worker_pool.hpp"

namespace fastfem {

/// Append-only log of (row, col, value) contributions.
///
/// Each pass rewrites the log from the start. While the incoming (row, col)
/// sequence matches the previous pass only the value is stored; the first
/// mismatch clears keep_struct and the structure is rewritten from there on.
class TripletStream {
 public:
  void begin_pass() {
    cursor_ = 0;
    keep_struct_ = completed_;
  }

  void add(Index row, Index col, double val) {
    const auto id = static_cast<std::size_t>(cursor_);
    if (keep_struct_ && id < prev_val_.size() && prev_col_[id] == col && prev_row_[id] == row) {
      prev_val_[id] = val;
    } else {
      keep_struct_ = false;
      if (id < prev_val_.size()) {
        prev_row_[id] = row;
        prev_col_[id] = col;
        prev_val_[id] = val;
      } else {
        prev_row_.push_back(row);
        prev_col_.push_back(col);
        prev_val_.push_back(val);
      }
    }
    ++cursor_;
  }

  /// Closes a pass. A pass shorter than its predecessor drops the stale tail
  /// and clears keep_struct.
  void end_pass();

  bool keep_struct() const { return keep_struct_; }
  Index cursor() const { return cursor_; }
  Index size() const { return static_cast<Index>(prev_val_.size()); }

  std::span<const Index> rows() const { return prev_row_; }
  std::span<const Index> cols() const { return prev_col_; }
  std::span<const double> values() const { return prev_val_; }

 private:
  std::vector<Index> prev_row_;
  std::vector<Index> prev_col_;
  std::vector<double> prev_val_;
  Index cursor_ = 0;
  bool keep_struct_ = false;
  bool completed_ = false;
};

/// CSR-like staging format: rows are compressed, columns within a row are
/// not necessarily sorted and may repeat. `origin` records the triplet
/// position each entry came from; values are never copied.
struct UncompressedStructure {
  std::vector<Index> row_ptr;
  std::vector<Index> col_ind;
  std::vector<Index> origin;
};

/// Map from triplet position to CSR value slot, built once per fill order.
struct CompressionMapping {
  static constexpr Index kDiscard = -1;

  Index n = 0;
  std::vector<Index> slot_of_triplet;
  std::vector<Index> row_ptr;
  std::vector<Index> col_ind;
  std::vector<Index> fixed_dofs;
  /// Slots pinned to 1.0 (diagonals of fixed DOFs).
  std::vector<Index> unit_slots;
  /// Per-slot triplet lists in ascending triplet order (inverse of slot_of_triplet).
  std::vector<Index> gather_ptr;
  std::vector<Index> gather_triplets;

  Index nnz() const { return static_cast<Index>(col_ind.size()); }
  Index num_triplets() const { return static_cast<Index>(slot_of_triplet.size()); }
};

class StaleMappingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// First transpose: rows of the result are the triplet columns. Triplets in
/// a fixed column are skipped; entries keep ascending triplet order per row.
UncompressedStructure transpose_triplets(const TripletStream& stream, Index n, std::span<const Index> fixed_dofs);

/// Second transpose: back to row orientation, skipping fixed rows. Columns
/// come out sorted and, for equal columns, in ascending triplet order.
UncompressedStructure transpose_back(const UncompressedStructure& transposed, Index n, std::span<const Index> fixed_dofs);

/// Builds the CSR pattern and the compression mapping for the current
/// stream content. Rows and columns of fixed DOFs keep only their diagonal.
std::pair<CsrMatrix, CompressionMapping> build_pattern(const TripletStream& stream, Index n,
                                                       std::span<const Index> fixed_dofs = {});

/// Sums the stream values into CSR slots: values[s] = sum over triplets t
/// mapped to s, in ascending t, of coeffs[t] * value[t] (coeffs empty means 1).
/// Fixed-DOF diagonals are set to 1.
void compress_values(const TripletStream& stream, const CompressionMapping& mapping,
                     std::span<const double> coeffs, std::span<double> values);

/// Same result as compress_values, bit for bit. Slots are split into
/// contiguous chunks, one chunk per task, each slot gathered by its owner.
void compress_values_parallel(const TripletStream& stream, const CompressionMapping& mapping,
                              std::span<const double> coeffs, std::span<double> values, WorkerPool& pool);

CsrMatrix compress(const TripletStream& stream, const CompressionMapping& mapping,
                   std::span<const double> coeffs = {});
CsrMatrix compress_parallel(const TripletStream& stream, const CompressionMapping& mapping,
                            std::span<const double> coeffs, int workers);

/// Drives one collection pass per assembly and keeps the pattern and mapping
/// while the fill order is unchanged.
class Assembler {
 public:
  Assembler(Index n, std::vector<Index> fixed_dofs = {}, WorkerPool* pool = nullptr);

  /// Starts a collection pass; model code adds its contributions to the
  /// returned stream.
  TripletStream& begin();

  /// Ends the pass, rebuilds the pattern when needed and compresses the
  /// values. `coeffs` must be empty or match the pass length.
  const CsrMatrix& finish(std::span<const double> coeffs = {});

  void set_fixed_dofs(std::vector<Index> fixed_dofs);
  const std::vector<Index>& fixed_dofs() const { return fixed_dofs_; }

  /// Always rebuild the pattern, as if the fill order changed every pass.
  void set_force_full(bool force) { force_full_ = force; }

  Index dimension() const { return n_; }
  bool last_rebuilt() const { return last_rebuilt_; }
  Index rebuild_count() const { return rebuild_count_; }
  const TripletStream& stream() const { return stream_; }
  const CompressionMapping& mapping() const { return mapping_; }
  const CsrMatrix& matrix() const { return matrix_; }

 private:
  Index n_;
  std::vector<Index> fixed_dofs_;
  WorkerPool* pool_;
  TripletStream stream_;
  CompressionMapping mapping_;
  CsrMatrix matrix_;
  bool has_mapping_ = false;
  bool force_full_ = false;
  bool last_rebuilt_ = false;
  Index rebuild_count_ = 0;
};

}  // namespace fastfem
