#pragma once

#include <span>
#include <vector>

#include "fastfem/types.hpp"

namespace fastfem {

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row.
struct CsrMatrix {
  Index nrows = 0;
  Index ncols = 0;
  std::vector<Index> row_ptr{0};
  std::vector<Index> col_ind;
  std::vector<double> values;

  Index nnz() const { return static_cast<Index>(col_ind.size()); }

  /// Slot of entry (row, col), or -1 when the entry is structurally zero.
  Index find(Index row, Index col) const;
  double at(Index row, Index col) const;

  bool same_pattern(const CsrMatrix& other) const {
    return nrows == other.nrows && ncols == other.ncols && row_ptr == other.row_ptr &&
           col_ind == other.col_ind;
  }

  static CsrMatrix identity(Index n);
};

/// Throws InvalidArgument if any structural invariant is broken.
void validate(const CsrMatrix& a);

CsrMatrix transpose(const CsrMatrix& a);

/// max |a_ij - a_ji| over the union pattern.
double asymmetry(const CsrMatrix& a);

double max_abs(std::span<const double> x);

}  // namespace fastfem
