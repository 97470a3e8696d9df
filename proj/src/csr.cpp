#include "fastfem/csr.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fastfem {

Index CsrMatrix::find(Index row, Index col) const {
  const auto begin = col_ind.begin() + row_ptr[row];
  const auto end = col_ind.begin() + row_ptr[row + 1];
  const auto it = std::lower_bound(begin, end, col);
  if (it == end || *it != col) return -1;
  return static_cast<Index>(it - col_ind.begin());
}

double CsrMatrix::at(Index row, Index col) const {
  const Index slot = find(row, col);
  return slot < 0 ? 0.0 : values[slot];
}

CsrMatrix CsrMatrix::identity(Index n) {
  CsrMatrix a;
  a.nrows = a.ncols = n;
  a.row_ptr.resize(static_cast<std::size_t>(n) + 1);
  a.col_ind.resize(n);
  a.values.assign(n, 1.0);
  for (Index i = 0; i <= n; ++i) a.row_ptr[i] = i;
  for (Index i = 0; i < n; ++i) a.col_ind[i] = i;
  return a;
}

void validate(const CsrMatrix& a) {
  if (a.nrows < 0 || a.ncols < 0) throw InvalidArgument("csr: negative dimension");
  if (a.row_ptr.size() != static_cast<std::size_t>(a.nrows) + 1)
    throw InvalidArgument("csr: row_ptr length must be nrows + 1");
  if (a.row_ptr.front() != 0) throw InvalidArgument("csr: row_ptr[0] must be 0");
  if (a.row_ptr.back() != a.nnz() || a.values.size() != a.col_ind.size())
    throw InvalidArgument("csr: row_ptr[nrows], col_ind and values lengths disagree");
  for (Index r = 0; r < a.nrows; ++r) {
    if (a.row_ptr[r] > a.row_ptr[r + 1]) throw InvalidArgument("csr: row_ptr decreasing at row " + std::to_string(r));
    for (Index k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
      if (a.col_ind[k] < 0 || a.col_ind[k] >= a.ncols)
        throw InvalidArgument("csr: column out of range in row " + std::to_string(r));
      if (k > a.row_ptr[r] && a.col_ind[k] <= a.col_ind[k - 1])
        throw InvalidArgument("csr: columns not strictly increasing in row " + std::to_string(r));
    }
  }
}

CsrMatrix transpose(const CsrMatrix& a) {
  CsrMatrix t;
  t.nrows = a.ncols;
  t.ncols = a.nrows;
  t.row_ptr.assign(static_cast<std::size_t>(t.nrows) + 1, 0);
  for (Index c : a.col_ind) ++t.row_ptr[c + 1];
  for (Index r = 0; r < t.nrows; ++r) t.row_ptr[r + 1] += t.row_ptr[r];
  t.col_ind.resize(a.col_ind.size());
  t.values.resize(a.values.size());
  std::vector<Index> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (Index r = 0; r < a.nrows; ++r) {
    for (Index k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
      const Index dst = cursor[a.col_ind[k]]++;
      t.col_ind[dst] = r;
      t.values[dst] = a.values[k];
    }
  }
  return t;
}

double asymmetry(const CsrMatrix& a) {
  double worst = 0.0;
  for (Index r = 0; r < a.nrows; ++r)
    for (Index k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k)
      worst = std::max(worst, std::abs(a.values[k] - a.at(a.col_ind[k], r)));
  return worst;
}

double max_abs(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace fastfem
