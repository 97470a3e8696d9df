#pragma once

#include <memory>
#include <span>
#include <vector>

#include "fastfem/csr.hpp"
#include "fastfem/dissection.hpp"

namespace fastfem {

/// Elimination tree and column counts of L for one pattern and ordering,
/// plus the gather map that pulls the permuted upper triangle straight out
/// of the source matrix values.
struct LdltSymbolic {
  Index n = 0;
  std::vector<Index> perm;
  std::vector<Index> parent;
  std::vector<Index> col_ptr;
  // Column k of the permuted upper triangle: rows upper_row[p] with values
  // A.values[upper_src[p]] for p in [upper_ptr[k], upper_ptr[k+1]).
  std::vector<Index> upper_ptr;
  std::vector<Index> upper_row;
  std::vector<Index> upper_src;
  // Pattern of the matrix this analysis belongs to.
  std::vector<Index> source_row_ptr;
  std::vector<Index> source_col_ind;

  Index nnz_l() const { return col_ptr.empty() ? 0 : col_ptr.back(); }
  bool matches(const CsrMatrix& a) const { return a.row_ptr == source_row_ptr && a.col_ind == source_col_ind; }
};

/// A = P^T L D L^T P with unit lower L (diagonal not stored) in the permuted order.
struct LdltFactors {
  Index n = 0;
  CsrMatrix lower;            // strictly lower L, by rows
  CsrMatrix lower_by_column;  // the same entries by columns (CSR of L^T)
  std::vector<double> diag;
  DissectionPlan plan;
  long source_step = -1;
};

LdltSymbolic ldlt_analyze(const CsrMatrix& a, const std::vector<Index>& perm);

/// Numeric factorization reusing `symbolic`; `a` must have the analyzed pattern.
/// Throws NumericalError on a non-positive pivot.
LdltFactors ldlt_numeric(const CsrMatrix& a, const LdltSymbolic& symbolic, const DissectionPlan& plan);

LdltFactors ldlt_factor(const CsrMatrix& a, const DissectionPlan& plan);

/// Identity ordering with a single leaf block.
DissectionPlan natural_plan(Index n);

/// Caches the dissection plan and symbolic analysis until the pattern changes.
class LdltFactorizer {
 public:
  LdltFactorizer(Index leaf_threshold = 64, Index block = 3) : leaf_threshold_(leaf_threshold), block_(block) {}

  LdltFactors factor(const CsrMatrix& a);
  Index analyses() const { return analyses_; }

 private:
  Index leaf_threshold_;
  Index block_;
  DissectionPlan plan_;
  LdltSymbolic symbolic_;
  bool has_symbolic_ = false;
  Index analyses_ = 0;
};

/// Row-by-row forward substitution L y = r (permuted order), in place.
void forward_substitution(const LdltFactors& f, std::span<double> x);
/// Backward substitution L^T z = y driven by the rows of L, in place.
void backward_substitution(const LdltFactors& f, std::span<double> x);
/// Sequential z = A^-1 r in the original ordering.
std::vector<double> ldlt_solve_sequential(const LdltFactors& f, std::span<const double> r);

}  // namespace fastfem
