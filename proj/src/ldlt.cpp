#include "fastfem/ldlt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fastfem {

LdltSymbolic ldlt_analyze(const CsrMatrix& a, const std::vector<Index>& perm) {
  if (a.nrows != a.ncols) throw InvalidArgument("ldlt: matrix must be square");
  if (static_cast<Index>(perm.size()) != a.nrows) throw InvalidArgument("ldlt: permutation size mismatch");
  const Index n = a.nrows;
  LdltSymbolic s;
  s.n = n;
  s.perm = perm;
  s.source_row_ptr = a.row_ptr;
  s.source_col_ind = a.col_ind;

  std::vector<Index> iperm(n, -1);
  for (Index i = 0; i < n; ++i) {
    if (perm[i] < 0 || perm[i] >= n || iperm[perm[i]] >= 0) throw InvalidArgument("ldlt: perm is not a permutation");
    iperm[perm[i]] = i;
  }

  // Column k of the permuted matrix equals its row k (symmetry), which is
  // row perm[k] of A relabelled through iperm.
  s.upper_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  std::vector<std::pair<Index, Index>> col;
  for (Index k = 0; k < n; ++k) {
    const Index src = perm[k];
    col.clear();
    for (Index p = a.row_ptr[src]; p < a.row_ptr[src + 1]; ++p) {
      const Index i = iperm[a.col_ind[p]];
      if (i <= k) col.emplace_back(i, p);
    }
    std::sort(col.begin(), col.end());
    for (auto [i, p] : col) {
      s.upper_row.push_back(i);
      s.upper_src.push_back(p);
    }
    s.upper_ptr[k + 1] = static_cast<Index>(s.upper_row.size());
  }

  s.parent.assign(n, -1);
  std::vector<Index> flag(n, -1);
  std::vector<Index> count(n, 0);
  for (Index k = 0; k < n; ++k) {
    flag[k] = k;
    for (Index p = s.upper_ptr[k]; p < s.upper_ptr[k + 1]; ++p) {
      for (Index i = s.upper_row[p]; flag[i] != k; i = s.parent[i]) {
        if (s.parent[i] == -1) s.parent[i] = k;
        ++count[i];
        flag[i] = k;
      }
    }
  }
  s.col_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index k = 0; k < n; ++k) s.col_ptr[k + 1] = s.col_ptr[k] + count[k];
  return s;
}

LdltFactors ldlt_numeric(const CsrMatrix& a, const LdltSymbolic& s, const DissectionPlan& plan) {
  if (!s.matches(a)) throw InvalidArgument("ldlt: matrix pattern differs from the analyzed pattern");
  const Index n = s.n;
  std::vector<Index> li(s.nnz_l());
  std::vector<double> lx(s.nnz_l());
  std::vector<double> d(n);
  std::vector<double> y(n, 0.0);
  std::vector<Index> pattern(n);
  std::vector<Index> flag(n, -1);
  std::vector<Index> lnz(n, 0);

  for (Index k = 0; k < n; ++k) {
    Index top = n;
    flag[k] = k;
    for (Index p = s.upper_ptr[k]; p < s.upper_ptr[k + 1]; ++p) {
      Index i = s.upper_row[p];
      y[i] += a.values[s.upper_src[p]];
      Index len = 0;
      for (; flag[i] != k; i = s.parent[i]) {
        pattern[len++] = i;
        flag[i] = k;
      }
      while (len > 0) pattern[--top] = pattern[--len];
    }
    d[k] = y[k];
    y[k] = 0.0;
    for (; top < n; ++top) {
      const Index i = pattern[top];
      const double yi = y[i];
      y[i] = 0.0;
      const Index end = s.col_ptr[i] + lnz[i];
      for (Index p = s.col_ptr[i]; p < end; ++p) y[li[p]] -= lx[p] * yi;
      const double l_ki = yi / d[i];
      d[k] -= l_ki * yi;
      li[end] = k;
      lx[end] = l_ki;
      ++lnz[i];
    }
    if (!(d[k] > 0.0))
      throw NumericalError("ldlt: non-positive pivot " + std::to_string(d[k]) + " at permuted row " + std::to_string(k) +
                           " (matrix is not SPD)");
  }

  LdltFactors f;
  f.n = n;
  f.diag = std::move(d);
  f.plan = plan;
  f.lower_by_column.nrows = f.lower_by_column.ncols = n;
  f.lower_by_column.row_ptr = s.col_ptr;
  f.lower_by_column.col_ind = std::move(li);
  f.lower_by_column.values = std::move(lx);
  f.lower = transpose(f.lower_by_column);
  return f;
}

LdltFactors ldlt_factor(const CsrMatrix& a, const DissectionPlan& plan) {
  return ldlt_numeric(a, ldlt_analyze(a, plan.perm), plan);
}

DissectionPlan natural_plan(Index n) {
  DissectionPlan plan;
  plan.perm.resize(n);
  std::iota(plan.perm.begin(), plan.perm.end(), 0);
  plan.iperm = plan.perm;
  plan.leaf_threshold = n;
  DissectionBlock leaf;
  leaf.end = n;
  plan.blocks.push_back(leaf);
  plan.levels = {{0}};
  plan.root = 0;
  return plan;
}

LdltFactors LdltFactorizer::factor(const CsrMatrix& a) {
  if (!has_symbolic_ || !symbolic_.matches(a)) {
    plan_ = dissect_matrix(a, leaf_threshold_, block_);
    symbolic_ = ldlt_analyze(a, plan_.perm);
    has_symbolic_ = true;
    ++analyses_;
  }
  return ldlt_numeric(a, symbolic_, plan_);
}

void forward_substitution(const LdltFactors& f, std::span<double> x) {
  const CsrMatrix& l = f.lower;
  for (Index j = 0; j < f.n; ++j) {
    double s = x[j];
    for (Index p = l.row_ptr[j]; p < l.row_ptr[j + 1]; ++p) s -= l.values[p] * x[l.col_ind[p]];
    x[j] = s;
  }
}

void backward_substitution(const LdltFactors& f, std::span<double> x) {
  const CsrMatrix& l = f.lower;
  for (Index i = f.n - 1; i >= 0; --i) {
    const double zi = x[i];
    for (Index p = l.row_ptr[i]; p < l.row_ptr[i + 1]; ++p) x[l.col_ind[p]] -= l.values[p] * zi;
  }
}

std::vector<double> ldlt_solve_sequential(const LdltFactors& f, std::span<const double> r) {
  if (static_cast<Index>(r.size()) != f.n) throw InvalidArgument("ldlt solve: vector length mismatch");
  const auto& perm = f.plan.perm;
  std::vector<double> y(f.n);
  for (Index i = 0; i < f.n; ++i) y[i] = r[perm[i]];
  forward_substitution(f, y);
  for (Index i = 0; i < f.n; ++i) y[i] /= f.diag[i];
  backward_substitution(f, y);
  std::vector<double> z(f.n);
  for (Index i = 0; i < f.n; ++i) z[perm[i]] = y[i];
  return z;
}

}  // namespace fastfem
