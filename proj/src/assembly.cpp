#include "fastfem/assembly.hpp"

#include <algorithm>
#include <string>

namespace fastfem {

void TripletStream::end_pass() {
  if (static_cast<std::size_t>(cursor_) != prev_val_.size()) {
    keep_struct_ = false;
    prev_row_.resize(cursor_);
    prev_col_.resize(cursor_);
    prev_val_.resize(cursor_);
  }
  completed_ = true;
}

namespace {

std::vector<char> fixed_flags(Index n, std::span<const Index> fixed_dofs) {
  std::vector<char> flags(static_cast<std::size_t>(n), 0);
  for (Index d : fixed_dofs) {
    if (d < 0 || d >= n) throw InvalidArgument("fixed DOF " + std::to_string(d) + " outside [0, " + std::to_string(n) + ")");
    flags[d] = 1;
  }
  return flags;
}

void check_coeffs(const TripletStream& stream, const CompressionMapping& mapping, std::span<const double> coeffs,
                  std::span<double> values) {
  if (stream.size() != mapping.num_triplets())
    throw StaleMappingError("compress: stream holds " + std::to_string(stream.size()) + " triplets but the mapping was built for " +
                            std::to_string(mapping.num_triplets()));
  if (!coeffs.empty() && static_cast<Index>(coeffs.size()) != stream.size())
    throw InvalidArgument("compress: coefficient count does not match the triplet count");
  if (static_cast<Index>(values.size()) != mapping.nnz())
    throw InvalidArgument("compress: value array does not match the pattern size");
}

CsrMatrix empty_matrix(const CompressionMapping& mapping) {
  CsrMatrix m;
  m.nrows = m.ncols = mapping.n;
  m.row_ptr = mapping.row_ptr;
  m.col_ind = mapping.col_ind;
  m.values.assign(mapping.col_ind.size(), 0.0);
  return m;
}

}  // namespace

UncompressedStructure transpose_triplets(const TripletStream& stream, Index n, std::span<const Index> fixed_dofs) {
  const auto fixed = fixed_flags(n, fixed_dofs);
  const auto rows = stream.rows();
  const auto cols = stream.cols();
  const Index count = stream.size();

  UncompressedStructure t;
  t.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index k = 0; k < count; ++k) {
    if (rows[k] < 0 || rows[k] >= n || cols[k] < 0 || cols[k] >= n)
      throw InvalidArgument("build_pattern: triplet " + std::to_string(k) + " (" + std::to_string(rows[k]) + ", " +
                            std::to_string(cols[k]) + ") outside a " + std::to_string(n) + "x" + std::to_string(n) +
                            " system");
    if (!fixed[cols[k]]) ++t.row_ptr[cols[k] + 1];
  }
  for (Index i = 0; i < n; ++i) t.row_ptr[i + 1] += t.row_ptr[i];

  t.col_ind.resize(t.row_ptr[n]);
  t.origin.resize(t.row_ptr[n]);
  std::vector<Index> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (Index k = 0; k < count; ++k) {
    if (fixed[cols[k]]) continue;
    const Index dst = cursor[cols[k]]++;
    t.col_ind[dst] = rows[k];
    t.origin[dst] = k;
  }
  return t;
}

UncompressedStructure transpose_back(const UncompressedStructure& transposed, Index n, std::span<const Index> fixed_dofs) {
  const auto fixed = fixed_flags(n, fixed_dofs);
  UncompressedStructure x;
  x.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index r : transposed.col_ind)
    if (!fixed[r]) ++x.row_ptr[r + 1];
  for (Index i = 0; i < n; ++i) x.row_ptr[i + 1] += x.row_ptr[i];

  x.col_ind.resize(x.row_ptr[n]);
  x.origin.resize(x.row_ptr[n]);
  std::vector<Index> cursor(x.row_ptr.begin(), x.row_ptr.end() - 1);
  for (Index c = 0; c < n; ++c) {
    for (Index k = transposed.row_ptr[c]; k < transposed.row_ptr[c + 1]; ++k) {
      const Index r = transposed.col_ind[k];
      if (fixed[r]) continue;
      const Index dst = cursor[r]++;
      x.col_ind[dst] = c;
      x.origin[dst] = transposed.origin[k];
    }
  }
  return x;
}

std::pair<CsrMatrix, CompressionMapping> build_pattern(const TripletStream& stream, Index n,
                                                       std::span<const Index> fixed_dofs) {
  if (n < 0) throw InvalidArgument("build_pattern: negative dimension");
  const auto fixed = fixed_flags(n, fixed_dofs);
  const UncompressedStructure x = transpose_back(transpose_triplets(stream, n, fixed_dofs), n, fixed_dofs);

  CompressionMapping map;
  map.n = n;
  map.fixed_dofs.assign(fixed_dofs.begin(), fixed_dofs.end());
  std::sort(map.fixed_dofs.begin(), map.fixed_dofs.end());
  map.fixed_dofs.erase(std::unique(map.fixed_dofs.begin(), map.fixed_dofs.end()), map.fixed_dofs.end());
  map.slot_of_triplet.assign(stream.size(), CompressionMapping::kDiscard);
  map.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  map.col_ind.reserve(x.col_ind.size() / 2 + map.fixed_dofs.size());
  map.gather_ptr.reserve(x.col_ind.size() / 2 + map.fixed_dofs.size() + 1);
  map.gather_triplets = x.origin;

  // Entries of x are grouped by slot, so a slot's triplets are the run that
  // starts where the slot is created.
  for (Index r = 0; r < n; ++r) {
    if (fixed[r]) {
      map.unit_slots.push_back(static_cast<Index>(map.col_ind.size()));
      map.col_ind.push_back(r);
      map.gather_ptr.push_back(x.row_ptr[r]);
    } else {
      for (Index k = x.row_ptr[r]; k < x.row_ptr[r + 1]; ++k) {
        if (k == x.row_ptr[r] || x.col_ind[k] != x.col_ind[k - 1]) {
          map.col_ind.push_back(x.col_ind[k]);
          map.gather_ptr.push_back(k);
        }
        map.slot_of_triplet[x.origin[k]] = static_cast<Index>(map.col_ind.size()) - 1;
      }
    }
    map.row_ptr[r + 1] = static_cast<Index>(map.col_ind.size());
  }
  map.gather_ptr.push_back(static_cast<Index>(x.origin.size()));

  CsrMatrix pattern = empty_matrix(map);
  return {std::move(pattern), std::move(map)};
}

void compress_values(const TripletStream& stream, const CompressionMapping& mapping, std::span<const double> coeffs,
                     std::span<double> values) {
  check_coeffs(stream, mapping, coeffs, values);
  const auto vals = stream.values();
  const Index* slot = mapping.slot_of_triplet.data();
  std::fill(values.begin(), values.end(), 0.0);
  const Index count = stream.size();
  if (coeffs.empty()) {
    for (Index t = 0; t < count; ++t)
      if (slot[t] != CompressionMapping::kDiscard) values[slot[t]] += vals[t];
  } else {
    for (Index t = 0; t < count; ++t)
      if (slot[t] != CompressionMapping::kDiscard) values[slot[t]] += coeffs[t] * vals[t];
  }
  for (Index s : mapping.unit_slots) values[s] = 1.0;
}

void compress_values_parallel(const TripletStream& stream, const CompressionMapping& mapping,
                              std::span<const double> coeffs, std::span<double> values, WorkerPool& pool) {
  check_coeffs(stream, mapping, coeffs, values);
  const auto vals = stream.values();
  const Index nnz = mapping.nnz();
  const Index chunks = std::max<Index>(1, std::min<Index>(pool.size(), nnz));
  const Index* gptr = mapping.gather_ptr.data();
  const Index* gtrip = mapping.gather_triplets.data();
  pool.parallel_for(chunks, [&](Index chunk) {
    const Index begin = static_cast<Index>(static_cast<long long>(nnz) * chunk / chunks);
    const Index end = static_cast<Index>(static_cast<long long>(nnz) * (chunk + 1) / chunks);
    for (Index s = begin; s < end; ++s) {
      double sum = 0.0;
      if (coeffs.empty()) {
        for (Index k = gptr[s]; k < gptr[s + 1]; ++k) sum += vals[gtrip[k]];
      } else {
        for (Index k = gptr[s]; k < gptr[s + 1]; ++k) sum += coeffs[gtrip[k]] * vals[gtrip[k]];
      }
      values[s] = sum;
    }
  });
  for (Index s : mapping.unit_slots) values[s] = 1.0;
}

CsrMatrix compress(const TripletStream& stream, const CompressionMapping& mapping, std::span<const double> coeffs) {
  CsrMatrix m = empty_matrix(mapping);
  compress_values(stream, mapping, coeffs, m.values);
  return m;
}

CsrMatrix compress_parallel(const TripletStream& stream, const CompressionMapping& mapping,
                            std::span<const double> coeffs, int workers) {
  WorkerPool pool(workers);
  CsrMatrix m = empty_matrix(mapping);
  compress_values_parallel(stream, mapping, coeffs, m.values, pool);
  return m;
}

Assembler::Assembler(Index n, std::vector<Index> fixed_dofs, WorkerPool* pool) : n_(n), pool_(pool) {
  set_fixed_dofs(std::move(fixed_dofs));
}

void Assembler::set_fixed_dofs(std::vector<Index> fixed_dofs) {
  std::sort(fixed_dofs.begin(), fixed_dofs.end());
  fixed_dofs.erase(std::unique(fixed_dofs.begin(), fixed_dofs.end()), fixed_dofs.end());
  fixed_flags(n_, fixed_dofs);
  fixed_dofs_ = std::move(fixed_dofs);
}

TripletStream& Assembler::begin() {
  stream_.begin_pass();
  return stream_;
}

const CsrMatrix& Assembler::finish(std::span<const double> coeffs) {
  stream_.end_pass();
  last_rebuilt_ = force_full_ || !has_mapping_ || !stream_.keep_struct() || mapping_.fixed_dofs != fixed_dofs_;
  if (last_rebuilt_) {
    auto [pattern, mapping] = build_pattern(stream_, n_, fixed_dofs_);
    matrix_ = std::move(pattern);
    mapping_ = std::move(mapping);
    has_mapping_ = true;
    ++rebuild_count_;
  }
  if (pool_ != nullptr && pool_->size() > 1)
    compress_values_parallel(stream_, mapping_, coeffs, matrix_.values, *pool_);
  else
    compress_values(stream_, mapping_, coeffs, matrix_.values);
  return matrix_;
}

}  // namespace fastfem
