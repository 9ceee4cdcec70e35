#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <tuple>
#include <vector>

#include "hetprompt/error.hpp"
#include "hetprompt/matrix.hpp"

namespace hetprompt {

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Compressed-sparse-row matrix. Column indices are sorted within each row and
/// never repeated.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  /// Duplicate (row, col) pairs are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
      if (t.row >= rows || t.col >= cols)
        throw Error(ErrorCode::shape, "sparse entry (" + std::to_string(t.row) + ", " +
                                          std::to_string(t.col) + ") outside " +
                                          std::to_string(rows) + "x" + std::to_string(cols));
      if (!std::isfinite(t.value)) throw Error(ErrorCode::numeric, "non-finite sparse entry");
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    SparseMatrix m(rows, cols);
    for (std::size_t k = 0; k < triplets.size(); ++k) {
      const auto& t = triplets[k];
      if (!m.col_idx_.empty() && k > 0 && triplets[k - 1].row == t.row &&
          triplets[k - 1].col == t.col) {
        m.values_.back() += t.value;
        continue;
      }
      m.col_idx_.push_back(t.col);
      m.values_.push_back(t.value);
      ++m.row_ptr_[t.row + 1];
    }
    for (std::size_t i = 0; i < rows; ++i) m.row_ptr_[i + 1] += m.row_ptr_[i];
    return m;
  }

  static SparseMatrix from_dense(const Matrix& d) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j)
        if (d(i, j) != 0.0) t.push_back({i, j, d(i, j)});
    return from_triplets(d.rows(), d.cols(), std::move(t));
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, n, std::move(t));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::size_t row_begin(std::size_t i) const { return row_ptr_[i]; }
  std::size_t row_end(std::size_t i) const { return row_ptr_[i + 1]; }
  std::size_t row_nnz(std::size_t i) const { return row_ptr_[i + 1] - row_ptr_[i]; }
  std::size_t col_at(std::size_t k) const { return col_idx_[k]; }
  double value_at(std::size_t k) const { return values_[k]; }

  std::span<const std::size_t> row_cols(std::size_t i) const {
    return {col_idx_.data() + row_ptr_[i], row_nnz(i)};
  }

  double at(std::size_t i, std::size_t j) const {
    auto cols = row_cols(i);
    auto it = std::lower_bound(cols.begin(), cols.end(), j);
    if (it == cols.end() || *it != j) return 0.0;
    return values_[row_ptr_[i] + static_cast<std::size_t>(it - cols.begin())];
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(nnz());
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        out.push_back({i, col_idx_[k], values_[k]});
    return out;
  }

  SparseMatrix transpose() const {
    std::vector<Triplet> t;
    t.reserve(nnz());
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        t.push_back({col_idx_[k], i, values_[k]});
    return from_triplets(cols_, rows_, std::move(t));
  }

  Matrix to_dense() const {
    Matrix d(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) d(i, col_idx_[k]) = values_[k];
    return d;
  }

  std::vector<double> row_sums() const {
    std::vector<double> s(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s[i] += values_[k];
    return s;
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

/// D^{-1} A. Empty rows stay empty.
inline SparseMatrix normalize_row(const SparseMatrix& m) {
  auto t = m.triplets();
  for (const auto& e : t)
    if (e.value < 0.0)
      throw Error(ErrorCode::validation, "normalize_row: negative entry at (" +
                                             std::to_string(e.row) + ", " +
                                             std::to_string(e.col) + ")");
  auto sums = m.row_sums();
  for (auto& e : t) e.value /= sums[e.row];
  return SparseMatrix::from_triplets(m.rows(), m.cols(), std::move(t));
}

/// D^{-1/2} (A + I) D^{-1/2}, with D the row sums of A + I.
inline SparseMatrix normalize_gcn(const SparseMatrix& m) {
  if (m.rows() != m.cols())
    throw Error(ErrorCode::shape, "normalize_gcn: matrix is not square (" +
                                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                      ")");
  auto t = m.triplets();
  for (const auto& e : t)
    if (e.value < 0.0) throw Error(ErrorCode::validation, "normalize_gcn: negative entry");
  for (std::size_t i = 0; i < m.rows(); ++i) t.push_back({i, i, 1.0});
  auto with_loops = SparseMatrix::from_triplets(m.rows(), m.cols(), std::move(t));
  auto deg = with_loops.row_sums();
  std::vector<double> inv_sqrt(deg.size());
  for (std::size_t i = 0; i < deg.size(); ++i) inv_sqrt[i] = 1.0 / std::sqrt(deg[i]);
  auto out = with_loops.triplets();
  for (auto& e : out) e.value *= inv_sqrt[e.row] * inv_sqrt[e.col];
  return SparseMatrix::from_triplets(m.rows(), m.cols(), std::move(out));
}

}  // namespace hetprompt
