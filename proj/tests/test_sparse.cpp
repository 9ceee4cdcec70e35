#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace hetprompt;

TEST(SparseMatrix, DuplicateTripletsAreSummed) {
  auto m = SparseMatrix::from_triplets(2, 3, {{0, 1, 1.0}, {1, 2, 2.0}, {0, 1, 3.0}});
  EXPECT_EQ(m.nnz(), 2u);
  EXPECT_DOUBLE_EQ(m.at(0, 1), 4.0);
  EXPECT_DOUBLE_EQ(m.at(1, 2), 2.0);
  EXPECT_DOUBLE_EQ(m.at(1, 0), 0.0);
}

TEST(SparseMatrix, OutOfRangeEntryThrows) {
  EXPECT_THROW(SparseMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), Error);
}

TEST(SparseMatrix, TransposeMatchesDenseTranspose) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix d = oracle::random_matrix(7, 4, rng);
    for (auto& v : d.values())
      if (v < 0.3) v = 0.0;
    auto s = SparseMatrix::from_dense(d);
    Matrix t = s.transpose().to_dense();
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(t(j, i), d(i, j));
    EXPECT_EQ(s.transpose().transpose(), s);
  }
}

TEST(NormalizeRow, EqualEntriesSplitEvenly) {
  auto m = normalize_row(SparseMatrix::from_dense(Matrix::from_rows({{2.0, 2.0}})));
  EXPECT_DOUBLE_EQ(m.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(m.at(0, 1), 0.5);
}

TEST(NormalizeRow, IdentityIsFixed) {
  EXPECT_EQ(normalize_row(SparseMatrix::identity(4)), SparseMatrix::identity(4));
}

TEST(NormalizeRow, RandomCountsSumToOne) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(0, 4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        if (int c = count(rng); c > 0) t.push_back({i, j, static_cast<double>(c)});
    auto m = SparseMatrix::from_triplets(5, 5, t);
    auto n = normalize_row(m);
    auto sums = n.row_sums();
    for (std::size_t i = 0; i < 5; ++i) {
      if (m.row_nnz(i) == 0)
        EXPECT_EQ(n.row_nnz(i), 0u);
      else
        EXPECT_NEAR(sums[i], 1.0, 1e-12);
    }
  }
}

TEST(NormalizeRow, NegativeEntryThrows) {
  EXPECT_THROW(normalize_row(SparseMatrix::from_triplets(1, 2, {{0, 0, -1.0}})), Error);
}

TEST(NormalizeGcn, ZeroScalarGetsSelfLoop) {
  auto m = normalize_gcn(SparseMatrix(1, 1));
  EXPECT_DOUBLE_EQ(m.at(0, 0), 1.0);
}

TEST(NormalizeGcn, SingleEdgeIsAllHalves) {
  auto m = normalize_gcn(SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(m.at(i, j), 0.5);
}

TEST(NormalizeGcn, PreservesSymmetry) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> count(0, 3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = i + 1; j < 6; ++j)
        if (int c = count(rng); c > 1) {
          t.push_back({i, j, static_cast<double>(c)});
          t.push_back({j, i, static_cast<double>(c)});
        }
    Matrix d = normalize_gcn(SparseMatrix::from_triplets(6, 6, t)).to_dense();
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(d(i, j), d(j, i));
  }
}

TEST(NormalizeGcn, MatchesDenseFormula) {
  std::mt19937_64 rng(8);
  Matrix a = oracle::random_matrix(5, 5, rng, 0.0, 2.0);
  for (auto& v : a.values())
    if (v < 1.0) v = 0.0;
  Matrix d = normalize_gcn(SparseMatrix::from_dense(a)).to_dense();
  std::vector<double> deg(5, 1.0);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) deg[i] += a(i, j);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      EXPECT_NEAR(d(i, j), (a(i, j) + (i == j)) / std::sqrt(deg[i] * deg[j]), 1e-15);
}

TEST(NormalizeGcn, NonSquareThrows) {
  EXPECT_THROW(normalize_gcn(SparseMatrix(2, 3)), Error);
}
