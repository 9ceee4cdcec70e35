#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "hetprompt/error.hpp"
#include "hetprompt/matrix.hpp"

namespace hetprompt {

/// Seed for an independent stream derived from a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(fan_in, fan_out);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

inline Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

/// Random matrix with orthonormal rows (Gram-Schmidt on Gaussian rows).
/// Requires rows <= cols.
inline Matrix random_orthonormal_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  if (rows > cols)
    throw Error(ErrorCode::config, "cannot build " + std::to_string(rows) +
                                       " orthonormal rows in dimension " + std::to_string(cols));
  Matrix q = gaussian(rows, cols, 1.0, rng);
  for (std::size_t i = 0; i < rows; ++i) {
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t k = 0; k < i; ++k) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += q(i, j) * q(k, j);
        for (std::size_t j = 0; j < cols; ++j) q(i, j) -= dot * q(k, j);
      }
    double norm = 0.0;
    for (double v : q.row(i)) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw Error(ErrorCode::numeric, "degenerate Gaussian draw in orthonormal init");
    for (double& v : q.row(i)) v /= norm;
  }
  return q;
}

}  // namespace hetprompt
