#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "hetprompt/error.hpp"
#include "hetprompt/init.hpp"
#include "hetprompt/matrix.hpp"

namespace hetprompt {

struct KMeansResult {
  std::vector<int> assignments;
  Matrix centroids;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // best restart, one entry per Lloyd iteration
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

inline Matrix kmeans_plus_plus(const Matrix& x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.rows();
  Matrix c(k, x.cols());
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  auto copy_row = [&](std::size_t dst, std::size_t src) {
    std::copy(x.row(src).begin(), x.row(src).end(), c.row(dst).begin());
  };
  copy_row(0, first(rng));
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  for (std::size_t m = 1; m < k; ++m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], squared_distance(x.row(i), c.row(m - 1)));
      total += dist[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    copy_row(m, pick);
  }
  return c;
}

inline KMeansResult lloyd(const Matrix& x, Matrix centroids, std::size_t max_iter) {
  const std::size_t n = x.rows(), k = centroids.rows(), d = x.cols();
  KMeansResult r;
  r.assignments.assign(n, -1);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = squared_distance(x.row(i), centroids.row(c));
        if (dd < best_d) {
          best_d = dd;
          best = static_cast<int>(c);
        }
      }
      if (r.assignments[i] != best) changed = true;
      r.assignments[i] = best;
      inertia += best_d;
    }
    r.inertia_history.push_back(inertia);
    r.inertia = inertia;
    if (!changed && it > 0) break;
    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = static_cast<std::size_t>(r.assignments[i]);
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) sums(c, j) += x(i, j);
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0)  // empty clusters keep their previous centroid
        for (std::size_t j = 0; j < d; ++j) centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
  }
  r.centroids = std::move(centroids);
  return r;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` by inertia.
inline KMeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed,
                           std::size_t restarts = 10, std::size_t max_iter = 300) {
  if (k == 0) throw Error(ErrorCode::config, "kmeans: k must be positive");
  if (k > x.rows())
    throw Error(ErrorCode::config, "kmeans: k = " + std::to_string(k) + " exceeds " +
                                       std::to_string(x.rows()) + " points");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    std::mt19937_64 rng(derive_seed(seed, r));
    auto result = detail::lloyd(x, detail::kmeans_plus_plus(x, k, rng), max_iter);
    if (result.inertia < best.inertia) best = std::move(result);
  }
  return best;
}

}  // namespace hetprompt
