#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "hetprompt/error.hpp"

namespace hetprompt {

namespace detail {

struct Contingency {
  std::vector<std::vector<double>> table;  // [a-cluster][b-cluster]
  std::vector<double> a_sizes;
  std::vector<double> b_sizes;
  double n = 0.0;
};

inline std::vector<std::size_t> relabel(const std::vector<int>& labels) {
  std::map<int, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids.emplace(l, ids.size()).first->second);
  return out;
}

inline Contingency contingency(const std::vector<int>& a, const std::vector<int>& b,
                               const char* who) {
  if (a.size() != b.size())
    throw Error(ErrorCode::shape, std::string(who) + ": label vectors differ in length (" +
                                      std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                      ")");
  auto ra = relabel(a), rb = relabel(b);
  std::size_t ka = 0, kb = 0;
  for (auto v : ra) ka = std::max(ka, v + 1);
  for (auto v : rb) kb = std::max(kb, v + 1);
  Contingency c;
  c.table.assign(ka, std::vector<double>(kb, 0.0));
  c.a_sizes.assign(ka, 0.0);
  c.b_sizes.assign(kb, 0.0);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    c.table[ra[i]][rb[i]] += 1.0;
    c.a_sizes[ra[i]] += 1.0;
    c.b_sizes[rb[i]] += 1.0;
  }
  c.n = static_cast<double>(a.size());
  return c;
}

inline bool same_partition(const Contingency& c) {
  if (c.a_sizes.size() != c.b_sizes.size()) return false;
  for (const auto& row : c.table) {
    std::size_t nonzero = 0;
    for (double v : row) nonzero += v > 0.0;
    if (nonzero != 1) return false;
  }
  return true;
}

inline double entropy(const std::vector<double>& sizes, double n) {
  double h = 0.0;
  for (double s : sizes)
    if (s > 0.0) h -= (s / n) * std::log(s / n);
  return h;
}

inline double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace detail

/// Normalized mutual information, I(a; b) / sqrt(H(a) H(b)), natural logs.
/// Identical partitions score 1; otherwise a zero entropy scores 0.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  auto c = detail::contingency(a, b, "nmi");
  if (c.n == 0.0) throw Error(ErrorCode::shape, "nmi: empty label vectors");
  if (detail::same_partition(c)) return 1.0;
  const double ha = detail::entropy(c.a_sizes, c.n);
  const double hb = detail::entropy(c.b_sizes, c.n);
  if (ha == 0.0 || hb == 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < c.a_sizes.size(); ++i)
    for (std::size_t j = 0; j < c.b_sizes.size(); ++j) {
      const double nij = c.table[i][j];
      if (nij > 0.0) mi += (nij / c.n) * std::log(c.n * nij / (c.a_sizes[i] * c.b_sizes[j]));
    }
  return std::max(0.0, mi / std::sqrt(ha * hb));
}

/// Adjusted Rand index from pair counts.
inline double ari(const std::vector<int>& a, const std::vector<int>& b) {
  auto c = detail::contingency(a, b, "ari");
  if (c.n == 0.0) throw Error(ErrorCode::shape, "ari: empty label vectors");
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& row : c.table)
    for (double v : row) index += detail::choose2(v);
  for (double s : c.a_sizes) sum_a += detail::choose2(s);
  for (double s : c.b_sizes) sum_b += detail::choose2(s);
  const double total = detail::choose2(c.n);
  const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return detail::same_partition(c) ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

struct F1Scores {
  double macro = 0.0;
  double micro = 0.0;
};

/// Macro-F1 averages per-class F1 over all `num_classes` classes (a class
/// absent from both vectors contributes 0). Micro-F1 equals accuracy for
/// single-label predictions.
inline F1Scores f1_scores(const std::vector<int>& pred, const std::vector<int>& truth,
                          std::size_t num_classes) {
  if (pred.size() != truth.size())
    throw Error(ErrorCode::shape, "f1_scores: prediction and truth differ in length");
  std::vector<double> tp(num_classes, 0.0), fp(num_classes, 0.0), fn(num_classes, 0.0);
  double correct = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto check = [&](int c) {
      if (c < 0 || static_cast<std::size_t>(c) >= num_classes)
        throw Error(ErrorCode::validation, "f1_scores: class " + std::to_string(c) +
                                               " outside [0, " + std::to_string(num_classes) + ")");
      return static_cast<std::size_t>(c);
    };
    auto p = check(pred[i]), t = check(truth[i]);
    if (p == t) {
      tp[p] += 1.0;
      correct += 1.0;
    } else {
      fp[p] += 1.0;
      fn[t] += 1.0;
    }
  }
  F1Scores s;
  if (num_classes == 0 || pred.empty()) return s;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    if (denom == 0.0) warn("class " + std::to_string(c) + " absent from predictions and truth");
    s.macro += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
  }
  s.macro /= static_cast<double>(num_classes);
  s.micro = correct / static_cast<double>(pred.size());
  return s;
}

}  // namespace hetprompt
