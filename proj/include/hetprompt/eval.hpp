#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "hetprompt/dataset_io.hpp"
#include "hetprompt/kmeans.hpp"
#include "hetprompt/metrics.hpp"
#include "hetprompt/prompt.hpp"
#include "hetprompt/prompt_tune.hpp"

namespace hetprompt {

struct KShotSplit {
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train;  // grouped by class, `shots` per class
  std::vector<std::size_t> test;   // ascending

  FewShotLabels labels(const std::vector<int>& y) const {
    FewShotLabels l;
    l.shots = shots;
    for (std::size_t i : train) l.pairs.emplace_back(i, y[i]);
    return l;
  }
};

/// Draws `shots` training nodes per class uniformly without replacement;
/// every other labeled node is a test node.
inline KShotSplit sample_kshot(const std::vector<int>& labels, std::size_t num_classes,
                               std::size_t shots, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    if (static_cast<std::size_t>(labels[i]) >= num_classes)
      throw Error(ErrorCode::validation, "label " + std::to_string(labels[i]) + " out of range");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  KShotSplit split;
  split.shots = shots;
  split.seed = seed;
  std::mt19937_64 rng(derive_seed(seed, 404));
  std::vector<char> is_train(labels.size(), 0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& nodes = by_class[c];
    if (nodes.size() <= shots)
      throw Error(ErrorCode::validation, "class " + std::to_string(c) + " has " +
                                             std::to_string(nodes.size()) +
                                             " labeled nodes, need more than " + std::to_string(shots));
    std::shuffle(nodes.begin(), nodes.end(), rng);
    for (std::size_t k = 0; k < shots; ++k) {
      split.train.push_back(nodes[k]);
      is_train[nodes[k]] = 1;
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0 && !is_train[i]) split.test.push_back(i);
  return split;
}

struct MetricsReport {
  std::string task;
  std::map<std::string, double> metrics;
  std::string config_hash;
  std::string dataset_hash;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"task", r.task},           {"metrics", r.metrics},
                     {"config_hash", r.config_hash}, {"dataset_hash", r.dataset_hash},
                     {"seed", r.seed},           {"wall_ms", r.wall_ms}};
}

inline void from_json(const nlohmann::json& j, MetricsReport& r) {
  j.at("task").get_to(r.task);
  j.at("metrics").get_to(r.metrics);
  j.at("config_hash").get_to(r.config_hash);
  j.at("dataset_hash").get_to(r.dataset_hash);
  j.at("seed").get_to(r.seed);
  j.at("wall_ms").get_to(r.wall_ms);
}

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

inline std::map<std::string, Aggregate> aggregate(const std::vector<MetricsReport>& reports) {
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : reports)
    for (const auto& [k, v] : r.metrics) values[k].push_back(v);
  std::map<std::string, Aggregate> out;
  for (const auto& [k, vs] : values) {
    Aggregate a;
    for (double v : vs) a.mean += v;
    a.mean /= static_cast<double>(vs.size());
    for (double v : vs) a.std += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(a.std / static_cast<double>(vs.size()));
    out[k] = a;
  }
  return out;
}

/// Appends one row per report plus `mean` and `std` rows to a results CSV.
/// The header is written when the file is new.
inline void append_results_csv(const std::filesystem::path& path,
                               const std::vector<MetricsReport>& reports) {
  if (reports.empty()) return;
  std::vector<std::string> names;
  for (const auto& [k, _] : reports.front().metrics) names.push_back(k);
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  if (fresh) {
    out << "task,seed,config_hash,dataset_hash";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
  }
  for (const auto& r : reports) {
    out << r.task << ',' << r.seed << ',' << r.config_hash << ',' << r.dataset_hash;
    for (const auto& n : names) out << ',' << detail::format_double(r.metrics.at(n));
    out << '\n';
  }
  auto agg = aggregate(reports);
  for (const char* which : {"mean", "std"}) {
    out << reports.front().task << ',' << which << ',' << reports.front().config_hash << ','
        << reports.front().dataset_hash;
    for (const auto& n : names)
      out << ',' << detail::format_double(std::string(which) == "mean" ? agg[n].mean : agg[n].std);
    out << '\n';
  }
}

/// K-means on the cluster features, scored against the labeled nodes.
inline MetricsReport evaluate_zero_shot(const PromptState& state, const std::vector<int>& labels,
                                        std::size_t num_clusters, std::uint64_t seed,
                                        std::size_t restarts = 10) {
  auto t0 = std::chrono::steady_clock::now();
  if (labels.empty()) throw Error(ErrorCode::missing_artifact, "missing artifact: labels");
  if (labels.size() != state.num_targets())
    throw Error(ErrorCode::shape, "label count does not match prompt state");
  const Matrix features = cluster_features(state).value();
  auto km = kmeans(features, num_clusters, seed, restarts);
  std::vector<int> truth, pred;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) {
      truth.push_back(labels[i]);
      pred.push_back(km.assignments[i]);
    }
  MetricsReport r;
  r.task = "zero_shot_clustering";
  r.seed = seed;
  r.metrics["nmi"] = nmi(pred, truth);
  r.metrics["ari"] = ari(pred, truth);
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Macro/Micro-F1 of prompt classification on the split's test nodes.
inline MetricsReport score_classification(const PromptState& state, const std::vector<int>& labels,
                                          std::size_t num_classes, const KShotSplit& split) {
  auto pred = classify(state, split.test);
  std::vector<int> truth;
  for (std::size_t i : split.test) truth.push_back(labels[i]);
  auto f1 = f1_scores(pred, truth, num_classes);
  MetricsReport r;
  r.task = std::to_string(split.shots) + "_shot_classification";
  r.seed = split.seed;
  r.metrics["macro_f1"] = f1.macro;
  r.metrics["micro_f1"] = f1.micro;
  return r;
}

/// Few-shot prompt tuning on the split's training nodes, then scoring on its
/// test nodes.
inline MetricsReport evaluate_kshot(const Dataset& ds, const FrozenEncoding& enc,
                                    const RunConfig& cfg, const KShotSplit& split,
                                    std::uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  const auto& g = ds.graph;
  if (!g.labels) throw Error(ErrorCode::missing_artifact, "missing artifact: labels");
  auto tuned = prompt_tune(g, ds.metapaths, enc, cfg, g.num_classes, split.labels(*g.labels), seed);
  auto r = score_classification(tuned.state, *g.labels, g.num_classes, split);
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace hetprompt
