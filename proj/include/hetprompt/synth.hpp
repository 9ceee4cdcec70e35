#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "hetprompt/dataset_io.hpp"
#include "hetprompt/init.hpp"

namespace hetprompt {

struct AuxTypeSpec {
  std::string name;
  std::size_t count = 0;
};

/// Planted-partition heterogeneous graph: target nodes and auxiliary nodes
/// are each affiliated to a class; target-aux edges appear with probability
/// p_in within a class and p_out across classes. Features are a Gaussian
/// mixture whose class means are pairwise `separation` apart.
struct SynthSpec {
  std::size_t num_classes = 3;
  std::size_t targets_per_class = 150;
  std::string target_type = "P";
  std::vector<AuxTypeSpec> aux_types{{"A", 90}, {"S", 30}};
  double p_in = 0.2;
  double p_out = 0.02;
  std::size_t feature_dim = 32;
  double separation = 2.0;
  double noise = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::config, "synth: " + m); };
    if (num_classes < 2) fail("need at least 2 classes");
    if (!(p_in > p_out) || p_out < 0.0 || p_in > 1.0) fail("need 0 <= p_out < p_in <= 1");
    if (targets_per_class == 0) fail("targets_per_class must be positive");
    if (aux_types.empty()) fail("need at least one auxiliary type");
    if (feature_dim < num_classes) fail("feature_dim must be at least num_classes");
    for (const auto& a : aux_types) {
      if (a.count < num_classes) fail("aux type '" + a.name + "' needs at least one node per class");
      if (a.name == target_type) fail("aux type name collides with target type");
    }
  }
};

inline void to_json(nlohmann::json& j, const AuxTypeSpec& a) {
  j = nlohmann::json{{"name", a.name}, {"count", a.count}};
}
inline void from_json(const nlohmann::json& j, AuxTypeSpec& a) {
  j.at("name").get_to(a.name);
  j.at("count").get_to(a.count);
}

inline void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = nlohmann::json{{"num_classes", s.num_classes}, {"targets_per_class", s.targets_per_class},
                     {"target_type", s.target_type}, {"aux_types", s.aux_types},
                     {"p_in", s.p_in},               {"p_out", s.p_out},
                     {"feature_dim", s.feature_dim}, {"separation", s.separation},
                     {"noise", s.noise},             {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SynthSpec& s) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("num_classes", s.num_classes);
  get("targets_per_class", s.targets_per_class);
  get("target_type", s.target_type);
  get("aux_types", s.aux_types);
  get("p_in", s.p_in);
  get("p_out", s.p_out);
  get("feature_dim", s.feature_dim);
  get("separation", s.separation);
  get("noise", s.noise);
  get("seed", s.seed);
}

inline Dataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, 505));
  std::normal_distribution<double> noise(0.0, spec.noise);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t c = spec.num_classes;
  // Class means on scaled coordinate axes: pairwise distance = separation.
  const double axis = spec.separation / std::sqrt(2.0);
  auto features_for = [&](const std::vector<int>& cls) {
    Matrix f(cls.size(), spec.feature_dim);
    for (std::size_t i = 0; i < cls.size(); ++i)
      for (std::size_t j = 0; j < spec.feature_dim; ++j)
        f(i, j) = noise(rng) + (j == static_cast<std::size_t>(cls[i]) ? axis : 0.0);
    return f;
  };
  auto balanced = [&](std::size_t n) {
    std::vector<int> cls(n);
    for (std::size_t i = 0; i < n; ++i) cls[i] = static_cast<int>(i % c);
    return cls;
  };

  Dataset ds;
  auto& g = ds.graph;
  const std::size_t nt = c * spec.targets_per_class;
  g.target_type = spec.target_type;
  g.num_classes = c;
  g.node_types.push_back(spec.target_type);
  g.node_counts.push_back(nt);
  auto target_cls = balanced(nt);
  g.labels = target_cls;
  g.features.emplace(spec.target_type, features_for(target_cls));

  for (const auto& aux : spec.aux_types) {
    g.node_types.push_back(aux.name);
    g.node_counts.push_back(aux.count);
    auto aux_cls = balanced(aux.count);
    g.features.emplace(aux.name, features_for(aux_cls));
    std::vector<Triplet> edges;
    for (std::size_t i = 0; i < nt; ++i)
      for (std::size_t a = 0; a < aux.count; ++a) {
        const double p = target_cls[i] == aux_cls[a] ? spec.p_in : spec.p_out;
        if (unit(rng) < p) edges.push_back({i, a, 1.0});
      }
    Relation rel;
    rel.name = spec.target_type + aux.name;
    rel.src_type = spec.target_type;
    rel.dst_type = aux.name;
    rel.adjacency = SparseMatrix::from_triplets(nt, aux.count, std::move(edges));
    g.relations.push_back(std::move(rel));

    MetaPathSchema mp;
    mp.name = spec.target_type + aux.name + spec.target_type;
    mp.type_sequence = {spec.target_type, aux.name, spec.target_type};
    mp.relation_sequence = {spec.target_type + aux.name, aux.name + spec.target_type};
    ds.metapaths.push_back(std::move(mp));
  }
  g.validate();
  return ds;
}

/// Writes the generated dataset (plus the spec that produced it) to `dir`.
inline Dataset generate(const SynthSpec& spec, const std::filesystem::path& dir) {
  auto ds = generate_dataset(spec);
  write_dataset(ds, dir);
  std::ofstream out(dir / "synth_spec.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + (dir / "synth_spec.json").string());
  out << nlohmann::json(spec).dump(2) << '\n';
  return ds;
}

}  // namespace hetprompt
