#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hetprompt/error.hpp"
#include "hetprompt/matrix.hpp"
#include "hetprompt/sparse.hpp"

namespace hetprompt {

struct Relation {
  std::string name;
  std::string src_type;
  std::string dst_type;
  SparseMatrix adjacency;  // N_src x N_dst, binary
};

/// Typed graph: node types with counts, relations stored once in their
/// declared direction, per-type features and optional target labels.
struct HeteroGraph {
  std::vector<std::string> node_types;
  std::vector<std::size_t> node_counts;
  std::vector<Relation> relations;
  std::map<std::string, Matrix> features;
  std::string target_type;
  std::size_t num_classes = 0;
  std::optional<std::vector<int>> labels;  // -1 marks an unlabeled target node

  std::size_t type_index(const std::string& type) const {
    auto it = std::find(node_types.begin(), node_types.end(), type);
    if (it == node_types.end()) throw Error(ErrorCode::validation, "unknown node type '" + type + "'");
    return static_cast<std::size_t>(it - node_types.begin());
  }

  bool has_type(const std::string& type) const {
    return std::find(node_types.begin(), node_types.end(), type) != node_types.end();
  }

  std::size_t count(const std::string& type) const { return node_counts[type_index(type)]; }
  std::size_t num_targets() const { return count(target_type); }

  const Relation& relation(const std::string& name) const {
    for (const auto& r : relations)
      if (r.name == name) return r;
    throw Error(ErrorCode::validation, "unknown relation '" + name + "'");
  }

  /// Adjacency of `rel` oriented so that rows are `from_type` nodes.
  SparseMatrix oriented(const Relation& rel, const std::string& from_type) const {
    if (rel.src_type == from_type) return rel.adjacency;
    if (rel.dst_type == from_type) return rel.adjacency.transpose();
    throw Error(ErrorCode::validation,
                "relation '" + rel.name + "' is not incident to type '" + from_type + "'");
  }

  /// Throws a validation error if any invariant is violated.
  void validate() const {
    if (node_types.size() != node_counts.size())
      throw Error(ErrorCode::validation, "node type list and count list differ in length");
    type_index(target_type);
    for (const auto& r : relations) {
      std::size_t ns = count(r.src_type), nd = count(r.dst_type);
      if (r.adjacency.rows() != ns || r.adjacency.cols() != nd)
        throw Error(ErrorCode::validation, "relation '" + r.name + "' adjacency is " +
                                               std::to_string(r.adjacency.rows()) + "x" +
                                               std::to_string(r.adjacency.cols()) + ", expected " +
                                               std::to_string(ns) + "x" + std::to_string(nd));
    }
    for (const auto& [type, feats] : features) {
      if (feats.rows() != count(type))
        throw Error(ErrorCode::validation, "features for type '" + type + "' have " +
                                               std::to_string(feats.rows()) + " rows, expected " +
                                               std::to_string(count(type)));
    }
    if (labels) {
      if (labels->size() != num_targets())
        throw Error(ErrorCode::validation, "label vector length does not match target count");
      for (int y : *labels)
        if (y >= static_cast<int>(num_classes) || y < -1)
          throw Error(ErrorCode::validation, "label " + std::to_string(y) + " outside [0, " +
                                                 std::to_string(num_classes) + ")");
    }
  }
};

/// A typed connection pattern, e.g. P -PA-> A -AP-> P.
struct MetaPathSchema {
  std::string name;
  std::vector<std::string> type_sequence;
  std::vector<std::string> relation_sequence;

  std::size_t length() const { return relation_sequence.size(); }
  bool target_anchored(const std::string& target) const {
    return !type_sequence.empty() && type_sequence.front() == target &&
           type_sequence.back() == target;
  }
};

struct NodeRef {
  std::size_t type;  // index into HeteroGraph::node_types
  std::size_t id;
  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

struct MetaPathInstance {
  std::vector<NodeRef> nodes;
  std::size_t schema_id = 0;
  std::size_t anchor_position = 0;
  friend bool operator==(const MetaPathInstance&, const MetaPathInstance&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Resolves a schema step (from -name-> to) to a declared relation. A relation
/// with the given name and matching endpoints wins; otherwise the unique
/// relation between the two types is used, in either direction.
inline const Relation& resolve_step(const HeteroGraph& g, const std::string& from,
                                    const std::string& name, const std::string& to) {
  auto incident = [&](const Relation& r) {
    return (r.src_type == from && r.dst_type == to) || (r.src_type == to && r.dst_type == from);
  };
  for (const auto& r : g.relations)
    if (r.name == name && incident(r)) return r;
  const Relation* found = nullptr;
  for (const auto& r : g.relations) {
    if (!incident(r)) continue;
    if (found)
      throw Error(ErrorCode::validation, "meta-path step " + from + " -" + name + "-> " + to +
                                             " is ambiguous");
    found = &r;
  }
  if (!found)
    throw Error(ErrorCode::validation,
                "meta-path step " + from + " -" + name + "-> " + to + " has no relation");
  return *found;
}

}  // namespace detail

/// Parses `PAP = P -PA-> A -AP-> P`. The name and `=` are optional.
inline MetaPathSchema parse_metapath(const std::string& line) {
  MetaPathSchema s;
  std::string body = line;
  if (auto eq = line.find('='); eq != std::string::npos) {
    s.name = detail::trim(line.substr(0, eq));
    body = line.substr(eq + 1);
  }
  std::size_t pos = 0;
  auto next_type = [&]() {
    auto arrow = body.find('-', pos);
    std::string t = detail::trim(body.substr(pos, arrow == std::string::npos ? std::string::npos
                                                                              : arrow - pos));
    if (t.empty()) throw Error(ErrorCode::validation, "malformed meta-path: '" + line + "'");
    s.type_sequence.push_back(t);
    pos = arrow;
  };
  next_type();
  while (pos != std::string::npos) {
    auto close = body.find("->", pos + 1);
    if (close == std::string::npos)
      throw Error(ErrorCode::validation, "malformed meta-path: '" + line + "'");
    std::string rel = detail::trim(body.substr(pos + 1, close - pos - 1));
    if (rel.empty()) throw Error(ErrorCode::validation, "malformed meta-path: '" + line + "'");
    s.relation_sequence.push_back(rel);
    pos = close + 2;
    next_type();
  }
  if (s.type_sequence.size() < 2)
    throw Error(ErrorCode::validation, "meta-path needs at least one step: '" + line + "'");
  if (s.name.empty())
    for (const auto& t : s.type_sequence) s.name += t;
  return s;
}

/// Checks that every step of the schema resolves to a relation of `g`.
inline void validate_schema(const HeteroGraph& g, const MetaPathSchema& s) {
  if (s.type_sequence.size() != s.relation_sequence.size() + 1)
    throw Error(ErrorCode::validation, "meta-path '" + s.name + "' has inconsistent lengths");
  for (std::size_t i = 0; i < s.relation_sequence.size(); ++i)
    detail::resolve_step(g, s.type_sequence[i], s.relation_sequence[i], s.type_sequence[i + 1]);
}

/// Adjacency of each step, oriented from type_sequence[i] to type_sequence[i+1].
inline std::vector<SparseMatrix> schema_steps(const HeteroGraph& g, const MetaPathSchema& s) {
  validate_schema(g, s);
  std::vector<SparseMatrix> steps;
  for (std::size_t i = 0; i < s.relation_sequence.size(); ++i) {
    const auto& rel = detail::resolve_step(g, s.type_sequence[i], s.relation_sequence[i],
                                           s.type_sequence[i + 1]);
    steps.push_back(g.oriented(rel, s.type_sequence[i]));
  }
  return steps;
}

/// Meta-path adjacency over target nodes: entry (i, j), i != j, counts the
/// schemas under which j is reachable from i. Multiple paths within one
/// schema count once. The diagonal is left empty; self-loops are added by
/// normalize_gcn.
inline SparseMatrix build_metapath_adjacency(const HeteroGraph& g,
                                             const std::vector<MetaPathSchema>& schemas) {
  const std::size_t n = g.num_targets();
  for (const auto& s : schemas)
    if (!s.target_anchored(g.target_type))
      throw Error(ErrorCode::validation, "meta-path '" + s.name + "' does not start and end at target type '" +
                                             g.target_type + "'");
  std::vector<Triplet> entries;
  for (const auto& s : schemas) {
    auto steps = schema_steps(g, s);
    std::vector<std::uint32_t> stamp;
    std::uint32_t clock = 0;
    std::vector<std::size_t> frontier, next;
    for (std::size_t i = 0; i < n; ++i) {
      frontier.assign(1, i);
      for (const auto& step : steps) {
        if (stamp.size() < step.cols()) stamp.resize(step.cols(), 0);
        ++clock;
        next.clear();
        for (std::size_t u : frontier)
          for (std::size_t v : step.row_cols(u))
            if (stamp[v] != clock) {
              stamp[v] = clock;
              next.push_back(v);
            }
        std::swap(frontier, next);
      }
      std::sort(frontier.begin(), frontier.end());
      for (std::size_t j : frontier)
        if (j != i) entries.push_back({i, j, 1.0});
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(entries));
}

/// Samples schema-conforming walks that pass through an anchor at the first
/// target-type position of the schema. Each step prefers nodes not yet on the
/// walk and falls back to revisits only when every neighbor is already on it.
/// Walks that hit a dead end are discarded.
class MetaPathSampler {
 public:
  MetaPathSampler(const HeteroGraph& g, const MetaPathSchema& schema, std::size_t schema_id)
      : schema_id_(schema_id), steps_(schema_steps(g, schema)) {
    for (const auto& s : steps_) back_steps_.push_back(s.transpose());
    const auto& types = schema.type_sequence;
    for (const auto& t : types) type_ids_.push_back(g.type_index(t));
    auto it = std::find(types.begin(), types.end(), g.target_type);
    if (it != types.end()) anchor_position_ = static_cast<std::size_t>(it - types.begin());
  }

  std::optional<std::size_t> anchor_position() const { return anchor_position_; }

  std::vector<MetaPathInstance> sample(std::size_t anchor, std::size_t count,
                                       std::mt19937_64& rng) const {
    std::vector<MetaPathInstance> out;
    if (count == 0 || !anchor_position_) return out;
    const std::size_t apos = *anchor_position_;
    const std::size_t len = type_ids_.size();
    const bool dead = apos + 1 < len ? steps_[apos].row_nnz(anchor) == 0
                                     : back_steps_[apos - 1].row_nnz(anchor) == 0;
    if (dead) return out;

    std::vector<std::size_t> fresh;
    auto pick = [&](std::span<const std::size_t> candidates, const std::vector<NodeRef>& walk,
                    std::size_t type) -> std::optional<std::size_t> {
      if (candidates.empty()) return std::nullopt;
      fresh.clear();
      for (std::size_t c : candidates) {
        bool seen = false;
        for (const auto& w : walk)
          if (w.type == type && w.id == c) seen = true;
        if (!seen) fresh.push_back(c);
      }
      std::span<const std::size_t> pool =
          fresh.empty() ? candidates : std::span<const std::size_t>(fresh);
      std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
      return pool[dist(rng)];
    };

    const std::size_t attempts = 4 * count;
    for (std::size_t a = 0; a < attempts && out.size() < count; ++a) {
      std::vector<NodeRef> walk(len);
      walk[apos] = {type_ids_[apos], anchor};
      std::vector<NodeRef> placed{walk[apos]};
      bool ok = true;
      for (std::size_t p = apos; p + 1 < len && ok; ++p) {
        auto next = pick(steps_[p].row_cols(walk[p].id), placed, type_ids_[p + 1]);
        if (!next) {
          ok = false;
        } else {
          walk[p + 1] = {type_ids_[p + 1], *next};
          placed.push_back(walk[p + 1]);
        }
      }
      for (std::size_t p = apos; p > 0 && ok; --p) {
        auto prev = pick(back_steps_[p - 1].row_cols(walk[p].id), placed, type_ids_[p - 1]);
        if (!prev) {
          ok = false;
        } else {
          walk[p - 1] = {type_ids_[p - 1], *prev};
          placed.push_back(walk[p - 1]);
        }
      }
      if (ok) out.push_back({std::move(walk), schema_id_, apos});
    }
    return out;
  }

 private:
  std::size_t schema_id_;
  std::vector<SparseMatrix> steps_;
  std::vector<SparseMatrix> back_steps_;
  std::vector<std::size_t> type_ids_;
  std::optional<std::size_t> anchor_position_;
};

/// Up to `count` instances of `schema` through `anchor`; deterministic for a
/// given generator state.
inline std::vector<MetaPathInstance> sample_metapath_instances(const HeteroGraph& g,
                                                               const MetaPathSchema& schema,
                                                               std::size_t anchor,
                                                               std::size_t count,
                                                               std::mt19937_64& rng,
                                                               std::size_t schema_id = 0) {
  return MetaPathSampler(g, schema, schema_id).sample(anchor, count, rng);
}

}  // namespace hetprompt
