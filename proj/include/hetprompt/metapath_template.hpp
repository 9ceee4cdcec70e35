#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hetprompt/graph.hpp"
#include "hetprompt/init.hpp"
#include "hetprompt/optim.hpp"
#include "hetprompt/prompt.hpp"
#include "hetprompt/tensor.hpp"

namespace hetprompt {

struct TemplateToken {
  bool is_prompt = false;
  NodeRef node{};          // valid when !is_prompt
  std::size_t prompt = 0;  // valid when is_prompt
  friend bool operator==(const TemplateToken&, const TemplateToken&) = default;
};

/// A meta-path instance with its anchor target duplicated and one prompt
/// token inserted between the two copies: ... X, t, p, t, X ...
struct TemplatePath {
  std::vector<TemplateToken> tokens;
  std::size_t prompt_index = 0;
  std::size_t anchor = 0;
};

/// All prompt variants of one sampled instance.
struct TemplateGroup {
  std::size_t anchor = 0;
  std::vector<TemplatePath> paths;  // one per prompt, in prompt order
};

inline std::vector<TemplatePath> build_template_paths(const MetaPathInstance& instance,
                                                      std::size_t num_prompts,
                                                      std::size_t target_type) {
  if (instance.anchor_position >= instance.nodes.size() ||
      instance.nodes[instance.anchor_position].type != target_type)
    throw Error(ErrorCode::validation, "meta-path instance has no target node at its anchor position");
  const NodeRef anchor = instance.nodes[instance.anchor_position];
  std::vector<TemplatePath> out;
  for (std::size_t p = 0; p < num_prompts; ++p) {
    TemplatePath path;
    path.prompt_index = p;
    path.anchor = anchor.id;
    for (std::size_t k = 0; k < instance.nodes.size(); ++k) {
      path.tokens.push_back({false, instance.nodes[k], 0});
      if (k == instance.anchor_position) {
        path.tokens.push_back({true, {}, p});
        path.tokens.push_back({false, anchor, 0});
      }
    }
    out.push_back(std::move(path));
  }
  return out;
}

/// Frozen projected node embeddings stacked by type; prompt rows follow them
/// when a lookup table is assembled.
struct TemplateEmbeddings {
  Matrix nodes;
  std::vector<std::optional<std::size_t>> type_offset;  // by node type index

  std::size_t row_of(const NodeRef& n) const {
    if (n.type >= type_offset.size() || !type_offset[n.type])
      throw Error(ErrorCode::validation, "no embedding for node type index " + std::to_string(n.type));
    return *type_offset[n.type] + n.id;
  }

  std::size_t row_of(const TemplateToken& t) const {
    return t.is_prompt ? nodes.rows() + t.prompt : row_of(t.node);
  }
};

inline TemplateEmbeddings make_template_embeddings(const HeteroGraph& g,
                                                   const std::map<std::string, Tensor>& projected) {
  TemplateEmbeddings e;
  e.type_offset.resize(g.node_types.size());
  std::vector<double> data;
  std::size_t rows = 0, dim = 0;
  for (std::size_t t = 0; t < g.node_types.size(); ++t) {
    auto it = projected.find(g.node_types[t]);
    if (it == projected.end()) continue;
    const Matrix& m = it->second.value();
    dim = m.cols();
    e.type_offset[t] = rows;
    rows += m.rows();
    data.insert(data.end(), m.values().begin(), m.values().end());
  }
  e.nodes = Matrix(rows, dim, std::move(data));
  return e;
}

/// Embedding vectors of a path, prompt rows taken from `tokens`.
inline Matrix embedding_sequence(const TemplatePath& path, const TemplateEmbeddings& e,
                                 const Matrix& tokens) {
  Matrix out(path.tokens.size(), e.nodes.cols());
  for (std::size_t k = 0; k < path.tokens.size(); ++k) {
    const auto& t = path.tokens[k];
    auto src = t.is_prompt ? tokens.row(t.prompt) : e.nodes.row(e.row_of(t.node));
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

/// Conv1d -> ELU -> mean pool -> two-layer perceptron -> sigmoid.
struct DiscriminatorParams {
  Tensor kernel;  // 3d x d
  Tensor hidden;  // d x h
  Tensor out;     // h x 1

  std::vector<Parameter> parameters() const {
    return {{"discriminator/kernel", kernel},
            {"discriminator/hidden", hidden},
            {"discriminator/out", out}};
  }
};

inline DiscriminatorParams init_discriminator(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 303));
  const std::size_t h = std::max<std::size_t>(1, dim / 2);
  DiscriminatorParams d;
  d.kernel = Tensor::variable(xavier_uniform(3 * dim, dim, rng));
  d.hidden = Tensor::variable(xavier_uniform(dim, h, rng));
  d.out = Tensor::variable(xavier_uniform(h, 1, rng));
  return d;
}

/// Pre-sigmoid scores for a batch of equal-length sequences stacked row-wise.
inline Tensor discriminator_logits(const DiscriminatorParams& d, const Tensor& sequences,
                                   std::size_t length) {
  Tensor pooled = mean_pool_seq(elu(conv1d_features(sequences, length, d.kernel)), length);
  return matmul(elu(matmul(pooled, d.hidden)), d.out);
}

/// Validity probability of one embedded path.
inline double discriminate(const DiscriminatorParams& d, const Matrix& sequence) {
  if (sequence.rows() == 0) throw Error(ErrorCode::shape, "discriminate: empty sequence");
  return sigmoid(discriminator_logits(d, Tensor::constant(sequence), sequence.rows())).item();
}

/// Adjacency-weighted discriminator loss. Within each group the prompt with
/// the strongest link to the anchor is the positive path; every path is
/// weighted by its prompt's adjacency weight. Averaged over groups.
inline Tensor template_loss(const DiscriminatorParams& d, const PromptState& state,
                            const std::vector<TemplateGroup>& groups,
                            const TemplateEmbeddings& embeddings) {
  if (groups.empty()) return Tensor::constant(Matrix(1, 1, 0.0));
  Tensor table = concat_rows({Tensor::constant(embeddings.nodes), state.tokens});
  Tensor adjacency = prompt_adjacency(state);
  const Matrix& adj = adjacency.value();

  struct Bucket {
    std::vector<std::size_t> rows;
    std::vector<std::pair<std::size_t, std::size_t>> weight_index;
    std::vector<double> sign;
  };
  std::map<std::size_t, Bucket> buckets;
  for (const auto& group : groups) {
    auto row = adj.row(group.anchor);
    const std::size_t positive = strongest_prompt(row);
    if (row.size() > 1 && std::all_of(row.begin(), row.end(), [&](double v) { return v == row[0]; }))
      warn("anchor " + std::to_string(group.anchor) +
           " has a uniform prompt row; using prompt 0 as the positive path");
    for (const auto& path : group.paths) {
      auto& b = buckets[path.tokens.size()];
      for (const auto& t : path.tokens) b.rows.push_back(embeddings.row_of(t));
      b.weight_index.emplace_back(group.anchor, path.prompt_index);
      b.sign.push_back(path.prompt_index == positive ? 1.0 : -1.0);
    }
  }

  Tensor total;
  for (auto& [length, b] : buckets) {
    Tensor logits = discriminator_logits(d, gather_rows(table, std::move(b.rows)), length);
    const std::size_t n = b.sign.size();
    // log D for positives, log(1 - D) = log sigmoid(-x) for negatives.
    Tensor log_terms = log_sigmoid(mul(logits, Tensor::constant(Matrix(n, 1, std::move(b.sign)))));
    Tensor weighted = sum(mul(gather_entries(adjacency, std::move(b.weight_index)), log_terms));
    total = total.defined() ? add(total, weighted) : weighted;
  }
  return scale(total, -1.0 / static_cast<double>(groups.size()));
}

/// Samples up to `samples_per_node` instances per target node, cycling over
/// the schemas, and expands each into its prompt templates. Node i draws from
/// its own stream seeded with seed ^ i.
inline std::vector<TemplateGroup> collect_epoch_templates(const HeteroGraph& g,
                                                          const std::vector<MetaPathSchema>& schemas,
                                                          std::size_t num_prompts,
                                                          std::size_t samples_per_node,
                                                          std::uint64_t seed) {
  std::vector<TemplateGroup> groups;
  if (samples_per_node == 0 || schemas.empty()) return groups;
  std::vector<MetaPathSampler> samplers;
  for (std::size_t s = 0; s < schemas.size(); ++s) samplers.emplace_back(g, schemas[s], s);
  const std::size_t target = g.type_index(g.target_type);
  for (std::size_t i = 0; i < g.num_targets(); ++i) {
    std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(i));
    for (std::size_t k = 0; k < samples_per_node; ++k) {
      for (const auto& inst : samplers[k % samplers.size()].sample(i, 1, rng))
        groups.push_back({i, build_template_paths(inst, num_prompts, target)});
    }
  }
  return groups;
}

}  // namespace hetprompt
