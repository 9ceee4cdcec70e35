#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "hetprompt/checkpoint.hpp"
#include "hetprompt/config.hpp"
#include "hetprompt/graph.hpp"
#include "hetprompt/init.hpp"
#include "hetprompt/optim.hpp"
#include "hetprompt/tensor.hpp"

namespace hetprompt {

/// Direct neighbors of the target type through one relation.
struct NeighborChannel {
  std::string relation;
  std::string neighbor_type;
  SparseMatrix adjacency;  // N_target x N_neighbor, row-normalized
};

/// Graph-derived constants consumed by the encoder.
struct EncoderGraph {
  std::string target_type;
  std::size_t num_targets = 0;
  std::vector<NeighborChannel> channels;
  SparseMatrix metapath_adjacency;  // GCN-normalized, with self-loops
  Matrix isolated;                  // N_target x 1; 1 where a node has no direct neighbor
  std::map<std::string, Matrix> features;
};

inline EncoderGraph prepare_encoder_graph(const HeteroGraph& g,
                                          const std::vector<MetaPathSchema>& schemas) {
  if (schemas.empty()) throw Error(ErrorCode::config, "at least one meta-path schema is required");
  EncoderGraph eg;
  eg.target_type = g.target_type;
  eg.num_targets = g.num_targets();
  std::vector<std::size_t> degree(eg.num_targets, 0);
  for (const auto& rel : g.relations) {
    if (rel.src_type != g.target_type && rel.dst_type != g.target_type) continue;
    NeighborChannel ch;
    ch.relation = rel.name;
    ch.neighbor_type = rel.src_type == g.target_type ? rel.dst_type : rel.src_type;
    auto oriented = g.oriented(rel, g.target_type);
    for (std::size_t i = 0; i < eg.num_targets; ++i) degree[i] += oriented.row_nnz(i);
    ch.adjacency = normalize_row(oriented);
    eg.channels.push_back(std::move(ch));
  }
  if (eg.channels.empty())
    throw Error(ErrorCode::validation, "no relation is incident to target type '" + g.target_type + "'");
  eg.isolated = Matrix(eg.num_targets, 1);
  for (std::size_t i = 0; i < eg.num_targets; ++i) eg.isolated[i] = degree[i] == 0 ? 1.0 : 0.0;
  eg.metapath_adjacency = normalize_gcn(build_metapath_adjacency(g, schemas));

  auto need = [&](const std::string& type) {
    if (!g.features.count(type))
      throw Error(ErrorCode::validation, "missing features for node type '" + type + "'");
  };
  need(g.target_type);
  for (const auto& ch : eg.channels) need(ch.neighbor_type);
  // Types off the direct neighborhood are still projected; meta-path templates use them.
  eg.features = g.features;
  return eg;
}

/// Shared two-layer projection head into the contrastive space.
struct ProjectionHead {
  Tensor hidden;  // d x d_p
  Tensor out;     // d_p x d_p
};

struct EncoderParams {
  std::map<std::string, Tensor> type_projection;  // per node type, d_t x d
  std::vector<std::string> channel_relations;
  std::vector<Tensor> channel_weights;  // per channel, d x d
  Tensor attention;                     // 2d x 1
  Tensor semantic_weight;               // d x d
  ProjectionHead head;

  std::size_t hidden_dim() const { return semantic_weight.rows(); }

  std::vector<Parameter> parameters() const {
    std::vector<Parameter> ps;
    for (const auto& [type, t] : type_projection) ps.push_back({"type_projection/" + type, t});
    for (std::size_t k = 0; k < channel_weights.size(); ++k)
      ps.push_back({"relation_weight/" + channel_relations[k], channel_weights[k]});
    ps.push_back({"attention", attention});
    ps.push_back({"semantic_weight", semantic_weight});
    ps.push_back({"head/hidden", head.hidden});
    ps.push_back({"head/out", head.out});
    return ps;
  }

  /// Copy whose tensors are constants, for use downstream of pre-training.
  EncoderParams frozen() const {
    EncoderParams f;
    for (const auto& [type, t] : type_projection) f.type_projection.emplace(type, t.detach());
    f.channel_relations = channel_relations;
    for (const auto& w : channel_weights) f.channel_weights.push_back(w.detach());
    f.attention = attention.detach();
    f.semantic_weight = semantic_weight.detach();
    f.head = {head.hidden.detach(), head.out.detach()};
    return f;
  }

  bool is_frozen() const {
    for (const auto& p : parameters())
      if (p.tensor.requires_grad()) return false;
    return true;
  }
};

inline EncoderParams init_encoder(const EncoderGraph& eg, const RunConfig& cfg,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 101));
  const std::size_t d = cfg.hidden_dim, dp = cfg.projection_dim;
  EncoderParams p;
  for (const auto& [type, feats] : eg.features)
    p.type_projection.emplace(type, Tensor::variable(xavier_uniform(feats.cols(), d, rng)));
  for (const auto& ch : eg.channels) {
    p.channel_relations.push_back(ch.relation);
    p.channel_weights.push_back(Tensor::variable(xavier_uniform(d, d, rng)));
  }
  p.attention = Tensor::variable(xavier_uniform(2 * d, 1, rng));
  p.semantic_weight = Tensor::variable(xavier_uniform(d, d, rng));
  p.head.hidden = Tensor::variable(xavier_uniform(d, dp, rng));
  p.head.out = Tensor::variable(xavier_uniform(dp, dp, rng));
  return p;
}

inline Tensor apply_activation(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::elu: return elu(x);
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

/// h_i = M_type x_i for every node of every type with features.
inline std::map<std::string, Tensor> project_features(const EncoderGraph& eg,
                                                      const EncoderParams& p) {
  std::map<std::string, Tensor> out;
  for (const auto& [type, feats] : eg.features) {
    auto it = p.type_projection.find(type);
    if (it == p.type_projection.end())
      throw Error(ErrorCode::validation, "no projection for node type '" + type + "'");
    if (feats.cols() != it->second.rows())
      throw Error(ErrorCode::shape, "features of type '" + type + "' have dim " +
                                        std::to_string(feats.cols()) + ", projection expects " +
                                        std::to_string(it->second.rows()));
    out.emplace(type, matmul(Tensor::constant(feats), it->second));
  }
  return out;
}

struct StructuralView {
  Tensor embedding;  // N_target x d
  Tensor attention;  // N_target x K, rows sum to 1
};

/// Type-wise propagation over each neighbor channel, fused per node by
/// attention over channels.
inline StructuralView structural_view(const EncoderGraph& eg,
                                      const std::map<std::string, Tensor>& projected,
                                      const EncoderParams& p, double slope,
                                      Activation activation) {
  const Tensor& h_target = projected.at(eg.target_type);
  const std::size_t d = p.hidden_dim();
  Tensor a_self = slice_rows(p.attention, 0, d);
  Tensor a_neigh = slice_rows(p.attention, d, 2 * d);
  Tensor self_score = matmul(h_target, a_self);

  std::vector<Tensor> per_channel, scores;
  for (std::size_t k = 0; k < eg.channels.size(); ++k) {
    const auto& ch = eg.channels[k];
    Tensor agg = sparse_dense_matmul(ch.adjacency, projected.at(ch.neighbor_type));
    Tensor hk = apply_activation(matmul(agg, p.channel_weights[k]), activation);
    scores.push_back(leaky_relu(add(self_score, matmul(hk, a_neigh)), slope));
    per_channel.push_back(hk);
  }
  Tensor alpha = softmax_rows(concat_cols(scores));
  Tensor fused = scale_rows(per_channel[0], slice_cols(alpha, 0, 1));
  for (std::size_t k = 1; k < per_channel.size(); ++k)
    fused = add(fused, scale_rows(per_channel[k], slice_cols(alpha, k, k + 1)));

  bool any_isolated = false;
  for (double v : eg.isolated.values()) any_isolated = any_isolated || v != 0.0;
  if (any_isolated) {
    Matrix keep(eg.isolated.rows(), 1);
    for (std::size_t i = 0; i < keep.rows(); ++i) keep[i] = 1.0 - eg.isolated[i];
    fused = add(scale_rows(fused, Tensor::constant(keep)),
                scale_rows(h_target, Tensor::constant(eg.isolated)));
  }
  return {fused, alpha};
}

/// sigmoid(A_meta H_target W) with the normalized meta-path adjacency.
inline Tensor semantic_view(const SparseMatrix& metapath_adjacency, const Tensor& h_target,
                            const EncoderParams& p) {
  return sigmoid(matmul(sparse_dense_matmul(metapath_adjacency, h_target), p.semantic_weight));
}

/// Rows of W_out elu(W_hidden h), scaled to unit length.
inline Tensor project_head(const Tensor& h, const ProjectionHead& head) {
  return l2_normalize_rows(matmul(elu(matmul(h, head.hidden)), head.out));
}

struct ContrastiveOptions {
  double temperature = 0.5;
  bool symmetric = true;
  bool include_positive = true;
};

inline ContrastiveOptions contrastive_options(const RunConfig& c) {
  return {c.temperature, c.symmetric_loss, c.include_positive_in_denominator};
}

/// InfoNCE between row-aligned unit vectors: row i of `za` and row i of `zb`
/// are the positive pair, all other rows of `zb` are negatives. Mean over rows.
inline Tensor contrastive_loss(const Tensor& za, const Tensor& zb, const ContrastiveOptions& opt) {
  if (!za.value().same_shape(zb.value()))
    throw Error(ErrorCode::shape, "contrastive_loss: " + za.value().shape_string() + " vs " +
                                      zb.value().shape_string());
  Tensor sim = scale(matmul(za, transpose(zb)), 1.0 / opt.temperature);
  Tensor mask;
  if (!opt.include_positive) {
    Matrix m(sim.rows(), sim.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) = -std::numeric_limits<double>::infinity();
    mask = Tensor::constant(std::move(m));
  }
  auto one_way = [&](const Tensor& s) {
    Tensor logits = mask.defined() ? add(s, mask) : s;
    return mean(sub(logsumexp_rows(logits), diagonal(s)));
  };
  if (!opt.symmetric) return one_way(sim);
  return scale(add(one_way(sim), one_way(transpose(sim))), 0.5);
}

struct EncoderOutput {
  std::map<std::string, Tensor> projected;
  Tensor attention;
  Tensor h_struct;
  Tensor h_sem;
  Tensor z_struct;
  Tensor z_sem;
};

inline EncoderOutput encode(const EncoderGraph& eg, const EncoderParams& p, const RunConfig& cfg) {
  EncoderOutput out;
  out.projected = project_features(eg, p);
  auto sv = structural_view(eg, out.projected, p, cfg.leaky_relu_slope, cfg.structural_activation);
  out.h_struct = sv.embedding;
  out.attention = sv.attention;
  out.h_sem = semantic_view(eg.metapath_adjacency, out.projected.at(eg.target_type), p);
  out.z_struct = project_head(out.h_struct, p.head);
  out.z_sem = project_head(out.h_sem, p.head);
  return out;
}

inline Tensor pretrain_loss(const EncoderGraph& eg, const EncoderParams& p, const RunConfig& cfg) {
  auto out = encode(eg, p, cfg);
  return contrastive_loss(out.z_struct, out.z_sem, contrastive_options(cfg));
}

struct PretrainEpoch {
  std::size_t epoch;
  double loss;
  double wall_ms;
};

struct PretrainResult {
  EncoderParams params;
  std::vector<PretrainEpoch> log;
};

/// Adam on the contrastive objective between the two views.
inline PretrainResult pretrain(const EncoderGraph& eg, const RunConfig& cfg, std::uint64_t seed) {
  PretrainResult result{init_encoder(eg, cfg, seed), {}};
  auto params = result.params.parameters();
  AdamState adam;
  adam.lr = cfg.lr;
  zero_grads(params);
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    const std::string where =
        "pre-training loss is not finite at epoch " + std::to_string(epoch) + " (lr " + std::to_string(cfg.lr) + ")";
    Tensor loss;
    try {
      loss = pretrain_loss(eg, result.params, cfg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numeric) throw;
      throw Error(ErrorCode::numeric, where + ": " + e.what());
    }
    if (!std::isfinite(loss.item())) throw Error(ErrorCode::numeric, where);
    backward(loss);
    adam_step(adam, params);
    auto t1 = std::chrono::steady_clock::now();
    result.log.push_back(
        {epoch, loss.item(), std::chrono::duration<double, std::milli>(t1 - t0).count()});
  }
  return result;
}

}  // namespace hetprompt
