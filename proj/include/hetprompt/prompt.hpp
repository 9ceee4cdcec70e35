#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hetprompt/encoder.hpp"
#include "hetprompt/init.hpp"
#include "hetprompt/optim.hpp"
#include "hetprompt/tensor.hpp"

namespace hetprompt {

/// Cluster prompts: one learnable token per cluster, densely linked to every
/// target node through trainable logits. The prompt-target adjacency is the
/// row softmax of the logits.
struct PromptState {
  Tensor tokens;  // N_prompts x d
  Tensor logits;  // N_target x N_prompts
  std::vector<int> class_binding;  // prompt index -> class id, empty when unknown

  std::size_t num_prompts() const { return tokens.rows(); }
  std::size_t num_targets() const { return logits.rows(); }

  std::vector<Parameter> parameters() const {
    return {{"prompt/tokens", tokens}, {"prompt/logits", logits}};
  }
};

/// Tokens start as random orthonormal rows; logits as small Gaussian noise.
inline PromptState init_prompt_state(std::size_t num_targets, std::size_t num_prompts,
                                     std::size_t dim, double logit_std, std::uint64_t seed) {
  if (num_prompts == 0) throw Error(ErrorCode::config, "at least one prompt token is required");
  std::mt19937_64 rng(derive_seed(seed, 202));
  PromptState s;
  s.tokens = Tensor::variable(random_orthonormal_rows(num_prompts, dim, rng));
  s.logits = Tensor::variable(gaussian(num_targets, num_prompts, logit_std, rng));
  return s;
}

inline Tensor prompt_adjacency(const PromptState& s) { return softmax_rows(s.logits); }

/// Target features aggregated from the prompt tokens.
inline Tensor cluster_features(const PromptState& s) {
  return matmul(prompt_adjacency(s), s.tokens);
}

/// Contrastive loss between the frozen pre-trained projections and the
/// projected cluster features. Only the prompt state may carry gradients.
inline Tensor prompt_contrastive_loss(const PromptState& s, const Tensor& z_anchor,
                                      const ProjectionHead& head, const ContrastiveOptions& opt) {
  if (z_anchor.requires_grad() || head.hidden.requires_grad() || head.out.requires_grad())
    throw Error(ErrorCode::config,
                "prompt_contrastive_loss: encoder outputs must be frozen during prompting");
  return contrastive_loss(z_anchor, project_head(cluster_features(s), head), opt);
}

/// ||H H^T - I||_F^2 over the prompt tokens.
inline Tensor orthogonal_loss(const PromptState& s) {
  Tensor gram = matmul(s.tokens, transpose(s.tokens));
  return sum(square(sub(gram, Tensor::constant(Matrix::identity(s.num_prompts())))));
}

struct FewShotLabels {
  std::vector<std::pair<std::size_t, int>> pairs;  // (target node, class)
  std::size_t shots = 0;

  void validate(std::size_t num_classes) const {
    if (pairs.empty()) throw Error(ErrorCode::validation, "few-shot label set is empty");
    std::vector<std::size_t> per_class(num_classes, 0);
    for (const auto& [node, cls] : pairs) {
      if (cls < 0 || static_cast<std::size_t>(cls) >= num_classes)
        throw Error(ErrorCode::validation, "few-shot class " + std::to_string(cls) +
                                               " outside [0, " + std::to_string(num_classes) + ")");
      ++per_class[static_cast<std::size_t>(cls)];
    }
    for (std::size_t c = 0; c < num_classes; ++c)
      if (per_class[c] != shots)
        throw Error(ErrorCode::validation, "class " + std::to_string(c) + " has " +
                                               std::to_string(per_class[c]) + " labeled nodes, expected " +
                                               std::to_string(shots));
  }
};

/// Sum over labeled nodes of the Euclidean distance to the node's own prompt
/// minus the mean distance to every other prompt. With a margin m, each
/// node's term becomes max(0, term + m).
inline Tensor few_shot_label_loss(const Tensor& tokens, const Matrix& target_repr,
                                  const FewShotLabels& labels,
                                  std::optional<double> margin = std::nullopt) {
  if (labels.pairs.empty()) throw Error(ErrorCode::validation, "few-shot label set is empty");
  const std::size_t np = tokens.rows();
  if (target_repr.cols() != tokens.cols())
    throw Error(ErrorCode::shape, "few_shot_label_loss: representation dim " +
                                      std::to_string(target_repr.cols()) + " vs token dim " +
                                      std::to_string(tokens.cols()));
  const std::size_t n = labels.pairs.size();
  std::vector<std::size_t> node_rows, prompt_rows;
  Matrix weights(n, np);
  const double neg = np > 1 ? -1.0 / static_cast<double>(np - 1) : 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto [node, cls] = labels.pairs[r];
    if (node >= target_repr.rows())
      throw Error(ErrorCode::validation, "few-shot node " + std::to_string(node) + " out of range");
    if (cls < 0 || static_cast<std::size_t>(cls) >= np)
      throw Error(ErrorCode::validation, "few-shot class " + std::to_string(cls) +
                                             " has no prompt token");
    for (std::size_t p = 0; p < np; ++p) {
      node_rows.push_back(node);
      prompt_rows.push_back(p);
      weights(r, p) = p == static_cast<std::size_t>(cls) ? 1.0 : neg;
    }
  }
  Tensor diff = sub(gather_rows(Tensor::constant(target_repr), node_rows),
                    gather_rows(tokens, prompt_rows));
  Tensor dist = reshape(sqrt(row_sum(square(diff))), n, np);
  Tensor per_node = row_sum(mul(dist, Tensor::constant(std::move(weights))));
  if (margin) per_node = relu(add_scalar(per_node, *margin));
  return sum(per_node);
}

/// Prompt index with the largest adjacency weight; ties go to the lowest index.
inline std::size_t strongest_prompt(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

/// Class of each node: its strongest prompt, mapped through the prompt-class
/// binding when one is set.
inline std::vector<int> classify(const PromptState& s, const std::vector<std::size_t>& nodes) {
  Matrix adj = prompt_adjacency(s).value();
  std::vector<int> out;
  out.reserve(nodes.size());
  for (std::size_t i : nodes) {
    if (i >= adj.rows())
      throw Error(ErrorCode::validation, "node " + std::to_string(i) + " out of range");
    auto p = strongest_prompt(adj.row(i));
    out.push_back(s.class_binding.empty() ? static_cast<int>(p) : s.class_binding[p]);
  }
  return out;
}

}  // namespace hetprompt
