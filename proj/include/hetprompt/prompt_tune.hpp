#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hetprompt/config.hpp"
#include "hetprompt/encoder.hpp"
#include "hetprompt/metapath_template.hpp"
#include "hetprompt/prompt.hpp"

namespace hetprompt {

/// Pre-trained encoder outputs with every tensor detached.
struct FrozenEncoding {
  std::map<std::string, Tensor> projected;
  Tensor h_struct;
  Tensor h_sem;
  Tensor z_struct;
  Tensor z_sem;
  ProjectionHead head;
};

inline FrozenEncoding freeze_encoding(const EncoderGraph& eg, const EncoderParams& params,
                                      const RunConfig& cfg) {
  auto out = encode(eg, params.frozen(), cfg);
  FrozenEncoding f;
  f.projected = out.projected;
  f.h_struct = out.h_struct;
  f.h_sem = out.h_sem;
  f.z_struct = out.z_struct;
  f.z_sem = out.z_sem;
  auto frozen = params.frozen();
  f.head = frozen.head;
  return f;
}

inline Matrix label_representation(const FrozenEncoding& enc, LabelView view) {
  switch (view) {
    case LabelView::structural: return enc.h_struct.value();
    case LabelView::semantic: return enc.h_sem.value();
    case LabelView::mean: {
      Matrix m = enc.h_struct.value();
      for (std::size_t k = 0; k < m.size(); ++k) m[k] = 0.5 * (m[k] + enc.h_sem.value()[k]);
      return m;
    }
  }
  return enc.h_struct.value();
}

struct PromptEpoch {
  std::size_t epoch;
  double total;
  double l1;
  double l2;
  double l0;
  double label;
  double wall_ms;
};

struct PromptTuneResult {
  PromptState state;
  DiscriminatorParams discriminator;
  std::vector<PromptEpoch> log;
};

/// Trains prompt tokens, prompt logits and the template discriminator with
/// the encoder frozen:
///   alpha L1 + (1 - alpha) L2 + beta L0 [+ gamma L_label when labels are given].
inline PromptTuneResult prompt_tune(const HeteroGraph& g,
                                    const std::vector<MetaPathSchema>& schemas,
                                    const FrozenEncoding& enc, const RunConfig& cfg,
                                    std::size_t num_prompts,
                                    const std::optional<FewShotLabels>& labels,
                                    std::uint64_t seed) {
  cfg.validate();
  if (labels) {
    if (g.num_classes != num_prompts)
      throw Error(ErrorCode::config, "few-shot labels cover " + std::to_string(g.num_classes) +
                                         " classes but there are " + std::to_string(num_prompts) +
                                         " prompt tokens");
    labels->validate(num_prompts);
  }
  const std::size_t dim = enc.h_struct.cols();
  PromptTuneResult r{init_prompt_state(g.num_targets(), num_prompts, dim, cfg.logit_init_std, seed),
                     init_discriminator(dim, seed),
                     {}};
  auto params = r.state.parameters();
  for (auto& p : r.discriminator.parameters()) params.push_back(p);
  check_unique_names(params);
  AdamState adam;
  adam.lr = cfg.prompt_lr;
  zero_grads(params);

  const auto opts = contrastive_options(cfg);
  const auto embeddings = make_template_embeddings(g, enc.projected);
  const Matrix label_repr = label_representation(enc, cfg.label_view);
  const bool use_templates = cfg.alpha < 1.0 && cfg.samples_per_node > 0;

  for (std::size_t epoch = 0; epoch < cfg.prompt_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    Tensor l1;
    if (cfg.prompt_anchor != AnchorView::semantic)
      l1 = prompt_contrastive_loss(r.state, enc.z_struct, enc.head, opts);
    if (cfg.prompt_anchor != AnchorView::structural) {
      Tensor sem = prompt_contrastive_loss(r.state, enc.z_sem, enc.head, opts);
      l1 = l1.defined() ? add(l1, sem) : sem;
    }
    Tensor l2 = Tensor::constant(Matrix(1, 1, 0.0));
    if (use_templates) {
      auto groups = collect_epoch_templates(g, schemas, num_prompts, cfg.samples_per_node,
                                            derive_seed(seed, 10'000 + epoch));
      l2 = template_loss(r.discriminator, r.state, groups, embeddings);
    }
    Tensor l0 = orthogonal_loss(r.state);
    Tensor total = add(add(scale(l1, cfg.alpha), scale(l2, 1.0 - cfg.alpha)), scale(l0, cfg.beta));
    double label_value = 0.0;
    if (labels) {
      Tensor ll = few_shot_label_loss(r.state.tokens, label_repr, *labels, cfg.label_margin);
      label_value = ll.item();
      if (cfg.gamma != 0.0) total = add(total, scale(ll, cfg.gamma));
    }
    if (!std::isfinite(total.item()))
      throw Error(ErrorCode::numeric, "prompt loss is not finite at epoch " + std::to_string(epoch) +
                                          " (lr " + std::to_string(cfg.prompt_lr) + ")");
    backward(total);
    adam_step(adam, params);
    auto t1 = std::chrono::steady_clock::now();
    r.log.push_back({epoch, total.item(), l1.item(), l2.item(), l0.item(), label_value,
                     std::chrono::duration<double, std::milli>(t1 - t0).count()});
  }
  if (labels) {
    r.state.class_binding.resize(num_prompts);
    for (std::size_t p = 0; p < num_prompts; ++p) r.state.class_binding[p] = static_cast<int>(p);
  }
  return r;
}

}  // namespace hetprompt
