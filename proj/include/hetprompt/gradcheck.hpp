#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hetprompt/dataset_io.hpp"
#include "hetprompt/encoder.hpp"
#include "hetprompt/metapath_template.hpp"
#include "hetprompt/prompt.hpp"
#include "hetprompt/prompt_tune.hpp"

namespace hetprompt {

/// Nine-node graph: four papers, three authors, two subjects, two classes.
inline Dataset toy_dataset() {
  Dataset ds;
  auto& g = ds.graph;
  g.node_types = {"P", "A", "S"};
  g.node_counts = {4, 3, 2};
  g.target_type = "P";
  g.num_classes = 2;
  g.relations.push_back({"PA", "P", "A",
                         SparseMatrix::from_triplets(4, 3, {{0, 0, 1}, {1, 0, 1}, {1, 1, 1},
                                                            {2, 1, 1}, {2, 2, 1}, {3, 2, 1}})});
  g.relations.push_back({"PS", "P", "S",
                         SparseMatrix::from_triplets(4, 2, {{0, 0, 1}, {1, 0, 1}, {2, 1, 1},
                                                            {3, 1, 1}})});
  g.features["P"] = Matrix::from_rows({{1.0, 0.2, -0.3}, {0.8, -0.1, 0.4}, {-0.5, 0.9, 0.1},
                                       {-0.7, 0.6, -0.2}});
  g.features["A"] = Matrix::from_rows({{0.3, -0.6}, {0.1, 0.5}, {-0.4, 0.2}});
  g.features["S"] = Matrix::from_rows({{0.9, -0.2}, {-0.3, 0.7}});
  g.labels = std::vector<int>{0, 0, 1, 1};
  ds.metapaths = {parse_metapath("PAP = P -PA-> A -AP-> P"),
                  parse_metapath("PSP = P -PS-> S -SP-> P")};
  g.validate();
  return ds;
}

struct GradCheckResult {
  std::string loss;
  std::string parameter;
  std::size_t entries = 0;
  double max_relative_error = 0.0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is near zero from being judged on round-off alone.
inline double gradient_relative_error(double analytic, double numeric, double floor = 1e-4) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of `loss` against the analytic gradient of every
/// entry of every parameter.
inline std::vector<GradCheckResult> check_gradients(const std::string& name,
                                                    std::vector<Parameter> params,
                                                    const std::function<Tensor()>& loss,
                                                    double h = 1e-6) {
  zero_grads(params);
  backward(loss());
  std::vector<Matrix> analytic;
  for (const auto& p : params) analytic.push_back(p.tensor.grad());
  std::vector<GradCheckResult> out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    GradCheckResult r{name, params[k].name, 0, 0.0};
    Matrix& v = params[k].tensor.mutable_value();
    for (std::size_t e = 0; e < v.size(); ++e) {
      const double keep = v[e];
      v[e] = keep + h;
      const double up = loss().item();
      v[e] = keep - h;
      const double down = loss().item();
      v[e] = keep;
      const double numeric = (up - down) / (2.0 * h);
      r.max_relative_error =
          std::max(r.max_relative_error, gradient_relative_error(analytic[k][e], numeric));
      ++r.entries;
    }
    out.push_back(r);
  }
  zero_grads(params);
  return out;
}

inline RunConfig gradcheck_config() {
  RunConfig cfg;
  cfg.hidden_dim = 4;
  cfg.projection_dim = 3;
  cfg.samples_per_node = 2;
  return cfg;
}

/// Gradient check of every training loss on the toy graph.
inline std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed = 0) {
  const Dataset ds = toy_dataset();
  const auto& g = ds.graph;
  const RunConfig cfg = gradcheck_config();
  const auto eg = prepare_encoder_graph(g, ds.metapaths);
  std::vector<GradCheckResult> all;
  auto append = [&](std::vector<GradCheckResult> r) { all.insert(all.end(), r.begin(), r.end()); };

  auto enc_params = init_encoder(eg, cfg, seed);
  append(check_gradients("pretrain", enc_params.parameters(),
                         [&] { return pretrain_loss(eg, enc_params, cfg); }));

  const auto frozen = freeze_encoding(eg, enc_params, cfg);
  const auto opts = contrastive_options(cfg);
  PromptState state = init_prompt_state(g.num_targets(), 2, cfg.hidden_dim, 0.5, seed);
  append(check_gradients("prompt_contrastive", state.parameters(), [&] {
    return add(prompt_contrastive_loss(state, frozen.z_struct, frozen.head, opts),
               prompt_contrastive_loss(state, frozen.z_sem, frozen.head, opts));
  }));
  append(check_gradients("orthogonal", {state.parameters()[0]},
                         [&] { return orthogonal_loss(state); }));

  auto disc = init_discriminator(cfg.hidden_dim, seed);
  const auto groups = collect_epoch_templates(g, ds.metapaths, state.num_prompts(),
                                              cfg.samples_per_node, derive_seed(seed, 10'000));
  const auto embeddings = make_template_embeddings(g, frozen.projected);
  auto template_params = state.parameters();
  for (const auto& p : disc.parameters()) template_params.push_back(p);
  append(check_gradients("template", template_params,
                         [&] { return template_loss(disc, state, groups, embeddings); }));

  FewShotLabels labels{{{0, 0}, {2, 1}}, 1};
  const Matrix repr = label_representation(frozen, LabelView::structural);
  append(check_gradients("few_shot_label", {state.parameters()[0]},
                         [&] { return few_shot_label_loss(state.tokens, repr, labels); }));
  return all;
}

}  // namespace hetprompt
