#pragma once

// Randomized inputs shared by the unit tests and the acceptance run.

#include <map>
#include <random>
#include <string>

#include "oracles.hpp"

namespace fixture {

using namespace hetprompt;

inline DiscriminatorParams random_discriminator(std::mt19937_64& rng, std::size_t d) {
  DiscriminatorParams p;
  p.kernel = Tensor::variable(oracle::random_matrix(3 * d, d, rng));
  p.hidden = Tensor::variable(oracle::random_matrix(d, std::max<std::size_t>(1, d / 2), rng));
  p.out = Tensor::variable(oracle::random_matrix(std::max<std::size_t>(1, d / 2), 1, rng, -2, 2));
  return p;
}

/// Random projections, prompt state and discriminator on the toy graph,
/// with template groups sampled by the library.
struct TemplateCase {
  hetprompt::Dataset ds = hetprompt::toy_dataset();
  TemplateEmbeddings emb;
  PromptState state;
  DiscriminatorParams disc;
  std::vector<TemplateGroup> groups;

  TemplateCase(std::mt19937_64& rng, std::size_t np, std::size_t samples) {
    const std::size_t d = 4;
    std::map<std::string, Tensor> projected;
    for (const auto& t : ds.graph.node_types)
      projected.emplace(t, Tensor::constant(oracle::random_matrix(ds.graph.count(t), d, rng)));
    emb = make_template_embeddings(ds.graph, projected);
    state.tokens = Tensor::variable(oracle::random_matrix(np, d, rng));
    state.logits = Tensor::variable(oracle::random_matrix(4, np, rng, -2, 2));
    disc = random_discriminator(rng, d);
    groups = collect_epoch_templates(ds.graph, ds.metapaths, np, samples, rng());
  }

  double oracle_loss() const {
    oracle::Mat adj;
    for (const auto& row : oracle::to_mat(state.logits.value())) adj.push_back(oracle::softmax(row));
    std::vector<std::size_t> anchors;
    std::vector<std::vector<oracle::Mat>> seqs;
    for (const auto& g : groups) {
      anchors.push_back(g.anchor);
      seqs.emplace_back();
      for (const auto& p : g.paths)
        seqs.back().push_back(oracle::to_mat(embedding_sequence(p, emb, state.tokens.value())));
    }
    return oracle::template_loss(oracle::to_mat(disc.kernel.value()), oracle::to_mat(disc.hidden.value()),
                                 oracle::to_mat(disc.out.value()), adj, anchors, seqs);
  }
};


}  // namespace fixture
