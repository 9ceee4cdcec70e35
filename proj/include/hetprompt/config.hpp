#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hetprompt/error.hpp"
#include "hetprompt/hash.hpp"

namespace hetprompt {

enum class Activation { elu, relu, sigmoid, tanh, identity };
enum class AnchorView { both, structural, semantic };

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::elu, "elu"},
                                          {Activation::relu, "relu"},
                                          {Activation::sigmoid, "sigmoid"},
                                          {Activation::tanh, "tanh"},
                                          {Activation::identity, "identity"}})

// "mean" is only meaningful for the few-shot label view.
enum class LabelView { structural, semantic, mean };

NLOHMANN_JSON_SERIALIZE_ENUM(AnchorView, {{AnchorView::both, "both"},
                                          {AnchorView::structural, "structural"},
                                          {AnchorView::semantic, "semantic"}})
NLOHMANN_JSON_SERIALIZE_ENUM(LabelView, {{LabelView::structural, "structural"},
                                         {LabelView::semantic, "semantic"},
                                         {LabelView::mean, "mean"}})

/// Every knob of a run. Defaults are the desk-scale settings.
struct RunConfig {
  std::string dataset = "data";

  // encoder
  std::size_t hidden_dim = 64;      // d
  std::size_t projection_dim = 64;  // d_p
  double temperature = 0.5;
  bool symmetric_loss = true;
  bool include_positive_in_denominator = true;
  double leaky_relu_slope = 0.2;
  Activation structural_activation = Activation::elu;
  double lr = 5e-3;
  std::size_t pretrain_epochs = 400;

  // prompting
  double alpha = 0.5;
  double beta = 0.01;
  double gamma = 1.0;
  double prompt_lr = 5e-3;
  std::size_t prompt_epochs = 200;
  std::size_t num_prompts = 0;  // 0: number of classes
  std::size_t samples_per_node = 4;
  AnchorView prompt_anchor = AnchorView::both;
  LabelView label_view = LabelView::structural;
  std::optional<double> label_margin;  // hinge on L_label, off by default
  double logit_init_std = 0.01;

  // evaluation
  std::size_t shots = 1;
  std::size_t kmeans_restarts = 10;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::config, m); };
    if (alpha < 0.0 || alpha > 1.0) fail("alpha must lie in [0, 1]");
    if (beta < 0.0) fail("beta must be nonnegative");
    if (gamma < 0.0) fail("gamma must be nonnegative");
    if (!(lr > 0.0) || !(prompt_lr > 0.0)) fail("learning rates must be positive");
    if (!(temperature > 0.0)) fail("temperature must be positive");
    if (hidden_dim == 0 || projection_dim == 0) fail("dimensions must be positive");
    if (kmeans_restarts == 0) fail("kmeans_restarts must be positive");
    if (logit_init_std < 0.0) fail("logit_init_std must be nonnegative");
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"dataset", c.dataset},
                     {"hidden_dim", c.hidden_dim},
                     {"projection_dim", c.projection_dim},
                     {"temperature", c.temperature},
                     {"symmetric_loss", c.symmetric_loss},
                     {"include_positive_in_denominator", c.include_positive_in_denominator},
                     {"leaky_relu_slope", c.leaky_relu_slope},
                     {"structural_activation", c.structural_activation},
                     {"lr", c.lr},
                     {"pretrain_epochs", c.pretrain_epochs},
                     {"alpha", c.alpha},
                     {"beta", c.beta},
                     {"gamma", c.gamma},
                     {"prompt_lr", c.prompt_lr},
                     {"prompt_epochs", c.prompt_epochs},
                     {"num_prompts", c.num_prompts},
                     {"samples_per_node", c.samples_per_node},
                     {"prompt_anchor", c.prompt_anchor},
                     {"label_view", c.label_view},
                     {"label_margin", c.label_margin ? nlohmann::json(*c.label_margin) : nlohmann::json()},
                     {"logit_init_std", c.logit_init_std},
                     {"shots", c.shots},
                     {"kmeans_restarts", c.kmeans_restarts},
                     {"seeds", c.seeds},
                     {"seed", c.seed}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, RunConfig& c) {
  nlohmann::json defaults = RunConfig{};
  for (const auto& [key, _] : j.items())
    if (!defaults.contains(key)) throw Error(ErrorCode::config, "unknown config key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("dataset", c.dataset);
  get("hidden_dim", c.hidden_dim);
  get("projection_dim", c.projection_dim);
  get("temperature", c.temperature);
  get("symmetric_loss", c.symmetric_loss);
  get("include_positive_in_denominator", c.include_positive_in_denominator);
  get("leaky_relu_slope", c.leaky_relu_slope);
  get("structural_activation", c.structural_activation);
  get("lr", c.lr);
  get("pretrain_epochs", c.pretrain_epochs);
  get("alpha", c.alpha);
  get("beta", c.beta);
  get("gamma", c.gamma);
  get("prompt_lr", c.prompt_lr);
  get("prompt_epochs", c.prompt_epochs);
  get("num_prompts", c.num_prompts);
  get("samples_per_node", c.samples_per_node);
  get("prompt_anchor", c.prompt_anchor);
  get("label_view", c.label_view);
  if (j.contains("label_margin")) {
    if (j["label_margin"].is_null()) c.label_margin.reset();
    else c.label_margin = j["label_margin"].get<double>();
  }
  get("logit_init_std", c.logit_init_std);
  get("shots", c.shots);
  get("kmeans_restarts", c.kmeans_restarts);
  get("seeds", c.seeds);
  get("seed", c.seed);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, path.string() + ": " + e.what());
  }
  RunConfig c;
  try {
    c = j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

/// Hash of the canonical (key-sorted) JSON form.
inline std::string config_hash(const RunConfig& c) {
  nlohmann::json j = c;
  return hash_bytes(j.dump());
}

}  // namespace hetprompt
