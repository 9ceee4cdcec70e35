#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "hetprompt/error.hpp"
#include "hetprompt/tensor.hpp"

namespace hetprompt {

struct Parameter {
  std::string name;
  Tensor tensor;
};

inline void check_unique_names(const std::vector<Parameter>& params) {
  std::set<std::string> seen;
  for (const auto& p : params)
    if (!seen.insert(p.name).second)
      throw Error(ErrorCode::config, "duplicate parameter name '" + p.name + "'");
}

inline void zero_grads(std::vector<Parameter>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

/// Bias-corrected Adam update, then zeroes the gradients.
inline void adam_step(AdamState& state, std::vector<Parameter>& params) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.rows(), p.tensor.cols());
      state.v.emplace_back(p.tensor.rows(), p.tensor.cols());
    }
  }
  if (state.m.size() != params.size())
    throw Error(ErrorCode::config, "adam_step: parameter list changed between steps");
  for (const auto& p : params)
    if (!p.tensor.has_grad())
      throw Error(ErrorCode::numeric, "adam_step: parameter '" + p.name + "' has no gradient");

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k].tensor.mutable_value();
    const auto& grad = params[k].tensor.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (!m.same_shape(value))
      throw Error(ErrorCode::shape, "adam_step: moment shape mismatch for '" + params[k].name + "'");
    for (std::size_t e = 0; e < value.size(); ++e) {
      const double g = grad[e];
      m[e] = state.beta1 * m[e] + (1.0 - state.beta1) * g;
      v[e] = state.beta2 * v[e] + (1.0 - state.beta2) * g * g;
      const double mhat = m[e] / c1;
      const double vhat = v[e] / c2;
      value[e] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
  zero_grads(params);
}

}  // namespace hetprompt
