#include "sll/adam.hpp"

#include <cmath>

namespace sll {

void AdamState::init(std::span<const Tensor> params) {
  m.clear();
  v.clear();
  step = 0;
  for (const auto& p : params) {
    m.emplace_back(p.values().size(), 0.0);
    v.emplace_back(p.values().size(), 0.0);
  }
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr_override) {
  if (!state.initialized()) state.init(params);
  if (params.size() != state.m.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params vs state for " +
                         std::to_string(state.m.size()));
  }
  state.step += 1;
  const double lr = lr_override >= 0.0 ? lr_override : state.lr;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].mutable_values();
    if (state.m[pi].size() != vals.size()) {
      throw DimensionError("adam_step: param " + std::to_string(pi) + " has " +
                           std::to_string(vals.size()) + " entries, state has " +
                           std::to_string(state.m[pi].size()));
    }
    const bool has_g = params[pi].has_grad();
    const double* g = has_g ? params[pi].grad().data() : nullptr;
    auto& mi = state.m[pi];
    auto& vi = state.v[pi];
    for (size_t i = 0; i < vals.size(); ++i) {
      const double gi = has_g ? g[i] : 0.0;
      mi[i] = state.beta1 * mi[i] + (1.0 - state.beta1) * gi;
      vi[i] = state.beta2 * vi[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = mi[i] / bc1;
      const double vhat = vi[i] / bc2;
      vals[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace sll
