#pragma once

#include <span>
#include <vector>

#include "sll/tensor.hpp"

namespace sll {

// Adam with bias correction. Moment buffers are aligned index-by-index with
// the parameter list handed to init(); the same list (same order) must be
// passed to every step.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void init(std::span<const Tensor> params);
  bool initialized() const { return !m.empty(); }
};

// One update. Parameters with no gradient buffer are treated as zero-grad
// (their moments still decay). lr_override < 0 uses state.lr.
void adam_step(std::span<Tensor> params, AdamState& state, double lr_override = -1.0);

}  // namespace sll
