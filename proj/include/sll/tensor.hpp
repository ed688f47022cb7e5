#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sll/errors.hpp"
#include "sll/rng.hpp"

namespace sll {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace autograd {

struct Node {
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<Node>;

bool grad_enabled();

// Scoped switch that disables graph construction (inference / decoding).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

}  // namespace autograd

// Dense 64-bit float tensor with reverse-mode autodiff. Values are immutable
// once produced by an op; only parameter tensors are written in place (by
// the optimizer and by EMA updates, both via mutable_values()).
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor randn(Shape shape, RngStream& rng, double stddev = 1.0);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  int64_t size() const;
  int64_t dim(size_t i) const;
  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();
  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();
  double item() const;

  Tensor& set_requires_grad(bool on);
  bool requires_grad() const;

  // Leaf copy of the current values (detached from any graph).
  Tensor detached() const;

  autograd::NodePtr node() const { return node_; }
  static Tensor wrap(autograd::NodePtr n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(autograd::NodePtr n) : node_(std::move(n)) {}
  autograd::NodePtr node_;
};

// ---- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a @ b^T with b stored (n x k); used for tied-embedding logits.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// Batched matmul on 3-D tensors (N, m, k) x (N, k, n); transpose_b reads b as (N, n, k).
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor gelu(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor softmax_last(const Tensor& x);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor slice_rows(const Tensor& x, int64_t start, int64_t count);

// (rows, d) -> (rows/len*heads, len, d/heads); rows must equal batch*len.
Tensor split_heads(const Tensor& x, int64_t batch, int64_t len, int64_t heads);
Tensor merge_heads(const Tensor& x, int64_t batch, int64_t len);

// Embedding lookup; ids outside [0, V) raise unless they equal extra_id, in
// which case the trainable extra row is used (task generation tokens).
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor embedding(const Tensor& table, const std::vector<int>& ids, const Tensor& extra, int extra_id);

// Inverted dropout; kept entries scaled by 1/(1-rate). The mask (1 = kept)
// is written to mask_out when provided so a pass can be replayed.
Tensor dropout(const Tensor& x, double rate, RngStream& rng, std::vector<uint8_t>* mask_out = nullptr);
Tensor dropout_with_mask(const Tensor& x, double rate, const std::vector<uint8_t>& mask);

// Mean over non-ignored positions of -log softmax(logits)[target].
// logits (P, V); targets length P; positions with target == ignore_index are
// excluded. All positions ignored yields a constant 0 (zero gradient).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index = -1);

// KL(softmax(p) || softmax(q)) averaged over rows; differentiable in both.
Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits);

void backward(const Tensor& loss);

// Central finite differences vs. reverse-mode gradients over every
// coordinate of params. f must be deterministic across calls (reset any
// RngStream it uses). Returns the max over coordinates of
// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-4).
double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double delta);

// ---- raw-row helpers (no autograd; decode paths) ---------------------------

void log_softmax_row(const double* logits, double* out, int64_t v);
int64_t argmax_row(const double* row, int64_t v);  // ties -> lowest index

}  // namespace sll
