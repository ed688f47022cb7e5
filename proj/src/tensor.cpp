#include "sll/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "sll/kernels.hpp"

namespace sll {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

namespace autograd {
namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

}  // namespace autograd

using autograd::Node;
using autograd::NodePtr;

namespace {

NodePtr make_leaf(Shape shape, std::vector<double> values) {
  auto n = std::make_shared<Node>();
  if (numel(shape) != static_cast<int64_t>(values.size())) {
    throw DimensionError("tensor values length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  n->shape = std::move(shape);
  n->val = std::move(values);
  return n;
}

// Creates an op node. backward_builder is invoked only when the graph is
// live (grad enabled and some parent requires grad); it receives the raw
// output node and must capture whatever forward state it needs.
NodePtr make_op(Shape shape, std::vector<double> values, std::vector<NodePtr> parents,
                const std::function<std::function<void()>(Node*)>& backward_builder) {
  auto n = make_leaf(std::move(shape), std::move(values));
  bool needs = false;
  if (autograd::grad_enabled()) {
    for (const auto& p : parents)
      if (p->requires_grad) {
        needs = true;
        break;
      }
  }
  if (needs) {
    n->parents = std::move(parents);
    n->requires_grad = true;
    n->backward_fn = backward_builder(n.get());
  }
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

}  // namespace

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values)));
}

Tensor Tensor::zeros(Shape shape) {
  auto n = numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
  auto n = numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), value)));
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::randn(Shape shape, RngStream& rng, double stddev) {
  auto n = numel(shape);
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.normal() * stddev;
  return Tensor(make_leaf(std::move(shape), std::move(v)));
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::size() const { return static_cast<int64_t>(node_->val.size()); }
int64_t Tensor::dim(size_t i) const { return node_->shape.at(i); }
const std::vector<double>& Tensor::values() const { return node_->val; }
std::vector<double>& Tensor::mutable_values() { return node_->val; }
bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->val.size(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient buffer");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->val[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor Tensor::detached() const { return Tensor(make_leaf(node_->shape, node_->val)); }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n));
  kernels::matmul_nn(a.values().data(), b.values().data(), out.data(), m, k, n, false);
  auto pa = a.node(), pb = b.node();
  return Tensor::wrap(make_op({m, n}, std::move(out), {pa, pb}, [=](Node* self) {
    return [self, pa, pb, m, k, n]() {
      const double* g = self->grad.data();
      if (pa->requires_grad) {
        pa->ensure_grad();
        kernels::matmul_nt(g, pb->val.data(), pa->grad.data(), m, n, k, true);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        kernels::matmul_tn(pa->val.data(), g, pb->grad.data(), k, m, n, true);
      }
    };
  }));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(static_cast<size_t>(m * n));
  kernels::matmul_nt(a.values().data(), b.values().data(), out.data(), m, k, n, false);
  auto pa = a.node(), pb = b.node();
  return Tensor::wrap(make_op({m, n}, std::move(out), {pa, pb}, [=](Node* self) {
    return [self, pa, pb, m, k, n]() {
      const double* g = self->grad.data();
      if (pa->requires_grad) {
        pa->ensure_grad();
        kernels::matmul_nn(g, pb->val.data(), pa->grad.data(), m, n, k, true);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        kernels::matmul_tn(g, pa->val.data(), pb->grad.data(), n, m, k, true);
      }
    };
  }));
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.shape().size() != 3 || b.shape().size() != 3 || a.dim(0) != b.dim(0)) {
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const int64_t nb = a.dim(0), m = a.dim(1), k = a.dim(2);
  const int64_t n = transpose_b ? b.dim(1) : b.dim(2);
  const int64_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (bk != k) {
    throw DimensionError("bmm: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<size_t>(nb * m * n));
  const double* ad = a.values().data();
  const double* bd = b.values().data();
  kernels::for_rows(nb, [&](int64_t i) {
    const double* ab = ad + i * m * k;
    const double* bb = bd + i * (transpose_b ? n * k : k * n);
    double* cb = out.data() + i * m * n;
    if (transpose_b) {
      kernels::matmul_nt_serial(ab, bb, cb, m, k, n, false);
    } else {
      kernels::matmul_nn_serial(ab, bb, cb, m, k, n, false);
    }
  });
  auto pa = a.node(), pb = b.node();
  return Tensor::wrap(make_op({nb, m, n}, std::move(out), {pa, pb}, [=](Node* self) {
    return [self, pa, pb, nb, m, k, n, transpose_b]() {
      if (pa->requires_grad) pa->ensure_grad();
      if (pb->requires_grad) pb->ensure_grad();
      kernels::for_rows(nb, [&](int64_t i) {
        const double* g = self->grad.data() + i * m * n;
        const double* av = pa->val.data() + i * m * k;
        const double* bv = pb->val.data() + i * (transpose_b ? n * k : k * n);
        if (transpose_b) {
          // C = A B^T, B stored (n x k): dA += dC B; dB += dC^T A
          if (pa->requires_grad)
            kernels::matmul_nn_serial(g, bv, pa->grad.data() + i * m * k, m, n, k, true);
          if (pb->requires_grad)
            kernels::matmul_tn_serial(g, av, pb->grad.data() + i * n * k, n, m, k, true);
        } else {
          // C = A B: dA += dC B^T; dB += A^T dC
          if (pa->requires_grad)
            kernels::matmul_nt_serial(g, bv, pa->grad.data() + i * m * k, m, n, k, true);
          if (pb->requires_grad)
            kernels::matmul_tn_serial(av, g, pb->grad.data() + i * k * n, k, m, n, true);
        }
      });
    };
  }));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  auto pa = a.node(), pb = b.node();
  return Tensor::wrap(make_op(a.shape(), std::move(out), {pa, pb}, [=](Node* self) {
    return [self, pa, pb]() {
      for (Node* p : {pa.get(), pb.get()}) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) p->grad[i] += self->grad[i];
      }
    };
  }));
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.shape().size() != 1 || x.shape().empty() || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  }
  const int64_t d = bias.dim(0);
  const int64_t rows = x.size() / d;
  const auto& xv = x.values();
  const auto& bv = bias.values();
  std::vector<double> out(xv.size());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] + bv[j];
  auto px = x.node(), pb = bias.node();
  return Tensor::wrap(make_op(x.shape(), std::move(out), {px, pb}, [=](Node* self) {
    return [self, px, pb, rows, d]() {
      if (px->requires_grad) {
        px->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) px->grad[i] += self->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < d; ++j) pb->grad[j] += self->grad[r * d + j];
      }
    };
  }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  auto pa = a.node(), pb = b.node();
  return Tensor::wrap(make_op(a.shape(), std::move(out), {pa, pb}, [=](Node* self) {
    return [self, pa, pb]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i] * pb->val[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) pb->grad[i] += self->grad[i] * pa->val[i];
      }
    };
  }));
}

Tensor scale(const Tensor& x, double s) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * s;
  auto px = x.node();
  return Tensor::wrap(make_op(x.shape(), std::move(out), {px}, [=](Node* self) {
    return [self, px, s]() {
      px->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i) px->grad[i] += self->grad[i] * s;
    };
  }));
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  auto px = x.node();
  return Tensor::wrap(make_op(x.shape(), std::move(out), {px}, [=](Node* self) {
    return [self, px]() {
      px->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i) {
        const double v = px->val[i];
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        px->grad[i] += self->grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
      }
    };
  }));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.shape().empty() || x.shape().back() < 1) {
    throw DimensionError("layer_norm: last axis of " + shape_str(x.shape()) + " must be >= 1");
  }
  const int64_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain/bias must have shape (" + std::to_string(d) + ")");
  }
  const int64_t rows = x.size() / d;
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  std::vector<double> out(xv.size());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto istd = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  kernels::for_rows(rows, [&](int64_t r) {
    const double* xr = xv.data() + r * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*istd)[static_cast<size_t>(r)] = is;
    for (int64_t j = 0; j < d; ++j) {
      const double xh = (xr[j] - mean) * is;
      (*xhat)[r * d + j] = xh;
      out[r * d + j] = gv[j] * xh + bv[j];
    }
  });
  auto px = x.node(), pg = gain.node(), pb = bias.node();
  return Tensor::wrap(make_op(x.shape(), std::move(out), {px, pg, pb}, [=](Node* self) {
    return [self, px, pg, pb, xhat, istd, rows, d]() {
      if (px->requires_grad) {
        px->ensure_grad();
        kernels::for_rows(rows, [&](int64_t r) {
          const double* gy = self->grad.data() + r * d;
          const double* xh = xhat->data() + r * d;
          const double is = (*istd)[static_cast<size_t>(r)];
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int64_t j = 0; j < d; ++j) {
            const double dxh = gy[j] * pg->val[j];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[j];
          }
          const double inv_d = 1.0 / static_cast<double>(d);
          for (int64_t j = 0; j < d; ++j) {
            const double dxh = gy[j] * pg->val[j];
            px->grad[r * d + j] +=
                is * (dxh - inv_d * sum_dxhat - xh[j] * inv_d * sum_dxhat_xhat);
          }
        });
      }
      if (pg->requires_grad || pb->requires_grad) {
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
          const double* gy = self->grad.data() + r * d;
          const double* xh = xhat->data() + r * d;
          for (int64_t j = 0; j < d; ++j) {
            if (pg->requires_grad) pg->grad[j] += gy[j] * xh[j];
            if (pb->requires_grad) pb->grad[j] += gy[j];
          }
        }
      }
    };
  }));
}

Tensor softmax_last(const Tensor& x) {
  const int64_t d = x.shape().back();
  const int64_t rows = x.size() / d;
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  kernels::for_rows(rows, [&](int64_t r) {
    const double* xr = xv.data() + r * d;
    double* yr = out.data() + r * d;
    double mx = xr[0];
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
    double z = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    const double inv = 1.0 / z;
    for (int64_t j = 0; j < d; ++j) yr[j] *= inv;
  });
  auto px = x.node();
  return Tensor::wrap(make_op(x.shape(), std::move(out), {px}, [=](Node* self) {
    return [self, px, rows, d]() {
      px->ensure_grad();
      kernels::for_rows(rows, [&](int64_t r) {
        const double* gy = self->grad.data() + r * d;
        const double* y = self->val.data() + r * d;
        double dot = 0.0;
        for (int64_t j = 0; j < d; ++j) dot += gy[j] * y[j];
        for (int64_t j = 0; j < d; ++j) px->grad[r * d + j] += (gy[j] - dot) * y[j];
      });
    };
  }));
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(new_shape));
  }
  auto px = x.node();
  return Tensor::wrap(make_op(std::move(new_shape), x.values(), {px}, [=](Node* self) {
    return [self, px]() {
      px->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i) px->grad[i] += self->grad[i];
    };
  }));
}

Tensor slice_rows(const Tensor& x, int64_t start, int64_t count) {
  if (x.shape().size() != 2) throw DimensionError("slice_rows: expected 2-D tensor");
  const int64_t rows = x.dim(0), d = x.dim(1);
  if (start < 0 || count < 0 || start + count > rows) {
    throw IndexError("slice_rows: [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") out of " + std::to_string(rows));
  }
  std::vector<double> out(static_cast<size_t>(count * d));
  std::copy_n(x.values().data() + start * d, count * d, out.data());
  auto px = x.node();
  return Tensor::wrap(make_op({count, d}, std::move(out), {px}, [=](Node* self) {
    return [self, px, start, d]() {
      px->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i)
        px->grad[static_cast<size_t>(start * d) + i] += self->grad[i];
    };
  }));
}

Tensor split_heads(const Tensor& x, int64_t batch, int64_t len, int64_t heads) {
  if (x.shape().size() != 2 || x.dim(0) != batch * len || x.dim(1) % heads != 0) {
    throw DimensionError("split_heads: shape " + shape_str(x.shape()) + " with batch " +
                         std::to_string(batch) + " len " + std::to_string(len) + " heads " +
                         std::to_string(heads));
  }
  const int64_t d = x.dim(1), dh = d / heads;
  std::vector<double> out(x.values().size());
  const auto& xv = x.values();
  kernels::for_rows(batch * heads, [&](int64_t bh) {
    const int64_t b = bh / heads, h = bh % heads;
    for (int64_t l = 0; l < len; ++l) {
      const double* src = xv.data() + (b * len + l) * d + h * dh;
      double* dst = out.data() + (bh * len + l) * dh;
      for (int64_t c = 0; c < dh; ++c) dst[c] = src[c];
    }
  });
  auto px = x.node();
  return Tensor::wrap(make_op({batch * heads, len, dh}, std::move(out), {px}, [=](Node* self) {
    return [self, px, batch, len, heads, d, dh]() {
      px->ensure_grad();
      kernels::for_rows(batch * heads, [&](int64_t bh) {
        const int64_t b = bh / heads, h = bh % heads;
        for (int64_t l = 0; l < len; ++l) {
          const double* src = self->grad.data() + (bh * len + l) * dh;
          double* dst = px->grad.data() + (b * len + l) * d + h * dh;
          for (int64_t c = 0; c < dh; ++c) dst[c] += src[c];
        }
      });
    };
  }));
}

Tensor merge_heads(const Tensor& x, int64_t batch, int64_t len) {
  if (x.shape().size() != 3 || x.dim(0) % batch != 0 || x.dim(1) != len) {
    throw DimensionError("merge_heads: shape " + shape_str(x.shape()));
  }
  const int64_t heads = x.dim(0) / batch, dh = x.dim(2), d = heads * dh;
  std::vector<double> out(x.values().size());
  const auto& xv = x.values();
  kernels::for_rows(batch * len, [&](int64_t bl) {
    const int64_t b = bl / len, l = bl % len;
    double* dst = out.data() + bl * d;
    for (int64_t h = 0; h < heads; ++h) {
      const double* src = xv.data() + ((b * heads + h) * len + l) * dh;
      for (int64_t c = 0; c < dh; ++c) dst[h * dh + c] = src[c];
    }
  });
  auto px = x.node();
  return Tensor::wrap(make_op({batch * len, d}, std::move(out), {px}, [=](Node* self) {
    return [self, px, batch, len, heads, dh, d]() {
      px->ensure_grad();
      kernels::for_rows(batch * len, [&](int64_t bl) {
        const int64_t b = bl / len, l = bl % len;
        const double* src = self->grad.data() + bl * d;
        for (int64_t h = 0; h < heads; ++h) {
          double* dst = px->grad.data() + ((b * heads + h) * len + l) * dh;
          for (int64_t c = 0; c < dh; ++c) dst[c] += src[h * dh + c];
        }
      });
    };
  }));
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  return embedding(table, ids, Tensor(), -1);
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids, const Tensor& extra, int extra_id) {
  if (table.shape().size() != 2) throw DimensionError("embedding: table must be 2-D");
  const int64_t v = table.dim(0), d = table.dim(1);
  if (extra.defined() && extra.shape() != Shape{d}) {
    throw DimensionError("embedding: extra row must have shape (" + std::to_string(d) + ")");
  }
  const int64_t p = static_cast<int64_t>(ids.size());
  std::vector<double> out(static_cast<size_t>(p * d));
  for (int64_t r = 0; r < p; ++r) {
    const int id = ids[r];
    const double* src;
    if (id >= 0 && id < v) {
      src = table.values().data() + static_cast<int64_t>(id) * d;
    } else if (extra.defined() && id == extra_id) {
      src = extra.values().data();
    } else {
      throw IndexError("embedding: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(v));
    }
    std::copy_n(src, d, out.data() + r * d);
  }
  std::vector<NodePtr> parents{table.node()};
  if (extra.defined()) parents.push_back(extra.node());
  auto pt = table.node();
  auto pe = extra.defined() ? extra.node() : nullptr;
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return Tensor::wrap(make_op({p, d}, std::move(out), std::move(parents), [=](Node* self) {
    return [self, pt, pe, ids_copy, d, extra_id]() {
      const bool want_table = pt->requires_grad;
      const bool want_extra = pe && pe->requires_grad;
      if (want_table) pt->ensure_grad();
      if (want_extra) pe->ensure_grad();
      const auto& idv = *ids_copy;
      for (size_t r = 0; r < idv.size(); ++r) {
        const double* g = self->grad.data() + static_cast<int64_t>(r) * d;
        if (idv[r] == extra_id && pe) {
          if (want_extra)
            for (int64_t c = 0; c < d; ++c) pe->grad[c] += g[c];
        } else if (want_table) {
          double* dst = pt->grad.data() + static_cast<int64_t>(idv[r]) * d;
          for (int64_t c = 0; c < d; ++c) dst[c] += g[c];
        }
      }
    };
  }));
}

Tensor dropout(const Tensor& x, double rate, RngStream& rng, std::vector<uint8_t>* mask_out) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ParameterError("dropout rate " + std::to_string(rate) + " outside [0,1)");
  }
  std::vector<uint8_t> mask(x.values().size(), 1);
  if (rate > 0.0) {
    for (auto& m : mask) m = rng.uniform() >= rate ? 1 : 0;
  }
  if (mask_out) *mask_out = mask;
  return dropout_with_mask(x, rate, mask);
}

Tensor dropout_with_mask(const Tensor& x, double rate, const std::vector<uint8_t>& mask) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ParameterError("dropout rate " + std::to_string(rate) + " outside [0,1)");
  }
  if (mask.size() != x.values().size()) throw DimensionError("dropout: mask size mismatch");
  const double s = 1.0 / (1.0 - rate);
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = mask[i] ? xv[i] * s : 0.0;
  auto px = x.node();
  auto mask_copy = std::make_shared<std::vector<uint8_t>>(mask);
  return Tensor::wrap(make_op(x.shape(), std::move(out), {px}, [=](Node* self) {
    return [self, px, mask_copy, s]() {
      px->ensure_grad();
      const auto& m = *mask_copy;
      for (size_t i = 0; i < self->grad.size(); ++i)
        if (m[i]) px->grad[i] += self->grad[i] * s;
    };
  }));
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index) {
  if (logits.shape().size() != 2) throw DimensionError("softmax_cross_entropy: logits must be 2-D");
  const int64_t p = logits.dim(0), v = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != p) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(p) + " positions");
  }
  for (int t : targets) {
    if (t != ignore_index && (t < 0 || t >= v)) {
      throw IndexError("softmax_cross_entropy: target id " + std::to_string(t) +
                       " outside vocabulary of " + std::to_string(v));
    }
  }
  int64_t kept = 0;
  for (int t : targets)
    if (t != ignore_index) ++kept;
  if (kept == 0) return Tensor::scalar(0.0);

  // Per-row log-sum-exp; probabilities are saved for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(logits.values().size());
  std::vector<double> row_loss(static_cast<size_t>(p), 0.0);
  const auto& lv = logits.values();
  kernels::for_rows(p, [&](int64_t r) {
    if (targets[static_cast<size_t>(r)] == ignore_index) return;
    const double* xr = lv.data() + r * v;
    double* pr = probs->data() + r * v;
    double mx = xr[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, xr[j]);
    double z = 0.0;
    for (int64_t j = 0; j < v; ++j) {
      pr[j] = std::exp(xr[j] - mx);
      z += pr[j];
    }
    const double inv = 1.0 / z;
    for (int64_t j = 0; j < v; ++j) pr[j] *= inv;
    const double lse = mx + std::log(z);
    row_loss[static_cast<size_t>(r)] = lse - xr[targets[static_cast<size_t>(r)]];
  });
  double total = 0.0;
  for (int64_t r = 0; r < p; ++r) total += row_loss[static_cast<size_t>(r)];
  const double mean = total / static_cast<double>(kept);
  auto pl = logits.node();
  auto tcopy = std::make_shared<std::vector<int>>(targets);
  return Tensor::wrap(make_op({1}, {mean}, {pl}, [=](Node* self) {
    return [self, pl, tcopy, probs, p, v, kept, ignore_index]() {
      pl->ensure_grad();
      const double g = self->grad[0] / static_cast<double>(kept);
      kernels::for_rows(p, [&](int64_t r) {
        const int t = (*tcopy)[static_cast<size_t>(r)];
        if (t == ignore_index) return;
        const double* pr = probs->data() + r * v;
        double* gr = pl->grad.data() + r * v;
        for (int64_t j = 0; j < v; ++j) gr[j] += g * pr[j];
        gr[t] -= g;
      });
    };
  }));
}

Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits) {
  check_same_shape(p_logits, q_logits, "kl_divergence");
  if (p_logits.shape().size() != 2) throw DimensionError("kl_divergence: logits must be 2-D");
  const int64_t rows = p_logits.dim(0), v = p_logits.dim(1);
  auto lp = std::make_shared<std::vector<double>>(p_logits.values().size());
  auto lq = std::make_shared<std::vector<double>>(q_logits.values().size());
  auto row_kl = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  const auto& pv = p_logits.values();
  const auto& qv = q_logits.values();
  kernels::for_rows(rows, [&](int64_t r) {
    log_softmax_row(pv.data() + r * v, lp->data() + r * v, v);
    log_softmax_row(qv.data() + r * v, lq->data() + r * v, v);
    double kl = 0.0;
    for (int64_t j = 0; j < v; ++j) {
      const double pj = std::exp((*lp)[r * v + j]);
      kl += pj * ((*lp)[r * v + j] - (*lq)[r * v + j]);
    }
    (*row_kl)[static_cast<size_t>(r)] = std::max(kl, 0.0);
  });
  double total = 0.0;
  for (int64_t r = 0; r < rows; ++r) total += (*row_kl)[static_cast<size_t>(r)];
  const double mean = total / static_cast<double>(rows);
  auto pp = p_logits.node(), pq = q_logits.node();
  return Tensor::wrap(make_op({1}, {mean}, {pp, pq}, [=](Node* self) {
    return [self, pp, pq, lp, lq, row_kl, rows, v]() {
      const double g = self->grad[0] / static_cast<double>(rows);
      if (pp->requires_grad) pp->ensure_grad();
      if (pq->requires_grad) pq->ensure_grad();
      kernels::for_rows(rows, [&](int64_t r) {
        const double kl = (*row_kl)[static_cast<size_t>(r)];
        for (int64_t j = 0; j < v; ++j) {
          const double lpv = (*lp)[r * v + j];
          const double lqv = (*lq)[r * v + j];
          const double pj = std::exp(lpv);
          if (pp->requires_grad) pp->grad[r * v + j] += g * pj * ((lpv - lqv) - kl);
          if (pq->requires_grad) pq->grad[r * v + j] += g * (std::exp(lqv) - pj);
        }
      });
    };
  }));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a defined scalar");
  }
  Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // Post-order over the requires-grad subgraph; order is a pure function of
  // graph structure, so replays are deterministic.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx].get();
      ++idx;
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->val.size()) n->backward_fn();
  }
}

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double delta) {
  if (delta <= 0.0) throw ParameterError("grad_check: delta must be positive");
  for (auto& p : params) p.zero_grad();
  Tensor out = f();
  if (!std::isfinite(out.item())) throw EvalError("grad_check: non-finite objective");
  backward(out);

  std::vector<std::vector<double>> ad;
  ad.reserve(params.size());
  for (auto& p : params) {
    ad.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.values().size(), 0.0));
  }

  double max_rel = 0.0;
  autograd::NoGradGuard no_grad;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].mutable_values();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double v0 = vals[i];
      vals[i] = v0 + delta;
      const double fp = f().item();
      vals[i] = v0 - delta;
      const double fm = f().item();
      vals[i] = v0;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw EvalError("grad_check: non-finite objective during perturbation");
      }
      const double gfd = (fp - fm) / (2.0 * delta);
      const double gad = ad[pi][i];
      const double rel = std::abs(gad - gfd) / std::max({std::abs(gad), std::abs(gfd), 1e-4});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

void log_softmax_row(const double* logits, double* out, int64_t v) {
  double mx = logits[0];
  for (int64_t j = 1; j < v; ++j) mx = std::max(mx, logits[j]);
  double z = 0.0;
  for (int64_t j = 0; j < v; ++j) z += std::exp(logits[j] - mx);
  const double lse = mx + std::log(z);
  for (int64_t j = 0; j < v; ++j) out[j] = logits[j] - lse;
}

int64_t argmax_row(const double* row, int64_t v) {
  int64_t best = 0;
  for (int64_t j = 1; j < v; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace sll
