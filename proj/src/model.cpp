#include "sll/model.hpp"

#include <algorithm>
#include <cmath>

namespace sll {

namespace {
constexpr double kInitStd = 0.08;
constexpr double kAdapterDownStd = 0.05;
constexpr double kLnEps = 1e-6;
constexpr double kMaskNeg = -1e30;

Tensor make_param(Shape shape, RngStream& rng, double stddev) {
  Tensor t = Tensor::randn(std::move(shape), rng, stddev);
  t.set_requires_grad(true);
  return t;
}

LayerNormParams make_ln(int64_t d) {
  LayerNormParams ln{Tensor::full({d}, 1.0), Tensor::zeros({d})};
  ln.gain.set_requires_grad(true);
  ln.bias.set_requires_grad(true);
  return ln;
}

AttentionParams make_attn(int64_t d, RngStream& rng) {
  return {make_param({d, d}, rng, kInitStd), make_param({d, d}, rng, kInitStd),
          make_param({d, d}, rng, kInitStd), make_param({d, d}, rng, kInitStd)};
}

FeedForwardParams make_ff(int64_t d, int64_t ff, RngStream& rng) {
  FeedForwardParams f{make_param({d, ff}, rng, kInitStd), Tensor::zeros({ff}),
                      make_param({ff, d}, rng, kInitStd), Tensor::zeros({d})};
  f.b1.set_requires_grad(true);
  f.b2.set_requires_grad(true);
  return f;
}

Tensor sinusoidal_positions(int64_t max_len, int64_t d) {
  std::vector<double> v(static_cast<size_t>(max_len * d));
  for (int64_t p = 0; p < max_len; ++p) {
    for (int64_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      v[p * d + i] = std::sin(static_cast<double>(p) * freq);
      if (i + 1 < d) v[p * d + i + 1] = std::cos(static_cast<double>(p) * freq);
    }
  }
  return Tensor::from({max_len, d}, std::move(v));
}
}  // namespace

Backbone Backbone::init(const ModelConfig& cfg, RngStream& rng) {
  if (cfg.vocab < 5) throw ParameterError("Backbone::init: vocabulary too small");
  Backbone b;
  b.cfg = cfg;
  b.embed = make_param({cfg.vocab, cfg.d}, rng, kInitStd);
  for (int64_t i = 0; i < cfg.enc_layers; ++i) {
    b.enc.push_back({make_ln(cfg.d), make_attn(cfg.d, rng), make_ln(cfg.d),
                     make_ff(cfg.d, cfg.ff, rng)});
  }
  b.enc_final = make_ln(cfg.d);
  for (int64_t i = 0; i < cfg.dec_layers; ++i) {
    b.dec.push_back({make_ln(cfg.d), make_attn(cfg.d, rng), make_ln(cfg.d),
                     make_attn(cfg.d, rng), make_ln(cfg.d), make_ff(cfg.d, cfg.ff, rng)});
  }
  b.dec_final = make_ln(cfg.d);
  b.pos = sinusoidal_positions(cfg.max_len, cfg.d);
  return b;
}

std::vector<std::pair<std::string, Tensor>> Backbone::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed", embed);
  auto add_ln = [&](const std::string& n, const LayerNormParams& ln) {
    out.emplace_back(n + ".gain", ln.gain);
    out.emplace_back(n + ".bias", ln.bias);
  };
  auto add_attn = [&](const std::string& n, const AttentionParams& a) {
    out.emplace_back(n + ".wq", a.wq);
    out.emplace_back(n + ".wk", a.wk);
    out.emplace_back(n + ".wv", a.wv);
    out.emplace_back(n + ".wo", a.wo);
  };
  auto add_ff = [&](const std::string& n, const FeedForwardParams& f) {
    out.emplace_back(n + ".w1", f.w1);
    out.emplace_back(n + ".b1", f.b1);
    out.emplace_back(n + ".w2", f.w2);
    out.emplace_back(n + ".b2", f.b2);
  };
  for (size_t i = 0; i < enc.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    add_ln(p + ".ln_attn", enc[i].ln_attn);
    add_attn(p + ".attn", enc[i].attn);
    add_ln(p + ".ln_ff", enc[i].ln_ff);
    add_ff(p + ".ff", enc[i].ff);
  }
  add_ln("enc_final", enc_final);
  for (size_t i = 0; i < dec.size(); ++i) {
    const std::string p = "dec" + std::to_string(i);
    add_ln(p + ".ln_self", dec[i].ln_self);
    add_attn(p + ".self_attn", dec[i].self_attn);
    add_ln(p + ".ln_cross", dec[i].ln_cross);
    add_attn(p + ".cross_attn", dec[i].cross_attn);
    add_ln(p + ".ln_ff", dec[i].ln_ff);
    add_ff(p + ".ff", dec[i].ff);
  }
  add_ln("dec_final", dec_final);
  return out;
}

std::vector<Tensor> Backbone::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void Backbone::set_trainable(bool on) {
  for (auto& [name, t] : named_parameters()) {
    Tensor tt = t;
    tt.set_requires_grad(on);
  }
}

int64_t Backbone::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.size();
  return n;
}

TaskHead TaskHead::init(const ModelConfig& cfg, int task_id, RngStream& rng) {
  TaskHead h;
  h.task_id = task_id;
  const int64_t layers = cfg.enc_layers + cfg.dec_layers;
  for (int64_t i = 0; i < layers; ++i) {
    Adapter a;
    a.ln = make_ln(cfg.d);
    a.down = make_param({cfg.d, cfg.bottleneck}, rng, kAdapterDownStd);
    a.down_bias = Tensor::zeros({cfg.bottleneck});
    a.down_bias.set_requires_grad(true);
    a.up = Tensor::zeros({cfg.bottleneck, cfg.d});  // identity map at init
    a.up.set_requires_grad(true);
    a.up_bias = Tensor::zeros({cfg.d});
    a.up_bias.set_requires_grad(true);
    h.adapters.push_back(std::move(a));
  }
  h.g_embed = make_param({cfg.d}, rng, kInitStd);
  return h;
}

std::vector<Tensor> TaskHead::trainable() {
  std::vector<Tensor> out;
  for (auto& a : adapters) {
    out.push_back(a.ln.gain);
    out.push_back(a.ln.bias);
    out.push_back(a.down);
    out.push_back(a.down_bias);
    out.push_back(a.up);
    out.push_back(a.up_bias);
  }
  out.push_back(g_embed);
  return out;
}

std::vector<Tensor> TaskHead::trainable() const {
  return const_cast<TaskHead*>(this)->trainable();
}

std::vector<std::pair<std::string, Tensor>> TaskHead::named_parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t i = 0; i < adapters.size(); ++i) {
    const std::string p = prefix + ".adapter" + std::to_string(i);
    out.emplace_back(p + ".ln.gain", adapters[i].ln.gain);
    out.emplace_back(p + ".ln.bias", adapters[i].ln.bias);
    out.emplace_back(p + ".down", adapters[i].down);
    out.emplace_back(p + ".down_bias", adapters[i].down_bias);
    out.emplace_back(p + ".up", adapters[i].up);
    out.emplace_back(p + ".up_bias", adapters[i].up_bias);
  }
  out.emplace_back(prefix + ".g", g_embed);
  return out;
}

TaskHead TaskHead::clone() const {
  TaskHead h;
  h.task_id = task_id;
  for (const auto& a : adapters) {
    Adapter c;
    c.ln = {a.ln.gain.detached(), a.ln.bias.detached()};
    c.down = a.down.detached();
    c.down_bias = a.down_bias.detached();
    c.up = a.up.detached();
    c.up_bias = a.up_bias.detached();
    h.adapters.push_back(std::move(c));
  }
  h.g_embed = g_embed.detached();
  return h;
}

void TaskHead::copy_values_from(const TaskHead& other) {
  auto dst = trainable();
  auto src = other.trainable();
  if (dst.size() != src.size()) throw DimensionError("TaskHead::copy_values_from: layout mismatch");
  for (size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].shape() != src[i].shape()) {
      throw DimensionError("TaskHead::copy_values_from: shape mismatch at tensor " +
                           std::to_string(i));
    }
    dst[i].mutable_values() = src[i].values();
  }
}

int64_t TaskHead::adapter_param_count() const {
  int64_t n = 0;
  for (const auto& a : adapters) {
    n += a.ln.gain.size() + a.ln.bias.size() + a.down.size() + a.down_bias.size() + a.up.size() +
         a.up_bias.size();
  }
  return n;
}

const TaskHead* ModelState::head(int task) const {
  if (task < 0) return nullptr;
  auto it = heads.find(task);
  if (it == heads.end()) throw RoutingError("unknown task id " + std::to_string(task));
  return &it->second;
}

TaskHead& ModelState::head_mut(int task) {
  auto it = heads.find(task);
  if (it == heads.end()) throw RoutingError("unknown task id " + std::to_string(task));
  return it->second;
}

// ---- forward ---------------------------------------------------------------

namespace {

struct PaddedBatch {
  std::vector<int> ids;        // batch * len
  std::vector<uint8_t> real;   // batch * len
  int64_t batch = 0;
  int64_t len = 0;
};

PaddedBatch pad_batch(std::span<const std::vector<int>> seqs, int64_t max_len) {
  PaddedBatch b;
  b.batch = static_cast<int64_t>(seqs.size());
  if (b.batch == 0) throw ContractError("forward: empty batch");
  int64_t len = 1;
  for (const auto& s : seqs) len = std::max(len, static_cast<int64_t>(s.size()));
  if (len > max_len) {
    throw DimensionError("sequence length " + std::to_string(len) + " exceeds model max_len " +
                         std::to_string(max_len));
  }
  b.len = len;
  b.ids.assign(static_cast<size_t>(b.batch * len), Vocab::kPad);
  b.real.assign(static_cast<size_t>(b.batch * len), 0);
  for (int64_t i = 0; i < b.batch; ++i) {
    const auto& s = seqs[static_cast<size_t>(i)];
    for (size_t j = 0; j < s.size(); ++j) {
      b.ids[static_cast<size_t>(i * len) + j] = s[j];
      b.real[static_cast<size_t>(i * len) + j] = s[j] == Vocab::kPad ? 0 : 1;
    }
  }
  return b;
}

Tensor position_rows(const Backbone& bb, int64_t batch, int64_t len) {
  std::vector<double> v(static_cast<size_t>(batch * len * bb.cfg.d));
  const auto& pos = bb.pos.values();
  for (int64_t b = 0; b < batch; ++b) {
    std::copy_n(pos.data(), len * bb.cfg.d, v.data() + b * len * bb.cfg.d);
  }
  return Tensor::from({batch * len, bb.cfg.d}, std::move(v));
}

// mask[b*H + h, i, j] = 0 where key j is attendable, large negative otherwise.
Tensor attention_mask(const PaddedBatch& keys, int64_t heads, int64_t query_len, bool causal) {
  const int64_t B = keys.batch, Lk = keys.len, Lq = query_len;
  std::vector<double> v(static_cast<size_t>(B * heads * Lq * Lk), 0.0);
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t i = 0; i < Lq; ++i) {
      for (int64_t j = 0; j < Lk; ++j) {
        const bool blocked = keys.real[static_cast<size_t>(b * Lk + j)] == 0 || (causal && j > i);
        if (!blocked) continue;
        for (int64_t h = 0; h < heads; ++h) {
          v[static_cast<size_t>((((b * heads) + h) * Lq + i) * Lk + j)] = kMaskNeg;
        }
      }
    }
  }
  return Tensor::from({B * heads, Lq, Lk}, std::move(v));
}

Tensor maybe_dropout(const Tensor& x, double rate, RngStream* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  return dropout(x, rate, *rng);
}

Tensor attention(const Tensor& q_in, const Tensor& kv_in, const Tensor& mask,
                 const AttentionParams& p, int64_t batch, int64_t lq, int64_t lk, int64_t heads) {
  const int64_t d = q_in.dim(1);
  const int64_t dh = d / heads;
  Tensor q = split_heads(matmul(q_in, p.wq), batch, lq, heads);
  Tensor k = split_heads(matmul(kv_in, p.wk), batch, lk, heads);
  Tensor v = split_heads(matmul(kv_in, p.wv), batch, lk, heads);
  Tensor scores = scale(bmm(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(dh)));
  scores = add(scores, mask);
  Tensor alpha = softmax_last(scores);
  Tensor ctx = merge_heads(bmm(alpha, v), batch, lq);
  return matmul(ctx, p.wo);
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  Tensor h = gelu(add_bias(matmul(x, p.w1), p.b1));
  return add_bias(matmul(h, p.w2), p.b2);
}

Tensor adapter_branch(const Tensor& x, const Adapter& a) {
  Tensor h = layer_norm(x, a.ln.gain, a.ln.bias, kLnEps);
  Tensor down = gelu(add_bias(matmul(h, a.down), a.down_bias));
  return add_bias(matmul(down, a.up), a.up_bias);
}

}  // namespace

EncodeResult encode(const ModelState& m, int task, std::span<const std::vector<int>> enc_seqs,
                    double dropout_rate, RngStream* rng) {
  const Backbone& bb = *m.backbone;
  const TaskHead* head = m.head(task);
  PaddedBatch batch = pad_batch(enc_seqs, bb.cfg.max_len);

  Tensor g;
  int g_id = -1;
  if (head != nullptr) {
    g = head->g_embed;
    g_id = m.vocab->g_id(task);
  }
  Tensor x = g.defined() ? embedding(bb.embed, batch.ids, g, g_id) : embedding(bb.embed, batch.ids);
  x = add(x, position_rows(bb, batch.batch, batch.len));

  Tensor mask = attention_mask(batch, bb.cfg.heads, batch.len, /*causal=*/false);
  for (size_t li = 0; li < bb.enc.size(); ++li) {
    const auto& layer = bb.enc[li];
    Tensor h = layer_norm(x, layer.ln_attn.gain, layer.ln_attn.bias, kLnEps);
    Tensor a = attention(h, h, mask, layer.attn, batch.batch, batch.len, batch.len, bb.cfg.heads);
    x = add(x, maybe_dropout(a, dropout_rate, rng));
    Tensor h2 = layer_norm(x, layer.ln_ff.gain, layer.ln_ff.bias, kLnEps);
    Tensor f = feed_forward(h2, layer.ff);
    x = add(x, maybe_dropout(f, dropout_rate, rng));
    if (head != nullptr) x = add(x, adapter_branch(x, head->adapters[li]));
  }
  x = layer_norm(x, bb.enc_final.gain, bb.enc_final.bias, kLnEps);

  EncodeResult res;
  res.enc_out = x;
  res.batch = batch.batch;
  res.len = batch.len;
  res.real = std::move(batch.real);
  return res;
}

Tensor decode_logits(const ModelState& m, int task, const EncodeResult& enc,
                     std::span<const std::vector<int>> dec_seqs, double dropout_rate,
                     RngStream* rng) {
  const Backbone& bb = *m.backbone;
  const TaskHead* head = m.head(task);
  if (static_cast<int64_t>(dec_seqs.size()) != enc.batch) {
    throw DimensionError("decode_logits: decoder batch " + std::to_string(dec_seqs.size()) +
                         " vs encoder batch " + std::to_string(enc.batch));
  }
  PaddedBatch batch = pad_batch(dec_seqs, bb.cfg.max_len);

  Tensor x = embedding(bb.embed, batch.ids);
  x = add(x, position_rows(bb, batch.batch, batch.len));

  Tensor self_mask = attention_mask(batch, bb.cfg.heads, batch.len, /*causal=*/true);
  PaddedBatch enc_keys;
  enc_keys.batch = enc.batch;
  enc_keys.len = enc.len;
  enc_keys.real = enc.real;
  Tensor cross_mask = attention_mask(enc_keys, bb.cfg.heads, batch.len, /*causal=*/false);

  const size_t adapter_offset = bb.enc.size();
  for (size_t li = 0; li < bb.dec.size(); ++li) {
    const auto& layer = bb.dec[li];
    Tensor h = layer_norm(x, layer.ln_self.gain, layer.ln_self.bias, kLnEps);
    Tensor a =
        attention(h, h, self_mask, layer.self_attn, batch.batch, batch.len, batch.len, bb.cfg.heads);
    x = add(x, maybe_dropout(a, dropout_rate, rng));
    Tensor hc = layer_norm(x, layer.ln_cross.gain, layer.ln_cross.bias, kLnEps);
    Tensor c = attention(hc, enc.enc_out, cross_mask, layer.cross_attn, batch.batch, batch.len,
                         enc.len, bb.cfg.heads);
    x = add(x, maybe_dropout(c, dropout_rate, rng));
    Tensor h2 = layer_norm(x, layer.ln_ff.gain, layer.ln_ff.bias, kLnEps);
    Tensor f = feed_forward(h2, layer.ff);
    x = add(x, maybe_dropout(f, dropout_rate, rng));
    if (head != nullptr) x = add(x, adapter_branch(x, head->adapters[adapter_offset + li]));
  }
  x = layer_norm(x, bb.dec_final.gain, bb.dec_final.bias, kLnEps);
  return matmul_nt(x, bb.embed);  // tied projection over the base vocabulary
}

ForwardResult seq2seq_forward(const ModelState& m, int task,
                              std::span<const std::vector<int>> enc_seqs,
                              std::span<const std::vector<int>> dec_seqs, double dropout_rate,
                              RngStream* rng) {
  EncodeResult enc = encode(m, task, enc_seqs, dropout_rate, rng);
  Tensor logits = decode_logits(m, task, enc, dec_seqs, dropout_rate, rng);
  ForwardResult out;
  out.logits = logits;
  out.batch = enc.batch;
  out.dec_len = logits.dim(0) / enc.batch;
  return out;
}

// ---- inference -------------------------------------------------------------

DecodeResult decode_greedy(const ModelState& m, int task, const std::vector<int>& enc_seq,
                           int max_len) {
  autograd::NoGradGuard no_grad;
  if (max_len < 1) max_len = 1;
  const std::vector<std::vector<int>> enc_batch = {enc_seq};
  EncodeResult enc = encode(m, task, enc_batch, 0.0, nullptr);

  DecodeResult out;
  std::vector<int> dec = {Vocab::kA};
  const int64_t v = m.backbone->cfg.vocab;
  while (static_cast<int>(out.tokens.size()) < max_len) {
    const std::vector<std::vector<int>> dec_batch = {dec};
    Tensor logits = decode_logits(m, task, enc, dec_batch, 0.0, nullptr);
    const int64_t last = static_cast<int64_t>(dec.size()) - 1;
    const double* row = logits.values().data() + last * v;
    std::vector<double> lsm(static_cast<size_t>(v));
    log_softmax_row(row, lsm.data(), v);
    const int64_t tok = argmax_row(lsm.data(), v);
    out.tokens.push_back(static_cast<int>(tok));
    out.logprobs.push_back(lsm[static_cast<size_t>(tok)]);
    if (tok == Vocab::kEos) break;
    dec.push_back(static_cast<int>(tok));
  }
  return out;
}

double perplexity(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) return std::numeric_limits<double>::infinity();
  double mean = 0.0;
  for (double lp : token_logprobs) mean += lp;
  mean /= static_cast<double>(token_logprobs.size());
  return std::exp(-mean);
}

std::vector<int> sample_top_k(const ModelState& m, int task, int k, double temperature,
                              int max_len, RngStream& rng, std::string* warning) {
  autograd::NoGradGuard no_grad;
  if (k < 1) throw ParameterError("sample_top_k: k must be >= 1");
  if (temperature <= 0.0) throw ParameterError("sample_top_k: temperature must be positive");
  if (max_len < 1) max_len = 1;
  const int64_t v = m.backbone->cfg.vocab;
  if (k > v) {
    if (warning) {
      *warning = "sample_top_k: k " + std::to_string(k) + " clamped to vocabulary size " +
                 std::to_string(v);
    }
    k = static_cast<int>(v);
  }
  if (m.head(task) == nullptr) throw RoutingError("sample_top_k: task-less sampling not supported");

  const std::vector<std::vector<int>> enc_batch = {{m.vocab->g_id(task)}};
  EncodeResult enc = encode(m, task, enc_batch, 0.0, nullptr);

  std::vector<int> out;
  std::vector<int> dec = {Vocab::kA};
  while (static_cast<int>(out.size()) < max_len) {
    const std::vector<std::vector<int>> dec_batch = {dec};
    Tensor logits = decode_logits(m, task, enc, dec_batch, 0.0, nullptr);
    const int64_t last = static_cast<int64_t>(dec.size()) - 1;
    const double* row = logits.values().data() + last * v;

    std::vector<int64_t> idx(static_cast<size_t>(v));
    for (int64_t j = 0; j < v; ++j) idx[static_cast<size_t>(j)] = j;
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
      if (row[a] != row[b]) return row[a] > row[b];
      return a < b;
    });
    idx.resize(static_cast<size_t>(k));
    // Renormalize over the k best and sample.
    double mx = row[idx[0]];
    std::vector<double> p(idx.size());
    double z = 0.0;
    for (size_t j = 0; j < idx.size(); ++j) {
      p[j] = std::exp((row[idx[j]] - mx) / temperature);
      z += p[j];
    }
    const double u = rng.uniform() * z;
    double c = 0.0;
    int64_t tok = idx.back();
    for (size_t j = 0; j < idx.size(); ++j) {
      c += p[j];
      if (u < c) {
        tok = idx[j];
        break;
      }
    }
    out.push_back(static_cast<int>(tok));
    if (tok == Vocab::kEos) break;
    dec.push_back(static_cast<int>(tok));
  }
  return out;
}

std::vector<double> pooled_embedding(const ModelState& m, const std::vector<int>& context) {
  if (context.empty()) throw InputError("pooled_embedding: empty context");
  autograd::NoGradGuard no_grad;
  ModelState adapterless;
  adapterless.backbone = m.backbone;
  adapterless.vocab = m.vocab;
  const std::vector<std::vector<int>> batch = {context};
  EncodeResult enc = encode(adapterless, -1, batch, 0.0, nullptr);
  const int64_t d = m.backbone->cfg.d;
  std::vector<double> out(static_cast<size_t>(d), 0.0);
  int64_t count = 0;
  for (int64_t i = 0; i < enc.len; ++i) {
    if (!enc.real[static_cast<size_t>(i)]) continue;
    const double* row = enc.enc_out.values().data() + i * d;
    for (int64_t c = 0; c < d; ++c) out[static_cast<size_t>(c)] += row[c];
    ++count;
  }
  if (count == 0) throw InputError("pooled_embedding: context has no non-PAD tokens");
  for (auto& x : out) x /= static_cast<double>(count);
  return out;
}

}  // namespace sll
