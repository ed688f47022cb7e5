#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sll/tasks.hpp"
#include "sll/tensor.hpp"

namespace sll {

struct ModelConfig {
  int64_t vocab = 0;  // base vocabulary size (generation tokens live past it)
  int64_t d = 64;
  int64_t heads = 4;
  int64_t ff = 256;
  int64_t enc_layers = 2;
  int64_t dec_layers = 2;
  int64_t bottleneck = 16;
  int64_t max_len = 64;
};

struct LayerNormParams {
  Tensor gain, bias;
};

struct AttentionParams {
  Tensor wq, wk, wv, wo;
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayerParams {
  LayerNormParams ln_attn;
  AttentionParams attn;
  LayerNormParams ln_ff;
  FeedForwardParams ff;
};

struct DecoderLayerParams {
  LayerNormParams ln_self;
  AttentionParams self_attn;
  LayerNormParams ln_cross;
  AttentionParams cross_attn;
  LayerNormParams ln_ff;
  FeedForwardParams ff;
};

// Pre-LN encoder-decoder transformer with a tied output projection and
// sinusoidal positions. Frozen after pretraining: set_trainable(false) drops
// every tensor out of gradient flow, so task training cannot touch it.
struct Backbone {
  ModelConfig cfg;
  Tensor embed;  // (vocab, d), tied with the output projection
  std::vector<EncoderLayerParams> enc;
  LayerNormParams enc_final;
  std::vector<DecoderLayerParams> dec;
  LayerNormParams dec_final;
  Tensor pos;  // constant sinusoidal table (max_len, d)

  static Backbone init(const ModelConfig& cfg, RngStream& rng);
  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void set_trainable(bool on);
  int64_t param_count() const;
};

// Residual bottleneck adapter: h + Up(gelu(Down(LN(h)))). Up starts at zero
// so a fresh adapter is an exact identity.
struct Adapter {
  LayerNormParams ln;
  Tensor down, down_bias, up, up_bias;
};

struct TaskHead {
  int task_id = -1;
  std::vector<Adapter> adapters;  // encoder layers first, then decoder layers
  Tensor g_embed;                 // trainable generation-token embedding (d)

  static TaskHead init(const ModelConfig& cfg, int task_id, RngStream& rng);
  std::vector<Tensor> trainable();
  std::vector<Tensor> trainable() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix) const;
  TaskHead clone() const;
  void copy_values_from(const TaskHead& other);
  int64_t adapter_param_count() const;  // excludes g_embed
};

// Frozen backbone + per-task heads. Student and teacher are two ModelStates
// sharing the backbone pointer.
struct ModelState {
  std::shared_ptr<const Backbone> backbone;
  std::shared_ptr<const Vocab> vocab;
  std::map<int, TaskHead> heads;

  const TaskHead* head(int task) const;  // nullptr for task < 0; RoutingError if unknown
  TaskHead& head_mut(int task);
};

// ---- forward ---------------------------------------------------------------

struct EncodeResult {
  Tensor enc_out;  // (batch * len, d)
  int64_t batch = 0;
  int64_t len = 0;
  std::vector<uint8_t> real;  // batch * len flags, 1 = non-PAD position
};

EncodeResult encode(const ModelState& m, int task, std::span<const std::vector<int>> enc_seqs,
                    double dropout_rate, RngStream* rng);

// Teacher-forced decoder logits over the base vocabulary: (batch * dec_len, V).
Tensor decode_logits(const ModelState& m, int task, const EncodeResult& enc,
                     std::span<const std::vector<int>> dec_seqs, double dropout_rate,
                     RngStream* rng);

struct ForwardResult {
  Tensor logits;  // (batch * dec_len, V)
  int64_t batch = 0;
  int64_t dec_len = 0;
};

ForwardResult seq2seq_forward(const ModelState& m, int task,
                              std::span<const std::vector<int>> enc_seqs,
                              std::span<const std::vector<int>> dec_seqs, double dropout_rate,
                              RngStream* rng);

// ---- inference -------------------------------------------------------------

struct DecodeResult {
  std::vector<int> tokens;        // emitted tokens, EOS included when reached
  std::vector<double> logprobs;   // log-probability of each emitted token
};

DecodeResult decode_greedy(const ModelState& m, int task, const std::vector<int>& enc_seq,
                           int max_len);

// exp(-mean(log p)); +inf for an empty sequence (it can never pass a
// confidence filter).
double perplexity(std::span<const double> token_logprobs);

// Top-k sampling prompted by the task's generation token. k larger than the
// vocabulary is clamped; the event is recorded in *warning when provided.
std::vector<int> sample_top_k(const ModelState& m, int task, int k, double temperature,
                              int max_len, RngStream& rng, std::string* warning = nullptr);

// Adapterless frozen-encoder embedding: mean over non-PAD positions of the
// final hidden states. Task-independent by construction.
std::vector<double> pooled_embedding(const ModelState& m, const std::vector<int>& context);

}  // namespace sll
