#include "sll/solver.hpp"

#include <cmath>

namespace sll {

void HyperParams::validate() const {
  if (tau < 1.0) throw ParameterError("tau must be >= 1 (perplexity floor)");
  if (alpha < 0.0 || alpha > 1.0) throw ParameterError("alpha must lie in [0,1]");
  if (mu < 0.0 || lambda < 0.0) throw ParameterError("mu and lambda must be non-negative");
  if (retrieval_k < 1) throw ParameterError("retrieval K must be >= 1");
  if (k_gen < 1) throw ParameterError("k_gen must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ParameterError("dropout must lie in [0,1)");
  if (batch_size < 1) throw ParameterError("batch size must be >= 1");
}

bool gate(GateState& state, double loss_student, double loss_teacher) {
  if (!std::isfinite(loss_student) || !std::isfinite(loss_teacher)) {
    throw EvalError("gate: non-finite loss");
  }
  state.last_diff = std::abs(loss_student - loss_teacher);
  if (!state.latched && state.last_diff <= state.gamma) state.latched = true;
  return state.latched || state.last_diff <= state.gamma;
}

PseudoPair pseudo_label(const ModelState& teacher, int task, const std::vector<int>& aug_context,
                        int max_len) {
  if (aug_context.empty()) throw InputError("pseudo_label: empty context");
  DecodeResult dec = decode_greedy(teacher, task, aug_context, max_len);
  PseudoPair pair;
  pair.input = aug_context;
  pair.answer = dec.tokens;
  if (!pair.answer.empty() && pair.answer.back() == Vocab::kEos) pair.answer.pop_back();
  pair.ppl = perplexity(dec.logprobs);
  return pair;
}

std::vector<size_t> filter_kept(std::span<const PseudoPair> pairs, double tau) {
  std::vector<size_t> kept;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].ppl <= tau) kept.push_back(i);
  }
  return kept;
}

namespace {

// Teacher-forced batch: encoder inputs, decoder inputs ([A] target...), and
// flattened next-token targets padded with the ignore index.
struct TfBatch {
  std::vector<std::vector<int>> enc;
  std::vector<std::vector<int>> dec;
  std::vector<int> targets;  // batch * dec_len after padding
  int64_t dec_len = 0;
  std::vector<int64_t> target_len;  // real target positions per sample
};

TfBatch build_tf_batch(std::span<const std::vector<int>> enc_seqs,
                       std::span<const std::vector<int>> target_seqs) {
  TfBatch b;
  b.enc.assign(enc_seqs.begin(), enc_seqs.end());
  int64_t dec_len = 1;
  for (const auto& t : target_seqs) {
    dec_len = std::max(dec_len, static_cast<int64_t>(t.size()) + 1);
  }
  b.dec_len = dec_len;
  b.targets.assign(enc_seqs.size() * static_cast<size_t>(dec_len), -1);
  for (size_t i = 0; i < target_seqs.size(); ++i) {
    const auto& t = target_seqs[i];
    std::vector<int> dec = {Vocab::kA};
    dec.insert(dec.end(), t.begin(), t.end());
    // positions 0..|t| predict t[0..], then EOS
    for (size_t j = 0; j < t.size(); ++j) b.targets[i * dec_len + j] = t[j];
    b.targets[i * dec_len + t.size()] = Vocab::kEos;
    b.dec.push_back(std::move(dec));
    b.target_len.push_back(static_cast<int64_t>(t.size()) + 1);
  }
  return b;
}

Tensor tf_cross_entropy(const ModelState& model, int task, const TfBatch& batch,
                        double dropout_rate, RngStream* rng) {
  ForwardResult fwd = seq2seq_forward(model, task, batch.enc, batch.dec, dropout_rate, rng);
  return softmax_cross_entropy(fwd.logits, batch.targets, -1);
}

}  // namespace

Tensor labeled_ce_loss(const ModelState& student, int task, std::span<const Sample> batch,
                       double dropout_rate, RngStream* rng) {
  if (batch.empty()) throw ContractError("labeled_ce_loss: empty batch");
  std::vector<std::vector<int>> enc, tgt;
  for (const auto& s : batch) {
    if (!s.labeled()) throw ContractError("labeled_ce_loss: batch contains an unlabeled sample");
    enc.push_back(format_input(s));
    tgt.push_back(*s.answer);
  }
  return tf_cross_entropy(student, task, build_tf_batch(enc, tgt), dropout_rate, rng);
}

Tensor teacher_student_loss(const ModelState& student, int task, std::span<const PseudoPair> pairs,
                            double tau, double dropout_rate, RngStream* rng) {
  const auto kept = filter_kept(pairs, tau);
  if (kept.empty()) return Tensor::scalar(0.0);
  std::vector<std::vector<int>> enc, tgt;
  for (size_t i : kept) {
    enc.push_back(pairs[i].input);
    tgt.push_back(pairs[i].answer);
  }
  return tf_cross_entropy(student, task, build_tf_batch(enc, tgt), dropout_rate, rng);
}

namespace {

// Bidirectional KL between two logits tensors over each sample's target rows.
Tensor bidirectional_kl(const Tensor& logits1, const Tensor& logits2, const TfBatch& batch) {
  const int64_t n = static_cast<int64_t>(batch.dec.size());
  Tensor acc;
  for (int64_t s = 0; s < n; ++s) {
    const int64_t off = s * batch.dec_len;
    const int64_t len = batch.target_len[static_cast<size_t>(s)];
    Tensor p = slice_rows(logits1, off, len);
    Tensor q = slice_rows(logits2, off, len);
    Tensor kl = add(kl_divergence(p, q), kl_divergence(q, p));
    acc = acc.defined() ? add(acc, kl) : kl;
  }
  return scale(acc, 0.5 / static_cast<double>(n));
}

}  // namespace

Tensor self_study_loss(const ModelState& student, int task, std::span<const PseudoPair> pairs,
                       double tau, double dropout_rate, RngStream* rng) {
  const auto kept = filter_kept(pairs, tau);
  if (kept.empty()) return Tensor::scalar(0.0);
  std::vector<std::vector<int>> enc, tgt;
  for (size_t i : kept) {
    enc.push_back(pairs[i].input);
    tgt.push_back(pairs[i].answer);
  }
  TfBatch batch = build_tf_batch(enc, tgt);
  ForwardResult pass1 = seq2seq_forward(student, task, batch.enc, batch.dec, dropout_rate, rng);
  ForwardResult pass2 = seq2seq_forward(student, task, batch.enc, batch.dec, dropout_rate, rng);
  return bidirectional_kl(pass1.logits, pass2.logits, batch);
}

UnlabeledLosses unlabeled_losses(const ModelState& student, int task,
                                 std::span<const PseudoPair> pairs, double tau,
                                 double dropout_rate, RngStream* rng, bool with_self_study) {
  UnlabeledLosses out;
  const auto kept = filter_kept(pairs, tau);
  out.kept = static_cast<int>(kept.size());
  out.filter_rate = pairs.empty() ? 0.0
                                  : static_cast<double>(kept.size()) / static_cast<double>(pairs.size());
  if (kept.empty()) return out;
  std::vector<std::vector<int>> enc, tgt;
  for (size_t i : kept) {
    enc.push_back(pairs[i].input);
    tgt.push_back(pairs[i].answer);
  }
  TfBatch batch = build_tf_batch(enc, tgt);
  ForwardResult pass1 = seq2seq_forward(student, task, batch.enc, batch.dec, dropout_rate, rng);
  out.teach = softmax_cross_entropy(pass1.logits, batch.targets, -1);
  if (with_self_study) {
    ForwardResult pass2 = seq2seq_forward(student, task, batch.enc, batch.dec, dropout_rate, rng);
    out.self_study = bidirectional_kl(pass1.logits, pass2.logits, batch);
  }
  return out;
}

Tensor lm_loss(const ModelState& student, int task,
               std::span<const std::vector<int>> labeled_contexts,
               std::span<const std::vector<int>> unlabeled_contexts, double mu,
               double dropout_rate, RngStream* rng) {
  if (labeled_contexts.empty()) throw ContractError("lm_loss: empty labeled context batch");
  const int g = student.vocab->g_id(task);
  auto lm_part = [&](std::span<const std::vector<int>> contexts) {
    std::vector<std::vector<int>> enc(contexts.size(), std::vector<int>{g});
    std::vector<std::vector<int>> tgt(contexts.begin(), contexts.end());
    return tf_cross_entropy(student, task, build_tf_batch(enc, tgt), dropout_rate, rng);
  };
  Tensor loss = lm_part(labeled_contexts);
  if (mu > 0.0 && !unlabeled_contexts.empty()) {
    loss = add(loss, scale(lm_part(unlabeled_contexts), mu));
  }
  return loss;
}

Tensor total_loss(const LossParts& parts, double mu, double lambda) {
  if (!parts.ce.defined()) throw ContractError("total_loss: CE part is required");
  Tensor loss = parts.ce;
  if (parts.teach.defined()) loss = add(loss, scale(parts.teach, mu));
  if (parts.self_study.defined()) loss = add(loss, scale(parts.self_study, mu));
  if (parts.lm.defined()) loss = add(loss, scale(parts.lm, lambda));
  return loss;
}

void ema_update(std::span<Tensor> teacher, std::span<const Tensor> student, double alpha) {
  if (teacher.size() != student.size()) {
    throw DimensionError("ema_update: " + std::to_string(teacher.size()) + " teacher tensors vs " +
                         std::to_string(student.size()) + " student tensors");
  }
  for (size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i].shape() != student[i].shape()) {
      throw DimensionError("ema_update: shape mismatch at tensor " + std::to_string(i) + ": " +
                           shape_str(teacher[i].shape()) + " vs " + shape_str(student[i].shape()));
    }
    auto& t = teacher[i].mutable_values();
    const auto& s = student[i].values();
    for (size_t j = 0; j < t.size(); ++j) t[j] = alpha * t[j] + (1.0 - alpha) * s[j];
  }
}

void ema_update(TaskHead& teacher, const TaskHead& student, double alpha) {
  auto t = teacher.trainable();
  auto s = student.trainable();
  ema_update(std::span<Tensor>(t), std::span<const Tensor>(s.data(), s.size()), alpha);
}

}  // namespace sll
