#include "sll/backward.hpp"

#include <algorithm>
#include <cmath>

namespace sll {

PseudoCorpus generate_pseudo_unlabeled(const ModelState& model, int task, int count, int k_gen,
                                       double temperature, int max_len, RngStream& rng) {
  if (count < 0) throw ParameterError("generate_pseudo_unlabeled: negative count");
  model.head(task);  // raises RoutingError for unknown tasks
  PseudoCorpus corpus;
  corpus.task_id = task;
  corpus.k_gen = k_gen;
  corpus.temperature = temperature;
  corpus.rng_seed = rng.seed();
  for (int i = 0; i < count; ++i) {
    std::vector<int> tokens = sample_top_k(model, task, k_gen, temperature, max_len, rng);
    if (!tokens.empty() && tokens.back() == Vocab::kEos) tokens.pop_back();
    if (tokens.empty()) continue;  // an immediate EOS carries no context
    corpus.contexts.push_back(std::move(tokens));
  }
  return corpus;
}

RetrievalIndex build_index(const ModelState& model, std::span<const std::vector<int>> contexts) {
  if (contexts.empty()) throw ContractError("build_index: empty unlabeled pool");
  std::vector<std::vector<double>> vectors;
  vectors.reserve(contexts.size());
  for (const auto& c : contexts) vectors.push_back(pooled_embedding(model, c));
  return build_index_from_vectors(std::move(vectors));
}

RetrievalIndex build_index_from_vectors(std::vector<std::vector<double>> vectors) {
  if (vectors.empty()) throw ContractError("build_index: no vectors");
  RetrievalIndex idx;
  idx.dim = static_cast<int64_t>(vectors[0].size());
  for (const auto& v : vectors) {
    if (static_cast<int64_t>(v.size()) != idx.dim) {
      throw DimensionError("build_index: inconsistent vector widths");
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    idx.norms.push_back(std::sqrt(n));
  }
  idx.vectors = std::move(vectors);
  return idx;
}

std::vector<int64_t> retrieve_neighbors(const RetrievalIndex& index, std::span<const double> query,
                                        int64_t k) {
  if (k < 1 || k > index.size()) {
    throw ParameterError("retrieve_neighbors: K " + std::to_string(k) + " outside [1, " +
                         std::to_string(index.size()) + "]");
  }
  if (static_cast<int64_t>(query.size()) != index.dim) {
    throw DimensionError("retrieve_neighbors: query width " + std::to_string(query.size()) +
                         " vs index width " + std::to_string(index.dim));
  }
  double qn = 0.0;
  for (double x : query) qn += x * x;
  qn = std::sqrt(qn);

  std::vector<double> cos(static_cast<size_t>(index.size()));
  for (int64_t i = 0; i < index.size(); ++i) {
    const auto& v = index.vectors[static_cast<size_t>(i)];
    double dot = 0.0;
    for (int64_t c = 0; c < index.dim; ++c) dot += v[static_cast<size_t>(c)] * query[static_cast<size_t>(c)];
    const double denom = index.norms[static_cast<size_t>(i)] * qn;
    cos[static_cast<size_t>(i)] = denom > 0.0 ? dot / denom : 0.0;
  }
  std::vector<int64_t> ids(static_cast<size_t>(index.size()));
  for (int64_t i = 0; i < index.size(); ++i) ids[static_cast<size_t>(i)] = i;
  std::sort(ids.begin(), ids.end(), [&](int64_t a, int64_t b) {
    if (cos[static_cast<size_t>(a)] != cos[static_cast<size_t>(b)])
      return cos[static_cast<size_t>(a)] > cos[static_cast<size_t>(b)];
    return a < b;
  });
  ids.resize(static_cast<size_t>(k));
  return ids;
}

MixCorpus build_mix(const ModelState& model, const PseudoCorpus& pseudo,
                    const RetrievalIndex& index, std::span<const std::vector<int>> pool_contexts,
                    int64_t k) {
  if (static_cast<int64_t>(pool_contexts.size()) != index.size()) {
    throw DimensionError("build_mix: pool size " + std::to_string(pool_contexts.size()) +
                         " vs index size " + std::to_string(index.size()));
  }
  MixCorpus mix;
  mix.task_id = pseudo.task_id;
  mix.contexts = pseudo.contexts;
  for (const auto& ctx : pseudo.contexts) {
    const auto query = pooled_embedding(model, ctx);
    for (int64_t id : retrieve_neighbors(index, query, k)) {
      mix.contexts.push_back(pool_contexts[static_cast<size_t>(id)]);  // bit-identical copies
    }
  }
  return mix;
}

RetrainStats retrain_previous(ModelState& student, ModelState& teacher, int task_k,
                              int current_task, const MixCorpus& mix,
                              const AugmentationPolicy& augmentation, const HyperParams& hp,
                              double retrain_lr, int pseudo_label_max_len, RngStream& rng) {
  if (task_k == current_task) {
    throw ContractError("retrain_previous: task " + std::to_string(task_k) +
                        " is the current task");
  }
  RetrainStats stats;
  if (mix.contexts.empty()) return stats;

  TaskHead& student_head = student.head_mut(task_k);
  TaskHead& teacher_head = teacher.head_mut(task_k);
  auto params = student_head.trainable();
  AdamState opt;
  opt.lr = retrain_lr;
  opt.init(params);

  RngStream aug_rng = rng.fork("aug");
  RngStream drop_rng = rng.fork("dropout");

  const int bs = hp.batch_size;
  const int n = static_cast<int>(mix.contexts.size());
  for (int start = 0; start < n; start += bs) {
    const int end = std::min(n, start + bs);
    std::vector<PseudoPair> pairs;
    for (int i = start; i < end; ++i) {
      const auto aug = augment(mix.contexts[static_cast<size_t>(i)], augmentation, aug_rng);
      pairs.push_back(pseudo_label(teacher, task_k, aug, pseudo_label_max_len));
    }
    stats.pairs_total += static_cast<int>(pairs.size());
    UnlabeledLosses losses =
        unlabeled_losses(student, task_k, pairs, hp.tau, hp.dropout, &drop_rng, true);
    stats.kept_total += losses.kept;
    if (losses.kept == 0) continue;
    // Mix objective: plain sum of the two unlabeled losses.
    Tensor loss = losses.self_study.defined() ? add(losses.teach, losses.self_study) : losses.teach;
    for (auto& p : params) p.zero_grad();
    backward(loss);
    adam_step(params, opt);
    for (auto& p : params) p.zero_grad();
    ema_update(teacher_head, student_head, hp.alpha);
    stats.steps += 1;
  }
  return stats;
}

}  // namespace sll
