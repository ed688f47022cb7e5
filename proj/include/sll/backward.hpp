#pragma once

#include <span>

#include "sll/solver.hpp"

namespace sll {

// Generated pseudo unlabeled contexts for a previously learned task. No
// labels are ever attached to them.
struct PseudoCorpus {
  int task_id = -1;
  std::vector<std::vector<int>> contexts;
  int k_gen = 0;
  double temperature = 1.0;
  uint64_t rng_seed = 0;
};

PseudoCorpus generate_pseudo_unlabeled(const ModelState& model, int task, int count, int k_gen,
                                       double temperature, int max_len, RngStream& rng);

// Exact cosine-similarity index over pooled context embeddings.
struct RetrievalIndex {
  int64_t dim = 0;
  std::vector<std::vector<double>> vectors;  // id = position
  std::vector<double> norms;

  int64_t size() const { return static_cast<int64_t>(vectors.size()); }
};

RetrievalIndex build_index(const ModelState& model, std::span<const std::vector<int>> contexts);
RetrievalIndex build_index_from_vectors(std::vector<std::vector<double>> vectors);

// Ids of the K most cosine-similar vectors; exact search, ties by lower id.
std::vector<int64_t> retrieve_neighbors(const RetrievalIndex& index, std::span<const double> query,
                                        int64_t k);

// Pseudo contexts plus, per pseudo context, its K retrieved neighbours from
// the current task's unlabeled pool — a multiset of (K+1)*M contexts.
struct MixCorpus {
  int task_id = -1;
  std::vector<std::vector<int>> contexts;
};

MixCorpus build_mix(const ModelState& model, const PseudoCorpus& pseudo,
                    const RetrievalIndex& index, std::span<const std::vector<int>> pool_contexts,
                    int64_t k);

struct RetrainStats {
  int steps = 0;
  int kept_total = 0;
  int pairs_total = 0;
};

// One epoch of the two unlabeled losses (teach + self-study, unweighted per
// the mix objective) over the mix corpus; student updated by Adam, teacher by
// EMA each step. Gate is considered pre-latched. Touches only TaskHead k.
RetrainStats retrain_previous(ModelState& student, ModelState& teacher, int task_k,
                              int current_task, const MixCorpus& mix,
                              const AugmentationPolicy& augmentation, const HyperParams& hp,
                              double retrain_lr, int pseudo_label_max_len, RngStream& rng);

}  // namespace sll
