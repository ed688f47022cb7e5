#pragma once

#include <limits>
#include <span>

#include "sll/adam.hpp"
#include "sll/model.hpp"
#include "sll/tasks.hpp"

namespace sll {

struct HyperParams {
  double tau = 1.5;      // pseudo-label confidence threshold (perplexity)
  double gamma = 0.1;    // grade gate threshold on the labeled-loss gap
  double mu = 0.01;      // unlabeled loss weight
  double lambda = 0.5;   // language-modeling loss weight
  double alpha = 0.95;   // EMA decay
  double lr = 2e-4;      // peak learning rate
  double dropout = 0.1;  // student training dropout
  int k_gen = 20;        // top-k cutoff for generation
  int retrieval_k = 3;   // nearest neighbours per query
  double temperature = 1.0;
  int batch_size = 16;

  void validate() const;
};

// Latches open the first time |loss_s - loss_t| <= gamma and stays open for
// the rest of the task.
struct GateState {
  double gamma = 0.1;
  bool latched = false;
  double last_diff = std::numeric_limits<double>::quiet_NaN();
};

bool gate(GateState& state, double loss_student, double loss_teacher);

// One teacher-labeled unlabeled sample: the (augmented) input it was decoded
// from, the decoded answer (EOS stripped) and the decode perplexity.
struct PseudoPair {
  std::vector<int> input;
  std::vector<int> answer;
  double ppl = std::numeric_limits<double>::infinity();
};

PseudoPair pseudo_label(const ModelState& teacher, int task, const std::vector<int>& aug_context,
                        int max_len);

// Indices of pairs passing the confidence filter; the independent scan used
// by the restricted-set tests.
std::vector<size_t> filter_kept(std::span<const PseudoPair> pairs, double tau);

Tensor labeled_ce_loss(const ModelState& student, int task, std::span<const Sample> batch,
                       double dropout_rate, RngStream* rng);

// Cross-entropy of the student on pairs with ppl <= tau; constant zero when
// nothing is kept.
Tensor teacher_student_loss(const ModelState& student, int task, std::span<const PseudoPair> pairs,
                            double tau, double dropout_rate, RngStream* rng);

// Bidirectional KL between two dropout-perturbed passes on the kept pairs,
// averaged per sample over its target positions.
Tensor self_study_loss(const ModelState& student, int task, std::span<const PseudoPair> pairs,
                       double tau, double dropout_rate, RngStream* rng);

// Shared-pass version used by the training loop: CE comes from the first
// pass, the KL couples the first and second pass.
struct UnlabeledLosses {
  Tensor teach;       // undefined when no pair kept
  Tensor self_study;  // undefined when disabled or no pair kept
  int kept = 0;
  double filter_rate = 0.0;
};

UnlabeledLosses unlabeled_losses(const ModelState& student, int task,
                                 std::span<const PseudoPair> pairs, double tau,
                                 double dropout_rate, RngStream* rng, bool with_self_study);

// -(1/N_l) sum log S(X|G_t) - mu * (1/N_u) sum log S(X|G_t), context tokens
// only. Pass an empty unlabeled span (or mu = 0) for the labeled-only form.
Tensor lm_loss(const ModelState& student, int task,
               std::span<const std::vector<int>> labeled_contexts,
               std::span<const std::vector<int>> unlabeled_contexts, double mu,
               double dropout_rate, RngStream* rng);

struct LossParts {
  Tensor ce;
  Tensor teach;
  Tensor self_study;
  Tensor lm;
};

// L = CE + mu*T-S + mu*S-S + lambda*LM over whichever parts are defined.
Tensor total_loss(const LossParts& parts, double mu, double lambda);

// phi <- alpha*phi + (1-alpha)*theta, elementwise over aligned tensor lists.
void ema_update(std::span<Tensor> teacher, std::span<const Tensor> student, double alpha);
void ema_update(TaskHead& teacher, const TaskHead& student, double alpha);

}  // namespace sll
