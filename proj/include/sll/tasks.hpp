#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sll/errors.hpp"
#include "sll/rng.hpp"

namespace sll {

// Word-level vocabulary over the built-in synthetic lexicon. Ids 0..3 are
// reserved (PAD, EOS, [Q], [A]); generation tokens for tasks sit past the
// base vocabulary and never appear in decoder targets.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kQ = 2;
  static constexpr int kA = 3;

  static Vocab standard();

  int base_size() const { return static_cast<int>(words_.size()); }
  int g_id(int task) const { return base_size() + task; }
  bool is_g(int id) const { return id >= base_size(); }
  bool is_special(int id) const { return id < 4 || is_g(id); }

  int id(const std::string& word) const;
  std::string word(int id) const;

  std::vector<int> tokenize(const std::string& text) const;
  std::string detokenize(std::span<const int> ids) const;

  const std::vector<std::string>& words() const { return words_; }
  static Vocab from_words(std::vector<std::string> words);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// A text-to-text instance. Unlabeled samples carry a context only.
struct Sample {
  std::vector<int> context;
  std::optional<std::vector<int>> question;
  std::optional<std::vector<int>> answer;
  bool labeled() const { return answer.has_value(); }
};

enum class MetricKind { ExactMatch, NormalizedF1 };

std::string metric_name(MetricKind m);
MetricKind metric_from_name(const std::string& s);

struct AugmentationPolicy {
  double p_synonym = 0.0;
  double p_swap = 0.0;
  double p_delete = 0.0;
  double p_duplicate = 0.0;
  double rho = 0.3;  // max perturbed-token fraction
  std::unordered_map<int, std::vector<int>> synonyms;
};

struct TaskSpec {
  int id = -1;
  std::string name;
  std::string kind;  // sentiment | topic | polarity | copy | reverse | arith
  MetricKind metric = MetricKind::ExactMatch;
  std::vector<int> question;  // fixed question tokens for this task
  std::vector<std::vector<int>> answer_lexicon;
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;
  std::vector<Sample> test;
  AugmentationPolicy augmentation;
  int g_token = -1;
};

struct StreamSizes {
  int labeled = 24;
  int unlabeled = 400;
  int test = 200;
};

struct TaskStream {
  Vocab vocab;
  uint64_t seed = 0;
  std::vector<TaskSpec> tasks;
};

// ---- formatting ------------------------------------------------------------

// Encoder side: context (+ " [Q] " question when present). Never contains
// answer tokens.
std::vector<int> format_input(const Sample& s);

// Decoder side: [A] answer EOS. Requires a labeled sample.
std::vector<int> format_target(const Sample& s);

// Inverse of format_input over (context, question).
Sample parse_input(std::span<const int> tokens);

// ---- augmentation ----------------------------------------------------------

std::vector<int> augment(std::span<const int> context, const AugmentationPolicy& policy, RngStream& rng);

// ---- synthetic stream ------------------------------------------------------

std::vector<std::string> default_task_kinds(int n_tasks);

TaskStream make_synthetic_stream(uint64_t seed, int n_tasks, const StreamSizes& sizes,
                                 const std::vector<std::string>& kinds = {},
                                 const std::vector<int>& unlabeled_per_task = {});

// Latent label of a generated context under the generator's own rules; the
// oracle behind the augmentation semantics tests. nullopt when the latent
// label is undefined (e.g. the label-bearing token was destroyed).
std::optional<std::string> generator_latent_answer(const Vocab& vocab, const std::string& kind,
                                                   std::span<const int> context);

// Raw contexts for backbone pretraining (denoising corpus); includes a slice
// of question-formatted inputs so the [Q] embedding is trained.
std::vector<std::vector<int>> make_pretrain_corpus(const Vocab& vocab, uint64_t seed, int count);

// ---- serialization ---------------------------------------------------------

// Stream manifest (JSON) + line-delimited corpus; load reproduces the stream
// exactly.
void save_stream(const TaskStream& stream, const std::string& manifest_path,
                 const std::string& corpus_path);
TaskStream load_stream(const std::string& manifest_path);

}  // namespace sll
