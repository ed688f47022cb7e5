#pragma once

#include <string>

#include "sll/backward.hpp"
#include "sll/checkpoint.hpp"
#include "sll/metrics.hpp"
#include "sll/solver.hpp"

namespace sll {

struct StreamSource {
  std::string manifest;  // when non-empty the stream is loaded, not generated
  uint64_t seed = 1;
  int n_tasks = 3;
  StreamSizes sizes;
  std::vector<std::string> kinds;
  std::vector<int> unlabeled_per_task;
};

// Component switches; every switch ON reproduces the full method, turning
// exactly one OFF reproduces the matching reduced variant.
struct AblationFlags {
  bool unlabel = true;     // off: no unlabeled data is used anywhere
  bool select = true;      // off: confidence filter wide open (tau = inf)
  bool interact = true;    // off: gate open from step 0
  bool self_study = true;  // off: drop the dropout-consistency term
  bool back_aug = true;    // off: skip the backward-augmentation stage
};

struct Seeds {
  uint64_t model = 1;
  uint64_t data = 2;
  uint64_t dropout = 3;
  uint64_t sampling = 4;
};

struct RunConfig {
  StreamSource stream;
  HyperParams hp;
  AblationFlags ablation;
  Seeds seeds;
  int epochs_per_task = 120;
  double warmup_ratio = 0.1;
  int pseudo_count = 50;  // generated contexts per previous task
  int eval_max_len = 12;
  int gen_max_len = 16;
  double retrain_lr = -1.0;  // < 0: use hp.lr
  bool eval_with_student = false;
  std::string backbone_path;
  std::string out_dir;          // optional: report + checkpoints are written here
  std::string resume;           // optional: checkpoint to resume from
  bool save_checkpoints = false;

  // Canonical form excludes run-location fields (out_dir, resume).
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  uint64_t config_hash() const;
  void set_base_seed(uint64_t base);
};

RunConfig load_config(const std::string& path);

RunReport run_stream(const RunConfig& cfg);

struct AblationRow {
  std::string variant;
  double avg_score = 0.0;
  std::optional<double> bwt;
};

std::vector<AblationRow> run_ablation_suite(const RunConfig& base);
std::string ablation_table(const std::vector<AblationRow>& rows);

// ---- backbone fixture ------------------------------------------------------

struct PretrainConfig {
  uint64_t seed = 7;
  int steps = 1500;
  int batch = 16;
  double lr = 3e-3;
  double warmup_ratio = 0.1;
  int corpus_size = 4000;
  ModelConfig model;  // vocab filled from the standard lexicon when 0
};

// Denoising pretraining of the frozen backbone; writes the fixture and
// returns its content hash.
uint64_t pretrain_backbone(const PretrainConfig& cfg, const std::string& out_path);

// Mean denoising perplexity of a backbone on held-out contexts (fixed
// corruption seed); the pretraining improvement oracle.
double denoising_perplexity(const Backbone& backbone, const Vocab& vocab,
                            std::span<const std::vector<int>> contexts, uint64_t seed);

// ---- checkpoints -----------------------------------------------------------

struct RunState {
  std::shared_ptr<const Backbone> backbone;
  std::shared_ptr<const Vocab> vocab;
  ModelState student;
  ModelState teacher;
  ResultMatrix matrix;
  std::vector<TaskLog> logs;
  int next_task = 0;
};

void save_run_checkpoint(const std::string& path, const RunState& state, const RunConfig& cfg,
                         uint64_t backbone_hash);
RunState load_run_checkpoint(const std::string& path, const RunConfig& cfg,
                             std::shared_ptr<const Backbone> backbone,
                             std::shared_ptr<const Vocab> vocab, uint64_t backbone_hash,
                             const ModelConfig& model_cfg);

}  // namespace sll
