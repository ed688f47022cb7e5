#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "sll/orchestrator.hpp"
#include "test_helpers.hpp"

using namespace sll;

namespace {

// Small backbone shared by the integration tests; pretrained once per
// process.
const std::string& small_backbone() {
  static const std::string path = [] {
    PretrainConfig cfg;
    cfg.seed = 7;
    cfg.steps = 260;
    cfg.corpus_size = 1200;
    cfg.model.d = 32;
    cfg.model.heads = 4;
    cfg.model.ff = 64;
    cfg.model.bottleneck = 8;
    std::string p = "test_small_backbone.bin";
    pretrain_backbone(cfg, p);
    return p;
  }();
  return path;
}

RunConfig small_run_config() {
  RunConfig cfg;
  cfg.stream.seed = 5;
  cfg.stream.n_tasks = 2;
  cfg.stream.kinds = {"sentiment", "topic"};
  cfg.stream.sizes = {8, 24, 12};
  cfg.hp.batch_size = 4;
  cfg.hp.lr = 3e-3;
  cfg.epochs_per_task = 4;
  cfg.pseudo_count = 6;
  cfg.backbone_path = small_backbone();
  cfg.set_base_seed(11);
  return cfg;
}

}  // namespace

TEST_CASE("pretraining is deterministic and improves denoising perplexity") {
  PretrainConfig cfg;
  cfg.seed = 9;
  cfg.steps = 40;
  cfg.corpus_size = 300;
  cfg.model.d = 16;
  cfg.model.heads = 2;
  cfg.model.ff = 32;
  cfg.model.bottleneck = 4;
  const uint64_t h1 = pretrain_backbone(cfg, "test_pretrain_a.bin");
  const uint64_t h2 = pretrain_backbone(cfg, "test_pretrain_b.bin");
  CHECK(h1 == h2);

  auto [trained, vocab] = checkpoint::load_backbone("test_pretrain_a.bin");
  RngStream rng(99);
  ModelConfig mc = cfg.model;
  mc.vocab = vocab.base_size();
  Backbone untrained = Backbone::init(mc, rng);
  auto heldout = make_pretrain_corpus(vocab, 12345, 60);
  const double ppl_trained = denoising_perplexity(trained, vocab, heldout, 4);
  const double ppl_untrained = denoising_perplexity(untrained, vocab, heldout, 4);
  CHECK(ppl_trained < ppl_untrained);
  std::remove("test_pretrain_a.bin");
  std::remove("test_pretrain_b.bin");
}

TEST_CASE("smoke run over two tasks produces a lower-triangular matrix") {
  RunConfig cfg = small_run_config();
  cfg.stream.kinds = {"copy", "copy"};
  cfg.epochs_per_task = 3;
  RunReport report = run_stream(cfg);
  REQUIRE(report.matrix.n() == 2);
  CHECK(report.matrix.rows[0].size() == 1);
  CHECK(report.matrix.rows[1].size() == 2);
  CHECK(report.matrix.at(0, 0) > 0.0);
  CHECK(report.matrix.at(1, 1) > 0.0);
  CHECK(report.task_names.size() == 2);
  CHECK(report.logs.size() == 2);
  CHECK_FALSE(report.logs[0].steps.empty());
}

TEST_CASE("disabling backward augmentation pins BWT to exactly zero") {
  RunConfig cfg = small_run_config();
  cfg.ablation.back_aug = false;
  RunReport report = run_stream(cfg);
  REQUIRE(report.bwt_value.has_value());
  CHECK(*report.bwt_value == 0.0);
}

TEST_CASE("the run is deterministic given config and seeds") {
  RunConfig cfg = small_run_config();
  cfg.epochs_per_task = 3;
  RunReport a = run_stream(cfg);
  RunReport b = run_stream(cfg);
  CHECK(a.canonical_without_timing() == b.canonical_without_timing());
}

TEST_CASE("the backbone fixture is never mutated by a run") {
  RunConfig cfg = small_run_config();
  cfg.epochs_per_task = 2;
  const uint64_t before = checkpoint::file_hash(cfg.backbone_path);
  auto [bb, vocab] = checkpoint::load_backbone(cfg.backbone_path);
  auto params = bb.parameters();
  const uint64_t values_before = sll::testing::values_hash(params);
  run_stream(cfg);
  CHECK(checkpoint::file_hash(cfg.backbone_path) == before);
  CHECK(sll::testing::values_hash(params) == values_before);
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run") {
  namespace fs = std::filesystem;
  RunConfig cfg = small_run_config();
  cfg.stream.n_tasks = 3;
  cfg.stream.kinds = {"sentiment", "topic", "polarity"};
  cfg.epochs_per_task = 3;

  RunReport full = run_stream(cfg);

  fs::create_directories("test_resume_out");
  RunConfig with_ckpt = cfg;
  with_ckpt.out_dir = "test_resume_out";
  with_ckpt.save_checkpoints = true;
  run_stream(with_ckpt);

  RunConfig resumed = cfg;
  resumed.resume = "test_resume_out/checkpoint_task1.bin";  // after task 2 of 3
  RunReport rest = run_stream(resumed);
  CHECK(rest.matrix.rows == full.matrix.rows);
  CHECK(rest.canonical_without_timing() == full.canonical_without_timing());

  // A config drift is refused.
  RunConfig drifted = cfg;
  drifted.hp.tau = 2.0;
  drifted.resume = "test_resume_out/checkpoint_task1.bin";
  CHECK_THROWS_AS(run_stream(drifted), ContractError);

  fs::remove_all("test_resume_out");
}

TEST_CASE("run config round-trips through JSON with a stable hash") {
  RunConfig cfg = small_run_config();
  cfg.ablation.self_study = false;
  cfg.stream.unlabeled_per_task = {5, 9};
  RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.config_hash() == cfg.config_hash());
  RunConfig other = cfg;
  other.hp.mu = 0.5;
  CHECK(other.config_hash() != cfg.config_hash());
}

TEST_CASE("ablation suite emits six rows with the expected flags") {
  RunConfig cfg = small_run_config();
  cfg.stream.sizes = {6, 12, 8};
  cfg.epochs_per_task = 2;
  cfg.pseudo_count = 3;
  auto rows = run_ablation_suite(cfg);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].variant == "full");
  CHECK(rows[1].variant == "w/o Unlabel");
  REQUIRE(rows[1].bwt.has_value());
  CHECK(*rows[1].bwt == 0.0);  // no unlabeled data, no backward signal
  REQUIRE(rows[5].bwt.has_value());
  CHECK(*rows[5].bwt == 0.0);  // backward stage disabled
  const std::string table = ablation_table(rows);
  CHECK(table.find("w/o Self-Study") != std::string::npos);
}
