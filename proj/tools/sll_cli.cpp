// Command-line driver: backbone pretraining, stream runs, pseudo-data
// generation and report rendering.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sll/orchestrator.hpp"

namespace {

int cmd_pretrain(const std::string& out, uint64_t seed, int steps, int corpus) {
  sll::PretrainConfig cfg;
  cfg.seed = seed;
  cfg.steps = steps;
  cfg.corpus_size = corpus;
  const uint64_t hash = sll::pretrain_backbone(cfg, out);
  std::cout << "backbone fixture written to " << out << "\n";
  std::cout << "content hash " << std::hex << hash << std::dec << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, int64_t seed, const std::string& ablation,
            const std::string& resume, const std::string& out_dir) {
  sll::RunConfig cfg = sll::load_config(config_path);
  if (seed >= 0) cfg.set_base_seed(static_cast<uint64_t>(seed));
  if (!ablation.empty() && ablation != "none") {
    if (ablation == "unlabel") cfg.ablation.unlabel = false;
    else if (ablation == "select") cfg.ablation.select = false;
    else if (ablation == "interact") cfg.ablation.interact = false;
    else if (ablation == "self_study") cfg.ablation.self_study = false;
    else if (ablation == "back_aug") cfg.ablation.back_aug = false;
    else throw sll::ParameterError("unknown ablation '" + ablation + "'");
  }
  if (!resume.empty()) cfg.resume = resume;
  if (!out_dir.empty()) {
    cfg.out_dir = out_dir;
    cfg.save_checkpoints = true;
    std::filesystem::create_directories(out_dir);
  }
  sll::RunReport report = sll::run_stream(cfg);
  std::cout << report.to_table();
  if (!cfg.out_dir.empty()) std::cout << "report written to " << cfg.out_dir << "/report.json\n";
  return 0;
}

int cmd_generate_pseudo(const std::string& checkpoint_path, const std::string& backbone_path,
                        int task, int count, int k_gen, double temperature, int max_len,
                        uint64_t seed, const std::string& out_path) {
  auto [backbone_raw, vocab_raw] = sll::checkpoint::load_backbone(backbone_path);
  auto backbone = std::make_shared<const sll::Backbone>(std::move(backbone_raw));
  auto vocab = std::make_shared<const sll::Vocab>(std::move(vocab_raw));

  sll::checkpoint::Container c = sll::checkpoint::read_container(checkpoint_path);
  if (c.meta.value("kind", "") != "run-checkpoint") {
    throw sll::IoError(checkpoint_path + " is not a run checkpoint");
  }
  sll::ModelState model;
  model.backbone = backbone;
  model.vocab = vocab;
  sll::RngStream scratch(0);
  for (int id : c.meta.at("tasks").get<std::vector<int>>()) {
    sll::TaskHead head = sll::TaskHead::init(backbone->cfg, id, scratch);
    sll::checkpoint::load_named_values(c,
                                       head.named_parameters("teacher.head" + std::to_string(id)));
    model.heads.emplace(id, std::move(head));
  }

  sll::RngStream rng(seed);
  sll::PseudoCorpus corpus =
      sll::generate_pseudo_unlabeled(model, task, count, k_gen, temperature, max_len, rng);

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw sll::IoError("cannot write " + out_path);
    os = &file;
  }
  for (const auto& ctx : corpus.contexts) {
    nlohmann::json r;
    r["task"] = task;
    r["role"] = "pseudo";
    r["context"] = vocab->detokenize(ctx);
    (*os) << r.dump() << "\n";
  }
  return 0;
}

int cmd_report(const std::string& in_path, const std::string& format) {
  std::ifstream in(in_path);
  if (!in) throw sll::IoError("cannot read " + in_path);
  nlohmann::json j;
  in >> j;
  sll::RunReport report = sll::RunReport::from_json(j);
  if (format == "table") {
    std::cout << report.to_table();
  } else if (format == "machine") {
    std::cout << report.to_json().dump(2) << "\n";
  } else {
    throw sll::ParameterError("unknown report format '" + format + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised lifelong seq2seq learner"};
  app.require_subcommand(1);

  auto* pre = app.add_subcommand("pretrain-backbone", "train and freeze the backbone fixture");
  std::string pre_out = "backbone.bin";
  uint64_t pre_seed = 7;
  int pre_steps = 1500, pre_corpus = 4000;
  pre->add_option("--out", pre_out, "output fixture path");
  pre->add_option("--seed", pre_seed, "pretraining seed");
  pre->add_option("--steps", pre_steps, "optimizer steps");
  pre->add_option("--corpus", pre_corpus, "corpus size");

  auto* run = app.add_subcommand("run", "run a task stream end to end");
  std::string run_config, run_ablation = "none", run_resume, run_out;
  int64_t run_seed = -1;
  run->add_option("--config", run_config, "run config (JSON)")->required();
  run->add_option("--seed", run_seed, "base seed overriding the config seeds");
  run->add_option("--ablation", run_ablation,
                  "disable one component: unlabel|select|interact|self_study|back_aug");
  run->add_option("--resume", run_resume, "resume from a run checkpoint");
  run->add_option("--out", run_out, "output directory (report + checkpoints)");

  auto* gen = app.add_subcommand("generate-pseudo", "sample pseudo contexts for a learned task");
  std::string gen_ckpt, gen_backbone, gen_out;
  int gen_task = 0, gen_count = 50, gen_k = 20, gen_max_len = 16;
  double gen_temp = 1.0;
  uint64_t gen_seed = 5;
  gen->add_option("--checkpoint", gen_ckpt, "run checkpoint with learned heads")->required();
  gen->add_option("--backbone", gen_backbone, "backbone fixture")->required();
  gen->add_option("--task", gen_task, "task id")->required();
  gen->add_option("--count", gen_count, "number of contexts");
  gen->add_option("--k-gen", gen_k, "top-k cutoff");
  gen->add_option("--temperature", gen_temp, "sampling temperature");
  gen->add_option("--max-len", gen_max_len, "max context length");
  gen->add_option("--seed", gen_seed, "sampling seed");
  gen->add_option("--out", gen_out, "write records here instead of stdout");

  auto* rep = app.add_subcommand("report", "render a stored run report");
  std::string rep_in, rep_format = "table";
  rep->add_option("--in", rep_in, "report JSON path")->required();
  rep->add_option("--format", rep_format, "table|machine");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return cmd_pretrain(pre_out, pre_seed, pre_steps, pre_corpus);
    if (run->parsed()) return cmd_run(run_config, run_seed, run_ablation, run_resume, run_out);
    if (gen->parsed()) {
      return cmd_generate_pseudo(gen_ckpt, gen_backbone, gen_task, gen_count, gen_k, gen_temp,
                                 gen_max_len, gen_seed, gen_out);
    }
    if (rep->parsed()) return cmd_report(rep_in, rep_format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
