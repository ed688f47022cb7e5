#include "sll/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

namespace sll {

// ---- config ----------------------------------------------------------------

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["stream"] = {{"manifest", stream.manifest},
                 {"seed", stream.seed},
                 {"n_tasks", stream.n_tasks},
                 {"labeled", stream.sizes.labeled},
                 {"unlabeled", stream.sizes.unlabeled},
                 {"test", stream.sizes.test},
                 {"kinds", stream.kinds},
                 {"unlabeled_per_task", stream.unlabeled_per_task}};
  j["hyperparams"] = {{"tau", hp.tau},
                      {"gamma", hp.gamma},
                      {"mu", hp.mu},
                      {"lambda", hp.lambda},
                      {"alpha", hp.alpha},
                      {"lr", hp.lr},
                      {"dropout", hp.dropout},
                      {"k_gen", hp.k_gen},
                      {"retrieval_k", hp.retrieval_k},
                      {"temperature", hp.temperature},
                      {"batch_size", hp.batch_size}};
  j["ablation"] = {{"unlabel", ablation.unlabel},
                   {"select", ablation.select},
                   {"interact", ablation.interact},
                   {"self_study", ablation.self_study},
                   {"back_aug", ablation.back_aug}};
  j["seeds"] = {{"model", seeds.model},
                {"data", seeds.data},
                {"dropout", seeds.dropout},
                {"sampling", seeds.sampling}};
  j["epochs_per_task"] = epochs_per_task;
  j["warmup_ratio"] = warmup_ratio;
  j["pseudo_count"] = pseudo_count;
  j["eval_max_len"] = eval_max_len;
  j["gen_max_len"] = gen_max_len;
  j["retrain_lr"] = retrain_lr;
  j["eval_with_student"] = eval_with_student;
  j["backbone"] = backbone_path;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("stream")) {
    const auto& s = j.at("stream");
    c.stream.manifest = s.value("manifest", std::string());
    c.stream.seed = s.value("seed", 1ULL);
    c.stream.n_tasks = s.value("n_tasks", 3);
    c.stream.sizes.labeled = s.value("labeled", 24);
    c.stream.sizes.unlabeled = s.value("unlabeled", 400);
    c.stream.sizes.test = s.value("test", 200);
    c.stream.kinds = s.value("kinds", std::vector<std::string>{});
    c.stream.unlabeled_per_task = s.value("unlabeled_per_task", std::vector<int>{});
  }
  if (j.contains("hyperparams")) {
    const auto& h = j.at("hyperparams");
    c.hp.tau = h.value("tau", c.hp.tau);
    c.hp.gamma = h.value("gamma", c.hp.gamma);
    c.hp.mu = h.value("mu", c.hp.mu);
    c.hp.lambda = h.value("lambda", c.hp.lambda);
    c.hp.alpha = h.value("alpha", c.hp.alpha);
    c.hp.lr = h.value("lr", c.hp.lr);
    c.hp.dropout = h.value("dropout", c.hp.dropout);
    c.hp.k_gen = h.value("k_gen", c.hp.k_gen);
    c.hp.retrieval_k = h.value("retrieval_k", c.hp.retrieval_k);
    c.hp.temperature = h.value("temperature", c.hp.temperature);
    c.hp.batch_size = h.value("batch_size", c.hp.batch_size);
  }
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    c.ablation.unlabel = a.value("unlabel", true);
    c.ablation.select = a.value("select", true);
    c.ablation.interact = a.value("interact", true);
    c.ablation.self_study = a.value("self_study", true);
    c.ablation.back_aug = a.value("back_aug", true);
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    c.seeds.model = s.value("model", 1ULL);
    c.seeds.data = s.value("data", 2ULL);
    c.seeds.dropout = s.value("dropout", 3ULL);
    c.seeds.sampling = s.value("sampling", 4ULL);
  }
  c.epochs_per_task = j.value("epochs_per_task", c.epochs_per_task);
  c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
  c.pseudo_count = j.value("pseudo_count", c.pseudo_count);
  c.eval_max_len = j.value("eval_max_len", c.eval_max_len);
  c.gen_max_len = j.value("gen_max_len", c.gen_max_len);
  c.retrain_lr = j.value("retrain_lr", c.retrain_lr);
  c.eval_with_student = j.value("eval_with_student", c.eval_with_student);
  c.backbone_path = j.value("backbone", std::string());
  return c;
}

uint64_t RunConfig::config_hash() const {
  const std::string s = to_json().dump();
  return checkpoint::fnv1a(s.data(), s.size());
}

void RunConfig::set_base_seed(uint64_t base) {
  seeds.model = RngStream::mix(base + 1);
  seeds.data = RngStream::mix(base + 2);
  seeds.dropout = RngStream::mix(base + 3);
  seeds.sampling = RngStream::mix(base + 4);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("config parse failure: " + std::string(e.what()));
  }
  return RunConfig::from_json(j);
}

// ---- backbone pretraining ---------------------------------------------------

namespace {

std::vector<int> corrupt_context(const std::vector<int>& ctx, RngStream& rng) {
  // Two noise families. Token dropout (with its strength drawn per example)
  // forces the decoder to fall back on its own distribution; full token
  // permutation forces content-based rather than positional encoder
  // representations (the decoder has to restore the canonical order from an
  // unordered bag).
  std::vector<int> out;
  const double mode = rng.uniform();
  if (mode < 0.5) {
    const double drop = 0.1 + 0.5 * rng.uniform();
    for (int t : ctx) {
      if (rng.uniform() < drop) continue;
      out.push_back(t);
    }
    if (out.empty()) out.push_back(ctx[rng.uniform_int(ctx.size())]);
  } else {
    out = ctx;
  }
  if (mode >= 0.5 || rng.uniform() < 0.25) {
    for (size_t i = out.size(); i > 1; --i) {
      std::swap(out[i - 1], out[rng.uniform_int(i)]);
    }
  }
  return out;
}

double lr_at(int step, int total, int warmup, double peak) {
  if (step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const int tail = std::max(1, total - warmup);
  return peak * static_cast<double>(total - step) / static_cast<double>(tail);
}

}  // namespace

uint64_t pretrain_backbone(const PretrainConfig& cfg_in, const std::string& out_path) {
  PretrainConfig cfg = cfg_in;
  Vocab vocab = Vocab::standard();
  if (cfg.model.vocab == 0) cfg.model.vocab = vocab.base_size();
  auto corpus = make_pretrain_corpus(vocab, cfg.seed, cfg.corpus_size);
  if (corpus.size() < 64) throw DataError("pretraining corpus too small for vocabulary coverage");

  RngStream root(cfg.seed);
  RngStream init_rng = root.fork("backbone-init");
  Backbone backbone = Backbone::init(cfg.model, init_rng);

  ModelState model;
  model.backbone = std::shared_ptr<const Backbone>(&backbone, [](const Backbone*) {});
  model.vocab = std::make_shared<const Vocab>(vocab);

  auto params = backbone.parameters();
  AdamState opt;
  opt.lr = cfg.lr;
  opt.init(params);

  RngStream data_rng = root.fork("pretrain-data");
  const int warmup = std::max(1, static_cast<int>(std::llround(cfg.warmup_ratio * cfg.steps)));
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = order.size();

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<std::vector<int>> enc, tgt;
    for (int b = 0; b < cfg.batch; ++b) {
      if (cursor >= order.size()) {
        for (size_t i = order.size(); i > 1; --i) {
          std::swap(order[i - 1], order[data_rng.uniform_int(i)]);
        }
        cursor = 0;
      }
      const auto& ctx = corpus[order[cursor++]];
      enc.push_back(corrupt_context(ctx, data_rng));
      tgt.push_back(ctx);
    }
    // Teacher-forced reconstruction batch.
    std::vector<std::vector<int>> dec;
    int64_t dec_len = 1;
    for (const auto& t : tgt) dec_len = std::max(dec_len, static_cast<int64_t>(t.size()) + 1);
    std::vector<int> targets(enc.size() * static_cast<size_t>(dec_len), -1);
    for (size_t i = 0; i < tgt.size(); ++i) {
      std::vector<int> d = {Vocab::kA};
      d.insert(d.end(), tgt[i].begin(), tgt[i].end());
      dec.push_back(std::move(d));
      for (size_t j = 0; j < tgt[i].size(); ++j) targets[i * dec_len + j] = tgt[i][j];
      targets[i * dec_len + tgt[i].size()] = Vocab::kEos;
    }
    ForwardResult fwd = seq2seq_forward(model, -1, enc, dec, 0.0, nullptr);
    Tensor loss = softmax_cross_entropy(fwd.logits, targets, -1);
    for (auto& p : params) p.zero_grad();
    backward(loss);
    adam_step(params, opt, lr_at(step, cfg.steps, warmup, cfg.lr));
    for (auto& p : params) p.zero_grad();
  }

  backbone.set_trainable(false);
  checkpoint::save_backbone(out_path, backbone, vocab);
  return checkpoint::file_hash(out_path);
}

double denoising_perplexity(const Backbone& backbone, const Vocab& vocab,
                            std::span<const std::vector<int>> contexts, uint64_t seed) {
  autograd::NoGradGuard no_grad;
  ModelState model;
  model.backbone = std::shared_ptr<const Backbone>(&backbone, [](const Backbone*) {});
  model.vocab = std::make_shared<const Vocab>(vocab);
  RngStream rng(seed);
  double total = 0.0;
  int64_t count = 0;
  for (const auto& ctx : contexts) {
    std::vector<std::vector<int>> enc = {corrupt_context(ctx, rng)};
    std::vector<int> d = {Vocab::kA};
    d.insert(d.end(), ctx.begin(), ctx.end());
    std::vector<std::vector<int>> dec = {d};
    std::vector<int> targets(ctx.begin(), ctx.end());
    targets.push_back(Vocab::kEos);
    ForwardResult fwd = seq2seq_forward(model, -1, enc, dec, 0.0, nullptr);
    Tensor loss = softmax_cross_entropy(fwd.logits, targets, -1);
    total += loss.item() * static_cast<double>(targets.size());
    count += static_cast<int64_t>(targets.size());
  }
  return std::exp(total / static_cast<double>(count));
}

// ---- run state checkpoints ---------------------------------------------------

void save_run_checkpoint(const std::string& path, const RunState& state, const RunConfig& cfg,
                         uint64_t backbone_hash) {
  checkpoint::Container c;
  c.meta["kind"] = "run-checkpoint";
  c.meta["config_hash"] = cfg.config_hash();
  c.meta["backbone_hash"] = backbone_hash;
  c.meta["next_task"] = state.next_task;
  c.meta["matrix"] = state.matrix.rows;
  nlohmann::json logs = nlohmann::json::array();
  for (const auto& tl : state.logs) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : tl.steps) {
      steps.push_back({{"step", s.step},
                       {"ce", s.ce},
                       {"teach", s.teach},
                       {"self_study", s.self_study},
                       {"lm", s.lm},
                       {"gate_open", s.gate_open},
                       {"gate_diff", s.gate_diff},
                       {"filter_rate", s.filter_rate}});
    }
    logs.push_back({{"task", tl.task}, {"name", tl.name}, {"steps", steps}});
  }
  c.meta["logs"] = logs;
  c.meta["seeds"] = {{"model", cfg.seeds.model},
                     {"data", cfg.seeds.data},
                     {"dropout", cfg.seeds.dropout},
                     {"sampling", cfg.seeds.sampling}};
  // Per-task streams are re-derived from the seeds, so every cursor is fresh
  // at a task boundary.
  c.meta["rng_cursors"] = nlohmann::json::object();

  std::vector<int> task_ids;
  for (const auto& [id, head] : state.student.heads) task_ids.push_back(id);
  c.meta["tasks"] = task_ids;
  for (int id : task_ids) {
    const auto& sh = state.student.heads.at(id);
    const auto& th = state.teacher.heads.at(id);
    for (const auto& [name, t] : sh.named_parameters("student.head" + std::to_string(id))) {
      c.tensors.push_back({name, t.shape(), t.values()});
    }
    for (const auto& [name, t] : th.named_parameters("teacher.head" + std::to_string(id))) {
      c.tensors.push_back({name, t.shape(), t.values()});
    }
  }
  checkpoint::write_container(path, c);
}

RunState load_run_checkpoint(const std::string& path, const RunConfig& cfg,
                             std::shared_ptr<const Backbone> backbone,
                             std::shared_ptr<const Vocab> vocab, uint64_t backbone_hash,
                             const ModelConfig& model_cfg) {
  checkpoint::Container c = checkpoint::read_container(path);
  if (c.meta.value("kind", "") != "run-checkpoint") {
    throw IoError(path + " is not a run checkpoint");
  }
  if (c.meta.at("config_hash").get<uint64_t>() != cfg.config_hash()) {
    throw ContractError("resume refused: checkpoint was produced under a different config");
  }
  if (c.meta.at("backbone_hash").get<uint64_t>() != backbone_hash) {
    throw ContractError("resume refused: backbone fixture differs from the checkpointed one");
  }
  RunState state;
  state.backbone = backbone;
  state.vocab = vocab;
  state.student.backbone = backbone;
  state.student.vocab = vocab;
  state.teacher.backbone = backbone;
  state.teacher.vocab = vocab;
  state.next_task = c.meta.at("next_task").get<int>();
  for (const auto& row : c.meta.at("matrix")) {
    state.matrix.add_row(row.get<std::vector<double>>());
  }
  for (const auto& tl : c.meta.at("logs")) {
    TaskLog t;
    t.task = tl.at("task").get<int>();
    t.name = tl.at("name").get<std::string>();
    for (const auto& s : tl.at("steps")) {
      StepLog sl;
      sl.step = s.at("step").get<int64_t>();
      sl.ce = s.at("ce").get<double>();
      sl.teach = s.at("teach").get<double>();
      sl.self_study = s.at("self_study").get<double>();
      sl.lm = s.at("lm").get<double>();
      sl.gate_open = s.at("gate_open").get<bool>();
      sl.gate_diff = s.value("gate_diff", -1.0);
      sl.filter_rate = s.at("filter_rate").get<double>();
      t.steps.push_back(sl);
    }
    state.logs.push_back(std::move(t));
  }
  RngStream scratch(0);
  for (int id : c.meta.at("tasks").get<std::vector<int>>()) {
    TaskHead sh = TaskHead::init(model_cfg, id, scratch);
    TaskHead th = sh.clone();
    checkpoint::load_named_values(c, sh.named_parameters("student.head" + std::to_string(id)));
    checkpoint::load_named_values(c, th.named_parameters("teacher.head" + std::to_string(id)));
    state.student.heads.emplace(id, std::move(sh));
    state.teacher.heads.emplace(id, std::move(th));
  }
  return state;
}

// ---- the per-task training loop ----------------------------------------------

namespace {

struct TrainContext {
  const RunConfig& cfg;
  const TaskSpec& task;
  RunState& state;
};

std::vector<std::vector<int>> unlabeled_pool_contexts(const TaskSpec& task) {
  std::vector<std::vector<int>> out;
  out.reserve(task.unlabeled.size());
  for (const auto& s : task.unlabeled) out.push_back(s.context);
  return out;
}

TaskLog train_task(TrainContext ctx) {
  const RunConfig& cfg = ctx.cfg;
  const TaskSpec& task = ctx.task;
  RunState& state = ctx.state;
  const int t = task.id;
  const HyperParams& hp = cfg.hp;

  // Fresh head per task; student and teacher start identical.
  RngStream head_rng = RngStream(cfg.seeds.model).fork("head", static_cast<uint64_t>(t));
  TaskHead student_head = TaskHead::init(state.backbone->cfg, t, head_rng);
  TaskHead teacher_head = student_head.clone();
  state.student.heads.erase(t);
  state.teacher.heads.erase(t);
  state.student.heads.emplace(t, std::move(student_head));
  state.teacher.heads.emplace(t, std::move(teacher_head));
  TaskHead& sh = state.student.head_mut(t);
  TaskHead& th = state.teacher.head_mut(t);

  RngStream data_rng = RngStream(cfg.seeds.data).fork("task", static_cast<uint64_t>(t));
  RngStream drop_rng = RngStream(cfg.seeds.dropout).fork("task", static_cast<uint64_t>(t));

  auto params = sh.trainable();
  AdamState opt;
  opt.lr = hp.lr;
  opt.init(params);

  const int n_labeled = static_cast<int>(task.labeled.size());
  if (n_labeled == 0) throw DataError("task " + task.name + " has no labeled data");
  const int bs = hp.batch_size;
  const int steps_per_epoch = (n_labeled + bs - 1) / bs;
  const int total_steps = cfg.epochs_per_task * steps_per_epoch;
  const int warmup = std::max(1, static_cast<int>(std::llround(cfg.warmup_ratio * total_steps)));

  const bool use_unlabeled = cfg.ablation.unlabel && !task.unlabeled.empty();
  const double tau_eff =
      cfg.ablation.select ? hp.tau : std::numeric_limits<double>::infinity();

  GateState gate_state;
  gate_state.gamma = hp.gamma;
  if (!cfg.ablation.interact) gate_state.latched = true;  // open from step 0

  std::vector<size_t> lab_order(task.labeled.size());
  for (size_t i = 0; i < lab_order.size(); ++i) lab_order[i] = i;
  size_t lab_cursor = lab_order.size();
  std::vector<size_t> unlab_order(task.unlabeled.size());
  for (size_t i = 0; i < unlab_order.size(); ++i) unlab_order[i] = i;
  size_t unlab_cursor = unlab_order.size();

  auto shuffle = [&](std::vector<size_t>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[data_rng.uniform_int(i)]);
  };

  TaskLog log;
  log.task = t;
  log.name = task.name;

  for (int step = 0; step < total_steps; ++step) {
    // Labeled batch.
    std::vector<Sample> batch;
    for (int b = 0; b < bs && static_cast<int>(batch.size()) < n_labeled; ++b) {
      if (lab_cursor >= lab_order.size()) {
        shuffle(lab_order);
        lab_cursor = 0;
      }
      batch.push_back(task.labeled[lab_order[lab_cursor++]]);
    }
    // Unlabeled batch (drawn every step; the gate only gates the losses).
    std::vector<std::vector<int>> unlab_ctx;
    if (use_unlabeled) {
      for (int b = 0; b < bs; ++b) {
        if (unlab_cursor >= unlab_order.size()) {
          shuffle(unlab_order);
          unlab_cursor = 0;
        }
        unlab_ctx.push_back(task.unlabeled[unlab_order[unlab_cursor++]].context);
      }
    }

    LossParts parts;
    parts.ce = labeled_ce_loss(state.student, t, batch, hp.dropout, &drop_rng);
    const double ce_item = parts.ce.item();

    std::vector<std::vector<int>> lab_ctx;
    for (const auto& s : batch) lab_ctx.push_back(s.context);
    const double mu_eff = use_unlabeled ? hp.mu : 0.0;
    parts.lm = lm_loss(state.student, t, lab_ctx, unlab_ctx, mu_eff, hp.dropout, &drop_rng);

    // Grade gate: student and teacher compared on the same labeled batch in
    // inference mode (no dropout), so the gap measures convergence rather
    // than dropout noise. Checks begin once the LR warm-up is over (before
    // that the student has not moved away from its teacher-equal init).
    bool open = gate_state.latched;
    double gate_diff = -1.0;
    if (use_unlabeled && !open && cfg.ablation.interact && step >= warmup) {
      autograd::NoGradGuard no_grad;
      const double student_ce = labeled_ce_loss(state.student, t, batch, 0.0, nullptr).item();
      const double teacher_ce = labeled_ce_loss(state.teacher, t, batch, 0.0, nullptr).item();
      open = gate(gate_state, student_ce, teacher_ce);
      gate_diff = gate_state.last_diff;
    }

    double teach_item = 0.0, ss_item = 0.0, filter_rate = 0.0;
    if (use_unlabeled && open) {
      std::vector<PseudoPair> pairs;
      pairs.reserve(unlab_ctx.size());
      for (const auto& ctx : unlab_ctx) {
        const auto aug = augment(ctx, task.augmentation, data_rng);
        pairs.push_back(pseudo_label(state.teacher, t, aug, cfg.eval_max_len));
      }
      UnlabeledLosses ul = unlabeled_losses(state.student, t, pairs, tau_eff, hp.dropout,
                                            &drop_rng, cfg.ablation.self_study);
      filter_rate = ul.filter_rate;
      if (ul.teach.defined()) {
        parts.teach = ul.teach;
        teach_item = ul.teach.item();
      }
      if (ul.self_study.defined()) {
        parts.self_study = ul.self_study;
        ss_item = ul.self_study.item();
      }
    }

    Tensor loss = total_loss(parts, hp.mu, hp.lambda);
    for (auto& p : params) p.zero_grad();
    backward(loss);
    adam_step(params, opt, lr_at(step, total_steps, warmup, hp.lr));
    for (auto& p : params) p.zero_grad();
    ema_update(th, sh, hp.alpha);

    StepLog sl;
    sl.step = step;
    sl.ce = ce_item;
    sl.teach = teach_item;
    sl.self_study = ss_item;
    sl.lm = parts.lm.item();
    sl.gate_open = open;
    sl.gate_diff = gate_diff;
    sl.filter_rate = filter_rate;
    log.steps.push_back(sl);
  }
  return log;
}

void backward_stage(RunState& state, const TaskStream& stream, int t, const RunConfig& cfg) {
  if (!cfg.ablation.back_aug || !cfg.ablation.unlabel) return;
  if (t == 0) return;
  const TaskSpec& current = stream.tasks[static_cast<size_t>(t)];
  if (current.unlabeled.empty()) return;

  const auto pool = unlabeled_pool_contexts(current);
  RetrievalIndex index = build_index(state.student, pool);
  const double retrain_lr = cfg.retrain_lr >= 0.0 ? cfg.retrain_lr : cfg.hp.lr;

  for (int k = 0; k < t; ++k) {
    RngStream gen_rng = RngStream(cfg.seeds.sampling)
                            .fork("gen", static_cast<uint64_t>(t) * 100000ULL + static_cast<uint64_t>(k));
    PseudoCorpus pseudo = generate_pseudo_unlabeled(state.teacher, k, cfg.pseudo_count, cfg.hp.k_gen,
                                                    cfg.hp.temperature, cfg.gen_max_len, gen_rng);
    if (pseudo.contexts.empty()) continue;
    MixCorpus mix = build_mix(state.student, pseudo, index, pool, cfg.hp.retrieval_k);
    RngStream retrain_rng =
        RngStream(cfg.seeds.sampling)
            .fork("retrain", static_cast<uint64_t>(t) * 100000ULL + static_cast<uint64_t>(k));
    retrain_previous(state.student, state.teacher, k, t, mix,
                     stream.tasks[static_cast<size_t>(k)].augmentation, cfg.hp, retrain_lr,
                     cfg.eval_max_len, retrain_rng);
  }
}

double evaluate_task(const RunState& state, const TaskSpec& task, const RunConfig& cfg) {
  const ModelState& model = cfg.eval_with_student ? state.student : state.teacher;
  const Vocab& vocab = *state.vocab;
  if (task.test.empty()) throw DataError("task " + task.name + " has no test data");
  double total = 0.0;
  for (const auto& s : task.test) {
    DecodeResult dec = decode_greedy(model, task.id, format_input(s), cfg.eval_max_len);
    std::vector<int> answer = dec.tokens;
    if (!answer.empty() && answer.back() == Vocab::kEos) answer.pop_back();
    const std::string pred = vocab.detokenize(answer);
    const std::string gold = vocab.detokenize(*s.answer);
    total += score(task.metric, pred, gold);
  }
  return total / static_cast<double>(task.test.size());
}

TaskStream resolve_stream(const RunConfig& cfg) {
  if (!cfg.stream.manifest.empty()) return load_stream(cfg.stream.manifest);
  return make_synthetic_stream(cfg.stream.seed, cfg.stream.n_tasks, cfg.stream.sizes,
                               cfg.stream.kinds, cfg.stream.unlabeled_per_task);
}

}  // namespace

RunReport run_stream(const RunConfig& cfg) {
  cfg.hp.validate();
  const auto start = std::chrono::steady_clock::now();
  if (cfg.backbone_path.empty()) throw ParameterError("run_stream: no backbone fixture configured");
  auto [backbone_raw, vocab_raw] = checkpoint::load_backbone(cfg.backbone_path);
  const uint64_t backbone_hash = checkpoint::file_hash(cfg.backbone_path);
  auto backbone = std::make_shared<const Backbone>(std::move(backbone_raw));
  auto vocab = std::make_shared<const Vocab>(std::move(vocab_raw));

  TaskStream stream = resolve_stream(cfg);
  if (vocab->base_size() != backbone->cfg.vocab) {
    throw ContractError("backbone vocabulary does not match the stream lexicon");
  }

  RunState state;
  if (!cfg.resume.empty()) {
    state = load_run_checkpoint(cfg.resume, cfg, backbone, vocab, backbone_hash, backbone->cfg);
  } else {
    state.backbone = backbone;
    state.vocab = vocab;
    state.student.backbone = backbone;
    state.student.vocab = vocab;
    state.teacher.backbone = backbone;
    state.teacher.vocab = vocab;
  }

  const int n = static_cast<int>(stream.tasks.size());
  for (int t = state.next_task; t < n; ++t) {
    const TaskSpec& task = stream.tasks[static_cast<size_t>(t)];
    state.logs.push_back(train_task({cfg, task, state}));
    backward_stage(state, stream, t, cfg);
    std::vector<double> row;
    for (int j = 0; j <= t; ++j) {
      row.push_back(evaluate_task(state, stream.tasks[static_cast<size_t>(j)], cfg));
    }
    state.matrix.add_row(std::move(row));
    state.next_task = t + 1;
    if (cfg.save_checkpoints && !cfg.out_dir.empty()) {
      save_run_checkpoint(cfg.out_dir + "/checkpoint_task" + std::to_string(t) + ".bin", state,
                          cfg, backbone_hash);
    }
  }

  RunReport report;
  report.config = cfg.to_json();
  for (const auto& task : stream.tasks) report.task_names.push_back(task.name);
  report.matrix = state.matrix;
  report.avg = avg_score(state.matrix);
  report.bwt_value = bwt(state.matrix);
  report.logs = state.logs;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!cfg.out_dir.empty()) {
    std::ofstream out(cfg.out_dir + "/report.json");
    if (!out) throw IoError("cannot write report to " + cfg.out_dir);
    out << report.to_json().dump(2) << "\n";
    save_run_checkpoint(cfg.out_dir + "/checkpoint_final.bin", state, cfg, backbone_hash);
  }
  return report;
}

std::vector<AblationRow> run_ablation_suite(const RunConfig& base) {
  std::vector<AblationRow> rows;
  auto run_variant = [&](const std::string& name, auto mutate) {
    RunConfig cfg = base;
    cfg.out_dir.clear();
    cfg.save_checkpoints = false;
    mutate(cfg);
    RunReport r = run_stream(cfg);
    rows.push_back({name, r.avg, r.bwt_value});
  };
  run_variant("full", [](RunConfig&) {});
  run_variant("w/o Unlabel", [](RunConfig& c) { c.ablation.unlabel = false; });
  run_variant("w/o Select", [](RunConfig& c) { c.ablation.select = false; });
  run_variant("w/o Interact", [](RunConfig& c) { c.ablation.interact = false; });
  run_variant("w/o Self-Study", [](RunConfig& c) { c.ablation.self_study = false; });
  run_variant("w/o Back-Aug", [](RunConfig& c) { c.ablation.back_aug = false; });
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-16s %10s %10s\n", "variant", "Avg-Score", "BWT");
  os << buf;
  for (const auto& r : rows) {
    if (r.bwt.has_value()) {
      std::snprintf(buf, sizeof(buf), "%-16s %10.3f %10.3f\n", r.variant.c_str(), r.avg_score,
                    *r.bwt);
    } else {
      std::snprintf(buf, sizeof(buf), "%-16s %10.3f %10s\n", r.variant.c_str(), r.avg_score,
                    "N/A");
    }
    os << buf;
  }
  return os.str();
}

}  // namespace sll
