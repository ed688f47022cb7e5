#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"

using namespace sll;
using sll::testing::TinyModel;

TEST_CASE("hyperparameter invariants are enforced") {
  HyperParams hp;
  hp.validate();
  hp.tau = 0.5;
  CHECK_THROWS_AS(hp.validate(), ParameterError);
  hp = HyperParams{};
  hp.alpha = 1.5;
  CHECK_THROWS_AS(hp.validate(), ParameterError);
  hp = HyperParams{};
  hp.mu = -0.1;
  CHECK_THROWS_AS(hp.validate(), ParameterError);
  hp = HyperParams{};
  hp.retrieval_k = 0;
  CHECK_THROWS_AS(hp.validate(), ParameterError);
}

TEST_CASE("gate compares, latches, and stays latched") {
  GateState g;
  g.gamma = 0.1;
  CHECK(gate(g, 0.55, 0.50));  // |diff| = 0.05 <= 0.1
  CHECK(g.latched);

  GateState g2;
  g2.gamma = 0.1;
  CHECK_FALSE(gate(g2, 1.0, 0.5));  // diff 0.5, never latched
  CHECK_FALSE(g2.latched);

  // Once latched it stays open even when the gap rises again.
  GateState g3;
  g3.gamma = 0.1;
  CHECK(gate(g3, 0.5, 0.45));
  CHECK(gate(g3, 5.0, 0.5));
  CHECK(g3.latched);

  CHECK_THROWS_AS(gate(g3, std::numeric_limits<double>::quiet_NaN(), 0.0), EvalError);
}

TEST_CASE("ema closed forms") {
  Tensor t = Tensor::from({1}, {2.0});
  Tensor s = Tensor::from({1}, {1.0});
  std::vector<Tensor> teacher = {t};
  std::vector<Tensor> student = {s};
  ema_update(teacher, student, 1.0);
  CHECK(t.values()[0] == 2.0);
  ema_update(teacher, student, 0.95);
  CHECK(t.values()[0] == doctest::Approx(1.95));
  ema_update(teacher, student, 0.0);
  CHECK(t.values()[0] == 1.0);

  Tensor wrong = Tensor::zeros({2});
  std::vector<Tensor> bad = {wrong};
  CHECK_THROWS_AS(ema_update(bad, student, 0.5), DimensionError);
}

TEST_CASE("ema converges geometrically to a constant student") {
  // Scalar fixture: ||phi_p - theta*|| <= alpha^p ||phi_0 - theta*||.
  Tensor phi = Tensor::from({1}, {2.0});
  Tensor theta = Tensor::from({1}, {1.0});
  std::vector<Tensor> tv = {phi};
  std::vector<Tensor> sv = {theta};
  const double initial = std::abs(phi.values()[0] - theta.values()[0]);
  double bound = initial;
  for (int p = 1; p <= 200; ++p) {
    ema_update(tv, sv, 0.95);
    bound *= 0.95;
    CHECK(std::abs(phi.values()[0] - theta.values()[0]) <= bound + 1e-12);
  }
}

TEST_CASE("total_loss arithmetic") {
  LossParts parts;
  parts.ce = Tensor::scalar(1.0);
  parts.teach = Tensor::scalar(0.2);
  parts.self_study = Tensor::scalar(0.4);
  parts.lm = Tensor::scalar(2.0);
  CHECK(total_loss(parts, 0.01, 0.5).item() == doctest::Approx(2.006).epsilon(1e-12));

  LossParts ce_only;
  ce_only.ce = Tensor::scalar(1.0);
  CHECK(total_loss(ce_only, 0.0, 0.0).item() == 1.0);

  // Gate closed: no unlabeled parts regardless of mu.
  LossParts gated;
  gated.ce = Tensor::scalar(1.0);
  gated.lm = Tensor::scalar(2.0);
  CHECK(total_loss(gated, 0.01, 0.5).item() == doctest::Approx(2.0));
}

TEST_CASE("labeled CE: mean semantics and the perfect-fit limit") {
  TinyModel tm(101, true);
  const Vocab& v = *tm.vocab;
  std::vector<Sample> batch;
  for (const char* ctx : {"the film was great", "the soup was bad"}) {
    Sample s;
    s.context = v.tokenize(ctx);
    s.question = v.tokenize("what is the sentiment");
    s.answer = v.tokenize(std::string(ctx).find("great") != std::string::npos ? "positive"
                                                                              : "negative");
    batch.push_back(s);
  }
  CHECK_THROWS_AS(labeled_ce_loss(tm.model, -1, {}, 0.0, nullptr), ContractError);

  // Duplicating the batch leaves the mean unchanged.
  auto dup = batch;
  dup.insert(dup.end(), batch.begin(), batch.end());
  const double l1 = labeled_ce_loss(tm.model, -1, batch, 0.0, nullptr).item();
  const double l2 = labeled_ce_loss(tm.model, -1, dup, 0.0, nullptr).item();
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));

  // Memorize the pairs: the loss approaches zero.
  std::vector<std::vector<int>> enc, tgt;
  for (const auto& s : batch) {
    enc.push_back(format_input(s));
    tgt.push_back(*s.answer);
  }
  sll::testing::memorize(tm.model, enc, tgt, 8000, 0.03);
  CHECK(labeled_ce_loss(tm.model, -1, batch, 0.0, nullptr).item() < 1e-6);

  // The saturated model also acts as a saturated teacher for pseudo-labels.
  PseudoPair pair = pseudo_label(tm.model, -1, format_input(batch[0]), 8);
  CHECK(pair.answer == *batch[0].answer);
  CHECK(pair.ppl == doctest::Approx(1.0).epsilon(1e-3));

  PseudoPair again = pseudo_label(tm.model, -1, format_input(batch[0]), 8);
  CHECK(again.answer == pair.answer);
  CHECK(again.ppl == pair.ppl);
}

TEST_CASE("teacher-student loss honors the confidence filter") {
  TinyModel tm(103);
  tm.add_head(0, 7);
  const Vocab& v = *tm.vocab;
  std::vector<PseudoPair> pairs;
  for (int i = 0; i < 6; ++i) {
    PseudoPair p;
    p.input = v.tokenize(i % 2 ? "great bread overall" : "dull plot today");
    p.answer = v.tokenize(i % 2 ? "positive" : "negative");
    p.ppl = 1.0 + 0.25 * i;  // 1.0, 1.25, ..., 2.25
    pairs.push_back(p);
  }

  // All filtered out: zero loss, zero gradient.
  Tensor none = teacher_student_loss(tm.model, 0, pairs, 0.99, 0.0, nullptr);
  CHECK(none.item() == 0.0);
  backward(none);
  for (auto& p : tm.model.head_mut(0).trainable()) CHECK_FALSE(p.has_grad());

  // tau = inf equals the unfiltered cross-entropy (the selection-off path).
  const double all_kept =
      teacher_student_loss(tm.model, 0, pairs, std::numeric_limits<double>::infinity(), 0.0, nullptr)
          .item();
  std::vector<PseudoPair> as_labeled = pairs;
  for (auto& p : as_labeled) p.ppl = 0.0;  // force every pair through the filter
  const double plain = teacher_student_loss(tm.model, 0, as_labeled, 1.0, 0.0, nullptr).item();
  CHECK(all_kept == doctest::Approx(plain).epsilon(1e-12));

  // Raising tau never shrinks the kept set; the kept set matches a scan.
  size_t prev = 0;
  for (double tau : {1.0, 1.3, 1.6, 2.0, 3.0}) {
    const auto kept = filter_kept(pairs, tau);
    CHECK(kept.size() >= prev);
    prev = kept.size();
    std::vector<size_t> scan;
    for (size_t i = 0; i < pairs.size(); ++i)
      if (pairs[i].ppl <= tau) scan.push_back(i);
    CHECK(kept == scan);
  }
}

TEST_CASE("self-study loss: zero without dropout, symmetric, and trainable") {
  TinyModel tm(107);
  tm.add_head(0, 9);
  const Vocab& v = *tm.vocab;
  std::vector<PseudoPair> pairs;
  for (const char* ctx : {"great bread overall", "dull plot today", "what a lovely song"}) {
    PseudoPair p;
    p.input = v.tokenize(ctx);
    p.answer = v.tokenize("positive");
    p.ppl = 1.0;
    pairs.push_back(p);
  }

  // Identical passes (no dropout) give exactly zero.
  RngStream rng(5);
  CHECK(self_study_loss(tm.model, 0, pairs, 2.0, 0.0, &rng).item() == 0.0);

  // With dropout the loss is positive and optimizable.
  auto& head = tm.model.head_mut(0);
  // Break the identity init so the adapters can actually move the logits.
  {
    RngStream init(77);
    for (auto& p : head.trainable())
      for (auto& x : p.mutable_values()) x += 0.01 * init.normal();
  }
  auto params = head.trainable();
  AdamState opt;
  opt.lr = 3e-3;
  opt.init(params);
  RngStream drop(11);
  const double first = self_study_loss(tm.model, 0, pairs, 2.0, 0.1, &drop).item();
  CHECK(first > 0.0);
  double last = first;
  for (int step = 0; step < 50; ++step) {
    Tensor loss = self_study_loss(tm.model, 0, pairs, 2.0, 0.1, &drop);
    for (auto& p : params) p.zero_grad();
    backward(loss);
    adam_step(params, opt);
    for (auto& p : params) p.zero_grad();
    last = loss.item();
  }
  CHECK(last < first);
}

TEST_CASE("lm loss: zero-weight unlabeled term contributes nothing") {
  TinyModel tm(109);
  tm.add_head(1, 13);
  const Vocab& v = *tm.vocab;
  const std::vector<std::vector<int>> lab = {v.tokenize("the film was great"),
                                             v.tokenize("bad soup today")};
  const std::vector<std::vector<int>> unlab = {v.tokenize("what a lovely song")};

  auto grads_of = [&](double mu, std::span<const std::vector<int>> u) {
    auto params = tm.model.head_mut(1).trainable();
    for (auto& p : params) p.zero_grad();
    Tensor loss = lm_loss(tm.model, 1, lab, u, mu, 0.0, nullptr);
    backward(loss);
    std::vector<std::vector<double>> out;
    for (auto& p : params) {
      out.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.values().size(), 0.0));
    }
    for (auto& p : params) p.zero_grad();
    return out;
  };

  const auto with_mu0 = grads_of(0.0, unlab);
  const auto labeled_only = grads_of(0.0, {});
  CHECK(with_mu0 == labeled_only);

  const auto with_mu = grads_of(0.5, unlab);
  CHECK(with_mu != labeled_only);

  CHECK_THROWS_AS(lm_loss(tm.model, 1, {}, unlab, 0.5, 0.0, nullptr), ContractError);
}

TEST_CASE("composite loss gradient survives a finite-difference audit") {
  TinyModel tm(113);
  tm.add_head(0, 15);
  const Vocab& v = *tm.vocab;

  std::vector<Sample> labeled;
  {
    Sample s;
    s.context = v.tokenize("the film was great");
    s.question = v.tokenize("what is the sentiment");
    s.answer = v.tokenize("positive");
    labeled.push_back(s);
    s.context = v.tokenize("bad soup today");
    s.answer = v.tokenize("negative");
    labeled.push_back(s);
  }
  std::vector<PseudoPair> pairs;
  {
    PseudoPair p;
    p.input = v.tokenize("what a lovely song");
    p.answer = v.tokenize("positive");
    p.ppl = 1.2;
    pairs.push_back(p);
    p.input = v.tokenize("dull plot");
    p.answer = v.tokenize("negative");
    p.ppl = 1.1;
    pairs.push_back(p);
  }
  std::vector<std::vector<int>> lab_ctx;
  for (const auto& s : labeled) lab_ctx.push_back(s.context);
  std::vector<std::vector<int>> unlab_ctx;
  for (const auto& p : pairs) unlab_ctx.push_back(p.input);

  auto& head = tm.model.head_mut(0);
  {
    RngStream init(99);
    for (auto& p : head.trainable())
      for (auto& x : p.mutable_values()) x += 0.02 * init.normal();
  }

  auto f = [&]() {
    RngStream drop(421);  // reset per evaluation
    LossParts parts;
    parts.ce = labeled_ce_loss(tm.model, 0, labeled, 0.1, &drop);
    UnlabeledLosses ul = unlabeled_losses(tm.model, 0, pairs, 1.5, 0.1, &drop, true);
    parts.teach = ul.teach;
    parts.self_study = ul.self_study;
    parts.lm = lm_loss(tm.model, 0, lab_ctx, unlab_ctx, 0.01, 0.1, &drop);
    return total_loss(parts, 0.01, 0.5);
  };
  auto params = head.trainable();
  CHECK(grad_check(f, params, 1e-5) < 1e-4);
}
