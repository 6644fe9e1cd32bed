#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "strand/evaluation.hpp"
#include "strand/io_util.hpp"
#include "strand/training.hpp"

using namespace strand;

TEST_CASE("reconstruction loss: saturated, uniform, and hand-computed cases") {
  // saturated correct logits -> loss ~ 0
  Tensor sat({2, 4});
  sat.v = {40.0, 0.0, 0.0, 0.0, 0.0, 40.0, 0.0, 0.0};
  auto lv = reconstruction_loss({{sat, {0, 1}, 3}});
  CHECK(lv.tokens == 2);
  CHECK(lv.mean < 1e-12);

  // uniform logits over n -> ln n
  Tensor uni({3, 5});
  auto lu = reconstruction_loss({{uni, {0, 4, 2}, -1}});
  CHECK(lu.mean == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  // hand-built 3-token case across two segments with a pad
  Tensor a({2, 2});
  a.v = {1.0, 0.0, 0.0, 2.0};
  Tensor b({2, 3});
  b.v = {0.0, 1.0, -1.0, 0.5, 0.5, 0.5};
  double l1 = -1.0 + std::log(std::exp(1.0) + 1.0);
  double l2 = -2.0 + std::log(1.0 + std::exp(2.0));
  double l3 = -1.0 + std::log(1.0 + std::exp(1.0) + std::exp(-1.0));
  auto lh = reconstruction_loss({{a, {0, 1}, -1}, {b, {1, 2}, 2}});
  CHECK(lh.tokens == 3);  // second row of b is pad
  CHECK(lh.mean == doctest::Approx((l1 + l2 + l3) / 3.0).epsilon(1e-12));

  // all-pad -> skip signal
  auto skip = reconstruction_loss({{a, {9, 9}, 9}});
  CHECK(skip.tokens == 0);
}

TEST_CASE("optimizer: zero-grad identity, decoupled decay, scalar oracle over 100 steps") {
  ModelConfig cfg = ModelConfig::desk();
  VocabMap vm;
  ModalityVocab v;
  v.name = "m0";
  v.vocab_size = 4;
  v.pad_id = 1;
  v.mask_id = 2;
  v.unknown_id = 3;
  vm.mods = {v};

  // a tiny parameter set with one scalar-ish entry
  Parameters params;
  params.add("w", Tensor::full({1}, 0.7));
  OptimState st = OptimState::like(params);

  // zero grads, zero decay -> unchanged
  st.weight_decay = 0.0;
  optimizer_step(params, st, 0.1);
  CHECK(params.value("w")(0) == 0.7);

  // zero grads, decay > 0 -> shrink by exactly lr*wd
  st.weight_decay = 0.05;
  double before = params.value("w")(0);
  optimizer_step(params, st, 0.1);
  CHECK(params.value("w")(0) == doctest::Approx(before * (1.0 - 0.1 * 0.05)).epsilon(1e-15));

  // scalar moment-recursion oracle, 100 steps, absolute error < 1e-12
  Parameters p2;
  p2.add("w", Tensor::full({1}, 0.3));
  OptimState s2 = OptimState::like(p2);
  double w_ref = 0.3, m_ref = 0.0, v_ref = 0.0;
  Rng rng(5);
  for (int t = 1; t <= 100; ++t) {
    double g = std::sin(0.1 * t) + 0.05 * rng.uniform(-1.0, 1.0);
    p2.grad_of("w")(0) = g;
    optimizer_step(p2, s2, 1e-3);
    m_ref = 0.9 * m_ref + 0.1 * g;
    v_ref = 0.95 * v_ref + 0.05 * g * g;
    double mhat = m_ref / (1.0 - std::pow(0.9, t));
    double vhat = v_ref / (1.0 - std::pow(0.95, t));
    w_ref -= 1e-3 * (mhat / (std::sqrt(vhat) + 1e-8) + 0.05 * w_ref);
    CHECK(std::abs(p2.value("w")(0) - w_ref) < 1e-12);
  }

  // non-finite gradient -> step rejected with the parameter named
  p2.grad_of("w")(0) = std::nan("");
  bool threw = false;
  try {
    optimizer_step(p2, s2, 1e-3);
  } catch (const StepRejected& e) {
    threw = true;
    CHECK(std::string(e.what()).find("w") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("lr schedule: warmup peak, exact floor, cosine midpoint, continuity") {
  auto sched = LrSchedule::from_max(2e-3);
  CHECK(sched.min_lr == 2e-3 / 100.0);
  std::size_t spe = 50, epochs = 40;  // warmup 8, cooldown 10, main 22

  CHECK(lr_at(0, spe, epochs, sched) == 0.0);
  CHECK(lr_at(8 * spe, spe, epochs, sched) == sched.max_lr);  // end of warmup: exactly max
  CHECK(lr_at(40 * spe, spe, epochs, sched) == sched.min_lr);
  CHECK(lr_at((epochs - 5) * spe, spe, epochs, sched) == sched.min_lr);  // cooldown floor

  // cosine midpoint: (max + min) / 2
  std::size_t main_start = 8 * spe, main_end = (epochs - 10) * spe;
  std::size_t mid = (main_start + main_end) / 2;
  CHECK(lr_at(mid, spe, epochs, sched) ==
        doctest::Approx((sched.max_lr + sched.min_lr) / 2.0).epsilon(1e-12));

  // no jumps anywhere: every per-step delta is bounded by the steepest phase
  // slope (the warmup ramp), so the phases join continuously within 1e-12
  double steepest = sched.max_lr / (8.0 * static_cast<double>(spe));
  for (std::size_t s = 1; s <= epochs * spe; ++s) {
    double a = lr_at(s - 1, spe, epochs, sched);
    double b = lr_at(s, spe, epochs, sched);
    CHECK(std::abs(b - a) <= steepest + 1e-12);
  }

  // short stages shrink warmup/cooldown but keep the exact floor
  CHECK(lr_at(6 * 10, 10, 6, sched) == sched.min_lr);
  CHECK(lr_at(0, 10, 6, sched) == 0.0);
}

TEST_CASE("prepare_encoder_inputs: completion masking and the boundary view") {
  ModalityRegistry reg;
  ModalityDescriptor nt;
  nt.name = "nt_seq";
  nt.group = TrackGroup::nucleic;
  nt.aligned = true;
  nt.tokenizer = build_character_tokenizer({"A", "C", "G", "U"});
  reg.add(nt);
  ModalityDescriptor sp;
  sp.name = "splice";
  sp.group = TrackGroup::nucleic;
  sp.aligned = true;
  sp.tokenizer = build_character_tokenizer({".", "D", "A", "S", "E"});
  reg.add(sp);

  MultimodalSample s;
  s.id = "x";
  s.entity = EntityKind::rna;
  s.cluster_id = "c";
  s.tracks["nt_seq"] = {0, 1, 2, 3, 0, 1};
  s.tracks["splice"] = {3, 0, 1, 0, 2, 4};  // S . D . A E

  PackedTargets t;
  PackedSegment seg;
  seg.modality = "nt_seq";
  seg.start = 2;
  seg.target_ids = {2, 3};
  t.segments.push_back(seg);

  auto view = prepare_encoder_inputs(s, {"nt_seq", "splice"}, t, reg, {{"splice", "boundaries"}});
  int nt_mask = reg.at("nt_seq").tokenizer.mask_id;
  int sp_mask = reg.at("splice").tokenizer.mask_id;
  // target coordinates masked out of the input view
  CHECK(view.tracks["nt_seq"] == std::vector<int>{0, 1, nt_mask, nt_mask, 0, 1});
  // boundary view: only S(3) and E(4) survive
  CHECK(view.tracks["splice"] == std::vector<int>{3, sp_mask, sp_mask, sp_mask, sp_mask, 4});
  // untouched original
  CHECK(s.tracks["nt_seq"][2] == 2);
}

TEST_CASE("train: loss falls on a small corpus and the run is fully deterministic") {
  GeneratorRecipe recipe;
  recipe.name = "overfit";
  recipe.rna_frac = 1.0;
  recipe.nt_len_lo = 20;
  recipe.nt_len_hi = 24;
  recipe.rna_signatures = {{{"nt_seq"}, 1.0}};
  recipe.clusters = 4;
  recipe.train_frac = 1.0;
  recipe.val_frac = 0.0;
  recipe.test_frac = 0.0;
  auto corpus = generate_synthetic_corpus(recipe, 8, 77);

  PathwayRegistry pathways;
  Pathway p;
  p.name = "nt_completion";
  p.inputs_required = {"nt_seq"};
  p.targets_required = {"nt_seq"};
  p.weight = 1.0;
  p.completion_window = 6;
  pathways.add(p);

  TrainConfig cfg;
  cfg.model = ModelConfig::desk();
  cfg.model.width = 32;
  cfg.model.encoder_depth = 1;
  cfg.model.decoder_depth = 1;
  cfg.model.encoder_budget = 64;
  cfg.model.decoder_budget = 16;
  cfg.seed = 5;
  cfg.dropout_lo = 0.0;
  cfg.dropout_hi = 0.05;
  StageConfig stage;
  stage.context_budget = 64;
  stage.epochs = 30;
  stage.max_lr = 3e-3;
  stage.n_buckets = 2;
  stage.batch_target = 4;
  cfg.stages = {stage};

  auto dir = std::filesystem::temp_directory_path() / "strand_train_test";
  std::filesystem::remove_all(dir);

  Model model(cfg.model, VocabMap::from_registry(corpus.registry), 13);
  auto metrics = train(model, corpus, pathways, cfg, dir / "a");
  CHECK(metrics.steps > 0);
  CHECK(metrics.last_epoch_loss < metrics.first_epoch_loss);
  CHECK(metrics.pathway_counts.at("nt_completion") > 0);
  CHECK(std::filesystem::exists(metrics.checkpoint_path));

  // identical seed -> identical metrics log
  Model model2(cfg.model, VocabMap::from_registry(corpus.registry), 13);
  auto metrics2 = train(model2, corpus, pathways, cfg, dir / "b");
  CHECK(read_text_file(metrics.metrics_path) == read_text_file(metrics2.metrics_path));

  // the saved checkpoint reproduces the trained model's behaviour
  auto ckpt = load_checkpoint(metrics.checkpoint_path);
  require_config_match(ckpt, cfg.model);
  CHECK(ckpt.has_optimizer);
  Model reloaded(ckpt.config, ckpt.vocabs, ckpt.params);
  auto eval1 = sequence_completion_eval(model, corpus, Split::train, 6, {});
  auto eval2 = sequence_completion_eval(reloaded, corpus, Split::train, 6, {});
  CHECK(eval1.accuracy == eval2.accuracy);
}
