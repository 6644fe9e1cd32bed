#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "strand/io_util.hpp"
#include "strand/model.hpp"
#include "strand/training.hpp"

using namespace strand;

namespace {

ModelConfig tiny_config() {
  ModelConfig c = ModelConfig::desk();
  c.width = 32;
  c.n_heads = 4;
  c.encoder_depth = 2;
  c.decoder_depth = 2;
  c.encoder_budget = 128;
  c.decoder_budget = 32;
  c.register_count = 3;
  return c;
}

VocabMap two_mod_vocabs() {
  VocabMap vm;
  auto mod = [](const std::string& name, std::size_t values) {
    ModalityVocab v;
    v.name = name;
    v.vocab_size = values + 3;
    v.pad_id = static_cast<int>(values);
    v.mask_id = static_cast<int>(values) + 1;
    v.unknown_id = static_cast<int>(values) + 2;
    return v;
  };
  vm.mods = {mod("m0", 4), mod("m1", 3)};
  return vm;
}

EncoderLayout layout_for(const std::vector<int>& g0_m0, const std::vector<int>& g0_m1,
                         std::size_t registers,
                         const std::vector<std::string>& order = {"m0", "m1"}) {
  TrackGroupLayout g;
  g.group = TrackGroup::nucleic;
  g.label = "nucleic";
  g.modality_order = order;
  g.modality_grids["m0"] = g0_m0;
  if (!g0_m1.empty()) g.modality_grids["m1"] = g0_m1;
  if (g0_m1.empty())
    g.modality_order = {"m0"};
  g.positions.resize(g0_m0.size());
  for (std::size_t i = 0; i < g0_m0.size(); ++i) g.positions[i] = static_cast<std::int64_t>(i);
  g.keep.assign(g0_m0.size(), 1);
  EncoderLayout layout;
  layout.groups = {g};
  layout.register_count = registers;
  return layout;
}

PackedTargets targets_m0(std::size_t start, std::vector<int> ids) {
  PackedTargets t;
  PackedSegment s;
  s.modality = "m0";
  s.start = start;
  s.target_ids = std::move(ids);
  t.segments.push_back(std::move(s));
  return t;
}

}  // namespace

TEST_CASE("gradient check: full model under 1e-4, linear ablation under 1e-8") {
  ModelConfig c = tiny_config();
  GradCheckOptions fast;
  fast.probes_per_tensor = 3;
  fast.exhaustive_limit = 16;
  for (std::uint64_t seed : {1ull, 2ull}) {
    CHECK(gradient_check(c, seed, fast) < 1e-4);
  }
  GradCheckOptions linear;
  linear.linear_only = true;
  CHECK(gradient_check(c, 3, linear) < 1e-8);
}

TEST_CASE("determinism: same seed, same parameters, bit-identical logits") {
  ModelConfig c = tiny_config();
  VocabMap vm = two_mod_vocabs();
  Model a(c, vm, 11);
  Model b(c, vm, 11);
  auto layout = layout_for({0, 1, 2, 3, 0}, {0, 1, 2, 0, 1}, c.register_count);
  auto targets = targets_m0(1, {1, 2, 3});
  auto ra = a.forward(layout, targets);
  auto rb = b.forward(layout, targets);
  auto ra2 = a.forward(layout, targets);
  REQUIRE(ra.segment_logits.size() == 1);
  CHECK(std::memcmp(ra.segment_logits[0].v.data(), rb.segment_logits[0].v.data(),
                    ra.segment_logits[0].size() * sizeof(double)) == 0);
  CHECK(std::memcmp(ra.segment_logits[0].v.data(), ra2.segment_logits[0].v.data(),
                    ra.segment_logits[0].size() * sizeof(double)) == 0);
  CHECK(ra.loss == rb.loss);

  Model d(c, vm, 12);
  auto rd = d.forward(layout, targets);
  CHECK(ra.loss != rd.loss);

  // logit width is the modality's full vocabulary (values + specials)
  CHECK(ra.segment_logits[0].cols() == vm.at("m0").vocab_size);
  // realized head kinds match the partition exactly
  CHECK(a.head_kinds() == partition_attention_heads(c.n_heads));
}

TEST_CASE("embed-and-sum: all-pad second grid is the additive identity; order commutes") {
  ModelConfig c = tiny_config();
  VocabMap vm = two_mod_vocabs();
  Model m(c, vm, 21);
  std::vector<int> m0 = {0, 1, 2, 3};
  std::vector<int> m1_pad(4, vm.at("m1").pad_id);
  auto with_pad = m.forward(layout_for(m0, m1_pad, c.register_count), targets_m0(0, {0, 1, 2, 3}));
  auto alone = m.forward(layout_for(m0, {}, c.register_count), targets_m0(0, {0, 1, 2, 3}));
  CHECK(with_pad.loss == alone.loss);

  std::vector<int> m1 = {0, 1, 2, 0};
  auto ab = m.forward(layout_for(m0, m1, c.register_count), targets_m0(0, {0, 1, 2, 3}));
  auto ba = m.forward(layout_for(m0, m1, c.register_count, {"m1", "m0"}), targets_m0(0, {0, 1, 2, 3}));
  CHECK(ab.loss == doctest::Approx(ba.loss).epsilon(1e-15));
}

TEST_CASE("rope: within-group attention logits are invariant to a position shift") {
  // Direct logit computation at two offsets: q R(p_i) (k R(p_j))^T depends
  // only on p_j - p_i, so shifting every position in the group changes
  // nothing; the unrotated tail contributes position-free terms.
  Rng rng(31);
  std::size_t T = 6, heads = 2, width = 16, rot = 6;
  Tensor q = Tensor::randn({T, width}, rng);
  Tensor k = Tensor::randn({T, width}, rng);
  auto logits_at = [&](std::int64_t offset) {
    std::vector<std::int64_t> pos(T);
    for (std::size_t i = 0; i < T; ++i) pos[i] = static_cast<std::int64_t>(i) + offset;
    ad::Graph g;
    int Q = g.rope(g.leaf(q), pos, heads, rot);
    int K = g.rope(g.leaf(k), pos, heads, rot);
    return g.val(g.matmul_nt(Q, K));
  };
  Tensor base = logits_at(0);
  Tensor shifted = logits_at(17);
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK(base.v[i] == doctest::Approx(shifted.v[i]).epsilon(1e-10));

  // The same property holds through the full forward pass when the layout is
  // a single group (no registers to anchor an absolute frame) and the target
  // coordinates shift with it: cross-attention shares the rotary frame, so
  // only relative offsets matter.
  ModelConfig c = tiny_config();
  c.register_count = 0;
  VocabMap vm = two_mod_vocabs();
  Model m(c, vm, 31);
  auto lay = layout_for({0, 1, 2, 3, 1, 2}, {}, 0);
  auto shifted_lay = lay;
  for (auto& p : shifted_lay.groups[0].positions) p += 17;
  auto targets = targets_m0(2, {2, 1});
  auto shifted_targets = targets_m0(2 + 17, {2, 1});
  auto r0 = m.forward(lay, targets);
  auto r1 = m.forward(shifted_lay, shifted_targets);
  for (std::size_t i = 0; i < r0.segment_logits[0].size(); ++i)
    CHECK(r0.segment_logits[0].v[i] ==
          doctest::Approx(r1.segment_logits[0].v[i]).epsilon(1e-8));
}

TEST_CASE("dropped positions are invisible: content changes cannot leak") {
  ModelConfig c = tiny_config();
  VocabMap vm = two_mod_vocabs();
  Model m(c, vm, 41);
  auto layout = layout_for({0, 1, 2, 3, 1}, {0, 1, 2, 0, 2}, c.register_count);
  layout.groups[0].keep[2] = 0;  // drop position 2
  auto targets = targets_m0(0, {0, 1});
  auto before = m.forward(layout, targets);
  auto mutated = layout;
  mutated.groups[0].modality_grids["m0"][2] = 3;  // change the dropped token's content
  mutated.groups[0].modality_grids["m1"][2] = 1;
  auto after = m.forward(mutated, targets);
  CHECK(before.loss == after.loss);
  CHECK(std::memcmp(before.segment_logits[0].v.data(), after.segment_logits[0].v.data(),
                    before.segment_logits[0].size() * sizeof(double)) == 0);
}

TEST_CASE("decoder self-attention ablation isolates packed segments") {
  ModelConfig c = tiny_config();
  VocabMap vm = two_mod_vocabs();
  Model m(c, vm, 51);
  auto layout = layout_for({0, 1, 2, 3}, {}, c.register_count);

  PackedTargets both = targets_m0(0, {0, 1});
  PackedSegment s2;
  s2.modality = "m1";
  s2.start = 2;
  s2.target_ids = {0, 1, 2};
  both.segments.push_back(s2);

  ForwardOptions ablate;
  ablate.ablate_decoder_self_attention = true;
  auto with_both = m.forward(layout, both, ablate);
  auto alone = m.forward(layout, targets_m0(0, {0, 1}), ablate);
  CHECK(std::memcmp(with_both.segment_logits[0].v.data(), alone.segment_logits[0].v.data(),
                    alone.segment_logits[0].size() * sizeof(double)) == 0);

  // without the ablation the second segment participates in self-attention
  auto coupled = m.forward(layout, both);
  auto alone2 = m.forward(layout, targets_m0(0, {0, 1}));
  bool identical = std::memcmp(coupled.segment_logits[0].v.data(),
                               alone2.segment_logits[0].v.data(),
                               alone2.segment_logits[0].size() * sizeof(double)) == 0;
  CHECK_FALSE(identical);
}

TEST_CASE("budget violations and all-pad targets") {
  ModelConfig c = tiny_config();
  VocabMap vm = two_mod_vocabs();
  Model m(c, vm, 61);
  std::vector<int> big(c.encoder_budget + 1, 0);
  CHECK_THROWS(m.forward(layout_for(big, {}, 0), targets_m0(0, {0})));

  auto layout = layout_for({0, 1, 2}, {}, c.register_count);
  std::vector<int> over(c.decoder_budget + 1, 0);
  CHECK_THROWS(m.forward(layout, targets_m0(0, over)));

  auto skip = m.forward(layout, targets_m0(0, {vm.at("m0").pad_id, vm.at("m0").pad_id}));
  CHECK(skip.target_tokens == 0);  // skip signal, logits still produced
  CHECK(skip.segment_logits.size() == 1);
}

TEST_CASE("model loss agrees with the standalone reconstruction loss") {
  ModelConfig c = tiny_config();
  VocabMap vm = two_mod_vocabs();
  Model m(c, vm, 71);
  auto layout = layout_for({0, 1, 2, 3, 2, 1}, {}, c.register_count);
  PackedTargets t = targets_m0(0, {0, vm.at("m0").pad_id, 2, 3});
  auto fr = m.forward(layout, t);
  std::vector<SegmentLoss> segs = {{fr.segment_logits[0], t.segments[0].target_ids,
                                    vm.at("m0").pad_id}};
  auto lv = reconstruction_loss(segs);
  CHECK(lv.tokens == fr.target_tokens);
  CHECK(lv.mean == doctest::Approx(fr.loss).epsilon(1e-12));
}

TEST_CASE("non-finite intermediates report the offending layer") {
  ModelConfig c = tiny_config();
  VocabMap vm = two_mod_vocabs();
  Model m(c, vm, 81);
  m.params().value("enc.1.mlp.w2").v[0] = std::numeric_limits<double>::infinity();
  bool threw = false;
  try {
    m.forward(layout_for({0, 1, 2}, {}, c.register_count), targets_m0(0, {0, 1}));
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("checkpoint: exact round-trip, digest, config echo, optimizer state") {
  ModelConfig c = tiny_config();
  VocabMap vm = two_mod_vocabs();
  Model m(c, vm, 91);
  auto layout = layout_for({0, 1, 2, 3}, {}, c.register_count);
  auto targets = targets_m0(0, {0, 1, 2});
  auto before = m.forward(layout, targets);

  auto dir = std::filesystem::temp_directory_path() / "strand_ckpt_test";
  std::filesystem::create_directories(dir);
  auto path = dir / "model.bin";

  Checkpoint ckpt;
  ckpt.config = c;
  ckpt.vocabs = vm;
  ckpt.params = m.params();
  ckpt.has_optimizer = true;
  OptimState opt = OptimState::like(m.params());
  opt.m[0].v[0] = 0.5;
  opt.step = 7;
  ckpt.opt_m = opt.m;
  ckpt.opt_v = opt.v;
  ckpt.opt_step = opt.step;
  ckpt.train_step = 123;
  ckpt.rng_state = "state";
  save_checkpoint(ckpt, path);

  auto loaded = load_checkpoint(path);
  require_config_match(loaded, c);
  CHECK(loaded.opt_step == 7);
  CHECK(loaded.train_step == 123);
  CHECK(loaded.opt_m[0](0) == 0.5);
  Model m2(loaded.config, loaded.vocabs, loaded.params);
  auto after = m2.forward(layout, targets);
  CHECK(std::memcmp(before.segment_logits[0].v.data(), after.segment_logits[0].v.data(),
                    before.segment_logits[0].size() * sizeof(double)) == 0);
  CHECK(before.loss == after.loss);

  // flipped payload byte -> digest failure
  std::string bytes = read_text_file(path);
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
  write_text_file(path, bytes);
  CHECK_THROWS(load_checkpoint(path));

  // config echo mismatch -> explicit error
  save_checkpoint(ckpt, path);
  auto reloaded = load_checkpoint(path);
  ModelConfig other = c;
  other.width = 64;
  CHECK_THROWS(require_config_match(reloaded, other));
}

TEST_CASE("parameter shapes: counts are consistent and the paper profile is huge") {
  ModelConfig c = tiny_config();
  VocabMap vm = two_mod_vocabs();
  Model m(c, vm, 101);
  CHECK(m.params().total_size() == parameter_count(c, vm));

  // paper profile count is computed analytically (no allocation)
  std::size_t n = parameter_count(ModelConfig::paper(), vm);
  CHECK(n > 500000000u);

  ModelConfig bad = c;
  bad.width = 30;  // 30/4 heads -> head_dim 7.5
  CHECK_THROWS(bad.validate());
  ModelConfig odd = c;
  odd.rope_fraction = 0.9;  // head_dim 8 -> rot 7, odd
  CHECK_THROWS(odd.validate());
}

TEST_CASE("attention mask definitions: causal, anti-causal transpose, keep gating") {
  auto causal = build_attention_mask(HeadKind::causal, 4, nullptr);
  auto anti = build_attention_mask(HeadKind::anticausal, 4, nullptr);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(causal[i * 4 + j] == (j <= i ? 1 : 0));
      CHECK(anti[i * 4 + j] == causal[j * 4 + i]);  // transpose
    }
  std::vector<std::uint8_t> keep = {1, 0, 1, 1};
  auto gated = build_attention_mask(HeadKind::bidirectional, 4, &keep);
  for (std::size_t i = 0; i < 4; ++i) CHECK(gated[i * 4 + 1] == 0);
}
