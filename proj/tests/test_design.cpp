#include <doctest.h>

#include <cmath>
#include <set>

#include "strand/design.hpp"
#include "strand/evaluation.hpp"

using namespace strand;

TEST_CASE("anneal: endpoint pinning, midpoints, monotonicity, n<2") {
  for (AnnealKind k : {AnnealKind::linear, AnnealKind::cosine, AnnealKind::exponential}) {
    CHECK(anneal(k, 2.0, 0.5, 0, 10) == doctest::Approx(2.0));
    CHECK(anneal(k, 2.0, 0.5, 9, 10) == doctest::Approx(0.5));
    // monotone between the endpoints
    double prev = anneal(k, 2.0, 0.5, 0, 10);
    for (std::size_t i = 1; i < 10; ++i) {
      double v = anneal(k, 2.0, 0.5, i, 10);
      CHECK(v <= prev + 1e-12);
      prev = v;
    }
  }
  CHECK(anneal(AnnealKind::linear, 1.0, 0.0, 5, 11) == doctest::Approx(0.5));
  // exponential midpoint is the geometric mean
  CHECK(anneal(AnnealKind::exponential, 2.0, 0.5, 5, 11) == doctest::Approx(1.0));
  CHECK(anneal(AnnealKind::cosine, 3.0, 1.0, 0, 1) == 3.0);  // n < 2 returns start
}

TEST_CASE("hyperparameter sampling: grid membership, frequencies, determinism") {
  Rng rng(5);
  std::map<double, std::size_t> a_counts;
  for (int i = 0; i < 10000; ++i) {
    auto hp = sample_design_hyperparams(rng);
    CHECK(hp.t_end < hp.t_start);  // guaranteed by grid construction
    CHECK(hp.r_end < hp.r_start);
    CHECK(hp.max_cycles == 10);
    CHECK(std::find(kAcceptanceGrid.begin(), kAcceptanceGrid.end(),
                    hp.acceptance_threshold) != kAcceptanceGrid.end());
    a_counts[hp.acceptance_threshold] += 1;
  }
  double sigma = std::sqrt(10000 * 0.25 * 0.75);
  for (double a : kAcceptanceGrid)
    CHECK(std::abs(static_cast<double>(a_counts[a]) - 2500.0) < 3.0 * sigma);

  Rng r1(99), r2(99);
  for (int i = 0; i < 50; ++i) {
    auto h1 = sample_design_hyperparams(r1);
    auto h2 = sample_design_hyperparams(r2);
    CHECK(h1.t_start == h2.t_start);
    CHECK(h1.r_start == h2.r_start);
    CHECK(h1.acceptance_threshold == h2.acceptance_threshold);
  }
}

TEST_CASE("window centers: 245 offsets, unit spacing in the core, protection filter") {
  const auto& offsets = window_center_offsets();
  CHECK(offsets.size() == 245);  // 35 + 181 + 31 minus the two seam duplicates
  // spacing within (-130, +50) is 1
  for (std::int64_t o = -130; o < 50; ++o)
    CHECK(std::binary_search(offsets.begin(), offsets.end(), o));
  // spacing outside is 5
  CHECK(std::binary_search(offsets.begin(), offsets.end(), -300));
  CHECK_FALSE(std::binary_search(offsets.begin(), offsets.end(), -299));
  CHECK(std::binary_search(offsets.begin(), offsets.end(), 200));

  WindowCenterSpec spec;
  spec.mutation_pos = 400;
  spec.width = 30;
  spec.sequence_length = 800;
  auto centers = window_centers(spec);
  CHECK(!centers.empty());
  CHECK(centers.size() < 245);  // protection removes the near-mutation centers
  for (std::int64_t c : centers) {
    DesignWindow w{c, 30};
    CHECK(w.lo() >= 0);
    CHECK(w.hi() <= 800);
    // no overlap with [mutation - 15, mutation + 15]
    CHECK((w.hi() <= 400 - 15 || w.lo() > 400 + 15));
  }

  WindowCenterSpec empty;
  empty.sequence_length = 0;
  CHECK(window_centers(empty).empty());
}

TEST_CASE("iterative design: oracle satisfies on cycle 1, adversary runs out the clock") {
  std::size_t len = 12;
  ConditioningTrack target;
  target.modality = "struct";
  target.categorical = true;
  for (std::size_t i = 0; i < len; ++i)
    target.values.push_back(static_cast<double>(i % 3));
  target.values[4] = std::nullopt;  // uncovered: excluded from the check

  // Oracle: proposes and predicts exactly the conditioning.
  DesignModelApi oracle;
  oracle.propose = [&](const std::vector<int>& seq, const std::vector<std::uint8_t>& mask,
                       double, Rng&) {
    std::vector<int> out = seq;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (mask[i]) out[i] = static_cast<int>(i % 3);
    return out;
  };
  oracle.verify = [&](const std::vector<int>& seq) {
    std::vector<double> pred(seq.begin(), seq.end());
    return std::map<std::string, std::vector<double>>{{"struct", pred}};
  };

  DesignHyperparams hp;
  hp.t_start = 1.0;
  hp.t_end = 0.01;
  hp.r_start = 0.5;
  hp.r_end = 0.05;
  hp.acceptance_threshold = 0.2;
  hp.repeat_resample_p = 0.99;

  auto res = iterative_design(oracle, len, {target}, hp, 1);
  CHECK(res.trace.exit_reason == DesignTrace::ExitReason::all_satisfied);
  CHECK(res.trace.cycles.size() == 1);
  CHECK(res.trace.cycles.back().unsatisfied.empty());

  // Adversary: verification never matches anywhere.
  DesignModelApi adversary = oracle;
  adversary.verify = [&](const std::vector<int>& seq) {
    std::vector<double> pred(seq.size(), 99.0);
    return std::map<std::string, std::vector<double>>{{"struct", pred}};
  };
  auto bad = iterative_design(adversary, len, {target}, hp, 2);
  CHECK(bad.trace.exit_reason == DesignTrace::ExitReason::max_cycles);
  CHECK(bad.trace.cycles.size() == 10);
  for (const auto& c : bad.trace.cycles) CHECK_FALSE(c.unsatisfied.empty());

  // Vacuous threshold with no resampling: single cycle, all satisfied.
  DesignHyperparams vac = hp;
  vac.acceptance_threshold = 1e9;
  vac.repeat_resample_p = 0.0;
  vac.r_start = 1e-9;
  vac.r_end = 1e-12;
  ConditioningTrack numeric = target;
  numeric.categorical = false;
  auto easy = iterative_design(adversary, len, {numeric}, vac, 3);
  CHECK(easy.trace.exit_reason == DesignTrace::ExitReason::all_satisfied);
  CHECK(easy.trace.cycles.size() == 1);

  CHECK_THROWS(iterative_design(oracle, len, {}, hp, 4));  // conditioning required
}

TEST_CASE("iterative design trace: unsatisfied shrinks to empty exactly on success") {
  // Stateful fake: verification succeeds at a position once it was resampled
  // at least twice.
  std::size_t len = 8;
  ConditioningTrack t;
  t.modality = "m";
  t.categorical = true;
  t.values.assign(len, 1.0);

  auto touches = std::make_shared<std::vector<int>>(len, 0);
  DesignModelApi api;
  api.propose = [touches](const std::vector<int>& seq, const std::vector<std::uint8_t>& mask,
                          double, Rng&) {
    std::vector<int> out = seq;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (mask[i]) {
        (*touches)[i] += 1;
        out[i] = (*touches)[i] >= 2 ? 1 : 0;
      }
    return out;
  };
  api.verify = [](const std::vector<int>& seq) {
    return std::map<std::string, std::vector<double>>{
        {"m", std::vector<double>(seq.begin(), seq.end())}};
  };
  DesignHyperparams hp;
  hp.t_start = 1.0;
  hp.t_end = 0.01;
  hp.r_start = 0.9;
  hp.r_end = 0.1;
  hp.acceptance_threshold = 0.15;
  hp.repeat_resample_p = 1.0;
  auto res = iterative_design(api, len, {t}, hp, 5);
  CHECK(res.trace.exit_reason == DesignTrace::ExitReason::all_satisfied);
  CHECK(res.trace.cycles.size() <= 10);
  CHECK(res.trace.cycles.back().unsatisfied.empty());
  for (std::size_t i = 0; i + 1 < res.trace.cycles.size(); ++i)
    CHECK_FALSE(res.trace.cycles[i].unsatisfied.empty());
}

TEST_CASE("masif similarity: published anchor values") {
  auto features = [](const std::vector<double>& base, double scale) {
    std::vector<ResidueSurfaceFeatures> out;
    for (double b : base) {
      ResidueSurfaceFeatures f;
      f.n_vertices = 3;
      f.shape_index = scale * b;
      f.charge = scale * (b + 1.0);
      f.hbond = scale * (2.0 * b - 0.5);
      f.hydrophobicity = scale * (0.5 - b);
      out.push_back(f);
    }
    return out;
  };
  std::vector<double> base = {0.1, 0.4, -0.3, 0.8, -0.6, 0.2, 0.9};
  auto native = features(base, 1.0);
  CHECK(masif_similarity(native, native) == doctest::Approx(1.0));
  CHECK(masif_similarity(features(base, -1.0), native) == doctest::Approx(0.0));

  // fewer than five jointly exposed residues -> neutral 0.5
  auto sparse = native;
  for (std::size_t i = 0; i < 3; ++i) sparse[i].n_vertices = 0;
  CHECK(masif_similarity(sparse, native) == 0.5);

  // zero-variance channel contributes correlation 0
  auto flat = native;
  for (auto& f : flat) f.shape_index = 1.0;
  double sim = masif_similarity(flat, native);
  CHECK(sim < 1.0);
  CHECK(sim == doctest::Approx((0.0 + 1.0 + 1.0 + 1.0) / 4.0 / 2.0 + 0.5).epsilon(1e-9));
}

TEST_CASE("conditioning_from_sample: centers for continuous, ids for categorical, gaps") {
  ModalityRegistry reg;
  ModalityDescriptor st;
  st.name = "struct";
  st.group = TrackGroup::protein;
  st.aligned = true;
  st.tokenizer = build_character_tokenizer({"s0", "s1", "s2"});
  reg.add(st);
  ModalityDescriptor sa;
  sa.name = "sasa";
  sa.group = TrackGroup::protein;
  sa.aligned = true;
  sa.tokenizer = fit_continuous_tokenizer({0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0}, 4);
  reg.add(sa);

  MultimodalSample s;
  s.id = "x";
  s.entity = EntityKind::protein;
  s.cluster_id = "c";
  s.tracks["struct"] = {0, 2, st.tokenizer.unknown_id};
  s.tracks["sasa"] = {0, 3, sa.tokenizer.mask_id};
  auto tracks = conditioning_from_sample(s, reg, {"sasa", "struct"});
  REQUIRE(tracks.size() == 2);
  const auto& sasa = tracks[0].modality == "sasa" ? tracks[0] : tracks[1];
  const auto& strt = tracks[0].modality == "struct" ? tracks[0] : tracks[1];
  CHECK_FALSE(sasa.categorical);
  CHECK(strt.categorical);
  CHECK(*strt.values[1] == 2.0);
  CHECK_FALSE(strt.values[2].has_value());  // specials are uncovered
  CHECK(*sasa.values[0] == doctest::Approx(sa.tokenizer.bin_centers[0]));
  CHECK_FALSE(sasa.values[2].has_value());
}

TEST_CASE("rna window design: masking contract and protection on an untrained model") {
  GeneratorRecipe r;
  r.name = "design";
  r.rna_frac = 1.0;
  r.nt_len_lo = 64;
  r.nt_len_hi = 64;
  r.rna_signatures = {{{"nt_seq", "splice", "phylop"}, 1.0}};
  r.train_frac = 1.0;
  r.val_frac = r.test_frac = 0.0;
  auto corpus = generate_synthetic_corpus(r, 6, 23);

  ModelConfig cfg = ModelConfig::desk();
  cfg.width = 32;
  cfg.encoder_depth = 1;
  cfg.decoder_depth = 1;
  cfg.encoder_budget = 160;
  cfg.decoder_budget = 64;
  Model model(cfg, VocabMap::from_registry(corpus.registry), 3);

  const auto& sample = corpus.samples[0];
  DesignWindow w;
  w.center = 32;
  w.width = 30;
  auto designed = design_rna_window(model, corpus.registry, sample, w, std::nullopt,
                                    {"splice", "phylop"});
  const auto& nt = sample.track("nt_seq");
  REQUIRE(designed.size() == nt.size());
  std::size_t value_tokens = corpus.registry.at("nt_seq").tokenizer.n_value_tokens();
  for (std::size_t i = 0; i < nt.size(); ++i) {
    if (static_cast<std::int64_t>(i) >= w.lo() && static_cast<std::int64_t>(i) < w.hi()) {
      CHECK(designed[i] >= 0);
      CHECK(designed[i] < static_cast<int>(value_tokens));  // designable tokens only
    } else {
      CHECK(designed[i] == nt[i]);  // byte-identical outside the window
    }
  }

  // argmax at temperature 1e-8 is deterministic
  auto again = design_rna_window(model, corpus.registry, sample, w, std::nullopt,
                                 {"splice", "phylop"});
  CHECK(again == designed);

  // a window overlapping the protected region is rejected
  CHECK_THROWS(design_rna_window(model, corpus.registry, sample, w, 40, {"splice"}));
  // windows leaving the sequence are rejected
  DesignWindow off;
  off.center = 2;
  off.width = 30;
  CHECK_THROWS(design_rna_window(model, corpus.registry, sample, off, std::nullopt, {}));
}

TEST_CASE("model design api: propose keeps fixed positions, verify aligns to the track") {
  GeneratorRecipe r;
  r.name = "prot";
  r.rna_frac = 0.0;
  r.protein_frac = 1.0;
  r.aa_len_lo = 12;
  r.aa_len_hi = 12;
  r.protein_signatures = {{{"aa_seq", "struct", "sasa"}, 1.0}};
  r.train_frac = 1.0;
  r.val_frac = r.test_frac = 0.0;
  auto corpus = generate_synthetic_corpus(r, 4, 29);

  ModelConfig cfg = ModelConfig::desk();
  cfg.width = 32;
  cfg.encoder_depth = 1;
  cfg.decoder_depth = 1;
  cfg.encoder_budget = 64;
  cfg.decoder_budget = 16;
  Model model(cfg, VocabMap::from_registry(corpus.registry), 9);

  const auto& sample = corpus.samples[0];
  auto api = model_design_api(model, corpus.registry, sample, {"struct"});
  Rng rng(1);
  std::size_t len = sample.track("aa_seq").size();
  std::vector<int> seq(len, 2);
  std::vector<std::uint8_t> mask(len, 0);
  mask[3] = mask[7] = 1;
  auto out = api.propose(seq, mask, 0.0, rng);
  REQUIRE(out.size() == len);
  for (std::size_t i = 0; i < len; ++i) {
    if (mask[i]) {
      CHECK(out[i] >= 0);
      CHECK(out[i] < 20);
    } else {
      CHECK(out[i] == seq[i]);
    }
  }
  auto pred = api.verify(out);
  REQUIRE(pred.count("struct") == 1);
  CHECK(pred["struct"].size() == len);
}
