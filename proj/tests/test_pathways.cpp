#include <doctest.h>

#include <cmath>

#include "strand/pathways.hpp"
#include "strand/sample_store.hpp"

using namespace strand;

namespace {

ModalityRegistry reg_for_packing() {
  ModalityRegistry reg;
  auto add = [&](const std::string& name, TrackGroup g, bool aligned, std::size_t n) {
    ModalityDescriptor d;
    d.name = name;
    d.group = g;
    d.aligned = aligned;
    d.tokenizer_file = name + ".json";
    std::vector<std::string> alphabet;
    for (std::size_t i = 0; i < n; ++i) alphabet.push_back("v" + std::to_string(i));
    d.tokenizer = build_character_tokenizer(alphabet);
    reg.add(std::move(d));
  };
  add("nt_seq", TrackGroup::nucleic, true, 4);
  add("splice", TrackGroup::nucleic, true, 5);
  add("phylop", TrackGroup::nucleic, true, 8);
  add("aa_seq", TrackGroup::protein, true, 20);
  add("struct", TrackGroup::protein, true, 16);
  add("context", TrackGroup::semantic_context, false, 9);
  return reg;
}

MultimodalSample rna_sample(std::size_t len) {
  MultimodalSample s;
  s.id = "r";
  s.entity = EntityKind::rna;
  s.cluster_id = "c";
  s.tracks["nt_seq"] = std::vector<int>(len, 1);
  s.tracks["splice"] = std::vector<int>(len, 0);
  s.tracks["phylop"] = std::vector<int>(len, 2);
  return s;
}

Pathway simple_pathway(const std::string& name, std::set<std::string> ireq,
                       std::set<std::string> treq, double w) {
  Pathway p;
  p.name = name;
  p.inputs_required = std::move(ireq);
  p.targets_required = std::move(treq);
  p.weight = w;
  return p;
}

}  // namespace

TEST_CASE("eligibility is required-set containment") {
  PathwayRegistry reg;
  reg.add(simple_pathway("a", {"nt_seq"}, {"splice"}, 1.0));
  reg.add(simple_pathway("b", {"nt_seq", "context"}, {"splice"}, 1.0));
  Pathway empty_req;
  empty_req.name = "c";
  empty_req.targets_optional = {"phylop"};
  empty_req.weight = 1.0;
  reg.add(empty_req);

  PresenceSignature sig;
  sig.modalities = {"nt_seq", "phylop", "splice"};
  auto eligible = eligible_pathways(sig, reg);
  REQUIRE(eligible.size() == 2);
  CHECK(eligible[0]->name == "a");  // b needs context, absent
  CHECK(eligible[1]->name == "c");  // empty requirements: always eligible

  PresenceSignature superset;
  superset.modalities = {"context", "nt_seq", "phylop", "splice", "struct"};
  CHECK(eligible_pathways(superset, reg).size() == 3);

  CHECK_THROWS(reg.add(simple_pathway("zero", {}, {"x"}, 0.0)));  // weight must be positive
}

TEST_CASE("pathway sampling: single choice is certain; frequencies track weights") {
  PathwayRegistry reg;
  reg.add(simple_pathway("w1", {}, {"splice"}, 1.0));
  reg.add(simple_pathway("w2", {}, {"splice"}, 2.0));
  reg.add(simple_pathway("w3", {}, {"splice"}, 3.0));

  Rng rng(17);
  std::vector<const Pathway*> only = {&reg.at("w2")};
  for (int i = 0; i < 20; ++i) CHECK(sample_pathway(only, rng) == only[0]);

  CHECK(sample_pathway({}, rng) == nullptr);  // empty set signals a skip

  // first two eligible with weights 1 and 2 -> 1/3, 2/3 within 3 sigma
  std::vector<const Pathway*> two = {&reg.at("w1"), &reg.at("w2")};
  std::size_t n = 10000, first = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (sample_pathway(two, rng)->name == "w1") ++first;
  double expect = static_cast<double>(n) / 3.0;
  double sigma = std::sqrt(static_cast<double>(n) * (1.0 / 3.0) * (2.0 / 3.0));
  CHECK(std::abs(static_cast<double>(first) - expect) < 3.0 * sigma);

  // selection probabilities over the eligible set sum to 1 (every draw lands)
  std::vector<const Pathway*> all = {&reg.at("w1"), &reg.at("w2"), &reg.at("w3")};
  for (int i = 0; i < 1000; ++i) CHECK(sample_pathway(all, rng) != nullptr);
}

TEST_CASE("optional input selection: coin flip on present optionals only") {
  auto sample = rna_sample(16);
  Pathway p = simple_pathway("p", {"nt_seq"}, {"splice"}, 1.0);
  p.inputs_optional = {"phylop", "context"};  // context absent from the sample

  Rng rng(23);
  std::size_t with_phylop = 0;
  for (int i = 0; i < 10000; ++i) {
    auto inputs = select_inputs(sample, p, rng);
    CHECK(inputs.count("nt_seq") == 1);
    CHECK(inputs.count("context") == 0);  // never selected when absent
    if (inputs.count("phylop")) ++with_phylop;
  }
  double sigma = std::sqrt(10000 * 0.25);
  CHECK(std::abs(static_cast<double>(with_phylop) - 5000.0) < 3.0 * sigma);

  Pathway no_opt = simple_pathway("q", {"nt_seq"}, {"splice"}, 1.0);
  CHECK(select_inputs(sample, no_opt, rng) == std::set<std::string>{"nt_seq"});
}

TEST_CASE("target packing: paper-shaped example fills the budget") {
  auto reg = reg_for_packing();
  MultimodalSample s = rna_sample(800);
  s.tracks["splice"] = std::vector<int>(800, 0);
  // required splice window (completion-capped at 200), optional phylop fill
  Pathway p = simple_pathway("pack", {"nt_seq"}, {"splice"}, 1.0);
  p.targets_optional = {"phylop"};

  Rng rng(31);
  auto packed = pack_targets(s, p, {"nt_seq"}, 1000, reg, rng);
  REQUIRE(packed.has_value());
  REQUIRE(packed->segments.size() == 2);
  CHECK(packed->segments[0].modality == "splice");
  CHECK(packed->segments[0].length() == 800);  // fits whole
  CHECK(packed->segments[1].modality == "phylop");
  CHECK(packed->segments[1].length() == 200);  // cropped into the remainder
  CHECK(packed->total() == 1000);
}

TEST_CASE("target packing: completion windows, protein drop, zero budget") {
  auto reg = reg_for_packing();
  Rng rng(37);

  // modality that is also an input gets a bounded completion window
  MultimodalSample s = rna_sample(64);
  Pathway comp = simple_pathway("comp", {"nt_seq"}, {"nt_seq"}, 1.0);
  comp.completion_window = 8;
  auto packed = pack_targets(s, comp, {"nt_seq"}, 128, reg, rng);
  REQUIRE(packed.has_value());
  CHECK(packed->segments[0].length() == 8);
  CHECK(packed->segments[0].start + 8 <= 64);

  // over-budget required nucleic target is cropped to a random window
  Pathway crop = simple_pathway("crop", {}, {"phylop"}, 1.0);
  auto packed2 = pack_targets(rna_sample(300), crop, {}, 100, reg, rng);
  REQUIRE(packed2.has_value());
  CHECK(packed2->segments[0].length() == 100);

  // over-budget protein structural target triggers a skip
  MultimodalSample prot;
  prot.id = "p";
  prot.entity = EntityKind::protein;
  prot.cluster_id = "c";
  prot.tracks["aa_seq"] = std::vector<int>(40, 0);
  prot.tracks["struct"] = std::vector<int>(40, 0);
  Pathway fold = simple_pathway("fold", {"aa_seq"}, {"struct"}, 1.0);
  CHECK_FALSE(pack_targets(prot, fold, {"aa_seq"}, 20, reg, rng).has_value());
  CHECK(pack_targets(prot, fold, {"aa_seq"}, 40, reg, rng).has_value());

  // zero budget -> skip
  CHECK_FALSE(pack_targets(rna_sample(10), crop, {}, 0, reg, rng).has_value());
}

TEST_CASE("budget safety: fuzzed packing never exceeds the budget") {
  auto reg = reg_for_packing();
  Rng rng(41);
  std::vector<std::string> rna_mods = {"splice", "phylop"};
  for (int trial = 0; trial < 10000; ++trial) {
    std::size_t len = static_cast<std::size_t>(rng.uniform_int(1, 400));
    MultimodalSample s = rna_sample(len);
    if (rng.bernoulli(0.4)) s.tracks.erase("phylop");
    if (rng.bernoulli(0.2)) s.tracks.erase("splice");
    Pathway p = simple_pathway("f", {"nt_seq"}, {}, 1.0);
    // random required/optional target mix
    if (rng.bernoulli(0.5)) {
      p.targets_required.insert(rng.pick(rna_mods));
    } else {
      p.targets_required.insert("nt_seq");
    }
    p.targets_optional.push_back(rng.pick(rna_mods));
    p.completion_window = static_cast<std::size_t>(rng.uniform_int(1, 64));
    std::size_t budget = static_cast<std::size_t>(rng.uniform_int(0, 256));
    auto packed = pack_targets(s, p, {"nt_seq"}, budget, reg, rng);
    if (!packed) continue;
    CHECK(packed->total() <= budget);
    // eligibility soundness: every packed modality is present on the sample
    for (const auto& seg : packed->segments) CHECK(s.has(seg.modality));
  }
}

TEST_CASE("pathway registry file round-trip preserves order and views") {
  PathwayRegistry reg;
  Pathway p = simple_pathway("boundary", {"nt_seq", "splice"}, {"splice"}, 2.5);
  p.input_views["splice"] = "boundaries";
  p.targets_optional = {"phylop", "nt_seq"};
  p.completion_window = 48;
  p.optional_input_p = 0.25;
  reg.add(p);
  reg.add(simple_pathway("plain", {"nt_seq"}, {"phylop"}, 0.5));

  auto dir = std::filesystem::temp_directory_path() / "strand_pathways_test";
  std::filesystem::create_directories(dir);
  reg.save(dir / "pathways.json");
  auto loaded = PathwayRegistry::load(dir / "pathways.json");
  REQUIRE(loaded.all().size() == 2);
  const Pathway& q = loaded.at("boundary");
  CHECK(q.weight == 2.5);
  CHECK(q.optional_input_p == 0.25);
  CHECK(q.completion_window == 48);
  CHECK(q.targets_optional == std::vector<std::string>{"phylop", "nt_seq"});
  CHECK(q.input_views.at("splice") == "boundaries");
}
