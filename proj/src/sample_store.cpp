#include "strand/sample_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "strand/io_util.hpp"
#include "strand/rng.hpp"

namespace strand {

namespace {

constexpr int kRegistryVersion = 1;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("sample_store: " + msg); }

}  // namespace

const char* track_group_name(TrackGroup g) {
  switch (g) {
    case TrackGroup::nucleic: return "nucleic";
    case TrackGroup::protein: return "protein";
    case TrackGroup::semantic_context: return "semantic_context";
    case TrackGroup::semantic_caption: return "semantic_caption";
    case TrackGroup::semantic_taxonomy: return "semantic_taxonomy";
  }
  return "?";
}

TrackGroup track_group_from_name(const std::string& s) {
  for (TrackGroup g : {TrackGroup::nucleic, TrackGroup::protein, TrackGroup::semantic_context,
                       TrackGroup::semantic_caption, TrackGroup::semantic_taxonomy})
    if (s == track_group_name(g)) return g;
  fail("unknown track group: " + s);
}

const char* entity_name(EntityKind e) {
  switch (e) {
    case EntityKind::rna: return "rna";
    case EntityKind::protein: return "protein";
    case EntityKind::paired: return "paired";
  }
  return "?";
}

EntityKind entity_from_name(const std::string& s) {
  for (EntityKind e : {EntityKind::rna, EntityKind::protein, EntityKind::paired})
    if (s == entity_name(e)) return e;
  fail("unknown entity kind: " + s);
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& s) {
  for (Split sp : {Split::train, Split::val, Split::test})
    if (s == split_name(sp)) return sp;
  fail("unknown split: " + s);
}

void ModalityRegistry::add(ModalityDescriptor d) {
  if (contains(d.name)) fail("duplicate modality: " + d.name);
  mods_.push_back(std::move(d));
}

bool ModalityRegistry::contains(const std::string& name) const {
  for (const auto& m : mods_)
    if (m.name == name) return true;
  return false;
}

const ModalityDescriptor& ModalityRegistry::at(const std::string& name) const {
  for (const auto& m : mods_)
    if (m.name == name) return m;
  fail("unknown modality: " + name);
}

void ModalityRegistry::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir / "tokenizers");
  nlohmann::json j;
  j["version"] = kRegistryVersion;
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& m : mods_) {
    mods.push_back({{"name", m.name},
                    {"group", track_group_name(m.group)},
                    {"aligned", m.aligned},
                    {"tokenizer", m.tokenizer_file}});
    save_tokenizer(m.tokenizer, dir / "tokenizers" / m.tokenizer_file);
  }
  j["modalities"] = mods;
  write_text_file(dir / "registry.json", j.dump(2) + "\n");
}

ModalityRegistry ModalityRegistry::load(const std::filesystem::path& dir) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(dir / "registry.json"));
  if (j.at("version").get<int>() != kRegistryVersion)
    fail("registry.json: unsupported version");
  ModalityRegistry reg;
  std::map<std::string, TokenizerSpec> loaded;
  for (const auto& m : j.at("modalities")) {
    ModalityDescriptor d;
    d.name = m.at("name").get<std::string>();
    d.group = track_group_from_name(m.at("group").get<std::string>());
    d.aligned = m.at("aligned").get<bool>();
    d.tokenizer_file = m.at("tokenizer").get<std::string>();
    auto it = loaded.find(d.tokenizer_file);
    if (it == loaded.end())
      it = loaded.emplace(d.tokenizer_file, load_tokenizer(dir / "tokenizers" / d.tokenizer_file))
               .first;
    d.tokenizer = it->second;
    reg.add(std::move(d));
  }
  return reg;
}

const std::vector<int>& MultimodalSample::track(const std::string& name) const {
  auto it = tracks.find(name);
  if (it == tracks.end()) fail("sample " + id + ": missing track " + name);
  return it->second;
}

bool PresenceSignature::contains(const std::string& m) const {
  return std::binary_search(modalities.begin(), modalities.end(), m);
}

bool PresenceSignature::contains_all(const std::set<std::string>& ms) const {
  for (const auto& m : ms)
    if (!contains(m)) return false;
  return true;
}

PresenceSignature presence_signature(const MultimodalSample& sample) {
  PresenceSignature sig;
  sig.modalities.reserve(sample.tracks.size());
  for (const auto& [name, ids] : sample.tracks) sig.modalities.push_back(name);
  std::sort(sig.modalities.begin(), sig.modalities.end());
  return sig;
}

namespace {

// Anchor sequence of a coordinate group, when the group is present.
std::optional<std::string> group_anchor(EntityKind entity, TrackGroup group) {
  if (group == TrackGroup::nucleic && entity != EntityKind::protein) return "nt_seq";
  if (group == TrackGroup::protein && entity != EntityKind::rna) return "aa_seq";
  return std::nullopt;
}

}  // namespace

void validate_sample(const MultimodalSample& sample, const ModalityRegistry& registry) {
  bool has_anchor = false;
  for (const char* anchor : {"nt_seq", "aa_seq"})
    if (sample.has(anchor)) has_anchor = true;
  if (!has_anchor) fail("sample " + sample.id + ": no anchor sequence present");

  for (const auto& [name, ids] : sample.tracks) {
    const ModalityDescriptor& d = registry.at(name);
    if (!d.aligned) continue;
    auto anchor = group_anchor(sample.entity, d.group);
    if (!anchor) fail("sample " + sample.id + ": track " + name + " outside entity groups");
    if (!sample.has(*anchor)) fail("sample " + sample.id + ": aligned track " + name +
                                   " present without anchor " + *anchor);
    if (ids.size() != sample.track(*anchor).size())
      fail("sample " + sample.id + ": track " + name + " length " + std::to_string(ids.size()) +
           " != anchor length " + std::to_string(sample.track(*anchor).size()));
  }
  if (!sample.region_labels.empty() && sample.has("nt_seq") &&
      sample.region_labels.size() != sample.track("nt_seq").size())
    fail("sample " + sample.id + ": region_labels length mismatch");
}

std::vector<ResidueSurfaceFeatures> aggregate_surface_vertices(
    const std::vector<SurfaceVertex>& vertices,
    const std::vector<std::vector<std::array<double, 3>>>& residue_atoms, double threshold) {
  if (residue_atoms.empty()) fail("aggregate_surface_vertices: empty residue list");
  if (!(threshold > 0.0)) fail("aggregate_surface_vertices: threshold must be positive");
  std::vector<ResidueSurfaceFeatures> out(residue_atoms.size());
  std::vector<double> si_sum(residue_atoms.size(), 0.0), hyd_sum(residue_atoms.size(), 0.0);
  std::vector<double> charge_sum(residue_atoms.size(), 0.0), hbond_sum(residue_atoms.size(), 0.0);
  for (const SurfaceVertex& v : vertices) {
    for (std::size_t r = 0; r < residue_atoms.size(); ++r) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& atom : residue_atoms[r]) {
        double dx = v.position[0] - atom[0];
        double dy = v.position[1] - atom[1];
        double dz = v.position[2] - atom[2];
        best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
      }
      if (best <= threshold) {
        out[r].n_vertices += 1;
        si_sum[r] += v.shape_index;
        hyd_sum[r] += v.hydrophobicity;
        charge_sum[r] += v.charge;
        hbond_sum[r] += v.hbond;
      }
    }
  }
  for (std::size_t r = 0; r < out.size(); ++r) {
    if (out[r].n_vertices == 0) continue;  // buried: all features stay missing
    double n = static_cast<double>(out[r].n_vertices);
    out[r].shape_index = si_sum[r] / n;
    out[r].hydrophobicity = hyd_sum[r] / n;
    out[r].charge = charge_sum[r];
    out[r].hbond = hbond_sum[r];
  }
  return out;
}

void assign_splits(std::vector<MultimodalSample>& samples, double train_frac, double val_frac,
                   double test_frac, std::uint64_t seed) {
  double total = train_frac + val_frac + test_frac;
  if (std::abs(total - 1.0) > 1e-9) fail("assign_splits: fractions must sum to 1");
  for (auto& s : samples) {
    if (s.cluster_id.empty()) fail("assign_splits: sample " + s.id + " has no cluster id");
    Rng rng(derive_seed(seed, hash_str(s.cluster_id)));
    double u = rng.uniform();
    if (u < train_frac) {
      s.split = Split::train;
    } else if (u < train_frac + val_frac) {
      s.split = Split::val;
    } else {
      s.split = Split::test;
    }
  }
}

std::vector<const MultimodalSample*> CorpusBundle::split_samples(Split s) const {
  std::vector<const MultimodalSample*> out;
  for (const auto& sample : samples)
    if (sample.split == s) out.push_back(&sample);
  return out;
}

namespace {

nlohmann::json sample_to_json(const MultimodalSample& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["entity"] = entity_name(s.entity);
  j["cluster_id"] = s.cluster_id;
  j["split"] = split_name(s.split);
  nlohmann::json tracks;
  for (const auto& [name, ids] : s.tracks) tracks[name] = ids;
  j["tracks"] = std::move(tracks);
  if (!s.region_labels.empty()) {
    std::string labels(s.region_labels.size(), 'I');
    for (std::size_t i = 0; i < s.region_labels.size(); ++i)
      if (s.region_labels[i]) labels[i] = 'E';
    j["region_labels"] = labels;
  }
  return j;
}

MultimodalSample sample_from_json(const nlohmann::json& j, const ModalityRegistry& registry,
                                  long line_no) {
  auto ctx = [line_no](const std::string& field) {
    return "corpus line " + std::to_string(line_no) + ": field '" + field + "': ";
  };
  MultimodalSample s;
  try {
    s.id = j.at("id").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ctx("id") + e.what());
  }
  try {
    s.entity = entity_from_name(j.at("entity").get<std::string>());
    s.cluster_id = j.at("cluster_id").get<std::string>();
    s.split = split_from_name(j.at("split").get<std::string>());
    for (const auto& [name, ids] : j.at("tracks").items()) {
      if (!registry.contains(name))
        fail("corpus line " + std::to_string(line_no) + ": unknown modality '" + name + "'");
      s.tracks[name] = ids.get<std::vector<int>>();
    }
    if (j.contains("region_labels")) {
      std::string labels = j.at("region_labels").get<std::string>();
      s.region_labels.resize(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 'E' && labels[i] != 'I') fail(ctx("region_labels") + "expected E or I");
        s.region_labels[i] = labels[i] == 'E' ? 1 : 0;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail("corpus line " + std::to_string(line_no) + ": " + e.what());
  }
  validate_sample(s, registry);
  return s;
}

}  // namespace

void save_corpus_records(const std::vector<MultimodalSample>& samples,
                         const std::filesystem::path& file) {
  std::ostringstream out;
  for (const auto& s : samples) out << sample_to_json(s).dump() << "\n";
  write_text_file(file, out.str());
}

std::vector<MultimodalSample> load_corpus_records(const std::filesystem::path& file,
                                                  const ModalityRegistry& registry) {
  std::ifstream in(file);
  if (!in) fail("cannot open corpus file: " + file.string());
  std::vector<MultimodalSample> samples;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail("corpus line " + std::to_string(line_no) + ": parse error: " + e.what());
    }
    samples.push_back(sample_from_json(j, registry, line_no));
  }
  return samples;
}

void save_corpus(const CorpusBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  bundle.registry.save(dir);
  save_corpus_records(bundle.samples, dir / "corpus.jsonl");
}

CorpusBundle load_corpus(const std::filesystem::path& dir) {
  CorpusBundle bundle;
  bundle.registry = ModalityRegistry::load(dir);
  bundle.samples = load_corpus_records(dir / "corpus.jsonl", bundle.registry);
  return bundle;
}

std::uint64_t corpus_digest(const CorpusBundle& bundle) {
  std::ostringstream out;
  for (const auto& s : bundle.samples) out << sample_to_json(s).dump() << "\n";
  std::string payload = out.str();
  return fnv1a64(payload.data(), payload.size());
}

// --- synthetic generation ----------------------------------------------------

namespace synth {

const std::vector<std::string> kNucleotides = {"A", "C", "G", "U"};
const std::vector<std::string> kProbeSymbols = {"P", "Q", "R", "S"};
const std::vector<std::string> kAminoAcids = {"A", "C", "D", "E", "F", "G", "H", "I", "K", "L",
                                              "M", "N", "P", "Q", "R", "S", "T", "V", "W", "Y"};
const std::vector<std::string> kSpliceClasses = {".", "D", "A", "S", "E"};
const std::vector<std::string> kDsspClasses = {"H", "G", "I", "E", "B", "T", "S", "C", "L"};
const std::vector<std::string> kStructClasses = {"s0", "s1", "s2",  "s3",  "s4",  "s5",
                                                 "s6", "s7", "s8",  "s9",  "s10", "s11",
                                                 "s12", "s13", "s14", "s15"};
const std::vector<std::string> kAnnotations = {"lncRNA", "miscRNA", "protein_coding",
                                               "pseudogene", "rRNA", "tRNA", "other"};
const std::vector<std::string> kTaxa = {"taxon_a", "taxon_b", "taxon_c", "taxon_d",
                                        "taxon_e", "taxon_f", "taxon_g", "taxon_h",
                                        "taxon_i", "taxon_j", "taxon_k"};

std::size_t probe_of_nt(std::size_t nt_idx) { return (nt_idx + 1) % 4; }

JunctionLayout junction_layout(std::size_t len, std::size_t tss, std::size_t tes) {
  // Fixed period and gap: junction positions are a pure function of the
  // transcript boundaries, so boundary conditioning carries full information
  // about them while the (iid random) sequence carries none.
  JunctionLayout jl;
  jl.tss = tss;
  jl.tes = tes;
  constexpr std::size_t period = 8, gap = 4;
  for (std::size_t d = tss + period; d + gap < tes && d < len; d += period) {
    jl.donors.push_back(d);
    jl.acceptors.push_back(d + gap);
  }
  return jl;
}

std::vector<std::uint8_t> exon_mask(std::size_t len, const JunctionLayout& jl) {
  std::vector<std::uint8_t> mask(len, 0);
  std::size_t exon_start = jl.tss;
  for (std::size_t k = 0; k < jl.donors.size(); ++k) {
    for (std::size_t i = exon_start; i <= jl.donors[k] && i < len; ++i) mask[i] = 1;
    exon_start = jl.acceptors[k];
  }
  for (std::size_t i = exon_start; i <= jl.tes && i < len; ++i) mask[i] = 1;
  return mask;
}

namespace {

double phylop_rule(bool exon, std::size_t nt_idx, std::size_t i) {
  double base = exon ? 1.2 : -0.4;
  return base + 0.08 * static_cast<double>(nt_idx) + 0.02 * static_cast<double>((i * 7) % 5);
}

double rasp_rule(std::size_t nt_idx, std::size_t i, std::size_t ctx_id) {
  return 0.15 + 0.2 * static_cast<double>(nt_idx) + 0.01 * static_cast<double>(i % 4) +
         0.05 * static_cast<double>(ctx_id);
}

double sasa_rule(std::size_t aa_idx, std::size_t i) {
  return 0.2 + 0.035 * static_cast<double>(aa_idx) + 0.01 * static_cast<double>(i % 3);
}

}  // namespace

}  // namespace synth

nlohmann::json GeneratorRecipe::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["entity_mix"] = {{"rna", rna_frac}, {"protein", protein_frac}, {"paired", paired_frac}};
  j["nt_len"] = {nt_len_lo, nt_len_hi};
  j["aa_len"] = {aa_len_lo, aa_len_hi};
  auto sig_json = [](const std::vector<SignatureChoice>& sigs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : sigs) arr.push_back({{"tracks", s.tracks}, {"p", s.p}});
    return arr;
  };
  j["rna_signatures"] = sig_json(rna_signatures);
  j["protein_signatures"] = sig_json(protein_signatures);
  j["clusters"] = clusters;
  j["splits"] = {{"train", train_frac}, {"val", val_frac}, {"test", test_frac}};
  j["continuous_bins"] = continuous_bins;
  j["text_vocab"] = text_vocab;
  return j;
}

GeneratorRecipe GeneratorRecipe::from_json(const nlohmann::json& j) {
  GeneratorRecipe r;
  r.name = j.value("name", r.name);
  if (j.contains("entity_mix")) {
    r.rna_frac = j["entity_mix"].value("rna", 0.0);
    r.protein_frac = j["entity_mix"].value("protein", 0.0);
    r.paired_frac = j["entity_mix"].value("paired", 0.0);
  }
  if (j.contains("nt_len")) {
    r.nt_len_lo = j["nt_len"][0].get<std::size_t>();
    r.nt_len_hi = j["nt_len"][1].get<std::size_t>();
  }
  if (j.contains("aa_len")) {
    r.aa_len_lo = j["aa_len"][0].get<std::size_t>();
    r.aa_len_hi = j["aa_len"][1].get<std::size_t>();
  }
  auto parse_sigs = [](const nlohmann::json& arr) {
    std::vector<SignatureChoice> sigs;
    for (const auto& s : arr) {
      SignatureChoice c;
      c.tracks = s.at("tracks").get<std::vector<std::string>>();
      c.p = s.at("p").get<double>();
      sigs.push_back(std::move(c));
    }
    return sigs;
  };
  if (j.contains("rna_signatures")) r.rna_signatures = parse_sigs(j["rna_signatures"]);
  if (j.contains("protein_signatures")) r.protein_signatures = parse_sigs(j["protein_signatures"]);
  r.clusters = j.value("clusters", r.clusters);
  if (j.contains("splits")) {
    r.train_frac = j["splits"].value("train", 0.0);
    r.val_frac = j["splits"].value("val", 0.0);
    r.test_frac = j["splits"].value("test", 0.0);
  }
  r.continuous_bins = j.value("continuous_bins", r.continuous_bins);
  r.text_vocab = j.value("text_vocab", r.text_vocab);
  return r;
}

GeneratorRecipe GeneratorRecipe::load(const std::filesystem::path& path) {
  return from_json(nlohmann::json::parse(read_text_file(path)));
}

namespace {

using synth::kAminoAcids;
using synth::kAnnotations;
using synth::kDsspClasses;
using synth::kNucleotides;
using synth::kProbeSymbols;
using synth::kSpliceClasses;
using synth::kStructClasses;
using synth::kTaxa;

const std::vector<std::string> kContextPool = {
    "in vivo probe x cells alpha",  "in vitro probe x cells alpha",
    "in vivo probe y cells beta",   "in vitro probe y cells beta",
    "in vivo probe x tissue gamma", "in vitro probe y tissue gamma",
    "in vivo probe z cells delta",  "in vitro probe z tissue delta",
};

const std::vector<std::string> kCaptionPool = {
    "soluble enzyme, binds metal ions",     "membrane transporter, proton gradient",
    "structural filament, self assembling", "dna binding regulator, helix motif",
    "secreted protease, calcium dependent", "chaperone, heat responsive",
    "kinase domain, atp dependent",         "receptor fragment, disulfide rich",
};

struct RawSample {
  MultimodalSample sample;  // tracks filled after tokenization
  std::map<std::string, RawTrack> raw;
  std::set<std::string> wanted;
};

// Pick a signature choice by its configured probability.
const GeneratorRecipe::SignatureChoice* pick_signature(
    const std::vector<GeneratorRecipe::SignatureChoice>& sigs, Rng& rng) {
  if (sigs.empty()) return nullptr;
  double total = 0.0;
  for (const auto& s : sigs) total += s.p;
  double u = rng.uniform() * total;
  double acc = 0.0;
  for (const auto& s : sigs) {
    acc += s.p;
    if (u <= acc) return &s;
  }
  return &sigs.back();
}

void gen_nucleic(RawSample& rs, const GeneratorRecipe& recipe, Rng& rng,
                 std::vector<std::size_t>* nt_out) {
  std::size_t len = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(recipe.nt_len_lo),
                      static_cast<std::int64_t>(recipe.nt_len_hi)));
  if (len < 12) len = 12;
  if (rs.sample.entity == EntityKind::paired) len -= len % 3;
  std::vector<std::size_t> nt(len);
  for (auto& x : nt) x = static_cast<std::size_t>(rng.uniform_int(0, 3));

  RawTrack nt_track{"nt_seq", {}};
  for (std::size_t x : nt) nt_track.values.push_back(TrackValue::sym(kNucleotides[x]));
  rs.raw["nt_seq"] = std::move(nt_track);

  // Transcript boundaries; junctions then follow deterministically.
  std::size_t tss = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(len / 10),
                      static_cast<std::int64_t>(std::max<std::size_t>(len / 4, len / 10 + 1))));
  std::size_t tes = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(3 * len / 4),
                      static_cast<std::int64_t>(std::max<std::size_t>(9 * len / 10, 3 * len / 4 + 1))));
  if (tes >= len) tes = len - 1;
  auto jl = synth::junction_layout(len, tss, tes);
  auto exon = synth::exon_mask(len, jl);
  rs.sample.region_labels = exon;

  if (rs.wanted.count("probe")) {
    RawTrack t{"probe", {}};
    for (std::size_t x : nt) t.values.push_back(TrackValue::sym(kProbeSymbols[synth::probe_of_nt(x)]));
    rs.raw["probe"] = std::move(t);
  }
  if (rs.wanted.count("splice")) {
    RawTrack t{"splice", {}};
    t.values.assign(len, TrackValue::sym("."));
    for (std::size_t d : jl.donors) t.values[d] = TrackValue::sym("D");
    for (std::size_t a : jl.acceptors) t.values[a] = TrackValue::sym("A");
    t.values[jl.tss] = TrackValue::sym("S");
    t.values[jl.tes] = TrackValue::sym("E");
    rs.raw["splice"] = std::move(t);
  }
  if (rs.wanted.count("phylop")) {
    RawTrack t{"phylop", {}};
    for (std::size_t i = 0; i < len; ++i)
      t.values.push_back(TrackValue::num(synth::phylop_rule(exon[i], nt[i], i)));
    rs.raw["phylop"] = std::move(t);
  }
  if (rs.wanted.count("rasp")) {
    std::size_t ctx_id = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(kContextPool.size()) - 1));
    RawTrack t{"rasp", {}};
    for (std::size_t i = 0; i < len; ++i) {
      if (exon[i]) {
        t.values.push_back(TrackValue::num(synth::rasp_rule(nt[i], i, ctx_id)));
      } else {
        t.values.push_back(TrackValue::none());  // probing covers exonic sequence only
      }
    }
    rs.raw["rasp"] = std::move(t);
    if (rs.wanted.count("context"))
      rs.raw["context"] = RawTrack{"context", {TrackValue::sym(kContextPool[ctx_id])}};
  } else if (rs.wanted.count("context")) {
    std::size_t ctx_id = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(kContextPool.size()) - 1));
    rs.raw["context"] = RawTrack{"context", {TrackValue::sym(kContextPool[ctx_id])}};
  }
  if (rs.wanted.count("annotation")) {
    std::size_t a = rs.sample.entity == EntityKind::paired ? 2 : (nt[0] + len) % kAnnotations.size();
    rs.raw["annotation"] = RawTrack{"annotation", {TrackValue::sym(kAnnotations[a])}};
  }
  if (rs.wanted.count("taxonomy")) {
    std::size_t t = (nt[0] * 4 + nt[1]) % kTaxa.size();
    rs.raw["taxonomy"] = RawTrack{"taxonomy", {TrackValue::sym(kTaxa[t])}};
  }
  if (nt_out) *nt_out = nt;
}

void gen_protein(RawSample& rs, const GeneratorRecipe& recipe, Rng& rng,
                 const std::vector<std::size_t>* nt) {
  std::vector<std::size_t> aa;
  if (nt) {
    // Paired entity: residues follow the coding triplets.
    for (std::size_t i = 0; i + 2 < nt->size(); i += 3)
      aa.push_back(((*nt)[i] * 16 + (*nt)[i + 1] * 4 + (*nt)[i + 2]) % kAminoAcids.size());
  } else {
    std::size_t len = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(recipe.aa_len_lo),
                        static_cast<std::int64_t>(recipe.aa_len_hi)));
    if (len < 8) len = 8;
    aa.resize(len);
    for (auto& x : aa)
      x = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(kAminoAcids.size()) - 1));
  }
  std::size_t len = aa.size();

  RawTrack aa_track{"aa_seq", {}};
  for (std::size_t x : aa) aa_track.values.push_back(TrackValue::sym(kAminoAcids[x]));
  rs.raw["aa_seq"] = std::move(aa_track);

  if (rs.wanted.count("dssp")) {
    RawTrack t{"dssp", {}};
    for (std::size_t x : aa) t.values.push_back(TrackValue::sym(kDsspClasses[x % kDsspClasses.size()]));
    rs.raw["dssp"] = std::move(t);
  }
  if (rs.wanted.count("struct")) {
    RawTrack t{"struct", {}};
    for (std::size_t x : aa)
      t.values.push_back(TrackValue::sym(kStructClasses[x % kStructClasses.size()]));
    rs.raw["struct"] = std::move(t);
  }
  if (rs.wanted.count("sasa")) {
    RawTrack t{"sasa", {}};
    for (std::size_t i = 0; i < len; ++i)
      t.values.push_back(TrackValue::num(synth::sasa_rule(aa[i], i)));
    rs.raw["sasa"] = std::move(t);
  }

  bool want_masif = false;
  for (const char* m : {"masif_nv", "masif_si", "masif_charge", "masif_hbond", "masif_hydro"})
    if (rs.wanted.count(m)) want_masif = true;
  if (want_masif) {
    // Build a toy surface and run the real aggregation path: one atom per
    // residue on a widely spaced line, a few vertices near exposed residues.
    std::vector<std::vector<std::array<double, 3>>> atoms(len);
    std::vector<SurfaceVertex> vertices;
    for (std::size_t i = 0; i < len; ++i) {
      atoms[i] = {{{10.0 * static_cast<double>(i), 0.0, 0.0}}};
      if (i % 7 == 3) continue;  // buried residue
      std::size_t nv = 1 + aa[i] % 3;
      for (std::size_t jv = 0; jv < nv; ++jv) {
        SurfaceVertex v;
        v.position = {10.0 * static_cast<double>(i) + 0.5 * static_cast<double>(jv + 1),
                      0.3 * static_cast<double>(jv), 0.0};
        double a = static_cast<double>(aa[i]);
        double j = static_cast<double>(jv);
        v.shape_index = -1.0 + 0.1 * a + 0.05 * j;
        v.charge = static_cast<double>(aa[i] % 5) - 2.0 + 0.1 * j;
        v.hbond = static_cast<double>(aa[i] % 3) + 0.05 * j;
        v.hydrophobicity = 0.3 * (static_cast<double>(aa[i] % 7) - 3.0) + 0.02 * j;
        vertices.push_back(v);
      }
    }
    auto feats = aggregate_surface_vertices(vertices, atoms, 2.8);
    auto real_or_missing = [](std::optional<double> v) {
      return v ? TrackValue::num(*v) : TrackValue::none();
    };
    RawTrack nv{"masif_nv", {}}, si{"masif_si", {}}, ch{"masif_charge", {}}, hb{"masif_hbond", {}},
        hy{"masif_hydro", {}};
    for (const auto& f : feats) {
      nv.values.push_back(TrackValue::num(static_cast<double>(f.n_vertices)));
      si.values.push_back(real_or_missing(f.shape_index));
      ch.values.push_back(real_or_missing(f.charge));
      hb.values.push_back(real_or_missing(f.hbond));
      hy.values.push_back(real_or_missing(f.hydrophobicity));
    }
    if (rs.wanted.count("masif_nv")) rs.raw["masif_nv"] = std::move(nv);
    if (rs.wanted.count("masif_si")) rs.raw["masif_si"] = std::move(si);
    if (rs.wanted.count("masif_charge")) rs.raw["masif_charge"] = std::move(ch);
    if (rs.wanted.count("masif_hbond")) rs.raw["masif_hbond"] = std::move(hb);
    if (rs.wanted.count("masif_hydro")) rs.raw["masif_hydro"] = std::move(hy);
  }
  if (rs.wanted.count("caption"))
    rs.raw["caption"] = RawTrack{"caption", {TrackValue::sym(kCaptionPool[aa[0] % kCaptionPool.size()])}};
  if (rs.wanted.count("taxonomy") && !rs.raw.count("taxonomy")) {
    std::size_t t = (aa[0] * 3 + aa[1 % len]) % kTaxa.size();
    rs.raw["taxonomy"] = RawTrack{"taxonomy", {TrackValue::sym(kTaxa[t])}};
  }
}

ModalityRegistry build_registry(const std::vector<RawSample>& raws, const GeneratorRecipe& recipe) {
  // Fixed families first.
  std::map<std::string, TokenizerSpec> specs;
  specs["nt_seq"] = build_character_tokenizer(kNucleotides);
  specs["probe"] = build_character_tokenizer(kProbeSymbols);
  specs["splice"] = build_character_tokenizer(kSpliceClasses);
  specs["aa_seq"] = build_character_tokenizer(kAminoAcids);
  specs["dssp"] = build_character_tokenizer(kDsspClasses);
  specs["struct"] = build_character_tokenizer(kStructClasses);
  specs["annotation"] = build_class_tokenizer(kAnnotations);
  specs["taxonomy"] = build_class_tokenizer(kTaxa);

  // Percentile tokenizers fitted on the generated raw values (capped pool).
  const std::vector<std::string> continuous = {"phylop", "rasp", "sasa", "masif_nv",
                                               "masif_si", "masif_charge", "masif_hbond",
                                               "masif_hydro"};
  for (const auto& mod : continuous) {
    std::vector<double> pool;
    for (const auto& rs : raws) {
      auto it = rs.raw.find(mod);
      if (it == rs.raw.end()) continue;
      for (const auto& v : it->second.values)
        if (v.kind == TrackValue::Kind::real && std::isfinite(v.real)) pool.push_back(v.real);
      if (pool.size() >= 20000) break;
    }
    if (pool.empty()) continue;
    int bins = std::min<int>(recipe.continuous_bins,
                             std::max<int>(2, static_cast<int>(pool.size() / 2)));
    specs[mod] = fit_continuous_tokenizer(pool, bins);
  }

  // One shared text tokenizer across all text modalities.
  bool any_text = false;
  std::vector<std::string> text_corpus;
  for (const auto& rs : raws) {
    for (const char* mod : {"context", "caption"}) {
      auto it = rs.raw.find(mod);
      if (it == rs.raw.end()) continue;
      any_text = true;
      for (const auto& v : it->second.values)
        if (v.kind == TrackValue::Kind::symbol) text_corpus.push_back(v.symbol);
    }
  }
  if (any_text) specs["__text__"] = fit_text_tokenizer(text_corpus, recipe.text_vocab);

  struct Row {
    const char* name;
    TrackGroup group;
    bool aligned;
    const char* file;
  };
  const Row rows[] = {
      {"nt_seq", TrackGroup::nucleic, true, "nt_seq.json"},
      {"probe", TrackGroup::nucleic, true, "probe.json"},
      {"splice", TrackGroup::nucleic, true, "splice.json"},
      {"phylop", TrackGroup::nucleic, true, "phylop.json"},
      {"rasp", TrackGroup::nucleic, true, "rasp.json"},
      {"aa_seq", TrackGroup::protein, true, "aa_seq.json"},
      {"dssp", TrackGroup::protein, true, "dssp.json"},
      {"struct", TrackGroup::protein, true, "struct.json"},
      {"sasa", TrackGroup::protein, true, "sasa.json"},
      {"masif_nv", TrackGroup::protein, true, "masif_nv.json"},
      {"masif_si", TrackGroup::protein, true, "masif_si.json"},
      {"masif_charge", TrackGroup::protein, true, "masif_charge.json"},
      {"masif_hbond", TrackGroup::protein, true, "masif_hbond.json"},
      {"masif_hydro", TrackGroup::protein, true, "masif_hydro.json"},
      {"context", TrackGroup::semantic_context, false, "text.json"},
      {"caption", TrackGroup::semantic_caption, false, "text.json"},
      {"annotation", TrackGroup::semantic_taxonomy, false, "annotation.json"},
      {"taxonomy", TrackGroup::semantic_taxonomy, false, "taxonomy.json"},
  };
  ModalityRegistry reg;
  for (const Row& r : rows) {
    std::string key = (std::string(r.name) == "context" || std::string(r.name) == "caption")
                          ? "__text__"
                          : r.name;
    auto it = specs.find(key);
    if (it == specs.end()) continue;  // modality never generated, leave unregistered
    ModalityDescriptor d;
    d.name = r.name;
    d.group = r.group;
    d.aligned = r.aligned;
    d.tokenizer_file = r.file;
    d.tokenizer = it->second;
    reg.add(std::move(d));
  }
  return reg;
}

}  // namespace

CorpusBundle generate_synthetic_corpus(const GeneratorRecipe& recipe, std::size_t n,
                                       std::uint64_t seed) {
  double mix_total = recipe.rna_frac + recipe.protein_frac + recipe.paired_frac;
  if (mix_total <= 0.0) fail("generator: entity mix is empty");

  std::vector<RawSample> raws;
  raws.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));  // independent per-sample stream
    RawSample rs;
    rs.sample.id = recipe.name + "-" + std::to_string(i);
    double u = rng.uniform() * mix_total;
    rs.sample.entity = u < recipe.rna_frac
                           ? EntityKind::rna
                           : (u < recipe.rna_frac + recipe.protein_frac ? EntityKind::protein
                                                                        : EntityKind::paired);
    rs.sample.cluster_id =
        "c" + std::to_string(rng.uniform_int(0, static_cast<std::int64_t>(recipe.clusters) - 1));

    if (rs.sample.entity != EntityKind::protein) {
      if (const auto* sig = pick_signature(recipe.rna_signatures, rng))
        rs.wanted.insert(sig->tracks.begin(), sig->tracks.end());
      rs.wanted.insert("nt_seq");
    }
    if (rs.sample.entity != EntityKind::rna) {
      if (const auto* sig = pick_signature(recipe.protein_signatures, rng))
        rs.wanted.insert(sig->tracks.begin(), sig->tracks.end());
      rs.wanted.insert("aa_seq");
    }

    std::vector<std::size_t> nt;
    if (rs.sample.entity != EntityKind::protein)
      gen_nucleic(rs, recipe, rng, rs.sample.entity == EntityKind::paired ? &nt : nullptr);
    if (rs.sample.entity == EntityKind::protein) gen_protein(rs, recipe, rng, nullptr);
    if (rs.sample.entity == EntityKind::paired) gen_protein(rs, recipe, rng, &nt);
    raws.push_back(std::move(rs));
  }

  CorpusBundle bundle;
  bundle.registry = build_registry(raws, recipe);
  for (auto& rs : raws) {
    for (auto& [name, raw] : rs.raw) {
      if (!bundle.registry.contains(name)) fail("generator: unregistered modality " + name);
      rs.sample.tracks[name] = encode(bundle.registry.at(name).tokenizer, raw);
    }
    validate_sample(rs.sample, bundle.registry);
    bundle.samples.push_back(std::move(rs.sample));
  }
  assign_splits(bundle.samples, recipe.train_frac, recipe.val_frac, recipe.test_frac,
                derive_seed(seed, 0x5eed));
  return bundle;
}

}  // namespace strand
