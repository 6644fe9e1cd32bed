#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "strand/tokenizer.hpp"

namespace strand {

enum class TrackGroup { nucleic, protein, semantic_context, semantic_caption, semantic_taxonomy };
enum class EntityKind { rna, protein, paired };
enum class Split { train, val, test };

const char* track_group_name(TrackGroup g);
TrackGroup track_group_from_name(const std::string& s);
const char* entity_name(EntityKind e);
EntityKind entity_from_name(const std::string& s);
const char* split_name(Split s);
Split split_from_name(const std::string& s);

struct ModalityDescriptor {
  std::string name;
  TrackGroup group = TrackGroup::nucleic;
  bool aligned = false;  // shares its group's coordinate system
  std::string tokenizer_file;
  TokenizerSpec tokenizer;
};

// Ordered modality table; registry order fixes group/concat order downstream.
class ModalityRegistry {
 public:
  void add(ModalityDescriptor d);
  bool contains(const std::string& name) const;
  const ModalityDescriptor& at(const std::string& name) const;
  const std::vector<ModalityDescriptor>& ordered() const { return mods_; }

  void save(const std::filesystem::path& dir) const;
  static ModalityRegistry load(const std::filesystem::path& dir);

 private:
  std::vector<ModalityDescriptor> mods_;
};

struct MultimodalSample {
  std::string id;
  EntityKind entity = EntityKind::rna;
  std::string cluster_id;
  Split split = Split::train;
  std::map<std::string, std::vector<int>> tracks;  // modality -> token ids
  std::vector<std::uint8_t> region_labels;         // per nucleic position; 1 = exon, 0 = intron

  bool has(const std::string& name) const { return tracks.count(name) != 0; }
  const std::vector<int>& track(const std::string& name) const;
};

struct PresenceSignature {
  std::vector<std::string> modalities;  // sorted
  bool contains(const std::string& m) const;
  bool contains_all(const std::set<std::string>& ms) const;
  bool operator==(const PresenceSignature&) const = default;
};

PresenceSignature presence_signature(const MultimodalSample& sample);

// Alignment invariant: every aligned modality's track length equals its
// group's anchor length; an anchor sequence must be present.
void validate_sample(const MultimodalSample& sample, const ModalityRegistry& registry);

// --- MaSIF vertex-to-residue aggregation -----------------------------------

struct SurfaceVertex {
  std::array<double, 3> position{};  // angstroms
  double shape_index = 0.0;
  double charge = 0.0;
  double hbond = 0.0;
  double hydrophobicity = 0.0;
};

struct ResidueSurfaceFeatures {
  std::size_t n_vertices = 0;
  std::optional<double> shape_index;
  std::optional<double> charge;
  std::optional<double> hbond;
  std::optional<double> hydrophobicity;
};

// A vertex maps to every residue with an atom within `threshold` of it.
// Mean for shape index and hydrophobicity, sum for charge and hbond;
// residues without any mapped vertex keep all features missing.
std::vector<ResidueSurfaceFeatures> aggregate_surface_vertices(
    const std::vector<SurfaceVertex>& vertices,
    const std::vector<std::vector<std::array<double, 3>>>& residue_atoms,
    double threshold = 2.8);

// --- splits ------------------------------------------------------------------

// Cluster-level split assignment: all members of a cluster land in one split;
// deterministic in (seed, cluster_id) regardless of sample order.
void assign_splits(std::vector<MultimodalSample>& samples, double train_frac, double val_frac,
                   double test_frac, std::uint64_t seed);

// --- corpus ------------------------------------------------------------------

struct CorpusBundle {
  ModalityRegistry registry;
  std::vector<MultimodalSample> samples;

  std::vector<const MultimodalSample*> split_samples(Split s) const;
};

// One JSON record per line. save/load over a directory: registry.json,
// tokenizers/<mod>.json, corpus.jsonl.
void save_corpus(const CorpusBundle& bundle, const std::filesystem::path& dir);
CorpusBundle load_corpus(const std::filesystem::path& dir);
// Line-level API against an existing registry (errors carry line numbers).
void save_corpus_records(const std::vector<MultimodalSample>& samples,
                         const std::filesystem::path& file);
std::vector<MultimodalSample> load_corpus_records(const std::filesystem::path& file,
                                                  const ModalityRegistry& registry);

std::uint64_t corpus_digest(const CorpusBundle& bundle);

// --- synthetic generation ----------------------------------------------------

// Presence signatures are drawn from a configured distribution; auxiliary
// tracks are linked to the anchor through fixed deterministic rules (see
// synth_rules in sample_store.cpp) so conditioning provably carries
// information.
struct GeneratorRecipe {
  std::string name = "synthetic";
  double rna_frac = 1.0, protein_frac = 0.0, paired_frac = 0.0;
  std::size_t nt_len_lo = 32, nt_len_hi = 64;
  std::size_t aa_len_lo = 16, aa_len_hi = 32;
  struct SignatureChoice {
    std::vector<std::string> tracks;
    double p = 1.0;
  };
  std::vector<SignatureChoice> rna_signatures;
  std::vector<SignatureChoice> protein_signatures;
  std::size_t clusters = 16;
  double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
  int continuous_bins = 100;
  std::size_t text_vocab = 96;

  nlohmann::json to_json() const;
  static GeneratorRecipe from_json(const nlohmann::json& j);
  static GeneratorRecipe load(const std::filesystem::path& path);
};

CorpusBundle generate_synthetic_corpus(const GeneratorRecipe& recipe, std::size_t n,
                                       std::uint64_t seed);

// Fixed generator rules exposed for tests (the aux track is a per-position
// bijection of the anchor symbol, so I(anchor; aux) = H(anchor) = 2 bits).
namespace synth {
extern const std::vector<std::string> kNucleotides;     // A C G U
extern const std::vector<std::string> kAminoAcids;      // 20
extern const std::vector<std::string> kProbeSymbols;    // bijective partner of nucleotides
extern const std::vector<std::string> kSpliceClasses;   // . D A S E
extern const std::vector<std::string> kDsspClasses;     // 9
extern const std::vector<std::string> kStructClasses;   // 16
extern const std::vector<std::string> kAnnotations;     // 7
extern const std::vector<std::string> kTaxa;            // 11
std::size_t probe_of_nt(std::size_t nt_idx);
// Junction layout is a pure function of (tss, tes): donors/acceptors repeat
// with a period derived from tss.
struct JunctionLayout {
  std::size_t tss, tes;
  std::vector<std::size_t> donors, acceptors;
};
JunctionLayout junction_layout(std::size_t len, std::size_t tss, std::size_t tes);
std::vector<std::uint8_t> exon_mask(std::size_t len, const JunctionLayout& jl);
}  // namespace synth

}  // namespace strand
