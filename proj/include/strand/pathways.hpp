#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "strand/rng.hpp"
#include "strand/sample_store.hpp"

namespace strand {

// A training recipe: required/optional inputs and targets plus a sampling
// weight. A modality may appear on both sides; the trainer then masks the
// packed target coordinates out of the encoder view, so observed input
// coordinates and target coordinates never overlap.
struct Pathway {
  std::string name;
  std::set<std::string> inputs_required;
  std::set<std::string> inputs_optional;
  std::set<std::string> targets_required;
  // Greedy packing order: configured priority (file order).
  std::vector<std::string> targets_optional;
  double weight = 1.0;
  double optional_input_p = 0.5;
  // Window size for a target whose modality is also an encoder input
  // (sequence-completion style); the realized window never exceeds half the
  // track so context remains visible.
  std::size_t completion_window = 100;
  // Input view transforms, e.g. {"splice": "boundaries"} feeds only the
  // TSS/TES positions of the splice track (rest masked).
  std::map<std::string, std::string> input_views;

  void validate() const;
};

class PathwayRegistry {
 public:
  void add(Pathway p);
  const std::vector<Pathway>& all() const { return pathways_; }
  const Pathway& at(const std::string& name) const;

  static PathwayRegistry load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<Pathway> pathways_;
};

// Eligible iff required inputs and targets are all present in the signature.
std::vector<const Pathway*> eligible_pathways(const PresenceSignature& signature,
                                              const PathwayRegistry& registry);

// Weighted selection with probability w_k / sum of eligible weights.
// Null input set signals a sample skip to the caller.
const Pathway* sample_pathway(const std::vector<const Pathway*>& eligible, Rng& rng);

// Required inputs plus an independent coin-flip subset of the optional inputs
// present on the sample.
std::set<std::string> select_inputs(const MultimodalSample& sample, const Pathway& pathway,
                                    Rng& rng);

struct PackedSegment {
  std::string modality;
  std::size_t start = 0;          // coordinate window origin in the track
  std::vector<int> target_ids;    // ground-truth ids for the window
  std::size_t length() const { return target_ids.size(); }
};

struct PackedTargets {
  std::vector<PackedSegment> segments;
  std::size_t total() const;
};

// Required target segments first (windowed to fit), then optional segments
// appended greedily in configured order until nothing further fits.
// Over-budget nucleic targets are cropped to a random budget-sized window;
// over-budget protein structural targets are dropped. Returns nullopt when a
// required target has no feasible window (sample skip).
std::optional<PackedTargets> pack_targets(const MultimodalSample& sample, const Pathway& pathway,
                                          const std::set<std::string>& selected_inputs,
                                          std::size_t budget, const ModalityRegistry& registry,
                                          Rng& rng);

}  // namespace strand
