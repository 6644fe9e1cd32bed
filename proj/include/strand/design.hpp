#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "strand/model.hpp"
#include "strand/sample_store.hpp"

namespace strand {

// --- annealing -----------------------------------------------------------------

enum class AnnealKind { linear, cosine, exponential };

const char* anneal_kind_name(AnnealKind k);
AnnealKind anneal_kind_from_name(const std::string& s);

// Value at cycle i of n; endpoints pin to start and end. n < 2 returns start.
double anneal(AnnealKind kind, double start, double end, std::size_t i, std::size_t n);

// --- hyperparameters --------------------------------------------------------------

struct DesignHyperparams {
  AnnealKind temperature_kind = AnnealKind::linear;
  double t_start = 1.0, t_end = 0.01;
  double acceptance_threshold = 0.2;
  AnnealKind resample_kind = AnnealKind::linear;
  double r_start = 0.5, r_end = 0.05;
  double repeat_resample_p = 1.0;
  std::size_t max_cycles = 10;

  void validate() const;
};

// Independent uniform draws from the published grids.
DesignHyperparams sample_design_hyperparams(Rng& rng);

extern const std::vector<double> kTemperatureStartGrid;  // 1, 1.5, 2, 3
extern const std::vector<double> kTemperatureEndGrid;    // 0.001..0.5
extern const std::vector<double> kAcceptanceGrid;        // 0.15..0.3
extern const std::vector<double> kResampleStartGrid;     // 0.25..0.9
extern const std::vector<double> kResampleEndGrid;       // 0.02..0.1
extern const std::vector<double> kRepeatResampleGrid;    // 0.99, 1

// --- RNA window design --------------------------------------------------------------

struct DesignWindow {
  std::int64_t center = 0;
  std::size_t width = 30;  // 30 or 50
  // Masked interval: [center - width/2, center + width/2)
  std::int64_t lo() const { return center - static_cast<std::int64_t>(width / 2); }
  std::int64_t hi() const { return lo() + static_cast<std::int64_t>(width); }
};

struct WindowCenterSpec {
  std::int64_t mutation_pos = 0;
  std::size_t width = 30;
  std::size_t sequence_length = 0;
};

// The three arithmetic progressions of candidate centers relative to the
// mutation (duplicates at the seams removed); 245 offsets.
const std::vector<std::int64_t>& window_center_offsets();
// Absolute centers: offsets shifted to the mutation, minus centers whose
// window leaves the sequence or touches the protected region around the
// mutation.
std::vector<std::int64_t> window_centers(const WindowCenterSpec& spec);

// Single-pass redesign of a masked window (argmax sampling at temperature
// 1e-8); positions outside the window are returned byte-identical. The
// window must not overlap the protected half-width region around
// protected_pos (pass nullopt to skip the check).
std::vector<int> design_rna_window(Model& model, const ModalityRegistry& registry,
                                   const MultimodalSample& sample, const DesignWindow& window,
                                   std::optional<std::int64_t> protected_pos,
                                   const std::set<std::string>& conditioning,
                                   double temperature = 1e-8, std::uint64_t seed = 0);

// --- iterative generate-verify design -------------------------------------------------

struct ConditioningTrack {
  std::string modality;
  bool categorical = false;                   // any mismatch is unsatisfied
  std::vector<std::optional<double>> values;  // nullopt = uncovered (excluded)
};

// Generation/verification interface; the model adapter and test oracles both
// implement it.
struct DesignModelApi {
  // Resample the masked positions of seq at the given temperature.
  std::function<std::vector<int>(const std::vector<int>& seq,
                                 const std::vector<std::uint8_t>& resample_mask,
                                 double temperature, Rng& rng)>
      propose;
  // Predicted conditioning values for a candidate sequence, keyed by modality.
  std::function<std::map<std::string, std::vector<double>>(const std::vector<int>& seq)> verify;
};

struct DesignTrace {
  enum class ExitReason { all_satisfied, max_cycles };
  struct Cycle {
    std::vector<int> sequence;
    std::vector<std::size_t> unsatisfied;
    std::vector<std::size_t> resampled;  // chosen for regeneration next cycle
    double temperature = 0.0;
    double resample_fraction = 0.0;
  };
  std::vector<Cycle> cycles;
  ExitReason exit_reason = ExitReason::max_cycles;
};

struct DesignResult {
  std::vector<int> sequence;
  DesignTrace trace;
};

// Anneal temperature and resample fraction over at most max_cycles cycles;
// per cycle: generate at the masked positions, verify, mark unsatisfied plus
// a random fraction of satisfied plus (with probability p) repeated-run
// positions; exit early when everything is satisfied.
DesignResult iterative_design(const DesignModelApi& api, std::size_t sequence_length,
                              const std::vector<ConditioningTrack>& conditioning,
                              const DesignHyperparams& hp, std::uint64_t seed);

// Model adapter for amino-acid design conditioned on tokenized tracks.
DesignModelApi model_design_api(Model& model, const ModalityRegistry& registry,
                                const MultimodalSample& conditioning_sample,
                                const std::set<std::string>& conditioning_modalities);

// Conditioning tracks (detokenized) from a sample, for the unsatisfied-set
// computation; continuous tracks compare on bin centers, categorical on ids.
std::vector<ConditioningTrack> conditioning_from_sample(
    const MultimodalSample& sample, const ModalityRegistry& registry,
    const std::set<std::string>& modalities);

// --- surface similarity ---------------------------------------------------------------

// Rescaled mean Pearson correlation of the four per-residue surface channels
// over jointly exposed residues (>= 1 mapped vertex on both sides); neutral
// 0.5 when fewer than five joint residues; zero-variance channels contribute
// correlation 0.
double masif_similarity(const std::vector<ResidueSurfaceFeatures>& predicted,
                        const std::vector<ResidueSurfaceFeatures>& native);

}  // namespace strand
