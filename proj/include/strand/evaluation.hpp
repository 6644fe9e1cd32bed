#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "strand/model.hpp"
#include "strand/sample_store.hpp"

namespace strand {

// --- pure metrics --------------------------------------------------------------

// Area under the precision-recall step curve, descending-score sweep with
// tied scores grouped; no linear interpolation. Requires >= 1 positive.
double aupr(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// Product-moment correlation; rejects length < 2 or zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Two-class softmax over a selected pair of logits, numerically stabilized.
double restricted_softmax(double logit_a, double logit_b);

struct PairSet {
  std::set<std::pair<std::size_t, std::size_t>> pairs;  // (i,j), i < j, 0-based
};

// Stack-based matching; unbalanced input reports the offending position.
PairSet parse_dot_bracket(const std::string& s);
std::string to_dot_bracket(const PairSet& pairs, std::size_t length);

struct PairEvalResult {
  std::size_t tp = 0, fp = 0, fn = 0;
  double ppv = 0.0, sensitivity = 0.0, f1 = 0.0;  // 0 when denominators are 0
};

PairEvalResult pair_metrics(const PairSet& pred, const PairSet& ref);
double delta_f1(double f1_pred, double f1_seq);

struct DeiganParams {
  double slope = 1.8;      // m (conventional community default, configurable)
  double intercept = -0.6; // b
};

// Pseudo-energy m*ln(r+1)+b; rejects negative reactivity.
double deigan_pseudo_energy(double reactivity, const DeiganParams& params);

// Min-max over finite entries to [0,1]; constant input maps to 0; NaN entries
// (missing) are preserved.
std::vector<double> normalize_reactivity(const std::vector<double>& values);

struct WilcoxonResult {
  double w_plus = 0.0;
  std::size_t n = 0;  // nonzero differences
  double p_two_sided = 1.0;
  double p_one_sided = 0.5;  // halved two-sided p
  bool exact = false;
};

// Signed-rank test over (f1_pred, f1_seq) pairs: zero differences dropped,
// average ranks for ties, exact null for n <= 25 (dynamic program identical
// to full sign enumeration), normal approximation with tie correction above.
WilcoxonResult wilcoxon_signed_rank_one_sided(
    const std::vector<std::pair<double, double>>& pairs);

struct VariantScoreInput {
  std::vector<double> wt_profile;
  std::vector<double> mut_profile;
  std::size_t variant_position = 0;
  std::size_t window = 30;
};

struct VariantScore {
  double score = 0.0;
  std::size_t window_used = 0;  // clipped length at sequence boundaries
};

// Mean absolute predicted-conservation change over a window centered on the
// variant.
VariantScore phylop_vep(const VariantScoreInput& input);

struct UpliftRecord {
  double top1 = 0.0;
  double top10 = 0.0;
  double uplift = 0.0;
};

struct UpliftGrid {
  std::size_t bins = 0;
  std::vector<std::optional<double>> mean_uplift;  // row-major [top1_bin][top10_bin]
  std::vector<std::size_t> counts;

  std::optional<double> at(std::size_t top1_bin, std::size_t top10_bin) const;
};

UpliftGrid uplift_attribution(const std::vector<UpliftRecord>& records, std::size_t grid_bins);

// Greedy softmax sampling; temperature below 1e-6 collapses to argmax.
std::size_t sample_logits(const double* logits, std::size_t n, double temperature, Rng& rng);

// --- model-driven evaluation -----------------------------------------------------

struct CompletionEvalResult {
  double accuracy = 0.0;
  std::size_t positions = 0;
  std::optional<double> exon_accuracy;
  std::optional<double> intron_accuracy;
  std::size_t skipped = 0;  // sequences not longer than the mask width
};

// Masks a centered window of the anchor track, conditions on the requested
// modalities, and scores top-1 reconstruction per masked token (single
// forward pass per sample; temperature 1e-8 sampling). Exon/intron strata
// come from region labels when present.
CompletionEvalResult sequence_completion_eval(Model& model, const CorpusBundle& corpus,
                                              Split split, std::size_t mask_width,
                                              const std::set<std::string>& conditioning);

// Per-sample attribution records: uplift of conditioning on aux_modality for
// anchor completion, paired with top-1/top-10 accuracy of predicting the aux
// modality itself over the same window.
std::vector<UpliftRecord> completion_uplift_records(Model& model, const CorpusBundle& corpus,
                                                    Split split, std::size_t mask_width,
                                                    const std::string& aux_modality);

// Predicted per-position profile for a continuous modality (argmax bin,
// detokenized to bin centers), windowed through the decoder budget.
std::vector<double> predict_profile(Model& model, const ModalityRegistry& registry,
                                    const MultimodalSample& sample, const std::string& modality,
                                    const std::set<std::string>& conditioning);

// Per-position class logits for the splice track given (optionally
// boundary-conditioned) inputs; pluggable so oracles can stand in for the
// model in tests.
using SpliceLogitFn =
    std::function<Tensor(const MultimodalSample& sample, bool conditioned)>;

SpliceLogitFn model_splice_logits(Model& model, const ModalityRegistry& registry);

struct SpliceEvalResult {
  double aupr_donor = 0.0;
  double aupr_acceptor = 0.0;
  double macro_aupr = 0.0;  // mean of the two classes
  double micro_aupr = 0.0;  // pooled positions
  std::map<std::string, double> strata_macro;  // "coding" / "noncoding"
  std::size_t records = 0, skipped = 0;
};

// Donor/acceptor probabilities via the restricted softmax, AUPR per class
// then averaged; records with no positive sites are skipped (counted).
SpliceEvalResult splice_site_eval(const SpliceLogitFn& logits,
                                  const std::vector<const MultimodalSample*>& records,
                                  const ModalityRegistry& registry, bool conditioned);

}  // namespace strand
