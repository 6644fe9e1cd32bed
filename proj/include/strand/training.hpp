#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "strand/model.hpp"
#include "strand/pathways.hpp"
#include "strand/scheduler.hpp"

namespace strand {

// --- loss ---------------------------------------------------------------------

struct SegmentLoss {
  Tensor logits;  // [len, vocab]
  std::vector<int> targets;
  int pad_id = -1;
};

struct LossValue {
  double mean = 0.0;
  std::size_t tokens = 0;  // 0 signals an all-pad skip
};

// Mean cross-entropy over non-pad target positions, pooled uniformly across
// modalities.
LossValue reconstruction_loss(const std::vector<SegmentLoss>& segments);

// --- optimizer ------------------------------------------------------------------

struct StepRejected : std::runtime_error {
  explicit StepRejected(const std::string& what) : std::runtime_error(what) {}
};

struct OptimState {
  std::vector<Tensor> m, v;  // aligned with Parameters::entries
  std::int64_t step = 0;
  double beta1 = 0.9, beta2 = 0.95, eps = 1e-8, weight_decay = 0.05;

  static OptimState like(const Parameters& params);
};

// Bias-corrected AdamW update with decoupled weight decay; rejects non-finite
// gradients with diagnostics.
void optimizer_step(Parameters& params, OptimState& state, double lr);

// --- learning-rate schedule -----------------------------------------------------

struct LrSchedule {
  double max_lr = 1e-3;
  double min_lr = 1e-5;  // max_lr / 100 exactly
  std::size_t warmup_epochs = 8;
  std::size_t cooldown_epochs = 10;

  static LrSchedule from_max(double max_lr);
};

// Linear warmup 0 -> max, cosine max -> min over the main phase, held at min
// through the final cooldown epochs. Warmup/cooldown shrink proportionally
// for stages shorter than warmup+cooldown.
double lr_at(std::size_t step, std::size_t steps_per_epoch, std::size_t total_epochs,
             const LrSchedule& sched);

// --- trainer --------------------------------------------------------------------

// Encoder-input view for one step: only selected inputs, target coordinates
// masked out of any modality that is both input and target, input views (e.g.
// splice "boundaries") applied.
MultimodalSample prepare_encoder_inputs(const MultimodalSample& sample,
                                        const std::set<std::string>& inputs,
                                        const PackedTargets& targets,
                                        const ModalityRegistry& registry,
                                        const std::map<std::string, std::string>& input_views);

struct StageConfig {
  std::size_t context_budget = 512;
  std::size_t epochs = 10;
  double max_lr = 1e-3;
  std::size_t n_buckets = 4;
  std::size_t batch_target = 8;
};

struct TrainConfig {
  ModelConfig model;
  std::uint64_t seed = 1;
  double dropout_lo = 0.0, dropout_hi = 0.10;
  double weight_decay = 0.05;
  CostModel cost;
  std::vector<StageConfig> stages;
  std::size_t register_count_for_policy() const { return model.register_count; }
};

struct TrainMetrics {
  double first_epoch_loss = 0.0;
  double last_epoch_loss = 0.0;
  std::size_t steps = 0;
  std::size_t skipped_samples = 0;
  std::map<std::string, std::size_t> pathway_counts;
  std::filesystem::path checkpoint_path;
  std::filesystem::path metrics_path;
};

// Staged curriculum training loop: per step, draw sample, apply the length
// policy, sample a pathway, select inputs, pack targets, token dropout,
// assemble, forward/backward, optimizer step. Appends one JSON line per epoch
// to metrics.jsonl and writes checkpoint.bin (with optimizer state) at the
// end. Deterministic for a fixed seed.
TrainMetrics train(Model& model, const CorpusBundle& corpus, const PathwayRegistry& pathways,
                   const TrainConfig& config, const std::filesystem::path& out_dir);

}  // namespace strand
