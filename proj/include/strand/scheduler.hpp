#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "strand/rng.hpp"
#include "strand/sample_store.hpp"

namespace strand {

struct Stage {
  std::size_t context_budget = 1000;  // encoder+decoder token cap for a sample
  double max_lr = 1e-3;
  std::size_t batch_target = 8;
};

// Budgets must be strictly increasing across the curriculum.
void validate_stages(const std::vector<Stage>& stages);

// Attention cost grows superlinearly: cost(L) = a*L + b*L^2.
struct CostModel {
  double a = 1.0;
  double b = 1.0 / 512.0;
  double operator()(std::size_t len) const {
    double L = static_cast<double>(len);
    return a * L + b * L * L;
  }
};

enum class LengthPolicy { keep, crop, drop };

struct LengthDecision {
  LengthPolicy policy = LengthPolicy::keep;
  std::size_t effective_length = 0;  // encoder tokens after the decision
  std::size_t crop_start = 0, crop_len = 0;
};

// Total encoder footprint of a sample (all present modalities + registers).
std::size_t sample_encoder_length(const MultimodalSample& sample, const ModalityRegistry& registry,
                                  std::size_t register_count);

// Over-budget nucleic samples are cropped to a uniform random budget-sized
// window; over-budget protein samples are dropped.
LengthDecision apply_length_policy(const MultimodalSample& sample,
                                   const ModalityRegistry& registry, const Stage& stage,
                                   std::size_t register_count, Rng& rng);

// Window all aligned nucleic grids (and region labels) consistently.
MultimodalSample crop_nucleic(const MultimodalSample& sample, const ModalityRegistry& registry,
                              std::size_t start, std::size_t len);

struct Bucket {
  std::size_t lo = 0, hi = 0;  // length range (lo, hi]
  std::size_t batch_size = 1;
  std::size_t assigned_worker = 0;
};

// Bucket edges at empirical quantiles of the surviving lengths; ranges
// partition (0, stage budget].
std::vector<Bucket> bucketize(const std::vector<std::size_t>& lengths, const Stage& stage,
                              std::size_t n_buckets);
std::size_t bucket_of(const std::vector<Bucket>& buckets, std::size_t len);

// Largest B with B*cost(hi) <= memory_budget, floored at 1 (sets *floored
// when even a single sample exceeds the budget).
std::size_t batch_size_for_bucket(const Bucket& bucket, double memory_budget,
                                  const CostModel& cost, bool* floored = nullptr);

// sum(maxlen - len_i) / (B * maxlen)
double padding_waste(const std::vector<std::size_t>& batch_lengths);

enum class BatchStrategy { naive, bucketed, packed };
BatchStrategy batch_strategy_from_name(const std::string& s);

struct ScheduleMetrics {
  double padding_waste = 0.0;
  std::size_t steps = 0;
  std::size_t worker_bucket_switches = 0;
  double modeled_cost = 0.0;
  std::size_t scheduled_samples = 0;
  std::size_t dropped_samples = 0;
  bool batch_floor_warning = false;
  bool workers_share_buckets = false;
  // packed strategy only: entities split across pack boundaries
  std::size_t packed_entity_splits = 0;
};

struct SimBatch {
  std::size_t bucket = 0;
  std::size_t worker = 0;
  std::vector<std::size_t> lengths;
};

struct SimResult {
  ScheduleMetrics metrics;
  std::vector<SimBatch> batches;
};

// Deterministic single-epoch schedule simulation over the corpus. With
// affinity on, workers are pinned to buckets (sharing round-robin when
// workers outnumber buckets) and post-warmup bucket switches are zero.
// Sequence packing is available here only as a comparison strategy.
SimResult simulate_schedule(const CorpusBundle& corpus, const Stage& stage,
                            std::size_t n_workers, bool affinity, BatchStrategy strategy,
                            std::uint64_t seed, const CostModel& cost = {},
                            std::size_t n_buckets = 8, std::size_t register_count = 5);

}  // namespace strand
