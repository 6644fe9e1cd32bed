#include "strand/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace strand {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("scheduler: " + msg); }

}  // namespace

void validate_stages(const std::vector<Stage>& stages) {
  if (stages.empty()) fail("no stages configured");
  for (std::size_t i = 1; i < stages.size(); ++i)
    if (stages[i].context_budget <= stages[i - 1].context_budget)
      fail("stage budgets must be strictly increasing");
}

std::size_t sample_encoder_length(const MultimodalSample& sample, const ModalityRegistry& registry,
                                  std::size_t register_count) {
  std::size_t nucleic = 0, protein = 0, semantic = 0;
  for (const auto& [name, ids] : sample.tracks) {
    const auto& d = registry.at(name);
    if (d.aligned && d.group == TrackGroup::nucleic) {
      nucleic = std::max(nucleic, ids.size());
    } else if (d.aligned && d.group == TrackGroup::protein) {
      protein = std::max(protein, ids.size());
    } else {
      semantic += ids.size();
    }
  }
  return nucleic + protein + semantic + register_count;
}

LengthDecision apply_length_policy(const MultimodalSample& sample,
                                   const ModalityRegistry& registry, const Stage& stage,
                                   std::size_t register_count, Rng& rng) {
  LengthDecision d;
  std::size_t total = sample_encoder_length(sample, registry, register_count);
  if (total <= stage.context_budget) {
    d.policy = LengthPolicy::keep;
    d.effective_length = total;
    return d;
  }
  std::size_t nucleic = sample.has("nt_seq") ? sample.track("nt_seq").size() : 0;
  std::size_t fixed = total - nucleic;  // protein + semantic + registers: not croppable
  if (nucleic == 0 || fixed >= stage.context_budget) {
    d.policy = LengthPolicy::drop;
    return d;
  }
  std::size_t allowance = stage.context_budget - fixed;
  d.policy = LengthPolicy::crop;
  d.crop_len = allowance;
  d.crop_start = static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(nucleic - allowance)));
  d.effective_length = stage.context_budget;
  return d;
}

MultimodalSample crop_nucleic(const MultimodalSample& sample, const ModalityRegistry& registry,
                              std::size_t start, std::size_t len) {
  MultimodalSample out = sample;
  for (auto& [name, ids] : out.tracks) {
    const auto& d = registry.at(name);
    if (!(d.aligned && d.group == TrackGroup::nucleic)) continue;
    if (start + len > ids.size()) fail("crop window out of range for " + name);
    std::vector<int> window(ids.begin() + static_cast<std::ptrdiff_t>(start),
                            ids.begin() + static_cast<std::ptrdiff_t>(start + len));
    ids = std::move(window);
  }
  if (!out.region_labels.empty()) {
    std::vector<std::uint8_t> window(
        out.region_labels.begin() + static_cast<std::ptrdiff_t>(start),
        out.region_labels.begin() + static_cast<std::ptrdiff_t>(start + len));
    out.region_labels = std::move(window);
  }
  return out;
}

std::vector<Bucket> bucketize(const std::vector<std::size_t>& lengths, const Stage& stage,
                              std::size_t n_buckets) {
  if (lengths.empty()) fail("bucketize: empty corpus");
  if (n_buckets < 1) fail("bucketize: need at least one bucket");
  std::vector<std::size_t> sorted = lengths;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.back() > stage.context_budget)
    fail("bucketize: length exceeds stage budget (apply the length policy first)");

  std::vector<Bucket> buckets(n_buckets);
  std::size_t n = sorted.size();
  std::size_t prev = 0;
  for (std::size_t k = 0; k < n_buckets; ++k) {
    std::size_t hi;
    if (k + 1 == n_buckets) {
      hi = stage.context_budget;
    } else {
      std::size_t rank = static_cast<std::size_t>(std::ceil(
          static_cast<double>(k + 1) * static_cast<double>(n) / static_cast<double>(n_buckets)));
      hi = sorted[std::min(rank, n) - 1];
    }
    hi = std::max(hi, prev);  // degenerate quantiles collapse to empty buckets
    buckets[k].lo = prev;
    buckets[k].hi = hi;
    prev = hi;
  }
  buckets.back().hi = stage.context_budget;
  return buckets;
}

std::size_t bucket_of(const std::vector<Bucket>& buckets, std::size_t len) {
  for (std::size_t k = 0; k < buckets.size(); ++k)
    if (len > buckets[k].lo && len <= buckets[k].hi) return k;
  fail("length outside all buckets: " + std::to_string(len));
}

std::size_t batch_size_for_bucket(const Bucket& bucket, double memory_budget,
                                  const CostModel& cost, bool* floored) {
  double unit = cost(bucket.hi);
  std::size_t b = unit > 0.0 ? static_cast<std::size_t>(memory_budget / unit) : 1;
  if (floored) *floored = b < 1;
  return std::max<std::size_t>(b, 1);
}

double padding_waste(const std::vector<std::size_t>& batch_lengths) {
  if (batch_lengths.empty()) fail("padding_waste: empty batch");
  std::size_t maxlen = *std::max_element(batch_lengths.begin(), batch_lengths.end());
  if (maxlen == 0) return 0.0;
  std::size_t pad = 0;
  for (std::size_t len : batch_lengths) pad += maxlen - len;
  return static_cast<double>(pad) /
         (static_cast<double>(batch_lengths.size()) * static_cast<double>(maxlen));
}

BatchStrategy batch_strategy_from_name(const std::string& s) {
  if (s == "naive") return BatchStrategy::naive;
  if (s == "bucketed") return BatchStrategy::bucketed;
  if (s == "packed") return BatchStrategy::packed;
  fail("unknown batch strategy: " + s);
}

SimResult simulate_schedule(const CorpusBundle& corpus, const Stage& stage,
                            std::size_t n_workers, bool affinity, BatchStrategy strategy,
                            std::uint64_t seed, const CostModel& cost, std::size_t n_buckets,
                            std::size_t register_count) {
  if (n_workers == 0) fail("simulate_schedule: need at least one worker");
  SimResult result;
  Rng rng(seed);

  // Length policy pass.
  std::vector<std::size_t> lengths;
  for (const auto& s : corpus.samples) {
    auto d = apply_length_policy(s, corpus.registry, stage, register_count, rng);
    if (d.policy == LengthPolicy::drop) {
      result.metrics.dropped_samples += 1;
    } else {
      lengths.push_back(d.effective_length);
    }
  }
  if (lengths.empty()) fail("simulate_schedule: no samples survive the length policy");
  rng.shuffle(lengths);

  if (strategy == BatchStrategy::packed) {
    // Fixed-length packs; entities spanning a pack boundary are counted as
    // integrity violations (this strategy exists for comparison only).
    std::size_t packed_total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
    std::size_t packs = (packed_total + stage.context_budget - 1) / stage.context_budget;
    std::size_t cursor = 0;
    for (std::size_t len : lengths) {
      std::size_t pos = cursor % stage.context_budget;
      if (pos + len > stage.context_budget && pos != 0) result.metrics.packed_entity_splits += 1;
      cursor += len;
    }
    result.metrics.steps = packs;
    result.metrics.scheduled_samples = lengths.size();
    result.metrics.padding_waste =
        1.0 - static_cast<double>(packed_total) /
                  (static_cast<double>(packs) * static_cast<double>(stage.context_budget));
    result.metrics.modeled_cost = static_cast<double>(packs) * cost(stage.context_budget);
    return result;
  }

  std::vector<Bucket> buckets;
  if (strategy == BatchStrategy::naive) {
    Bucket b;
    b.lo = 0;
    b.hi = stage.context_budget;
    buckets = {b};
  } else {
    buckets = bucketize(lengths, stage, n_buckets);
  }
  bool floored_any = false;
  for (auto& b : buckets) {
    bool floored = false;
    b.batch_size = batch_size_for_bucket(
        b, cost(stage.context_budget) * static_cast<double>(stage.batch_target), cost, &floored);
    floored_any = floored_any || floored;
  }
  result.metrics.batch_floor_warning = floored_any;
  result.metrics.workers_share_buckets = affinity && n_workers > buckets.size();
  for (std::size_t k = 0; k < buckets.size(); ++k) buckets[k].assigned_worker = k % n_workers;

  // Per-bucket queues in sorted order (narrowest feasible batch ranges);
  // naive keeps the shuffled arrival order.
  std::vector<std::vector<std::size_t>> queues(buckets.size());
  for (std::size_t len : lengths) queues[bucket_of(buckets, len)].push_back(len);
  if (strategy == BatchStrategy::bucketed)
    for (auto& q : queues) std::sort(q.begin(), q.end());

  for (std::size_t k = 0; k < buckets.size(); ++k) {
    for (std::size_t i = 0; i < queues[k].size(); i += buckets[k].batch_size) {
      SimBatch batch;
      batch.bucket = k;
      std::size_t end = std::min(queues[k].size(), i + buckets[k].batch_size);
      batch.lengths.assign(queues[k].begin() + static_cast<std::ptrdiff_t>(i),
                           queues[k].begin() + static_cast<std::ptrdiff_t>(end));
      result.batches.push_back(std::move(batch));
    }
  }
  // Interleave batches across buckets deterministically for worker handout.
  std::stable_sort(result.batches.begin(), result.batches.end(),
                   [](const SimBatch& a, const SimBatch& b) { return a.bucket < b.bucket; });
  if (!affinity) rng.shuffle(result.batches);

  // A worker's first batch from a bucket is a warmup assignment; a switch is
  // counted only when it leaves a bucket and later returns to one it already
  // streamed (the cross-bucket thrash the affinity policy removes).
  std::vector<std::optional<std::size_t>> last_bucket(n_workers);
  std::vector<std::set<std::size_t>> visited(n_workers);
  std::size_t rr = 0;
  std::size_t pad_tokens = 0, padded_tokens = 0;
  for (auto& batch : result.batches) {
    std::size_t w = affinity ? buckets[batch.bucket].assigned_worker : (rr++ % n_workers);
    batch.worker = w;
    if (last_bucket[w] && *last_bucket[w] != batch.bucket && visited[w].count(batch.bucket))
      result.metrics.worker_bucket_switches += 1;
    visited[w].insert(batch.bucket);
    last_bucket[w] = batch.bucket;

    std::size_t maxlen = *std::max_element(batch.lengths.begin(), batch.lengths.end());
    for (std::size_t len : batch.lengths) pad_tokens += maxlen - len;
    padded_tokens += batch.lengths.size() * maxlen;
    result.metrics.modeled_cost += static_cast<double>(batch.lengths.size()) * cost(maxlen);
    result.metrics.scheduled_samples += batch.lengths.size();
  }
  result.metrics.steps = result.batches.size();
  result.metrics.padding_waste =
      padded_tokens == 0 ? 0.0
                         : static_cast<double>(pad_tokens) / static_cast<double>(padded_tokens);
  return result;
}

}  // namespace strand
