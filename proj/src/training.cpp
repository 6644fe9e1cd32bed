#include "strand/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "strand/io_util.hpp"
#include "strand/kernels.hpp"

namespace strand {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("training: " + msg); }

}  // namespace

LossValue reconstruction_loss(const std::vector<SegmentLoss>& segments) {
  LossValue out;
  double total = 0.0;
  for (const auto& seg : segments) {
    const Tensor& logits = seg.logits;
    if (logits.rows() != seg.targets.size()) fail("reconstruction_loss: shape mismatch");
    std::size_t vocab = logits.cols();
    for (std::size_t i = 0; i < seg.targets.size(); ++i) {
      int t = seg.targets[i];
      if (t == seg.pad_id) continue;
      if (t < 0 || static_cast<std::size_t>(t) >= vocab)
        fail("reconstruction_loss: target out of range");
      const double* row = logits.row(i);
      double m = kernels::max_value(row, vocab);
      double z = 0.0;
      for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - m);
      total += m + std::log(z) - row[static_cast<std::size_t>(t)];
      out.tokens += 1;
    }
  }
  if (out.tokens > 0) out.mean = total / static_cast<double>(out.tokens);
  return out;
}

OptimState OptimState::like(const Parameters& params) {
  OptimState s;
  for (const auto& e : params.entries) {
    s.m.push_back(Tensor::zeros(e.value.shape));
    s.v.push_back(Tensor::zeros(e.value.shape));
  }
  return s;
}

void optimizer_step(Parameters& params, OptimState& state, double lr) {
  if (state.m.size() != params.entries.size() || state.v.size() != params.entries.size())
    fail("optimizer state does not match parameters");
  for (const auto& e : params.entries)
    if (!e.grad.all_finite())
      throw StepRejected("non-finite gradient in parameter " + e.name);

  state.step += 1;
  double t = static_cast<double>(state.step);
  double bc1 = 1.0 - std::pow(state.beta1, t);
  double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    Tensor& p = params.entries[i].value;
    const Tensor& g = params.entries[i].grad;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m.v[j] = state.beta1 * m.v[j] + (1.0 - state.beta1) * g.v[j];
      v.v[j] = state.beta2 * v.v[j] + (1.0 - state.beta2) * g.v[j] * g.v[j];
      double mhat = m.v[j] / bc1;
      double vhat = v.v[j] / bc2;
      // Decoupled decay: applied to the parameter, not folded into the gradient.
      p.v[j] -= lr * (mhat / (std::sqrt(vhat) + state.eps) + state.weight_decay * p.v[j]);
    }
  }
}

LrSchedule LrSchedule::from_max(double max_lr) {
  LrSchedule s;
  s.max_lr = max_lr;
  s.min_lr = max_lr / 100.0;
  return s;
}

double lr_at(std::size_t step, std::size_t steps_per_epoch, std::size_t total_epochs,
             const LrSchedule& sched) {
  if (steps_per_epoch == 0 || total_epochs == 0) fail("lr_at: empty schedule");
  std::size_t warm_e = sched.warmup_epochs;
  std::size_t cool_e = sched.cooldown_epochs;
  if (warm_e + cool_e >= total_epochs) {
    warm_e = total_epochs * 8 / 20;
    cool_e = total_epochs * 10 / 20;
  }
  std::size_t total = total_epochs * steps_per_epoch;
  std::size_t warm = warm_e * steps_per_epoch;
  std::size_t cool = cool_e * steps_per_epoch;
  if (step >= total) return sched.min_lr;
  if (warm > 0 && step <= warm)
    return sched.max_lr * static_cast<double>(step) / static_cast<double>(warm);
  std::size_t main_end = total - cool;
  if (step >= main_end) return sched.min_lr;
  double f = static_cast<double>(step - warm) / static_cast<double>(main_end - warm);
  return sched.min_lr +
         (sched.max_lr - sched.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

MultimodalSample prepare_encoder_inputs(const MultimodalSample& sample,
                                        const std::set<std::string>& inputs,
                                        const PackedTargets& targets,
                                        const ModalityRegistry& registry,
                                        const std::map<std::string, std::string>& input_views) {
  MultimodalSample view = sample;
  // Mask target coordinates out of any modality that is also an input, so
  // observed input coordinates and target coordinates never overlap. A
  // modality with an explicit input view skips this: the view itself defines
  // the observed subset (e.g. boundary tokens stay visible while the full
  // junction track is the target).
  for (const auto& seg : targets.segments) {
    if (!inputs.count(seg.modality)) continue;
    if (input_views.count(seg.modality)) continue;
    auto it = view.tracks.find(seg.modality);
    if (it == view.tracks.end()) continue;
    int mask_id = registry.at(seg.modality).tokenizer.mask_id;
    for (std::size_t i = 0; i < seg.length() && seg.start + i < it->second.size(); ++i)
      it->second[seg.start + i] = mask_id;
  }
  for (const auto& [mod, kind] : input_views) {
    if (!inputs.count(mod)) continue;
    auto it = view.tracks.find(mod);
    if (it == view.tracks.end()) continue;
    const TokenizerSpec& spec = registry.at(mod).tokenizer;
    if (kind == "boundaries") {
      // Keep transcript boundary tokens (S/E) only; everything else masked.
      std::set<int> keep_ids;
      for (std::size_t i = 0; i < spec.vocab.size(); ++i)
        if (spec.vocab[i] == "S" || spec.vocab[i] == "E") keep_ids.insert(static_cast<int>(i));
      for (auto& id : it->second)
        if (!keep_ids.count(id)) id = spec.mask_id;
    } else {
      fail("unknown input view: " + kind);
    }
  }
  return view;
}

namespace {

struct EpochAccumulator {
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  double waste_sum = 0.0;
  std::size_t waste_count = 0;
  double last_lr = 0.0;
  std::size_t skipped = 0;

  double mean_loss() const { return loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0; }
  double mean_waste() const {
    return waste_count ? waste_sum / static_cast<double>(waste_count) : 0.0;
  }
};

}  // namespace

TrainMetrics train(Model& model, const CorpusBundle& corpus, const PathwayRegistry& pathways,
                   const TrainConfig& config, const std::filesystem::path& out_dir) {
  if (config.stages.empty()) fail("no stages configured");
  {
    std::vector<Stage> stages;
    for (const auto& s : config.stages)
      stages.push_back({s.context_budget, s.max_lr, s.batch_target});
    validate_stages(stages);
  }
  auto train_split = corpus.split_samples(Split::train);
  if (train_split.empty()) fail("corpus has no train split");

  std::filesystem::create_directories(out_dir);
  std::ofstream metrics_out(out_dir / "metrics.jsonl", std::ios::trunc);
  if (!metrics_out) fail("cannot write metrics log");

  TrainMetrics result;
  result.metrics_path = out_dir / "metrics.jsonl";
  result.checkpoint_path = out_dir / "checkpoint.bin";

  OptimState optim = OptimState::like(model.params());
  optim.weight_decay = config.weight_decay;
  std::uint64_t seed = config.seed;
  bool first_epoch_recorded = false;
  std::size_t global_step = 0;

  for (std::size_t stage_idx = 0; stage_idx < config.stages.size(); ++stage_idx) {
    const StageConfig& sc = config.stages[stage_idx];
    Stage stage{sc.context_budget, sc.max_lr, sc.batch_target};
    LrSchedule sched = LrSchedule::from_max(sc.max_lr);
    std::size_t stage_step = 0;
    std::size_t steps_per_epoch = 1;

    for (std::size_t epoch = 0; epoch < sc.epochs; ++epoch) {
      Rng erng(derive_seed(seed, (stage_idx << 20) ^ epoch));
      // Length policy + crops for this epoch.
      struct Prepared {
        MultimodalSample sample;
        std::size_t length;
      };
      std::vector<Prepared> prepared;
      for (const MultimodalSample* s : train_split) {
        auto d = apply_length_policy(*s, corpus.registry, stage,
                                     config.register_count_for_policy(), erng);
        if (d.policy == LengthPolicy::drop) continue;
        Prepared p;
        p.sample = d.policy == LengthPolicy::crop
                       ? crop_nucleic(*s, corpus.registry, d.crop_start, d.crop_len)
                       : *s;
        p.length = d.effective_length;
        prepared.push_back(std::move(p));
      }
      if (prepared.empty()) fail("no samples survive the length policy at stage " +
                                 std::to_string(stage_idx));

      std::vector<std::size_t> lengths;
      lengths.reserve(prepared.size());
      for (const auto& p : prepared) lengths.push_back(p.length);
      auto buckets = bucketize(lengths, stage, sc.n_buckets);
      for (auto& b : buckets)
        b.batch_size = batch_size_for_bucket(
            b, config.cost(stage.context_budget) * static_cast<double>(sc.batch_target),
            config.cost);

      // One pass over all surviving samples, grouped per bucket, seeded order.
      std::vector<std::vector<std::size_t>> queues(buckets.size());
      std::vector<std::size_t> order(prepared.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      erng.shuffle(order);
      for (std::size_t i : order) queues[bucket_of(buckets, prepared[i].length)].push_back(i);

      struct BatchRef {
        std::size_t bucket;
        std::vector<std::size_t> items;
      };
      std::vector<BatchRef> batches;
      for (std::size_t k = 0; k < queues.size(); ++k)
        for (std::size_t i = 0; i < queues[k].size(); i += buckets[k].batch_size) {
          BatchRef b;
          b.bucket = k;
          std::size_t end = std::min(queues[k].size(), i + buckets[k].batch_size);
          b.items.assign(queues[k].begin() + static_cast<std::ptrdiff_t>(i),
                         queues[k].begin() + static_cast<std::ptrdiff_t>(end));
          batches.push_back(std::move(b));
        }
      erng.shuffle(batches);
      steps_per_epoch = std::max<std::size_t>(batches.size(), 1);

      EpochAccumulator acc;
      std::map<std::string, std::size_t> epoch_pathways;
      for (const auto& batch : batches) {
        // Per-batch dropout rate drawn uniformly from the configured range.
        double rate = erng.uniform(config.dropout_lo, config.dropout_hi);
        model.params().zero_grads();
        std::size_t contributed = 0;
        double batch_loss = 0.0;
        std::vector<std::size_t> blens;
        for (std::size_t item : batch.items) {
          const MultimodalSample& sample = prepared[item].sample;
          blens.push_back(prepared[item].length);
          Rng srng(derive_seed(seed, hash_str(sample.id) ^ (global_step * 2654435761ULL)));
          auto sig = presence_signature(sample);
          auto eligible = eligible_pathways(sig, pathways);
          const Pathway* pathway = sample_pathway(eligible, srng);
          if (!pathway) {
            acc.skipped++;
            continue;
          }
          auto inputs = select_inputs(sample, *pathway, srng);
          auto packed = pack_targets(sample, *pathway, inputs, model.config().decoder_budget,
                                     corpus.registry, srng);
          if (!packed) {
            acc.skipped++;
            continue;
          }
          MultimodalSample view = prepare_encoder_inputs(sample, inputs, *packed, corpus.registry,
                                                         pathway->input_views);
          AssemblyConfig ac{model.config().encoder_budget, model.config().register_count};
          EncoderLayout layout = assemble_encoder_layout(view, inputs, corpus.registry, ac);
          apply_token_dropout(layout, rate, derive_seed(seed, hash_str(sample.id) + global_step));
          ForwardOptions fo;
          fo.accumulate_grads = true;
          ForwardResult fr = model.forward(layout, *packed, fo);
          if (fr.target_tokens == 0) {
            acc.skipped++;
            continue;
          }
          epoch_pathways[pathway->name] += 1;
          result.pathway_counts[pathway->name] += 1;
          batch_loss += fr.loss;
          contributed += 1;
        }
        if (contributed == 0) continue;
        model.params().scale_grads(1.0 / static_cast<double>(contributed));
        double lr = lr_at(stage_step, steps_per_epoch, sc.epochs, sched);
        optimizer_step(model.params(), optim, lr);
        acc.last_lr = lr;
        acc.loss_sum += batch_loss / static_cast<double>(contributed);
        acc.loss_count += 1;
        acc.waste_sum += padding_waste(blens);
        acc.waste_count += 1;
        stage_step += 1;
        global_step += 1;
      }

      nlohmann::json line;
      line["stage"] = stage_idx;
      line["epoch"] = epoch;
      line["budget"] = stage.context_budget;
      line["loss"] = acc.mean_loss();
      line["lr"] = acc.last_lr;
      line["padding_waste"] = acc.mean_waste();
      line["skipped"] = acc.skipped;
      line["steps"] = global_step;
      line["pathways"] = epoch_pathways;
      metrics_out << line.dump() << "\n";
      result.skipped_samples += acc.skipped;
      if (!first_epoch_recorded) {
        result.first_epoch_loss = acc.mean_loss();
        first_epoch_recorded = true;
      }
      result.last_epoch_loss = acc.mean_loss();
    }
  }
  result.steps = global_step;
  metrics_out.close();

  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.vocabs = model.vocabs();
  ckpt.params = model.params();
  ckpt.has_optimizer = true;
  ckpt.opt_m = optim.m;
  ckpt.opt_v = optim.v;
  ckpt.opt_step = optim.step;
  ckpt.train_step = static_cast<std::int64_t>(global_step);
  std::ostringstream rs;
  rs << Rng(derive_seed(seed, global_step)).engine();
  ckpt.rng_state = rs.str();
  save_checkpoint(ckpt, result.checkpoint_path);
  return result;
}

}  // namespace strand
