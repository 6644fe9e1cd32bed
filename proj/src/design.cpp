#include "strand/design.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "strand/evaluation.hpp"
#include "strand/track_assembly.hpp"
#include "strand/training.hpp"

namespace strand {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("design: " + msg); }

}  // namespace

const char* anneal_kind_name(AnnealKind k) {
  switch (k) {
    case AnnealKind::linear: return "linear";
    case AnnealKind::cosine: return "cosine";
    case AnnealKind::exponential: return "exponential";
  }
  return "?";
}

AnnealKind anneal_kind_from_name(const std::string& s) {
  for (AnnealKind k : {AnnealKind::linear, AnnealKind::cosine, AnnealKind::exponential})
    if (s == anneal_kind_name(k)) return k;
  fail("unknown annealing kind: " + s);
}

double anneal(AnnealKind kind, double start, double end, std::size_t i, std::size_t n) {
  if (n < 2) return start;
  if (i >= n) fail("anneal: cycle index out of range");
  double f = static_cast<double>(i) / static_cast<double>(n - 1);
  switch (kind) {
    case AnnealKind::linear:
      return start + (end - start) * f;
    case AnnealKind::cosine:
      return end + (start - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
    case AnnealKind::exponential:
      return start * std::pow(end / start, f);
  }
  return start;
}

const std::vector<double> kTemperatureStartGrid = {1.0, 1.5, 2.0, 3.0};
const std::vector<double> kTemperatureEndGrid = {0.001, 0.01, 0.05, 0.1, 0.5};
const std::vector<double> kAcceptanceGrid = {0.15, 0.2, 0.25, 0.3};
const std::vector<double> kResampleStartGrid = {0.25, 0.3, 0.4, 0.5, 0.7, 0.9};
const std::vector<double> kResampleEndGrid = {0.02, 0.05, 0.08, 0.1};
const std::vector<double> kRepeatResampleGrid = {0.99, 1.0};

void DesignHyperparams::validate() const {
  if (!(t_end < t_start)) fail("hyperparams: t_end must be below t_start");
  if (!(r_end < r_start)) fail("hyperparams: r_end must be below r_start");
  if (acceptance_threshold < 0.0) fail("hyperparams: negative acceptance threshold");
  if (repeat_resample_p < 0.0 || repeat_resample_p > 1.0)
    fail("hyperparams: repeat_resample_p outside [0,1]");
  if (max_cycles == 0 || max_cycles > 10) fail("hyperparams: max_cycles must be in 1..10");
}

DesignHyperparams sample_design_hyperparams(Rng& rng) {
  const std::vector<AnnealKind> kinds = {AnnealKind::linear, AnnealKind::cosine,
                                         AnnealKind::exponential};
  DesignHyperparams hp;
  hp.temperature_kind = rng.pick(kinds);
  hp.t_start = rng.pick(kTemperatureStartGrid);
  hp.t_end = rng.pick(kTemperatureEndGrid);
  hp.acceptance_threshold = rng.pick(kAcceptanceGrid);
  hp.resample_kind = rng.pick(kinds);
  hp.r_start = rng.pick(kResampleStartGrid);
  hp.r_end = rng.pick(kResampleEndGrid);
  hp.repeat_resample_p = rng.pick(kRepeatResampleGrid);
  hp.max_cycles = 10;
  hp.validate();
  return hp;
}

const std::vector<std::int64_t>& window_center_offsets() {
  static const std::vector<std::int64_t> offsets = [] {
    std::set<std::int64_t> uniq;
    for (std::int64_t o = -300; o <= -130; o += 5) uniq.insert(o);
    for (std::int64_t o = -130; o <= 50; o += 1) uniq.insert(o);
    for (std::int64_t o = 50; o <= 200; o += 5) uniq.insert(o);
    return std::vector<std::int64_t>(uniq.begin(), uniq.end());
  }();
  return offsets;
}

namespace {

bool window_violates_protection(const DesignWindow& w, std::int64_t protected_pos,
                                std::size_t width) {
  // Protected region: half-width window around the mutation, inclusive.
  std::int64_t half = static_cast<std::int64_t>(width / 2);
  std::int64_t plo = protected_pos - half;
  std::int64_t phi = protected_pos + half;
  return w.lo() <= phi && plo < w.hi();
}

}  // namespace

std::vector<std::int64_t> window_centers(const WindowCenterSpec& spec) {
  std::vector<std::int64_t> centers;
  for (std::int64_t off : window_center_offsets()) {
    DesignWindow w;
    w.center = spec.mutation_pos + off;
    w.width = spec.width;
    if (w.lo() < 0 || w.hi() > static_cast<std::int64_t>(spec.sequence_length)) continue;
    if (window_violates_protection(w, spec.mutation_pos, spec.width)) continue;
    centers.push_back(w.center);
  }
  return centers;
}

std::vector<int> design_rna_window(Model& model, const ModalityRegistry& registry,
                                   const MultimodalSample& sample, const DesignWindow& window,
                                   std::optional<std::int64_t> protected_pos,
                                   const std::set<std::string>& conditioning,
                                   double temperature, std::uint64_t seed) {
  const auto& nt = sample.track("nt_seq");
  if (window.lo() < 0 || window.hi() > static_cast<std::int64_t>(nt.size()))
    fail("design window outside sequence");
  if (protected_pos && window_violates_protection(window, *protected_pos, window.width))
    fail("design window overlaps the protected region around the mutation");

  std::size_t start = static_cast<std::size_t>(window.lo());
  std::size_t width = window.width;

  PackedTargets targets;
  PackedSegment seg;
  seg.modality = "nt_seq";
  seg.start = start;
  seg.target_ids.assign(nt.begin() + static_cast<std::ptrdiff_t>(start),
                        nt.begin() + static_cast<std::ptrdiff_t>(start + width));
  targets.segments.push_back(seg);

  std::set<std::string> inputs = {"nt_seq"};
  for (const auto& m : conditioning)
    if (sample.has(m)) inputs.insert(m);
  MultimodalSample view = prepare_encoder_inputs(sample, inputs, targets, registry, {});
  AssemblyConfig ac{model.config().encoder_budget, model.config().register_count};
  EncoderLayout layout = assemble_encoder_layout(view, inputs, registry, ac);
  ForwardResult fr = model.forward(layout, targets);
  const Tensor& logits = fr.segment_logits.at(0);

  Rng rng(derive_seed(seed, 0xde51));
  std::vector<int> out = nt;  // untouched outside the window
  std::size_t value_tokens = registry.at("nt_seq").tokenizer.n_value_tokens();
  for (std::size_t i = 0; i < width; ++i) {
    // Restrict sampling to value tokens (specials are not designable).
    std::size_t id = sample_logits(logits.row(i), value_tokens, temperature, rng);
    out[start + i] = static_cast<int>(id);
  }
  return out;
}

std::vector<ConditioningTrack> conditioning_from_sample(
    const MultimodalSample& sample, const ModalityRegistry& registry,
    const std::set<std::string>& modalities) {
  std::vector<ConditioningTrack> out;
  for (const auto& m : modalities) {
    const TokenizerSpec& spec = registry.at(m).tokenizer;
    ConditioningTrack t;
    t.modality = m;
    t.categorical = spec.kind != TokenizerKind::continuous;
    for (int id : sample.track(m)) {
      if (spec.is_special(id)) {
        t.values.push_back(std::nullopt);  // uncovered position
      } else if (t.categorical) {
        t.values.push_back(static_cast<double>(id));
      } else {
        t.values.push_back(spec.bin_centers[static_cast<std::size_t>(id)]);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

DesignResult iterative_design(const DesignModelApi& api, std::size_t sequence_length,
                              const std::vector<ConditioningTrack>& conditioning,
                              const DesignHyperparams& hp, std::uint64_t seed) {
  hp.validate();
  if (conditioning.empty()) fail("iterative design requires conditioning tracks");
  for (const auto& t : conditioning)
    if (t.values.size() != sequence_length) fail("conditioning track length mismatch");

  Rng rng(derive_seed(seed, 0x17e2a));
  DesignResult result;
  std::vector<int> seq(sequence_length, -1);
  std::vector<std::uint8_t> resample_mask(sequence_length, 1);  // cycle 0 generates everything

  for (std::size_t cycle = 0; cycle < hp.max_cycles; ++cycle) {
    double temperature =
        anneal(hp.temperature_kind, hp.t_start, hp.t_end, cycle, hp.max_cycles);
    double r = anneal(hp.resample_kind, hp.r_start, hp.r_end, cycle, hp.max_cycles);
    seq = api.propose(seq, resample_mask, temperature, rng);
    if (seq.size() != sequence_length) fail("propose returned wrong length");

    auto predicted = api.verify(seq);
    std::vector<std::size_t> unsatisfied;
    for (std::size_t i = 0; i < sequence_length; ++i) {
      bool bad = false;
      for (const auto& t : conditioning) {
        if (!t.values[i]) continue;  // uncovered: excluded from the check
        auto it = predicted.find(t.modality);
        if (it == predicted.end() || it->second.size() != sequence_length)
          fail("verify missing modality " + t.modality);
        double got = it->second[i];
        if (t.categorical ? got != *t.values[i]
                          : std::abs(got - *t.values[i]) > hp.acceptance_threshold) {
          bad = true;
          break;
        }
      }
      if (bad) unsatisfied.push_back(i);
    }

    DesignTrace::Cycle tc;
    tc.sequence = seq;
    tc.unsatisfied = unsatisfied;
    tc.temperature = temperature;
    tc.resample_fraction = r;

    if (unsatisfied.empty()) {
      result.trace.cycles.push_back(std::move(tc));
      result.trace.exit_reason = DesignTrace::ExitReason::all_satisfied;
      result.sequence = seq;
      return result;
    }
    if (cycle + 1 == hp.max_cycles) {
      result.trace.cycles.push_back(std::move(tc));
      result.trace.exit_reason = DesignTrace::ExitReason::max_cycles;
      result.sequence = seq;
      return result;
    }

    // Build the next resample set: unsatisfied + an r-fraction of satisfied
    // + (with probability p) runs where the same token repeats >= 2 times.
    std::set<std::size_t> resample(unsatisfied.begin(), unsatisfied.end());
    std::vector<std::size_t> satisfied;
    for (std::size_t i = 0; i < sequence_length; ++i)
      if (!resample.count(i)) satisfied.push_back(i);
    std::size_t extra = static_cast<std::size_t>(
        std::floor(r * static_cast<double>(satisfied.size())));
    rng.shuffle(satisfied);
    for (std::size_t k = 0; k < extra && k < satisfied.size(); ++k)
      resample.insert(satisfied[k]);
    if (rng.bernoulli(hp.repeat_resample_p)) {
      std::size_t i = 0;
      while (i < sequence_length) {
        std::size_t j = i;
        while (j < sequence_length && seq[j] == seq[i]) ++j;
        if (j - i >= 2)
          for (std::size_t k = i; k < j; ++k) resample.insert(k);
        i = j;
      }
    }
    resample_mask.assign(sequence_length, 0);
    for (std::size_t i : resample) resample_mask[i] = 1;
    tc.resampled.assign(resample.begin(), resample.end());
    result.trace.cycles.push_back(std::move(tc));
  }
  result.sequence = seq;
  return result;
}

DesignModelApi model_design_api(Model& model, const ModalityRegistry& registry,
                                const MultimodalSample& conditioning_sample,
                                const std::set<std::string>& conditioning_modalities) {
  DesignModelApi api;
  std::size_t len = conditioning_sample.track("aa_seq").size();

  api.propose = [&model, &registry, conditioning_sample, conditioning_modalities, len](
                    const std::vector<int>& seq, const std::vector<std::uint8_t>& mask,
                    double temperature, Rng& rng) {
    const TokenizerSpec& spec = registry.at("aa_seq").tokenizer;
    MultimodalSample view = conditioning_sample;
    std::vector<int>& aa = view.tracks["aa_seq"];
    aa.assign(len, spec.mask_id);
    for (std::size_t i = 0; i < len; ++i)
      if (!mask[i] && seq[i] >= 0) aa[i] = seq[i];

    // Keep only the conditioning tracks plus the partially fixed sequence.
    std::set<std::string> inputs = conditioning_modalities;
    inputs.insert("aa_seq");
    for (auto it = view.tracks.begin(); it != view.tracks.end();)
      it = inputs.count(it->first) ? std::next(it) : view.tracks.erase(it);

    PackedTargets targets;
    PackedSegment seg;
    seg.modality = "aa_seq";
    seg.start = 0;
    seg.target_ids.assign(len, spec.pad_id);  // queries only; loss unused
    targets.segments.push_back(seg);

    AssemblyConfig ac{model.config().encoder_budget, model.config().register_count};
    EncoderLayout layout = assemble_encoder_layout(view, inputs, registry, ac);
    ForwardResult fr = model.forward(layout, targets);
    const Tensor& logits = fr.segment_logits.at(0);
    std::vector<int> out = seq;
    for (std::size_t i = 0; i < len; ++i)
      if (mask[i] || out[i] < 0)
        out[i] = static_cast<int>(
            sample_logits(logits.row(i), spec.n_value_tokens(), temperature, rng));
    return out;
  };

  api.verify = [&model, &registry, conditioning_modalities, len](const std::vector<int>& seq) {
    std::map<std::string, std::vector<double>> out;
    MultimodalSample probe;
    probe.id = "design-verify";
    probe.entity = EntityKind::protein;
    probe.cluster_id = "design";
    probe.tracks["aa_seq"] = seq;
    Rng rng(7);
    for (const auto& m : conditioning_modalities) {
      const TokenizerSpec& spec = registry.at(m).tokenizer;
      PackedTargets targets;
      PackedSegment seg;
      seg.modality = m;
      seg.start = 0;
      seg.target_ids.assign(len, spec.pad_id);  // queries only
      targets.segments.push_back(seg);
      AssemblyConfig ac{model.config().encoder_budget, model.config().register_count};
      MultimodalSample view = probe;
      EncoderLayout layout = assemble_encoder_layout(view, {"aa_seq"}, registry, ac);
      ForwardResult fr = model.forward(layout, targets);
      const Tensor& logits = fr.segment_logits.at(0);
      std::vector<double> values(len);
      for (std::size_t i = 0; i < len; ++i) {
        std::size_t id = sample_logits(logits.row(i), spec.n_value_tokens(), 1e-8, rng);
        values[i] = spec.kind == TokenizerKind::continuous ? spec.bin_centers[id]
                                                           : static_cast<double>(id);
      }
      out[m] = std::move(values);
    }
    return out;
  };
  return api;
}

namespace {

double channel_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  // Zero-variance channels contribute no signal.
  double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double masif_similarity(const std::vector<ResidueSurfaceFeatures>& predicted,
                        const std::vector<ResidueSurfaceFeatures>& native) {
  if (predicted.size() != native.size()) fail("masif_similarity: residue count mismatch");
  std::vector<std::size_t> joint;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i].n_vertices >= 1 && native[i].n_vertices >= 1) joint.push_back(i);
  if (joint.size() < 5) return 0.5;  // neutral default

  auto channel = [&](auto member) {
    std::vector<double> p, n;
    for (std::size_t i : joint) {
      p.push_back((predicted[i].*member).value_or(0.0));
      n.push_back((native[i].*member).value_or(0.0));
    }
    return channel_correlation(p, n);
  };
  double mean = (channel(&ResidueSurfaceFeatures::shape_index) +
                 channel(&ResidueSurfaceFeatures::charge) +
                 channel(&ResidueSurfaceFeatures::hbond) +
                 channel(&ResidueSurfaceFeatures::hydrophobicity)) /
                4.0;
  return (mean + 1.0) / 2.0;
}

}  // namespace strand
