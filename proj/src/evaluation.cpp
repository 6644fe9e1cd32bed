#include "strand/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "strand/track_assembly.hpp"
#include "strand/training.hpp"

namespace strand {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("evaluation: " + msg); }

}  // namespace

double aupr(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) fail("aupr: size mismatch");
  std::size_t positives = 0;
  for (auto l : labels) positives += l ? 1 : 0;
  if (positives == 0) fail("aupr: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    // Tied scores form one threshold group.
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) {
        ++tp;
      } else {
        ++fp;
      }
      ++j;
    }
    double recall = static_cast<double>(tp) / static_cast<double>(positives);
    double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail("pearson: size mismatch");
  if (x.size() < 2) fail("pearson: need at least 2 points");
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

double restricted_softmax(double logit_a, double logit_b) {
  if (logit_a >= logit_b) return 1.0 / (1.0 + std::exp(logit_b - logit_a));
  double e = std::exp(logit_a - logit_b);
  return e / (1.0 + e);
}

PairSet parse_dot_bracket(const std::string& s) {
  PairSet out;
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '(') {
      stack.push_back(i);
    } else if (c == ')') {
      if (stack.empty())
        fail("parse_dot_bracket: unmatched ')' at index " + std::to_string(i));
      out.pairs.insert({stack.back(), i});
      stack.pop_back();
    } else if (c != '.') {
      fail("parse_dot_bracket: invalid character '" + std::string(1, c) + "' at index " +
           std::to_string(i));
    }
  }
  if (!stack.empty())
    fail("parse_dot_bracket: unmatched '(' at index " + std::to_string(stack.back()));
  return out;
}

std::string to_dot_bracket(const PairSet& pairs, std::size_t length) {
  std::string s(length, '.');
  for (const auto& [i, j] : pairs.pairs) {
    if (i >= j || j >= length) fail("to_dot_bracket: pair out of range");
    if (s[i] != '.' || s[j] != '.') fail("to_dot_bracket: index in more than one pair");
    s[i] = '(';
    s[j] = ')';
  }
  return s;
}

PairEvalResult pair_metrics(const PairSet& pred, const PairSet& ref) {
  PairEvalResult r;
  for (const auto& p : pred.pairs) {
    if (ref.pairs.count(p)) {
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  for (const auto& p : ref.pairs)
    if (!pred.pairs.count(p)) ++r.fn;
  r.ppv = (r.tp + r.fp) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.sensitivity = (r.tp + r.fn) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = (r.ppv + r.sensitivity) > 0.0 ? 2.0 * r.ppv * r.sensitivity / (r.ppv + r.sensitivity)
                                       : 0.0;
  return r;
}

double delta_f1(double f1_pred, double f1_seq) {
  if (f1_pred < 0.0 || f1_pred > 1.0 || f1_seq < 0.0 || f1_seq > 1.0)
    fail("delta_f1: inputs outside [0,1]");
  return f1_pred - f1_seq;
}

double deigan_pseudo_energy(double reactivity, const DeiganParams& params) {
  if (reactivity < 0.0) fail("deigan_pseudo_energy: negative reactivity");
  return params.slope * std::log(reactivity + 1.0) + params.intercept;
}

std::vector<double> normalize_reactivity(const std::vector<double>& values) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) fail("normalize_reactivity: no finite values");
  std::vector<double> out = values;
  double range = hi - lo;
  for (double& v : out) {
    if (!std::isfinite(v)) continue;  // missing stays missing
    v = range > 0.0 ? (v - lo) / range : 0.0;
  }
  return out;
}

namespace {

double normal_sf(double z) {  // P(Z > z)
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank_one_sided(
    const std::vector<std::pair<double, double>>& pairs) {
  std::vector<double> diffs;
  for (const auto& [a, b] : pairs) {
    double d = a - b;
    if (d != 0.0) diffs.push_back(d);  // zero differences discarded
  }
  if (diffs.empty()) fail("wilcoxon: all differences are zero");

  WilcoxonResult res;
  res.n = diffs.size();
  std::size_t n = diffs.size();

  // Average ranks of |d| (doubled so tied averages stay integral).
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(diffs[a]) < std::abs(diffs[b]);
  });
  std::vector<std::int64_t> rank2(n);
  std::vector<std::size_t> tie_sizes;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
    // Positions i..j-1 share the average of ranks i+1..j.
    std::int64_t doubled = static_cast<std::int64_t>(i + 1 + j);  // 2 * average rank
    for (std::size_t k = i; k < j; ++k) rank2[order[k]] = doubled;
    tie_sizes.push_back(j - i);
    i = j;
  }

  std::int64_t w2 = 0;  // 2 * W+
  for (std::size_t k = 0; k < n; ++k)
    if (diffs[k] > 0.0) w2 += rank2[k];
  res.w_plus = static_cast<double>(w2) / 2.0;

  if (n <= 25) {
    res.exact = true;
    // Null distribution of 2*W+ by subset-sum counting; identical to
    // enumerating all 2^n sign assignments.
    std::int64_t total2 = 0;
    for (std::size_t k = 0; k < n; ++k) total2 += rank2[k];
    std::vector<std::uint64_t> count(static_cast<std::size_t>(total2) + 1, 0);
    count[0] = 1;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t r = static_cast<std::size_t>(rank2[k]);
      for (std::size_t s = count.size() - 1; s + 1 > r; --s)
        count[s] += count[s - r];
    }
    std::uint64_t le = 0, ge = 0;
    for (std::size_t s = 0; s < count.size(); ++s) {
      if (static_cast<std::int64_t>(s) <= w2) le += count[s];
      if (static_cast<std::int64_t>(s) >= w2) ge += count[s];
    }
    double denom = std::pow(2.0, static_cast<double>(n));
    double p_le = static_cast<double>(le) / denom;
    double p_ge = static_cast<double>(ge) / denom;
    res.p_two_sided = std::min(1.0, 2.0 * std::min(p_le, p_ge));
  } else {
    double nn = static_cast<double>(n);
    double mean = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (std::size_t t : tie_sizes) {
      double tt = static_cast<double>(t);
      var -= (tt * tt * tt - tt) / 48.0;
    }
    if (var <= 0.0) fail("wilcoxon: degenerate variance (all values tied)");
    double z = (res.w_plus - mean) / std::sqrt(var);
    res.p_two_sided = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
  }
  // One-sided by the halving rule.
  res.p_one_sided = res.p_two_sided / 2.0;
  return res;
}

VariantScore phylop_vep(const VariantScoreInput& input) {
  if (input.wt_profile.size() != input.mut_profile.size())
    fail("phylop_vep: profile length mismatch");
  if (input.wt_profile.empty()) fail("phylop_vep: empty profiles");
  if (input.variant_position >= input.wt_profile.size())
    fail("phylop_vep: variant position outside profiles");
  if (input.window == 0) fail("phylop_vep: zero-length window");
  std::size_t half = input.window / 2;
  std::size_t lo = input.variant_position >= half ? input.variant_position - half : 0;
  std::size_t hi = std::min(input.wt_profile.size(), lo + input.window);
  if (hi - lo < input.window && lo == 0)
    hi = std::min(input.wt_profile.size(), input.window);  // clip at the left boundary
  VariantScore out;
  double sum = 0.0;
  for (std::size_t i = lo; i < hi; ++i) {
    sum += std::abs(input.mut_profile[i] - input.wt_profile[i]);
    out.window_used += 1;
  }
  if (out.window_used == 0) fail("phylop_vep: empty window after clipping");
  out.score = sum / static_cast<double>(out.window_used);
  return out;
}

std::optional<double> UpliftGrid::at(std::size_t top1_bin, std::size_t top10_bin) const {
  return mean_uplift[top1_bin * bins + top10_bin];
}

UpliftGrid uplift_attribution(const std::vector<UpliftRecord>& records, std::size_t grid_bins) {
  if (records.empty()) fail("uplift_attribution: no records");
  if (grid_bins == 0) fail("uplift_attribution: zero bins");
  UpliftGrid grid;
  grid.bins = grid_bins;
  grid.mean_uplift.assign(grid_bins * grid_bins, std::nullopt);
  grid.counts.assign(grid_bins * grid_bins, 0);
  std::vector<double> sums(grid_bins * grid_bins, 0.0);
  for (const auto& r : records) {
    if (r.top10 < r.top1) fail("uplift_attribution: top10 accuracy below top1 (impossible)");
    auto bin = [&](double v) {
      auto b = static_cast<std::size_t>(v * static_cast<double>(grid_bins));
      return std::min(b, grid_bins - 1);
    };
    std::size_t cell = bin(r.top1) * grid_bins + bin(r.top10);
    sums[cell] += r.uplift;
    grid.counts[cell] += 1;
  }
  for (std::size_t c = 0; c < sums.size(); ++c)
    if (grid.counts[c] > 0) grid.mean_uplift[c] = sums[c] / static_cast<double>(grid.counts[c]);
  return grid;
}

std::size_t sample_logits(const double* logits, std::size_t n, double temperature, Rng& rng) {
  if (n == 0) fail("sample_logits: empty");
  if (temperature < 1e-6) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (logits[i] > logits[best]) best = i;
    return best;
  }
  double m = logits[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, logits[i]);
  std::vector<double> p(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp((logits[i] - m) / temperature);
    z += p[i];
  }
  double u = rng.uniform() * z;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += p[i];
    if (u <= acc) return i;
  }
  return n - 1;
}

// --- model-driven evaluation -----------------------------------------------------

namespace {

const std::string& anchor_of(const MultimodalSample& sample) {
  static const std::string nt = "nt_seq", aa = "aa_seq";
  if (sample.entity == EntityKind::protein) return aa;
  return nt;
}

// Forward with a masked anchor window, returning logits for that window.
Tensor completion_window_logits(Model& model, const CorpusBundle& corpus,
                                const MultimodalSample& sample, const std::string& target_mod,
                                std::size_t start, std::size_t width,
                                const std::set<std::string>& inputs) {
  PackedTargets targets;
  PackedSegment seg;
  seg.modality = target_mod;
  seg.start = start;
  const auto& track = sample.track(target_mod);
  seg.target_ids.assign(track.begin() + static_cast<std::ptrdiff_t>(start),
                        track.begin() + static_cast<std::ptrdiff_t>(start + width));
  targets.segments.push_back(std::move(seg));

  MultimodalSample view =
      prepare_encoder_inputs(sample, inputs, targets, corpus.registry, {});
  AssemblyConfig ac{model.config().encoder_budget, model.config().register_count};
  EncoderLayout layout = assemble_encoder_layout(view, inputs, corpus.registry, ac);
  ForwardResult fr = model.forward(layout, targets);
  return fr.segment_logits.at(0);
}

}  // namespace

CompletionEvalResult sequence_completion_eval(Model& model, const CorpusBundle& corpus,
                                              Split split, std::size_t mask_width,
                                              const std::set<std::string>& conditioning) {
  if (mask_width == 0) fail("sequence_completion_eval: zero mask width");
  CompletionEvalResult res;
  std::size_t correct = 0, exon_total = 0, exon_correct = 0, intron_total = 0, intron_correct = 0;
  Rng rng(1);
  for (const MultimodalSample* sample : corpus.split_samples(split)) {
    const std::string& anchor = anchor_of(*sample);
    if (!sample->has(anchor)) continue;
    const auto& track = sample->track(anchor);
    if (track.size() <= mask_width) {
      res.skipped += 1;
      continue;
    }
    std::size_t start = (track.size() - mask_width) / 2;  // centered window
    std::set<std::string> inputs = {anchor};
    for (const auto& m : conditioning)
      if (sample->has(m)) inputs.insert(m);
    Tensor logits =
        completion_window_logits(model, corpus, *sample, anchor, start, mask_width, inputs);
    for (std::size_t i = 0; i < mask_width; ++i) {
      std::size_t pred = sample_logits(logits.row(i), logits.cols(), 1e-8, rng);
      bool ok = static_cast<int>(pred) == track[start + i];
      correct += ok ? 1 : 0;
      res.positions += 1;
      if (!sample->region_labels.empty() && anchor == "nt_seq") {
        if (sample->region_labels[start + i]) {
          exon_total += 1;
          exon_correct += ok ? 1 : 0;
        } else {
          intron_total += 1;
          intron_correct += ok ? 1 : 0;
        }
      }
    }
  }
  if (res.positions > 0)
    res.accuracy = static_cast<double>(correct) / static_cast<double>(res.positions);
  if (exon_total > 0)
    res.exon_accuracy = static_cast<double>(exon_correct) / static_cast<double>(exon_total);
  if (intron_total > 0)
    res.intron_accuracy = static_cast<double>(intron_correct) / static_cast<double>(intron_total);
  return res;
}

std::vector<UpliftRecord> completion_uplift_records(Model& model, const CorpusBundle& corpus,
                                                    Split split, std::size_t mask_width,
                                                    const std::string& aux_modality) {
  std::vector<UpliftRecord> records;
  Rng rng(2);
  for (const MultimodalSample* sample : corpus.split_samples(split)) {
    const std::string& anchor = anchor_of(*sample);
    if (!sample->has(anchor) || !sample->has(aux_modality)) continue;
    const auto& track = sample->track(anchor);
    if (track.size() <= mask_width) continue;
    std::size_t start = (track.size() - mask_width) / 2;

    auto accuracy_with = [&](const std::set<std::string>& inputs) {
      Tensor logits =
          completion_window_logits(model, corpus, *sample, anchor, start, mask_width, inputs);
      std::size_t ok = 0;
      for (std::size_t i = 0; i < mask_width; ++i)
        if (static_cast<int>(sample_logits(logits.row(i), logits.cols(), 1e-8, rng)) ==
            track[start + i])
          ++ok;
      return static_cast<double>(ok) / static_cast<double>(mask_width);
    };
    double uncond = accuracy_with({anchor});
    double cond = accuracy_with({anchor, aux_modality});

    // Matched modality-prediction task over the same interval.
    const auto& aux = sample->track(aux_modality);
    Tensor logits = completion_window_logits(model, corpus, *sample, aux_modality, start,
                                             std::min(mask_width, aux.size() - start),
                                             {anchor});
    std::size_t top1 = 0, top10 = 0, total = logits.rows();
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      std::vector<std::size_t> order(logits.cols());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return logits(i, a) > logits(i, b);
      });
      int truth = aux[start + i];
      if (static_cast<int>(order[0]) == truth) ++top1;
      std::size_t k = std::min<std::size_t>(10, order.size());
      for (std::size_t r = 0; r < k; ++r)
        if (static_cast<int>(order[r]) == truth) {
          ++top10;
          break;
        }
    }
    UpliftRecord rec;
    rec.top1 = total ? static_cast<double>(top1) / static_cast<double>(total) : 0.0;
    rec.top10 = total ? static_cast<double>(top10) / static_cast<double>(total) : 0.0;
    rec.uplift = cond - uncond;
    records.push_back(rec);
  }
  return records;
}

std::vector<double> predict_profile(Model& model, const ModalityRegistry& registry,
                                    const MultimodalSample& sample, const std::string& modality,
                                    const std::set<std::string>& conditioning) {
  const TokenizerSpec& spec = registry.at(modality).tokenizer;
  if (spec.kind != TokenizerKind::continuous) fail("predict_profile: modality is not continuous");
  const auto& track = sample.track(modality);
  std::vector<double> profile(track.size(), std::nan(""));

  std::set<std::string> inputs = conditioning;
  std::size_t budget = model.config().decoder_budget;
  Rng rng(3);
  for (std::size_t start = 0; start < track.size(); start += budget) {
    std::size_t width = std::min(budget, track.size() - start);
    PackedTargets targets;
    PackedSegment seg;
    seg.modality = modality;
    seg.start = start;
    seg.target_ids.assign(track.begin() + static_cast<std::ptrdiff_t>(start),
                          track.begin() + static_cast<std::ptrdiff_t>(start + width));
    targets.segments.push_back(std::move(seg));
    MultimodalSample view = prepare_encoder_inputs(sample, inputs, targets, registry, {});
    AssemblyConfig ac{model.config().encoder_budget, model.config().register_count};
    EncoderLayout layout = assemble_encoder_layout(view, inputs, registry, ac);
    ForwardResult fr = model.forward(layout, targets);
    const Tensor& logits = fr.segment_logits.at(0);
    for (std::size_t i = 0; i < width; ++i) {
      // A profile is a real value per position: sample over bin tokens only.
      std::size_t id = sample_logits(logits.row(i), spec.n_value_tokens(), 1e-8, rng);
      profile[start + i] = spec.bin_centers[id];
    }
  }
  return profile;
}

SpliceLogitFn model_splice_logits(Model& model, const ModalityRegistry& registry) {
  return [&model, &registry](const MultimodalSample& sample, bool conditioned) {
    const auto& track = sample.track("splice");
    const TokenizerSpec& spec = registry.at("splice").tokenizer;
    Tensor out({track.size(), spec.vocab_size()});
    std::size_t budget = model.config().decoder_budget;
    for (std::size_t start = 0; start < track.size(); start += budget) {
      std::size_t width = std::min(budget, track.size() - start);
      PackedTargets targets;
      PackedSegment seg;
      seg.modality = "splice";
      seg.start = start;
      seg.target_ids.assign(track.begin() + static_cast<std::ptrdiff_t>(start),
                            track.begin() + static_cast<std::ptrdiff_t>(start + width));
      targets.segments.push_back(std::move(seg));
      std::set<std::string> inputs = {"nt_seq"};
      std::map<std::string, std::string> views;
      if (conditioned) {
        inputs.insert("splice");
        views["splice"] = "boundaries";
      }
      MultimodalSample view = prepare_encoder_inputs(sample, inputs, targets, registry, views);
      AssemblyConfig ac{model.config().encoder_budget, model.config().register_count};
      EncoderLayout layout = assemble_encoder_layout(view, inputs, registry, ac);
      ForwardResult fr = model.forward(layout, targets);
      const Tensor& logits = fr.segment_logits.at(0);
      for (std::size_t i = 0; i < width; ++i)
        std::copy(logits.row(i), logits.row(i) + logits.cols(), out.row(start + i));
    }
    return out;
  };
}

SpliceEvalResult splice_site_eval(const SpliceLogitFn& logits,
                                  const std::vector<const MultimodalSample*>& records,
                                  const ModalityRegistry& registry, bool conditioned) {
  const TokenizerSpec& spec = registry.at("splice").tokenizer;
  auto class_id = [&](const std::string& sym) {
    for (std::size_t i = 0; i < spec.vocab.size(); ++i)
      if (spec.vocab[i] == sym) return static_cast<int>(i);
    fail("splice tokenizer lacks class " + sym);
  };
  int none_id = class_id(".");
  int donor_id = class_id("D");
  int acceptor_id = class_id("A");

  SpliceEvalResult res;
  std::vector<double> donor_scores, acceptor_scores, pooled_scores;
  std::vector<std::uint8_t> donor_labels, acceptor_labels, pooled_labels;
  struct StratumData {
    std::vector<double> ds, as;
    std::vector<std::uint8_t> dl, al;
  };
  std::map<std::string, StratumData> strata;

  const ModalityDescriptor* annot =
      registry.contains("annotation") ? &registry.at("annotation") : nullptr;
  int coding_value = -1;
  if (annot)
    for (std::size_t i = 0; i < annot->tokenizer.vocab.size(); ++i)
      if (annot->tokenizer.vocab[i] == "protein_coding") coding_value = static_cast<int>(i);

  for (const MultimodalSample* sample : records) {
    if (!sample->has("splice") || !sample->has("nt_seq")) {
      res.skipped += 1;
      continue;
    }
    const auto& truth = sample->track("splice");
    bool any_positive = false;
    for (int t : truth)
      if (t == donor_id || t == acceptor_id) any_positive = true;
    if (!any_positive) {
      res.skipped += 1;  // no positive sites in this record
      continue;
    }
    Tensor l = logits(*sample, conditioned);
    if (l.rows() != truth.size()) fail("splice_site_eval: logit track length mismatch");

    std::string stratum = "noncoding";
    if (annot && sample->has("annotation") && coding_value >= 0 &&
        !sample->track("annotation").empty() &&
        sample->track("annotation")[0] == coding_value)
      stratum = "coding";
    StratumData& sd = strata[stratum];

    for (std::size_t i = 0; i < truth.size(); ++i) {
      double pd = restricted_softmax(l(i, static_cast<std::size_t>(donor_id)),
                                     l(i, static_cast<std::size_t>(none_id)));
      double pa = restricted_softmax(l(i, static_cast<std::size_t>(acceptor_id)),
                                     l(i, static_cast<std::size_t>(none_id)));
      std::uint8_t is_d = truth[i] == donor_id ? 1 : 0;
      std::uint8_t is_a = truth[i] == acceptor_id ? 1 : 0;
      donor_scores.push_back(pd);
      donor_labels.push_back(is_d);
      acceptor_scores.push_back(pa);
      acceptor_labels.push_back(is_a);
      pooled_scores.push_back(pd);
      pooled_labels.push_back(is_d);
      pooled_scores.push_back(pa);
      pooled_labels.push_back(is_a);
      sd.ds.push_back(pd);
      sd.dl.push_back(is_d);
      sd.as.push_back(pa);
      sd.al.push_back(is_a);
    }
    res.records += 1;
  }
  if (res.records == 0) fail("splice_site_eval: no usable records");
  res.aupr_donor = aupr(donor_scores, donor_labels);
  res.aupr_acceptor = aupr(acceptor_scores, acceptor_labels);
  res.macro_aupr = 0.5 * (res.aupr_donor + res.aupr_acceptor);
  res.micro_aupr = aupr(pooled_scores, pooled_labels);
  for (auto& [name, sd] : strata) {
    bool has_d = std::find(sd.dl.begin(), sd.dl.end(), 1) != sd.dl.end();
    bool has_a = std::find(sd.al.begin(), sd.al.end(), 1) != sd.al.end();
    if (!has_d || !has_a) continue;
    res.strata_macro[name] = 0.5 * (aupr(sd.ds, sd.dl) + aupr(sd.as, sd.al));
  }
  return res;
}

}  // namespace strand
