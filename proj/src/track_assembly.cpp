#include "strand/track_assembly.hpp"

#include <sstream>
#include <stdexcept>

#include "strand/rng.hpp"

namespace strand {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error("track_assembly: " + msg);
}

}  // namespace

std::vector<HeadKind> partition_attention_heads(std::size_t n_heads) {
  std::size_t causal = n_heads / 4;
  std::size_t anticausal = n_heads / 4;
  std::size_t bidirectional = n_heads - causal - anticausal;
  std::vector<HeadKind> kinds;
  kinds.reserve(n_heads);
  kinds.insert(kinds.end(), bidirectional, HeadKind::bidirectional);
  kinds.insert(kinds.end(), causal, HeadKind::causal);
  kinds.insert(kinds.end(), anticausal, HeadKind::anticausal);
  return kinds;
}

std::vector<std::uint8_t> build_attention_mask(HeadKind kind, std::size_t n,
                                               const std::vector<std::uint8_t>* key_keep) {
  std::vector<std::uint8_t> m(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      bool ok = kind == HeadKind::bidirectional ? true
                : kind == HeadKind::causal      ? j <= i
                                                : j >= i;
      if (ok && key_keep && !(*key_keep)[j]) ok = false;
      m[i * n + j] = ok ? 1 : 0;
    }
  return m;
}

std::vector<std::vector<std::int64_t>> assign_rope_positions(
    const std::vector<std::size_t>& group_lengths) {
  std::vector<std::vector<std::int64_t>> out;
  out.reserve(group_lengths.size());
  for (std::size_t len : group_lengths) {
    std::vector<std::int64_t> pos(len);
    for (std::size_t i = 0; i < len; ++i) pos[i] = static_cast<std::int64_t>(i);
    out.push_back(std::move(pos));
  }
  return out;
}

std::size_t EncoderLayout::total_length() const {
  std::size_t n = register_count;
  for (const auto& g : groups) n += g.length();
  return n;
}

std::vector<std::int64_t> EncoderLayout::flat_positions() const {
  std::vector<std::int64_t> out;
  out.reserve(total_length());
  for (const auto& g : groups) out.insert(out.end(), g.positions.begin(), g.positions.end());
  for (std::size_t r = 0; r < register_count; ++r) out.push_back(static_cast<std::int64_t>(r));
  return out;
}

std::vector<std::uint8_t> EncoderLayout::flat_keep() const {
  std::vector<std::uint8_t> out;
  out.reserve(total_length());
  for (const auto& g : groups) out.insert(out.end(), g.keep.begin(), g.keep.end());
  out.insert(out.end(), register_count, 1);
  return out;
}

EncoderLayout assemble_encoder_layout(const MultimodalSample& sample,
                                      const std::set<std::string>& input_modalities,
                                      const ModalityRegistry& registry,
                                      const AssemblyConfig& config) {
  for (const auto& m : input_modalities)
    if (!sample.has(m)) fail("input modality not present in sample " + sample.id + ": " + m);

  EncoderLayout layout;
  layout.register_count = config.register_count;

  // Aligned groups first (nucleic then protein), grids in registry order.
  for (TrackGroup group : {TrackGroup::nucleic, TrackGroup::protein}) {
    TrackGroupLayout g;
    g.group = group;
    g.label = track_group_name(group);
    for (const auto& d : registry.ordered()) {
      if (d.group != group || !d.aligned) continue;
      if (!input_modalities.count(d.name)) continue;
      const auto& ids = sample.track(d.name);
      if (!g.modality_order.empty() && ids.size() != g.positions.size())
        fail("grid length mismatch in group " + g.label + " for " + d.name);
      if (g.modality_order.empty()) {
        g.positions.resize(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i)
          g.positions[i] = static_cast<std::int64_t>(i);
        g.keep.assign(ids.size(), 1);
      }
      g.modality_order.push_back(d.name);
      g.modality_grids[d.name] = ids;
    }
    if (!g.modality_order.empty()) layout.groups.push_back(std::move(g));
  }

  // Each semantic modality occupies its own concatenated group.
  for (const auto& d : registry.ordered()) {
    if (d.aligned || !input_modalities.count(d.name)) continue;
    const auto& ids = sample.track(d.name);
    TrackGroupLayout g;
    g.group = d.group;
    g.label = d.name;
    g.modality_order.push_back(d.name);
    g.modality_grids[d.name] = ids;
    g.positions.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) g.positions[i] = static_cast<std::int64_t>(i);
    g.keep.assign(ids.size(), 1);
    layout.groups.push_back(std::move(g));
  }

  if (layout.total_length() > config.encoder_budget)
    fail("layout exceeds encoder budget: " + std::to_string(layout.total_length()) + " > " +
         std::to_string(config.encoder_budget));
  return layout;
}

void apply_token_dropout(EncoderLayout& layout, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) fail("dropout rate outside [0,1]");
  Rng rng(seed);
  for (auto& g : layout.groups)
    for (std::size_t i = 0; i < g.keep.size(); ++i)
      if (rng.uniform() < rate) g.keep[i] = 0;  // positions are left untouched
}

std::string dump_layout(const EncoderLayout& layout) {
  std::ostringstream out;
  out << "total_length=" << layout.total_length() << " registers=" << layout.register_count
      << "\n";
  for (const auto& g : layout.groups) {
    out << "group " << g.label << " (" << track_group_name(g.group) << ") len=" << g.length()
        << " grids=[";
    for (std::size_t i = 0; i < g.modality_order.size(); ++i)
      out << (i ? "," : "") << g.modality_order[i];
    out << "] dropped=";
    std::size_t dropped = 0;
    for (auto k : g.keep)
      if (!k) ++dropped;
    out << dropped << "\n";
  }
  return out.str();
}

}  // namespace strand
