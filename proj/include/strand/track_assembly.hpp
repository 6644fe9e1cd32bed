#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "strand/sample_store.hpp"

namespace strand {

enum class HeadKind { bidirectional, causal, anticausal };

// 50% bidirectional, 25% causal, 25% anti-causal; remainders go bidirectional.
// Fixed per head across all layers.
std::vector<HeadKind> partition_attention_heads(std::size_t n_heads);

// Row-major [n x n] self-attention mask (1 = may attend): causal allows
// j <= i, anti-causal is its transpose (j >= i). Keys whose key_keep entry is
// 0 (dropped tokens) are masked for every query.
std::vector<std::uint8_t> build_attention_mask(HeadKind kind, std::size_t n,
                                               const std::vector<std::uint8_t>* key_keep);

// Group-local rotary indices: every group restarts at zero.
std::vector<std::vector<std::int64_t>> assign_rope_positions(
    const std::vector<std::size_t>& group_lengths);

struct TrackGroupLayout {
  TrackGroup group = TrackGroup::nucleic;
  std::string label;  // "nucleic" / "protein" / semantic modality name
  std::vector<std::string> modality_order;
  std::map<std::string, std::vector<int>> modality_grids;  // equal lengths
  std::vector<std::int64_t> positions;                     // group-local, survive dropout
  std::vector<std::uint8_t> keep;                          // post-dropout retention

  std::size_t length() const { return positions.size(); }
};

struct EncoderLayout {
  std::vector<TrackGroupLayout> groups;
  std::size_t register_count = 0;

  std::size_t total_length() const;  // includes register slots
  // Flattened views over groups then registers; registers use their own
  // positions 0..R-1 and are never dropped.
  std::vector<std::int64_t> flat_positions() const;
  std::vector<std::uint8_t> flat_keep() const;
};

struct AssemblyConfig {
  std::size_t encoder_budget = 10000;
  std::size_t register_count = 5;
};

// Groups aligned modalities (nucleic, protein) into stacked grids for
// element-wise summation; each semantic modality becomes its own concatenated
// group; register slots are appended last. Rejects over-budget layouts (the
// scheduler, not assembly, crops or drops).
EncoderLayout assemble_encoder_layout(const MultimodalSample& sample,
                                      const std::set<std::string>& input_modalities,
                                      const ModalityRegistry& registry,
                                      const AssemblyConfig& config);

// Independent per-position dropout across all grids of a group; register
// slots are never dropped and retained tokens keep their original positions.
void apply_token_dropout(EncoderLayout& layout, double rate, std::uint64_t seed);

std::string dump_layout(const EncoderLayout& layout);

}  // namespace strand
