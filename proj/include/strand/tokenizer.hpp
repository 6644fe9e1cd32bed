#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace strand {

enum class TokenizerKind { character, continuous, class_label, text };

const char* tokenizer_kind_name(TokenizerKind k);
TokenizerKind tokenizer_kind_from_name(const std::string& name);

// One element of a raw (untokenized) track: a symbol, a real, or missing.
struct TrackValue {
  enum class Kind { symbol, real, missing };
  Kind kind = Kind::missing;
  std::string symbol;
  double real = 0.0;

  static TrackValue sym(std::string s) { return {Kind::symbol, std::move(s), 0.0}; }
  static TrackValue num(double x) { return {Kind::real, {}, x}; }
  static TrackValue none() { return {}; }
  bool is_missing() const { return kind == Kind::missing; }
};

struct RawTrack {
  std::string modality;
  std::vector<TrackValue> values;
};

// Immutable after fitting; encode/decode are pure.
struct TokenizerSpec {
  TokenizerKind kind = TokenizerKind::character;
  std::vector<std::string> vocab;  // value tokens; ids 0..n-1
  int pad_id = 0, mask_id = 0, unknown_id = 0;
  std::vector<double> bin_edges;    // continuous: n-1 non-decreasing edges
  std::vector<double> bin_centers;  // continuous: n per-bin sample means

  std::size_t n_value_tokens() const { return vocab.size(); }
  std::size_t vocab_size() const { return vocab.size() + 3; }
  bool is_special(int id) const { return id == pad_id || id == mask_id || id == unknown_id; }

  void validate() const;
  nlohmann::json to_json() const;
  static TokenizerSpec from_json(const nlohmann::json& j);
};

// Value-token ids follow alphabet order; pad, mask, unknown are appended.
TokenizerSpec build_character_tokenizer(const std::vector<std::string>& alphabet);
TokenizerSpec build_class_tokenizer(const std::vector<std::string>& labels);

// Percentile bins over the finite sample values (nearest-rank quantiles at
// k/n_bins). Bin centers are per-bin means of the fitting samples; empty bins
// (duplicate edges) inherit their edge value. Non-finite fitting values are
// excluded; fewer than n_bins finite values is an error.
TokenizerSpec fit_continuous_tokenizer(const std::vector<double>& samples, int n_bins = 100);

// Deterministic whitespace+punctuation splitter with a frequency-ranked
// vocabulary; a stand-in with the same interface as a learned subword
// tokenizer, flagged "text-stub" in the spec file.
TokenizerSpec fit_text_tokenizer(const std::vector<std::string>& corpus, std::size_t max_vocab);
std::vector<std::string> text_stub_split(const std::string& text);

// Bin index for a finite value: the count of edges strictly below v (values
// equal to an edge fall in the lower bin; extremes clamp to bins 0 and n-1).
std::size_t continuous_bin(const TokenizerSpec& spec, double v);

std::vector<int> encode(const TokenizerSpec& spec, const RawTrack& track);
RawTrack decode(const TokenizerSpec& spec, const std::vector<int>& ids,
                const std::string& modality = "");

void save_tokenizer(const TokenizerSpec& spec, const std::filesystem::path& path);
TokenizerSpec load_tokenizer(const std::filesystem::path& path);

}  // namespace strand
