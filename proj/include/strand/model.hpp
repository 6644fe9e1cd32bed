#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "strand/autodiff.hpp"
#include "strand/pathways.hpp"
#include "strand/tensor.hpp"
#include "strand/track_assembly.hpp"

namespace strand {

struct ModalityVocab {
  std::string name;
  std::size_t vocab_size = 0;  // value tokens + specials
  int pad_id = 0, mask_id = 0, unknown_id = 0;
  bool is_text = false;  // text modalities share one embedding table
};

struct VocabMap {
  std::vector<ModalityVocab> mods;

  bool contains(const std::string& name) const;
  const ModalityVocab& at(const std::string& name) const;
  // "embed.<name>", or "embed.__text__" for the shared text space.
  std::string embed_table(const std::string& name) const;

  static VocabMap from_registry(const ModalityRegistry& registry);
  nlohmann::json to_json() const;
  static VocabMap from_json(const nlohmann::json& j);
};

struct ModelConfig {
  std::size_t encoder_depth = 2;
  std::size_t decoder_depth = 2;
  std::size_t width = 64;
  std::size_t n_heads = 4;
  std::size_t encoder_budget = 512;
  std::size_t decoder_budget = 128;
  std::size_t register_count = 5;
  double rope_fraction = 0.75;

  double init_std = 0.02;
  double ln_eps = 1e-5;
  double rope_base = 10000.0;

  std::size_t head_dim() const { return width / n_heads; }
  // round(rope_fraction * head_dim); must come out even.
  std::size_t rot_dims() const;
  void validate() const;

  static ModelConfig desk();
  static ModelConfig paper();
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct Parameters {
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };
  std::vector<Entry> entries;
  std::map<std::string, std::size_t> index;

  void add(const std::string& name, Tensor value);
  bool has(const std::string& name) const { return index.count(name) != 0; }
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad_of(const std::string& name);
  void zero_grads();
  void scale_grads(double c);
  std::size_t total_size() const;
};

// Shapes of every parameter tensor for a config; init and checkpoint I/O and
// parameter counting all derive from this single table.
std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_shapes(
    const ModelConfig& cfg, const VocabMap& vocabs);
std::size_t parameter_count(const ModelConfig& cfg, const VocabMap& vocabs);

struct ForwardOptions {
  bool accumulate_grads = false;
  // Diagnostic: skip decoder self-attention so packed segments interact only
  // through the latent.
  bool ablate_decoder_self_attention = false;
};

struct ForwardResult {
  double loss = 0.0;              // mean CE over counted (non-pad) target tokens
  std::size_t target_tokens = 0;  // 0 signals an all-pad skip
  std::vector<Tensor> segment_logits;
};

class Model {
 public:
  Model(ModelConfig cfg, VocabMap vocabs, std::uint64_t seed);
  Model(ModelConfig cfg, VocabMap vocabs, Parameters params);

  ForwardResult forward(const EncoderLayout& layout, const PackedTargets& targets,
                        const ForwardOptions& options = {});

  const ModelConfig& config() const { return cfg_; }
  const VocabMap& vocabs() const { return vocabs_; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }
  const std::vector<HeadKind>& head_kinds() const { return head_kinds_; }

 private:
  ModelConfig cfg_;
  VocabMap vocabs_;
  Parameters params_;
  std::vector<HeadKind> head_kinds_;
};

// --- checkpointing -----------------------------------------------------------

struct Checkpoint {
  ModelConfig config;
  VocabMap vocabs;
  Parameters params;
  bool has_optimizer = false;
  std::vector<Tensor> opt_m, opt_v;  // aligned with params.entries
  std::int64_t opt_step = 0;
  std::int64_t train_step = 0;
  std::string rng_state;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Explicit error when the stored config echo differs from the requested one.
void require_config_match(const Checkpoint& ckpt, const ModelConfig& expected);

// --- gradient verification ---------------------------------------------------

struct GradCheckOptions {
  double fd_step = 1e-5;
  std::size_t exhaustive_limit = 48;   // probe every coordinate up to this size
  std::size_t probes_per_tensor = 6;   // seeded coordinates above it
  bool linear_only = false;            // ablation: loss linear in the parameters
};

// Max relative error between analytic gradients and central finite
// differences over a seeded desk-scale scenario.
double gradient_check(const ModelConfig& cfg, std::uint64_t seed,
                      const GradCheckOptions& options = {});

}  // namespace strand
