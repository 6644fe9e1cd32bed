#include "strand/model.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "strand/io_util.hpp"
#include "strand/kernels.hpp"

namespace strand {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("model: " + msg); }

}  // namespace

// --- VocabMap ----------------------------------------------------------------

bool VocabMap::contains(const std::string& name) const {
  for (const auto& m : mods)
    if (m.name == name) return true;
  return false;
}

const ModalityVocab& VocabMap::at(const std::string& name) const {
  for (const auto& m : mods)
    if (m.name == name) return m;
  fail("unknown modality in vocab map: " + name);
}

std::string VocabMap::embed_table(const std::string& name) const {
  return at(name).is_text ? "embed.__text__" : "embed." + name;
}

VocabMap VocabMap::from_registry(const ModalityRegistry& registry) {
  VocabMap vm;
  const ModalityVocab* first_text = nullptr;
  for (const auto& d : registry.ordered()) {
    ModalityVocab v;
    v.name = d.name;
    v.vocab_size = d.tokenizer.vocab_size();
    v.pad_id = d.tokenizer.pad_id;
    v.mask_id = d.tokenizer.mask_id;
    v.unknown_id = d.tokenizer.unknown_id;
    v.is_text = d.tokenizer.kind == TokenizerKind::text;
    vm.mods.push_back(v);
    if (v.is_text) {
      if (!first_text) {
        first_text = &vm.mods.back();
      } else if (first_text->vocab_size != v.vocab_size || first_text->pad_id != v.pad_id) {
        fail("text modalities must share one vocabulary (shared embedding space)");
      }
    }
  }
  return vm;
}

nlohmann::json VocabMap::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : mods)
    arr.push_back({{"name", m.name},
                   {"vocab_size", m.vocab_size},
                   {"pad", m.pad_id},
                   {"mask", m.mask_id},
                   {"unknown", m.unknown_id},
                   {"is_text", m.is_text}});
  return arr;
}

VocabMap VocabMap::from_json(const nlohmann::json& j) {
  VocabMap vm;
  for (const auto& mj : j) {
    ModalityVocab m;
    m.name = mj.at("name").get<std::string>();
    m.vocab_size = mj.at("vocab_size").get<std::size_t>();
    m.pad_id = mj.at("pad").get<int>();
    m.mask_id = mj.at("mask").get<int>();
    m.unknown_id = mj.at("unknown").get<int>();
    m.is_text = mj.at("is_text").get<bool>();
    vm.mods.push_back(std::move(m));
  }
  return vm;
}

// --- ModelConfig --------------------------------------------------------------

std::size_t ModelConfig::rot_dims() const {
  return static_cast<std::size_t>(std::llround(rope_fraction * static_cast<double>(head_dim())));
}

void ModelConfig::validate() const {
  if (width == 0 || n_heads == 0 || encoder_depth == 0 || decoder_depth == 0)
    fail("config: zero dimension");
  if (width % n_heads != 0) fail("config: width must be divisible by n_heads");
  if (!(rope_fraction > 0.0 && rope_fraction <= 1.0)) fail("config: rope_fraction outside (0,1]");
  if (rot_dims() % 2 != 0)
    fail("config: rope_fraction * head_dim rounds to an odd rotated size");
  if (rot_dims() > head_dim()) fail("config: rotated dims exceed head_dim");
  if (decoder_budget == 0 || encoder_budget == 0) fail("config: zero budget");
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.encoder_depth = 2;
  c.decoder_depth = 2;
  c.width = 64;
  c.n_heads = 4;
  c.encoder_budget = 512;
  c.decoder_budget = 128;
  c.register_count = 5;
  c.rope_fraction = 0.75;
  return c;
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.encoder_depth = 20;
  c.decoder_depth = 12;
  c.width = 1536;
  c.n_heads = 24;
  c.encoder_budget = 10000;
  c.decoder_budget = 1000;
  c.register_count = 5;
  c.rope_fraction = 0.75;
  return c;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"encoder_depth", encoder_depth}, {"decoder_depth", decoder_depth},
          {"width", width},                 {"n_heads", n_heads},
          {"encoder_budget", encoder_budget}, {"decoder_budget", decoder_budget},
          {"register_count", register_count}, {"rope_fraction", rope_fraction},
          {"init_std", init_std},           {"ln_eps", ln_eps},
          {"rope_base", rope_base}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder_depth = j.at("encoder_depth").get<std::size_t>();
  c.decoder_depth = j.at("decoder_depth").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.encoder_budget = j.at("encoder_budget").get<std::size_t>();
  c.decoder_budget = j.at("decoder_budget").get<std::size_t>();
  c.register_count = j.at("register_count").get<std::size_t>();
  c.rope_fraction = j.at("rope_fraction").get<double>();
  c.init_std = j.value("init_std", c.init_std);
  c.ln_eps = j.value("ln_eps", c.ln_eps);
  c.rope_base = j.value("rope_base", c.rope_base);
  c.validate();
  return c;
}

// --- Parameters ---------------------------------------------------------------

void Parameters::add(const std::string& name, Tensor value) {
  if (has(name)) fail("duplicate parameter: " + name);
  index[name] = entries.size();
  Entry e;
  e.name = name;
  e.grad = Tensor::zeros(value.shape);
  e.value = std::move(value);
  entries.push_back(std::move(e));
}

Tensor& Parameters::value(const std::string& name) {
  auto it = index.find(name);
  if (it == index.end()) fail("unknown parameter: " + name);
  return entries[it->second].value;
}

const Tensor& Parameters::value(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end()) fail("unknown parameter: " + name);
  return entries[it->second].value;
}

Tensor& Parameters::grad_of(const std::string& name) {
  auto it = index.find(name);
  if (it == index.end()) fail("unknown parameter: " + name);
  return entries[it->second].grad;
}

void Parameters::zero_grads() {
  for (auto& e : entries) e.grad.fill(0.0);
}

void Parameters::scale_grads(double c) {
  for (auto& e : entries) kernels::scale(c, e.grad.v.data(), e.grad.size());
}

std::size_t Parameters::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.value.size();
  return n;
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_shapes(
    const ModelConfig& cfg, const VocabMap& vocabs) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> shapes;
  std::size_t d = cfg.width;
  bool text_added = false;
  for (const auto& m : vocabs.mods) {
    if (m.is_text) {
      if (!text_added) shapes.push_back({"embed.__text__", {m.vocab_size, d}});
      text_added = true;
    } else {
      shapes.push_back({"embed." + m.name, {m.vocab_size, d}});
    }
  }
  if (cfg.register_count > 0) shapes.push_back({"registers", {cfg.register_count, d}});

  auto ln = [&](const std::string& p) {
    shapes.push_back({p + ".g", {d}});
    shapes.push_back({p + ".b", {d}});
  };
  auto attn = [&](const std::string& p) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) shapes.push_back({p + "." + w, {d, d}});
    for (const char* b : {"bq", "bk", "bv", "bo"}) shapes.push_back({p + "." + b, {d}});
  };
  auto mlp = [&](const std::string& p) {
    shapes.push_back({p + ".w1", {d, 4 * d}});
    shapes.push_back({p + ".b1", {4 * d}});
    shapes.push_back({p + ".w2", {4 * d, d}});
    shapes.push_back({p + ".b2", {d}});
  };
  for (std::size_t l = 0; l < cfg.encoder_depth; ++l) {
    std::string p = "enc." + std::to_string(l);
    ln(p + ".ln1");
    attn(p + ".attn");
    ln(p + ".ln2");
    mlp(p + ".mlp");
  }
  ln("enc.final_ln");
  for (std::size_t l = 0; l < cfg.decoder_depth; ++l) {
    std::string p = "dec." + std::to_string(l);
    ln(p + ".ln1");
    attn(p + ".attn");
    ln(p + ".lnx");
    attn(p + ".xattn");
    ln(p + ".ln2");
    mlp(p + ".mlp");
  }
  ln("dec.final_ln");
  for (const auto& m : vocabs.mods) {
    shapes.push_back({"head." + m.name + ".w", {m.vocab_size, d}});
    shapes.push_back({"head." + m.name + ".b", {m.vocab_size}});
  }
  return shapes;
}

std::size_t parameter_count(const ModelConfig& cfg, const VocabMap& vocabs) {
  std::size_t n = 0;
  for (const auto& [name, shape] : parameter_shapes(cfg, vocabs)) {
    std::size_t s = 1;
    for (std::size_t dim : shape) s *= dim;
    n += s;
  }
  return n;
}

namespace {

bool is_gain(const std::string& name) {
  return name.size() > 2 && name.compare(name.size() - 2, 2, ".g") == 0;
}
bool is_bias_like(const std::string& name) {
  if (name.size() < 2) return false;
  std::size_t dot = name.rfind('.');
  if (dot == std::string::npos) return false;
  std::string leaf = name.substr(dot + 1);
  return leaf == "b" || leaf == "b1" || leaf == "b2" || leaf == "bq" || leaf == "bk" ||
         leaf == "bv" || leaf == "bo";
}

Parameters init_parameters(const ModelConfig& cfg, const VocabMap& vocabs, std::uint64_t seed) {
  Parameters params;
  Rng rng(seed);
  for (const auto& [name, shape] : parameter_shapes(cfg, vocabs)) {
    Tensor t(shape);
    if (is_gain(name)) {
      t.fill(1.0);
    } else if (!is_bias_like(name)) {
      for (double& x : t.v) x = rng.normal(0.0, cfg.init_std);
    }
    params.add(name, std::move(t));
  }
  // Pad rows embed to zero (additive identity for all-pad grids).
  for (const auto& m : vocabs.mods) {
    Tensor& table = params.value(vocabs.embed_table(m.name));
    std::fill(table.row(static_cast<std::size_t>(m.pad_id)),
              table.row(static_cast<std::size_t>(m.pad_id)) + table.cols(), 0.0);
  }
  return params;
}

}  // namespace

// --- Model --------------------------------------------------------------------

Model::Model(ModelConfig cfg, VocabMap vocabs, std::uint64_t seed)
    : cfg_(cfg), vocabs_(std::move(vocabs)) {
  cfg_.validate();
  params_ = init_parameters(cfg_, vocabs_, seed);
  head_kinds_ = partition_attention_heads(cfg_.n_heads);
}

Model::Model(ModelConfig cfg, VocabMap vocabs, Parameters params)
    : cfg_(cfg), vocabs_(std::move(vocabs)), params_(std::move(params)) {
  cfg_.validate();
  auto expected = parameter_shapes(cfg_, vocabs_);
  if (expected.size() != params_.entries.size())
    fail("parameter set does not match config (entry count)");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (params_.entries[i].name != expected[i].first ||
        params_.entries[i].value.shape != expected[i].second)
      fail("parameter mismatch at " + expected[i].first);
  }
  head_kinds_ = partition_attention_heads(cfg_.n_heads);
}

namespace {

std::vector<std::uint8_t> cross_mask(std::size_t rows, const std::vector<std::uint8_t>& key_keep) {
  std::vector<std::uint8_t> m(rows * key_keep.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < key_keep.size(); ++j) m[i * key_keep.size() + j] = key_keep[j];
  return m;
}

struct Ctx {
  ad::Graph& g;
  Parameters& params;
  std::map<std::string, int>& leaves;
  const ModelConfig& cfg;
  const std::vector<HeadKind>& kinds;

  int P(const std::string& name) {
    auto it = leaves.find(name);
    if (it != leaves.end()) return it->second;
    int id = g.leaf(params.value(name));
    leaves.emplace(name, id);
    return id;
  }
};

int attention(Ctx& c, const std::string& prefix, int xq, int xkv,
              const std::vector<std::int64_t>* qpos, const std::vector<std::int64_t>* kpos,
              const std::array<std::vector<std::uint8_t>, 3>* self_masks,
              const std::vector<std::uint8_t>* shared_mask) {
  ad::Graph& g = c.g;
  std::size_t hd = c.cfg.head_dim();
  std::size_t rot = c.cfg.rot_dims();
  int q = g.add_bias(g.matmul(xq, c.P(prefix + ".wq")), c.P(prefix + ".bq"));
  int k = g.add_bias(g.matmul(xkv, c.P(prefix + ".wk")), c.P(prefix + ".bk"));
  int v = g.add_bias(g.matmul(xkv, c.P(prefix + ".wv")), c.P(prefix + ".bv"));
  if (qpos && rot > 0) q = g.rope(q, *qpos, c.cfg.n_heads, rot, c.cfg.rope_base);
  if (kpos && rot > 0) k = g.rope(k, *kpos, c.cfg.n_heads, rot, c.cfg.rope_base);
  std::vector<int> heads;
  heads.reserve(c.cfg.n_heads);
  for (std::size_t h = 0; h < c.cfg.n_heads; ++h) {
    int qh = g.slice_cols(q, h * hd, hd);
    int kh = g.slice_cols(k, h * hd, hd);
    int vh = g.slice_cols(v, h * hd, hd);
    int logits = g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(hd)));
    const std::vector<std::uint8_t>& mask =
        self_masks ? (*self_masks)[static_cast<std::size_t>(c.kinds[h])] : *shared_mask;
    int p = g.masked_softmax_rows(logits, mask);
    heads.push_back(g.matmul(p, vh));
  }
  int o = g.concat_cols(heads);
  return g.add_bias(g.matmul(o, c.P(prefix + ".wo")), c.P(prefix + ".bo"));
}

int mlp(Ctx& c, const std::string& prefix, int h) {
  ad::Graph& g = c.g;
  int a = g.add_bias(g.matmul(h, c.P(prefix + ".w1")), c.P(prefix + ".b1"));
  int b = g.gelu(a);
  return g.add_bias(g.matmul(b, c.P(prefix + ".w2")), c.P(prefix + ".b2"));
}

int layer_norm_p(Ctx& c, const std::string& prefix, int x) {
  return c.g.layer_norm(x, c.P(prefix + ".g"), c.P(prefix + ".b"), c.cfg.ln_eps);
}

}  // namespace

ForwardResult Model::forward(const EncoderLayout& layout, const PackedTargets& targets,
                             const ForwardOptions& options) {
  if (layout.total_length() > cfg_.encoder_budget)
    fail("encoder layout over budget (" + std::to_string(layout.total_length()) + " > " +
         std::to_string(cfg_.encoder_budget) + ")");
  if (targets.total() > cfg_.decoder_budget)
    fail("packed targets over decoder budget (" + std::to_string(targets.total()) + " > " +
         std::to_string(cfg_.decoder_budget) + ")");
  if (layout.total_length() == 0) fail("empty encoder layout");
  if (targets.segments.empty()) fail("no target segments");

  ad::Graph g;
  std::map<std::string, int> leaves;
  Ctx c{g, params_, leaves, cfg_, head_kinds_};

  // Embed-and-sum per group, registers appended last.
  std::vector<int> parts;
  for (const auto& grp : layout.groups) {
    int acc = -1;
    for (const auto& mod : grp.modality_order) {
      const ModalityVocab& mv = vocabs_.at(mod);
      int e = g.embed(c.P(vocabs_.embed_table(mod)), grp.modality_grids.at(mod), mv.pad_id);
      acc = acc < 0 ? e : g.add(acc, e);
    }
    if (acc >= 0) parts.push_back(acc);
  }
  if (cfg_.register_count > 0) parts.push_back(c.P("registers"));
  int x = parts.size() == 1 ? parts[0] : g.concat_rows(parts);

  std::vector<std::int64_t> positions = layout.flat_positions();
  std::vector<std::uint8_t> keep = layout.flat_keep();

  std::array<std::vector<std::uint8_t>, 3> enc_masks = {
      build_attention_mask(HeadKind::bidirectional, positions.size(), &keep),
      build_attention_mask(HeadKind::causal, positions.size(), &keep),
      build_attention_mask(HeadKind::anticausal, positions.size(), &keep)};

  for (std::size_t l = 0; l < cfg_.encoder_depth; ++l) {
    std::string p = "enc." + std::to_string(l);
    int h = layer_norm_p(c, p + ".ln1", x);
    x = g.add(x, attention(c, p + ".attn", h, h, &positions, &positions, &enc_masks, nullptr));
    int h2 = layer_norm_p(c, p + ".ln2", x);
    x = g.add(x, mlp(c, p + ".mlp", h2));
    if (!g.val(x).all_finite())
      fail("non-finite state after encoder layer " + std::to_string(l));
  }
  int latent = layer_norm_p(c, "enc.final_ln", x);

  // Decoder queries: per-modality mask-token embeddings at native coordinates.
  std::vector<int> seg_nodes;
  std::vector<std::int64_t> dpos;
  for (const auto& seg : targets.segments) {
    const ModalityVocab& mv = vocabs_.at(seg.modality);
    std::vector<int> qids(seg.length(), mv.mask_id);
    seg_nodes.push_back(g.embed(c.P(vocabs_.embed_table(seg.modality)), qids, mv.pad_id));
    for (std::size_t i = 0; i < seg.length(); ++i)
      dpos.push_back(static_cast<std::int64_t>(seg.start + i));
  }
  int y = seg_nodes.size() == 1 ? seg_nodes[0] : g.concat_rows(seg_nodes);

  std::array<std::vector<std::uint8_t>, 3> dec_masks = {
      build_attention_mask(HeadKind::bidirectional, dpos.size(), nullptr),
      build_attention_mask(HeadKind::causal, dpos.size(), nullptr),
      build_attention_mask(HeadKind::anticausal, dpos.size(), nullptr)};
  std::vector<std::uint8_t> xmask = cross_mask(dpos.size(), keep);

  for (std::size_t l = 0; l < cfg_.decoder_depth; ++l) {
    std::string p = "dec." + std::to_string(l);
    if (!options.ablate_decoder_self_attention) {
      int h = layer_norm_p(c, p + ".ln1", y);
      y = g.add(y, attention(c, p + ".attn", h, h, &dpos, &dpos, &dec_masks, nullptr));
    }
    // Cross-attention shares the rotary coordinate system: target queries
    // rotate by their native coordinates, latent keys by their group-local
    // ones. Mask-token queries are position-free otherwise, so this is what
    // lets a query address the latent position it reconstructs.
    int hx = layer_norm_p(c, p + ".lnx", y);
    y = g.add(y, attention(c, p + ".xattn", hx, latent, &dpos, &positions, nullptr, &xmask));
    int h2 = layer_norm_p(c, p + ".ln2", y);
    y = g.add(y, mlp(c, p + ".mlp", h2));
    if (!g.val(y).all_finite())
      fail("non-finite state after decoder layer " + std::to_string(l));
  }
  y = layer_norm_p(c, "dec.final_ln", y);

  ForwardResult result;
  std::vector<int> ce_nodes;
  std::size_t off = 0;
  for (const auto& seg : targets.segments) {
    const ModalityVocab& mv = vocabs_.at(seg.modality);
    std::vector<std::size_t> idx(seg.length());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = off + i;
    off += seg.length();
    int rows = g.select_rows(y, idx);
    int logits =
        g.add_bias(g.matmul_nt(rows, c.P("head." + seg.modality + ".w")),
                   c.P("head." + seg.modality + ".b"));
    result.segment_logits.push_back(g.val(logits));
    std::size_t counted = 0;
    for (int t : seg.target_ids)
      if (t != mv.pad_id) ++counted;
    if (counted > 0) {
      ce_nodes.push_back(g.cross_entropy_sum(logits, seg.target_ids, mv.pad_id));
      result.target_tokens += counted;
    }
  }
  if (result.target_tokens == 0) return result;  // all-pad: skip signal

  int loss_sum = ce_nodes[0];
  for (std::size_t i = 1; i < ce_nodes.size(); ++i) loss_sum = g.add(loss_sum, ce_nodes[i]);
  int loss = g.scale(loss_sum, 1.0 / static_cast<double>(result.target_tokens));
  result.loss = g.val(loss)(0);

  if (options.accumulate_grads) {
    g.backward(loss);
    for (const auto& [name, id] : leaves) {
      Tensor& dst = params_.grad_of(name);
      kernels::add(dst.v.data(), g.grad(id).v.data(), dst.v.data(), dst.size());
    }
  }
  return result;
}

// --- checkpointing -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'T', 'R', 'D', 'C', 'K', 'P', '1'};

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64(const std::string& buf, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + static_cast<std::size_t>(i)]))
         << (8 * i);
  return v;
}

void append_tensor(std::string& out, const Tensor& t) {
  std::size_t bytes = t.size() * sizeof(double);
  std::size_t pos = out.size();
  out.resize(pos + bytes);
  std::memcpy(out.data() + pos, t.v.data(), bytes);
}

void read_tensor(const std::string& buf, std::size_t& off, Tensor& t) {
  std::size_t bytes = t.size() * sizeof(double);
  if (off + bytes > buf.size()) fail("checkpoint truncated");
  std::memcpy(t.v.data(), buf.data() + off, bytes);
  off += bytes;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = "strand-checkpoint";
  header["version"] = 1;
  header["config"] = ckpt.config.to_json();
  header["vocabs"] = ckpt.vocabs.to_json();
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : ckpt.params.entries)
    entries.push_back({{"name", e.name}, {"shape", e.value.shape}});
  header["entries"] = std::move(entries);
  header["has_optimizer"] = ckpt.has_optimizer;
  header["opt_step"] = ckpt.opt_step;
  header["train_step"] = ckpt.train_step;
  header["rng_state"] = ckpt.rng_state;

  std::string payload;
  for (const auto& e : ckpt.params.entries) append_tensor(payload, e.value);
  if (ckpt.has_optimizer) {
    if (ckpt.opt_m.size() != ckpt.params.entries.size() ||
        ckpt.opt_v.size() != ckpt.params.entries.size())
      fail("optimizer state does not match parameters");
    for (const auto& t : ckpt.opt_m) append_tensor(payload, t);
    for (const auto& t : ckpt.opt_v) append_tensor(payload, t);
  }

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  std::string hs = header.dump();
  append_u64(out, hs.size());
  out += hs;
  append_u64(out, payload.size());
  out += payload;
  append_u64(out, fnv1a64(payload.data(), payload.size()));
  write_text_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string buf = read_text_file(path);
  if (buf.size() < sizeof(kMagic) + 16 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    fail("not a checkpoint file: " + path.string());
  std::size_t off = sizeof(kMagic);
  std::uint64_t hlen = read_u64(buf, off);
  off += 8;
  if (off + hlen > buf.size()) fail("checkpoint truncated (header)");
  nlohmann::json header = nlohmann::json::parse(buf.substr(off, hlen));
  off += hlen;
  std::uint64_t plen = read_u64(buf, off);
  off += 8;
  if (off + plen + 8 > buf.size()) fail("checkpoint truncated (payload)");
  std::uint64_t stored_digest = read_u64(buf, off + plen);
  std::uint64_t actual = fnv1a64(buf.data() + off, plen);
  if (stored_digest != actual) fail("checkpoint digest mismatch (corrupt file)");

  Checkpoint ckpt;
  ckpt.config = ModelConfig::from_json(header.at("config"));
  ckpt.vocabs = VocabMap::from_json(header.at("vocabs"));
  ckpt.has_optimizer = header.at("has_optimizer").get<bool>();
  ckpt.opt_step = header.at("opt_step").get<std::int64_t>();
  ckpt.train_step = header.at("train_step").get<std::int64_t>();
  ckpt.rng_state = header.at("rng_state").get<std::string>();
  for (const auto& ej : header.at("entries")) {
    Tensor t(ej.at("shape").get<std::vector<std::size_t>>());
    read_tensor(buf, off, t);
    ckpt.params.add(ej.at("name").get<std::string>(), std::move(t));
  }
  if (ckpt.has_optimizer) {
    for (const auto& e : ckpt.params.entries) {
      Tensor m(e.value.shape);
      read_tensor(buf, off, m);
      ckpt.opt_m.push_back(std::move(m));
    }
    for (const auto& e : ckpt.params.entries) {
      Tensor v(e.value.shape);
      read_tensor(buf, off, v);
      ckpt.opt_v.push_back(std::move(v));
    }
  }
  return ckpt;
}

void require_config_match(const Checkpoint& ckpt, const ModelConfig& expected) {
  if (ckpt.config.to_json() != expected.to_json())
    fail("checkpoint config echo does not match requested config");
}

// --- gradient verification ---------------------------------------------------

namespace {

// Deterministic toy scenario: two aligned grids in one group, a second group,
// a dropped position, registers, and two packed segments (one containing pad).
struct GradScenario {
  VocabMap vocabs;
  EncoderLayout layout;
  PackedTargets targets;
};

GradScenario make_scenario(const ModelConfig& cfg, std::uint64_t seed) {
  GradScenario s;
  auto mod = [](const std::string& name, std::size_t values) {
    ModalityVocab v;
    v.name = name;
    v.vocab_size = values + 3;
    v.pad_id = static_cast<int>(values);
    v.mask_id = static_cast<int>(values) + 1;
    v.unknown_id = static_cast<int>(values) + 2;
    return v;
  };
  s.vocabs.mods = {mod("m0", 4), mod("m1", 3), mod("m2", 5)};

  Rng rng(derive_seed(seed, 99));
  auto ids = [&](std::size_t n, std::size_t values) {
    std::vector<int> out(n);
    for (auto& x : out) x = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(values) - 1));
    return out;
  };

  TrackGroupLayout a;
  a.group = TrackGroup::nucleic;
  a.label = "nucleic";
  a.modality_order = {"m0", "m1"};
  a.modality_grids["m0"] = ids(6, 4);
  a.modality_grids["m1"] = ids(6, 3);
  a.positions = {0, 1, 2, 3, 4, 5};
  a.keep = {1, 1, 0, 1, 1, 1};  // one dropped position

  TrackGroupLayout b;
  b.group = TrackGroup::semantic_context;
  b.label = "m2";
  b.modality_order = {"m2"};
  b.modality_grids["m2"] = ids(4, 5);
  b.positions = {0, 1, 2, 3};
  b.keep = {1, 1, 1, 1};

  s.layout.groups = {a, b};
  s.layout.register_count = cfg.register_count;

  PackedSegment s1;
  s1.modality = "m0";
  s1.start = 1;
  s1.target_ids = ids(3, 4);
  s1.target_ids[1] = s.vocabs.at("m0").pad_id;  // exercise the ignore path
  PackedSegment s2;
  s2.modality = "m2";
  s2.start = 0;
  s2.target_ids = ids(2, 5);
  s.targets.segments = {s1, s2};
  return s;
}

std::vector<std::size_t> probe_coords(const Tensor& t, std::size_t exhaustive_limit,
                                      std::size_t probes, Rng& rng) {
  std::vector<std::size_t> coords;
  if (t.size() <= exhaustive_limit) {
    coords.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) coords[i] = i;
    return coords;
  }
  std::set<std::size_t> seen;
  while (seen.size() < probes)
    seen.insert(static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(t.size()) - 1)));
  return {seen.begin(), seen.end()};
}

}  // namespace

double gradient_check(const ModelConfig& cfg, std::uint64_t seed,
                      const GradCheckOptions& options) {
  cfg.validate();
  GradScenario s = make_scenario(cfg, seed);
  Model model(cfg, s.vocabs, derive_seed(seed, 1));
  Rng coord_rng(derive_seed(seed, 2));

  std::function<double()> eval;
  std::function<void()> compute_analytic;

  // Fixed linear readout for the ablation mode.
  Tensor readout;
  if (options.linear_only) {
    Rng rrng(derive_seed(seed, 3));
    readout = Tensor::randn({s.layout.total_length(), cfg.width}, rrng, 1.0);
    auto linear_loss = [&](bool with_grads) {
      ad::Graph g;
      std::map<std::string, int> leaves;
      Ctx c{g, model.params(), leaves, model.config(), model.head_kinds()};
      std::vector<int> parts;
      for (const auto& grp : s.layout.groups) {
        int acc = -1;
        for (const auto& m : grp.modality_order) {
          const ModalityVocab& mv = s.vocabs.at(m);
          int e = g.embed(c.P(s.vocabs.embed_table(m)), grp.modality_grids.at(m), mv.pad_id);
          acc = acc < 0 ? e : g.add(acc, e);
        }
        parts.push_back(acc);
      }
      if (cfg.register_count > 0) parts.push_back(c.P("registers"));
      int x = g.concat_rows(parts);
      int loss = g.sum_all(g.mul(x, g.leaf(readout)));
      if (with_grads) {
        g.backward(loss);
        for (const auto& [name, id] : leaves) {
          Tensor& dst = model.params().grad_of(name);
          kernels::add(dst.v.data(), g.grad(id).v.data(), dst.v.data(), dst.size());
        }
      }
      return g.val(loss)(0);
    };
    eval = [linear_loss]() { return linear_loss(false); };
    compute_analytic = [linear_loss]() { linear_loss(true); };
  } else {
    eval = [&]() { return model.forward(s.layout, s.targets).loss; };
    compute_analytic = [&]() {
      ForwardOptions fo;
      fo.accumulate_grads = true;
      model.forward(s.layout, s.targets, fo);
    };
  }

  model.params().zero_grads();
  compute_analytic();

  double max_rel = 0.0;
  double h = options.fd_step;
  for (auto& entry : model.params().entries) {
    for (std::size_t coord :
         probe_coords(entry.value, options.exhaustive_limit, options.probes_per_tensor,
                      coord_rng)) {
      double saved = entry.value.v[coord];
      entry.value.v[coord] = saved + h;
      double lp = eval();
      entry.value.v[coord] = saved - h;
      double lm = eval();
      entry.value.v[coord] = saved;
      double fd = (lp - lm) / (2.0 * h);
      double analytic = entry.grad.v[coord];
      double rel = std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace strand
