#include "strand/pathways.hpp"

#include <algorithm>
#include <stdexcept>

#include "strand/io_util.hpp"

namespace strand {

namespace {

constexpr int kRegistryVersion = 1;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("pathways: " + msg); }

}  // namespace

void Pathway::validate() const {
  if (name.empty()) fail("pathway without name");
  if (!(weight > 0.0)) fail("pathway " + name + ": weight must be positive");
  if (optional_input_p < 0.0 || optional_input_p > 1.0)
    fail("pathway " + name + ": optional_input_p outside [0,1]");
  if (targets_required.empty() && targets_optional.empty())
    fail("pathway " + name + ": no targets");
  if (completion_window == 0) fail("pathway " + name + ": completion_window must be positive");
}

void PathwayRegistry::add(Pathway p) {
  p.validate();
  for (const auto& q : pathways_)
    if (q.name == p.name) fail("duplicate pathway name: " + p.name);
  pathways_.push_back(std::move(p));
}

const Pathway& PathwayRegistry::at(const std::string& name) const {
  for (const auto& p : pathways_)
    if (p.name == name) return p;
  fail("unknown pathway: " + name);
}

PathwayRegistry PathwayRegistry::load(const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  if (j.at("version").get<int>() != kRegistryVersion) fail("unsupported pathway file version");
  PathwayRegistry reg;
  for (const auto& pj : j.at("pathways")) {
    Pathway p;
    p.name = pj.at("name").get<std::string>();
    auto get_set = [&pj](const char* key) {
      std::set<std::string> out;
      if (pj.contains(key))
        for (const auto& m : pj.at(key)) out.insert(m.get<std::string>());
      return out;
    };
    p.inputs_required = get_set("inputs_required");
    p.inputs_optional = get_set("inputs_optional");
    p.targets_required = get_set("targets_required");
    if (pj.contains("targets_optional"))
      for (const auto& m : pj.at("targets_optional"))
        p.targets_optional.push_back(m.get<std::string>());
    p.weight = pj.at("weight").get<double>();
    p.optional_input_p = pj.value("optional_input_p", 0.5);
    p.completion_window = pj.value("completion_window", std::size_t{100});
    if (pj.contains("input_views"))
      for (const auto& [mod, view] : pj.at("input_views").items())
        p.input_views[mod] = view.get<std::string>();
    reg.add(std::move(p));
  }
  return reg;
}

void PathwayRegistry::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["version"] = kRegistryVersion;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : pathways_) {
    nlohmann::json pj;
    pj["name"] = p.name;
    pj["inputs_required"] = p.inputs_required;
    pj["inputs_optional"] = p.inputs_optional;
    pj["targets_required"] = p.targets_required;
    pj["targets_optional"] = p.targets_optional;
    pj["weight"] = p.weight;
    pj["optional_input_p"] = p.optional_input_p;
    pj["completion_window"] = p.completion_window;
    if (!p.input_views.empty()) pj["input_views"] = p.input_views;
    arr.push_back(std::move(pj));
  }
  j["pathways"] = std::move(arr);
  write_text_file(path, j.dump(2) + "\n");
}

std::vector<const Pathway*> eligible_pathways(const PresenceSignature& signature,
                                              const PathwayRegistry& registry) {
  std::vector<const Pathway*> out;
  for (const auto& p : registry.all()) {
    if (!signature.contains_all(p.inputs_required)) continue;
    if (!signature.contains_all(p.targets_required)) continue;
    out.push_back(&p);
  }
  return out;
}

const Pathway* sample_pathway(const std::vector<const Pathway*>& eligible, Rng& rng) {
  if (eligible.empty()) return nullptr;  // sample skip
  double total = 0.0;
  for (const Pathway* p : eligible) total += p->weight;
  double u = rng.uniform() * total;
  double acc = 0.0;
  for (const Pathway* p : eligible) {
    acc += p->weight;
    if (u <= acc) return p;
  }
  return eligible.back();
}

std::set<std::string> select_inputs(const MultimodalSample& sample, const Pathway& pathway,
                                    Rng& rng) {
  std::set<std::string> inputs = pathway.inputs_required;
  for (const auto& m : pathway.inputs_optional) {
    if (!sample.has(m)) continue;
    if (rng.bernoulli(pathway.optional_input_p)) inputs.insert(m);
  }
  return inputs;
}

std::size_t PackedTargets::total() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.length();
  return n;
}

namespace {

// One target segment for a modality under the remaining budget; nullopt when
// nothing fits.
std::optional<PackedSegment> make_segment(const MultimodalSample& sample,
                                          const std::string& modality, bool modality_is_input,
                                          std::size_t completion_window, std::size_t remaining,
                                          const ModalityRegistry& registry, Rng& rng) {
  if (remaining == 0 || !sample.has(modality)) return std::nullopt;
  const auto& ids = sample.track(modality);
  if (ids.empty()) return std::nullopt;
  std::size_t len = ids.size();
  std::size_t window = len;
  if (modality_is_input) {
    // Completion-style target: keep at least half the track visible as input.
    window = std::min({completion_window, std::max<std::size_t>(len / 2, 1), remaining});
  } else if (len > remaining) {
    // Nucleic tracks crop to a window; protein structural tracks drop.
    if (registry.at(modality).group == TrackGroup::protein) return std::nullopt;
    window = remaining;
  }
  if (window == 0 || window > len) return std::nullopt;
  std::size_t start = window == len
                          ? 0
                          : static_cast<std::size_t>(rng.uniform_int(
                                0, static_cast<std::int64_t>(len - window)));
  PackedSegment seg;
  seg.modality = modality;
  seg.start = start;
  seg.target_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(start),
                        ids.begin() + static_cast<std::ptrdiff_t>(start + window));
  return seg;
}

}  // namespace

std::optional<PackedTargets> pack_targets(const MultimodalSample& sample, const Pathway& pathway,
                                          const std::set<std::string>& selected_inputs,
                                          std::size_t budget, const ModalityRegistry& registry,
                                          Rng& rng) {
  PackedTargets packed;
  std::size_t remaining = budget;
  std::set<std::string> used;

  for (const auto& m : pathway.targets_required) {
    auto seg = make_segment(sample, m, selected_inputs.count(m) != 0, pathway.completion_window,
                            remaining, registry, rng);
    if (!seg) return std::nullopt;  // required target infeasible: skip sample
    remaining -= seg->length();
    used.insert(m);
    packed.segments.push_back(std::move(*seg));
  }
  // Greedy optional fill in configured order.
  for (const auto& m : pathway.targets_optional) {
    if (used.count(m)) continue;
    auto seg = make_segment(sample, m, selected_inputs.count(m) != 0, pathway.completion_window,
                            remaining, registry, rng);
    if (!seg) continue;
    remaining -= seg->length();
    used.insert(m);
    packed.segments.push_back(std::move(*seg));
  }
  if (packed.segments.empty()) return std::nullopt;
  return packed;
}

}  // namespace strand
