#include "strand/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "strand/io_util.hpp"

namespace strand {

namespace {

constexpr int kSpecFileVersion = 1;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("tokenizer: " + msg); }

}  // namespace

const char* tokenizer_kind_name(TokenizerKind k) {
  switch (k) {
    case TokenizerKind::character: return "character";
    case TokenizerKind::continuous: return "continuous";
    case TokenizerKind::class_label: return "class";
    case TokenizerKind::text: return "text";
  }
  return "?";
}

TokenizerKind tokenizer_kind_from_name(const std::string& name) {
  if (name == "character") return TokenizerKind::character;
  if (name == "continuous") return TokenizerKind::continuous;
  if (name == "class") return TokenizerKind::class_label;
  if (name == "text") return TokenizerKind::text;
  fail("unknown kind: " + name);
}

void TokenizerSpec::validate() const {
  std::size_t n = vocab.size();
  auto in_values = [n](int id) { return id >= 0 && static_cast<std::size_t>(id) < n; };
  if (in_values(pad_id) || in_values(mask_id) || in_values(unknown_id))
    fail("special ids overlap value tokens");
  std::set<int> specials{pad_id, mask_id, unknown_id};
  if (specials.size() != 3) fail("special ids must be distinct");
  if (kind == TokenizerKind::character || kind == TokenizerKind::class_label ||
      kind == TokenizerKind::text) {
    std::set<std::string> seen(vocab.begin(), vocab.end());
    if (seen.size() != vocab.size()) fail("duplicate vocab entry");
  }
  if (kind == TokenizerKind::continuous) {
    if (bin_centers.size() != vocab.size()) fail("bin_centers count must equal n_bins");
    if (bin_edges.size() + 1 != vocab.size()) fail("bin_edges count must be n_bins - 1");
    for (std::size_t i = 1; i < bin_edges.size(); ++i)
      if (bin_edges[i] < bin_edges[i - 1]) fail("bin_edges must be non-decreasing");
  } else {
    if (!bin_edges.empty() || !bin_centers.empty()) fail("bins only valid for continuous kind");
  }
}

namespace {

TokenizerSpec with_specials(TokenizerKind kind, std::vector<std::string> vocab) {
  TokenizerSpec s;
  s.kind = kind;
  s.vocab = std::move(vocab);
  int n = static_cast<int>(s.vocab.size());
  s.pad_id = n;
  s.mask_id = n + 1;
  s.unknown_id = n + 2;
  return s;
}

}  // namespace

TokenizerSpec build_character_tokenizer(const std::vector<std::string>& alphabet) {
  if (alphabet.empty()) fail("alphabet must be nonempty");
  std::set<std::string> seen;
  for (const auto& s : alphabet)
    if (!seen.insert(s).second) fail("duplicate symbol in alphabet: " + s);
  TokenizerSpec s = with_specials(TokenizerKind::character, alphabet);
  s.validate();
  return s;
}

TokenizerSpec build_class_tokenizer(const std::vector<std::string>& labels) {
  if (labels.empty()) fail("label set must be nonempty");
  std::set<std::string> seen;
  for (const auto& s : labels)
    if (!seen.insert(s).second) fail("duplicate class label: " + s);
  TokenizerSpec s = with_specials(TokenizerKind::class_label, labels);
  s.validate();
  return s;
}

TokenizerSpec fit_continuous_tokenizer(const std::vector<double>& samples, int n_bins) {
  if (n_bins < 2) fail("n_bins must be >= 2");
  std::vector<double> finite;
  finite.reserve(samples.size());
  for (double v : samples)
    if (std::isfinite(v)) finite.push_back(v);
  if (finite.empty()) fail("continuous fit: no finite values");
  if (finite.size() < static_cast<std::size_t>(n_bins))
    fail("continuous fit: need at least n_bins finite values");
  std::sort(finite.begin(), finite.end());

  std::vector<std::string> vocab(static_cast<std::size_t>(n_bins));
  for (int i = 0; i < n_bins; ++i) vocab[static_cast<std::size_t>(i)] = "bin" + std::to_string(i);
  TokenizerSpec s = with_specials(TokenizerKind::continuous, std::move(vocab));

  // Nearest-rank quantiles at k/n_bins, k = 1..n_bins-1.
  std::size_t n = finite.size();
  s.bin_edges.resize(static_cast<std::size_t>(n_bins) - 1);
  for (int k = 1; k < n_bins; ++k) {
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(static_cast<double>(k) * static_cast<double>(n) / n_bins));
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    s.bin_edges[static_cast<std::size_t>(k) - 1] = finite[rank - 1];
  }

  std::vector<double> sums(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_bins), 0);
  for (double v : finite) {
    std::size_t b = continuous_bin(s, v);
    sums[b] += v;
    counts[b] += 1;
  }
  s.bin_centers.resize(static_cast<std::size_t>(n_bins));
  for (std::size_t b = 0; b < s.bin_centers.size(); ++b) {
    if (counts[b] > 0) {
      s.bin_centers[b] = sums[b] / static_cast<double>(counts[b]);
    } else {
      // Empty bin from duplicate edges; inherit the run's edge value.
      s.bin_centers[b] = b > 0 ? s.bin_edges[b - 1] : s.bin_edges[0];
    }
  }
  s.validate();
  return s;
}

std::vector<std::string> text_stub_split(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (char c : text) {
    unsigned char uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      flush();
    } else if (std::ispunct(uc)) {
      flush();
      out.push_back(std::string(1, c));
    } else {
      word.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  flush();
  return out;
}

TokenizerSpec fit_text_tokenizer(const std::vector<std::string>& corpus, std::size_t max_vocab) {
  if (max_vocab == 0) fail("text fit: max_vocab must be positive");
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus)
    for (const auto& w : text_stub_split(doc)) counts[w] += 1;
  if (counts.empty()) fail("text fit: empty corpus");
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_vocab) ranked.resize(max_vocab);
  std::vector<std::string> vocab;
  vocab.reserve(ranked.size());
  for (auto& [w, c] : ranked) vocab.push_back(w);
  std::sort(vocab.begin(), vocab.end());
  TokenizerSpec s = with_specials(TokenizerKind::text, std::move(vocab));
  s.validate();
  return s;
}

std::size_t continuous_bin(const TokenizerSpec& spec, double v) {
  auto it = std::lower_bound(spec.bin_edges.begin(), spec.bin_edges.end(), v);
  return static_cast<std::size_t>(it - spec.bin_edges.begin());
}

namespace {

int lookup_symbol(const TokenizerSpec& spec, const std::string& symbol) {
  auto it = std::find(spec.vocab.begin(), spec.vocab.end(), symbol);
  if (it == spec.vocab.end()) return spec.unknown_id;
  return static_cast<int>(it - spec.vocab.begin());
}

}  // namespace

std::vector<int> encode(const TokenizerSpec& spec, const RawTrack& track) {
  std::vector<int> ids;
  ids.reserve(track.values.size());
  for (const TrackValue& value : track.values) {
    if (value.is_missing()) {
      ids.push_back(spec.unknown_id);
      continue;
    }
    switch (spec.kind) {
      case TokenizerKind::character:
      case TokenizerKind::class_label:
        if (value.kind != TrackValue::Kind::symbol)
          fail("kind mismatch: " + std::string(tokenizer_kind_name(spec.kind)) +
               " tokenizer expects symbols (track '" + track.modality + "')");
        ids.push_back(lookup_symbol(spec, value.symbol));
        break;
      case TokenizerKind::continuous:
        if (value.kind != TrackValue::Kind::real)
          fail("kind mismatch: continuous tokenizer expects reals (track '" + track.modality +
               "')");
        if (!std::isfinite(value.real)) {
          ids.push_back(spec.unknown_id);
        } else {
          ids.push_back(static_cast<int>(continuous_bin(spec, value.real)));
        }
        break;
      case TokenizerKind::text: {
        if (value.kind != TrackValue::Kind::symbol)
          fail("kind mismatch: text tokenizer expects strings (track '" + track.modality + "')");
        for (const auto& w : text_stub_split(value.symbol)) ids.push_back(lookup_symbol(spec, w));
        break;
      }
    }
  }
  return ids;
}

RawTrack decode(const TokenizerSpec& spec, const std::vector<int>& ids,
                const std::string& modality) {
  RawTrack out;
  out.modality = modality;
  out.values.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= spec.vocab_size())
      fail("decode: id out of range: " + std::to_string(id));
    if (spec.is_special(id)) {
      out.values.push_back(TrackValue::none());
      continue;
    }
    if (spec.kind == TokenizerKind::continuous) {
      out.values.push_back(TrackValue::num(spec.bin_centers[static_cast<std::size_t>(id)]));
    } else {
      out.values.push_back(TrackValue::sym(spec.vocab[static_cast<std::size_t>(id)]));
    }
  }
  return out;
}

nlohmann::json TokenizerSpec::to_json() const {
  nlohmann::json j;
  j["version"] = kSpecFileVersion;
  j["kind"] = tokenizer_kind_name(kind);
  if (kind == TokenizerKind::text) j["flavor"] = "text-stub";
  j["vocab"] = vocab;
  j["specials"] = {{"pad", pad_id}, {"mask", mask_id}, {"unknown", unknown_id}};
  if (kind == TokenizerKind::continuous) {
    j["bin_edges"] = bin_edges;
    j["bin_centers"] = bin_centers;
  }
  return j;
}

TokenizerSpec TokenizerSpec::from_json(const nlohmann::json& j) {
  int version = j.at("version").get<int>();
  if (version != kSpecFileVersion)
    fail("unsupported tokenizer spec version " + std::to_string(version) + " (expected " +
         std::to_string(kSpecFileVersion) + ")");
  TokenizerSpec s;
  s.kind = tokenizer_kind_from_name(j.at("kind").get<std::string>());
  s.vocab = j.at("vocab").get<std::vector<std::string>>();
  s.pad_id = j.at("specials").at("pad").get<int>();
  s.mask_id = j.at("specials").at("mask").get<int>();
  s.unknown_id = j.at("specials").at("unknown").get<int>();
  if (s.kind == TokenizerKind::continuous) {
    s.bin_edges = j.at("bin_edges").get<std::vector<double>>();
    s.bin_centers = j.at("bin_centers").get<std::vector<double>>();
  }
  s.validate();
  return s;
}

void save_tokenizer(const TokenizerSpec& spec, const std::filesystem::path& path) {
  write_text_file(path, spec.to_json().dump(2) + "\n");
}

TokenizerSpec load_tokenizer(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(path.string() + ": " + e.what());
  }
  return TokenizerSpec::from_json(j);
}

}  // namespace strand
