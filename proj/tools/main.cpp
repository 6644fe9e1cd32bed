// strand: multimodal split-track encoder-decoder toolkit.
// Subcommands: gen-corpus, train, sched-sim, eval, design, inspect.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "strand/design.hpp"
#include "strand/evaluation.hpp"
#include "strand/io_util.hpp"
#include "strand/model.hpp"
#include "strand/sample_store.hpp"
#include "strand/scheduler.hpp"
#include "strand/training.hpp"

namespace fs = std::filesystem;
using namespace strand;

namespace {

constexpr const char* kArtifactVersion = "0.1.0";
constexpr int kManifestVersion = 1;

fs::path resolve_out(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("STRAND_OUT_ROOT")) return fs::path(root) / p;
  return p;
}

std::uint64_t file_digest(const fs::path& path) {
  if (!fs::exists(path)) return 0;
  std::string bytes = read_text_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& dir, const std::vector<std::string>& argv_echo,
                    std::uint64_t seed, std::uint64_t config_digest,
                    std::uint64_t corpus_digest) {
  nlohmann::json j;
  j["manifest_version"] = kManifestVersion;
  j["artifact_version"] = kArtifactVersion;
  j["argv"] = argv_echo;
  j["seed"] = seed;
  j["config_digest"] = hex64(config_digest);
  j["corpus_digest"] = hex64(corpus_digest);
  std::string identity = j.dump();  // digest covers everything but the timestamp
  j["digest"] = hex64(fnv1a64(identity.data(), identity.size()));
  j["created_utc"] = utc_now();
  fs::create_directories(dir);
  write_text_file(dir / "manifest.json", j.dump(2) + "\n");
}

struct Profile {
  ModelConfig model;
  TrainConfig train;
  fs::path source;
};

Profile load_profile(const std::string& path) {
  Profile p;
  p.source = path;
  nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  p.model = ModelConfig::from_json(j.at("model"));
  p.train.model = p.model;
  if (j.contains("train")) {
    const auto& t = j.at("train");
    if (t.contains("dropout")) {
      p.train.dropout_lo = t["dropout"][0].get<double>();
      p.train.dropout_hi = t["dropout"][1].get<double>();
    }
    p.train.weight_decay = t.value("weight_decay", 0.05);
    if (t.contains("cost")) {
      p.train.cost.a = t["cost"].value("a", 1.0);
      p.train.cost.b = t["cost"].value("b", 1.0 / 512.0);
    }
    if (t.contains("stages")) {
      for (const auto& sj : t.at("stages")) {
        StageConfig s;
        s.context_budget = sj.at("context_budget").get<std::size_t>();
        s.epochs = sj.at("epochs").get<std::size_t>();
        s.max_lr = sj.at("max_lr").get<double>();
        s.n_buckets = sj.value("n_buckets", std::size_t{4});
        s.batch_target = sj.value("batch_target", std::size_t{8});
        p.train.stages.push_back(s);
      }
    }
  }
  return p;
}

std::vector<StageConfig> load_stage_spec(const std::string& path) {
  std::vector<StageConfig> stages;
  nlohmann::json j = nlohmann::json::parse(read_text_file(path));
  for (const auto& sj : j) {
    StageConfig s;
    s.context_budget = sj.at("context_budget").get<std::size_t>();
    s.epochs = sj.at("epochs").get<std::size_t>();
    s.max_lr = sj.at("max_lr").get<double>();
    s.n_buckets = sj.value("n_buckets", std::size_t{4});
    s.batch_target = sj.value("batch_target", std::size_t{8});
    stages.push_back(s);
  }
  return stages;
}

Model model_from_checkpoint(const fs::path& path, Checkpoint* out_ckpt = nullptr) {
  Checkpoint ckpt = load_checkpoint(path);
  if (out_ckpt) *out_ckpt = ckpt;
  return Model(ckpt.config, ckpt.vocabs, std::move(ckpt.params));
}

// The checkpoint must have been trained against a registry with the same
// modality set and vocabulary sizes as the corpus it is applied to.
void require_vocab_compatible(const ModalityRegistry& registry, const VocabMap& vocabs) {
  VocabMap from_corpus = VocabMap::from_registry(registry);
  if (from_corpus.mods.size() != vocabs.mods.size())
    throw std::runtime_error("checkpoint/corpus modality mismatch (count)");
  for (std::size_t i = 0; i < vocabs.mods.size(); ++i) {
    const auto& a = from_corpus.mods[i];
    const auto& b = vocabs.mods[i];
    if (a.name != b.name || a.vocab_size != b.vocab_size || a.pad_id != b.pad_id)
      throw std::runtime_error("checkpoint/corpus modality mismatch at " + a.name);
  }
}

std::set<std::string> csv_set(const std::string& csv) {
  std::set<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.insert(item);
  return out;
}

// Columnar plot-ready text: tab-separated header + rows.
void write_columns(const fs::path& path, const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  out.precision(10);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "\t" : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "\t" : "") << row[i];
    out << "\n";
  }
  write_text_file(path, out.str());
}

// ---- subcommand bodies ------------------------------------------------------

int cmd_gen_corpus(const std::string& recipe_path, std::size_t n, std::uint64_t seed,
                   const std::string& out, const std::vector<std::string>& argv_echo) {
  auto recipe = GeneratorRecipe::load(recipe_path);
  auto bundle = generate_synthetic_corpus(recipe, n, seed);
  fs::path dir = resolve_out(out);
  save_corpus(bundle, dir);
  write_manifest(dir, argv_echo, seed, file_digest(recipe_path),
                 file_digest(dir / "corpus.jsonl"));
  std::cout << "wrote " << bundle.samples.size() << " samples to " << dir.string() << "\n";
  std::size_t train = bundle.split_samples(Split::train).size();
  std::size_t val = bundle.split_samples(Split::val).size();
  std::size_t test = bundle.split_samples(Split::test).size();
  std::cout << "splits: train=" << train << " val=" << val << " test=" << test << "\n";
  return 0;
}

int cmd_train(const std::string& corpus_path, const std::string& config_path,
              const std::string& stages_path, const std::string& pathways_path,
              std::uint64_t seed, const std::string& out,
              const std::vector<std::string>& argv_echo) {
  auto corpus = load_corpus(corpus_path);
  Profile profile = load_profile(config_path);
  if (!stages_path.empty()) profile.train.stages = load_stage_spec(stages_path);
  if (profile.train.stages.empty())
    throw std::runtime_error("no training stages configured (profile or --stages)");
  profile.train.seed = seed;
  auto pathways = PathwayRegistry::load(pathways_path);

  fs::path dir = resolve_out(out);
  write_manifest(dir, argv_echo, seed, file_digest(config_path),
                 file_digest(fs::path(corpus_path) / "corpus.jsonl"));

  Model model(profile.model, VocabMap::from_registry(corpus.registry), seed);
  std::cout << "parameters: " << model.params().total_size() << "\n";
  auto metrics = train(model, corpus, pathways, profile.train, dir);
  std::cout << "steps: " << metrics.steps << "\n";
  std::cout << "first-epoch loss: " << metrics.first_epoch_loss << "\n";
  std::cout << "last-epoch loss:  " << metrics.last_epoch_loss << "\n";
  std::cout << "checkpoint: " << metrics.checkpoint_path.string() << "\n";
  return 0;
}

int cmd_sched_sim(const std::string& corpus_path, std::size_t stage_idx, std::size_t budget,
                  std::size_t workers, const std::string& affinity, const std::string& strategy,
                  std::size_t buckets, std::uint64_t seed, const std::string& report,
                  const std::vector<std::string>& argv_echo) {
  auto corpus = load_corpus(corpus_path);
  static const std::size_t kCurriculum[] = {1000, 2000, 4000, 8000, 10000};
  Stage stage;
  if (budget > 0) {
    stage.context_budget = budget;
  } else {
    if (stage_idx >= 5) throw std::runtime_error("--stage must be in 0..4");
    stage.context_budget = kCurriculum[stage_idx];
  }
  stage.batch_target = 8;
  bool on = affinity == "on";
  auto result = simulate_schedule(corpus, stage, workers, on,
                                  batch_strategy_from_name(strategy), seed, CostModel{}, buckets);

  const auto& m = result.metrics;
  std::ostringstream table;
  table << "strategy " << strategy << "  budget " << stage.context_budget << "  workers "
        << workers << "  affinity " << affinity << "\n"
        << "padding_waste          " << m.padding_waste << "\n"
        << "steps                  " << m.steps << "\n"
        << "worker_bucket_switches " << m.worker_bucket_switches << "\n"
        << "modeled_cost           " << m.modeled_cost << "\n"
        << "scheduled_samples      " << m.scheduled_samples << "\n"
        << "dropped_samples        " << m.dropped_samples << "\n";
  if (m.packed_entity_splits > 0)
    table << "packed_entity_splits   " << m.packed_entity_splits << "\n";
  if (m.workers_share_buckets) table << "note: workers share buckets round-robin\n";
  std::cout << table.str();

  fs::path rpath = resolve_out(report);
  write_text_file(rpath, table.str());
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < result.batches.size(); ++i) {
    const auto& b = result.batches[i];
    double maxlen = static_cast<double>(*std::max_element(b.lengths.begin(), b.lengths.end()));
    rows.push_back({static_cast<double>(i), static_cast<double>(b.bucket),
                    static_cast<double>(b.worker), static_cast<double>(b.lengths.size()), maxlen,
                    padding_waste(b.lengths)});
  }
  write_columns(rpath.string() + ".columns.tsv",
                {"batch", "bucket", "worker", "size", "maxlen", "waste"}, rows);
  write_manifest(rpath.parent_path().empty() ? fs::path(".") : rpath.parent_path(), argv_echo,
                 seed, 0, file_digest(fs::path(corpus_path) / "corpus.jsonl"));
  return 0;
}

int cmd_eval_complete(const std::string& corpus_path, const std::string& ckpt,
                      const std::string& split, std::size_t mask_width,
                      const std::string& conditioning, const std::string& uplift_aux,
                      const std::string& report) {
  auto corpus = load_corpus(corpus_path);
  Model model = model_from_checkpoint(ckpt);
  require_vocab_compatible(corpus.registry, model.vocabs());
  auto res = sequence_completion_eval(model, corpus, split_from_name(split), mask_width,
                                      csv_set(conditioning));
  std::ostringstream out;
  out << "masked positions " << res.positions << "  skipped " << res.skipped << "\n";
  out << "accuracy " << res.accuracy << "\n";
  if (res.exon_accuracy) out << "exon accuracy " << *res.exon_accuracy << "\n";
  if (res.intron_accuracy) out << "intron accuracy " << *res.intron_accuracy << "\n";

  if (!uplift_aux.empty()) {
    auto records = completion_uplift_records(model, corpus, split_from_name(split), mask_width,
                                             uplift_aux);
    if (!records.empty()) {
      auto grid = uplift_attribution(records, 5);
      out << "uplift records " << records.size() << " (aux " << uplift_aux << ")\n";
      for (std::size_t i = 0; i < grid.bins; ++i)
        for (std::size_t j = 0; j < grid.bins; ++j)
          if (auto v = grid.at(i, j))
            out << "uplift[top1_bin=" << i << ",top10_bin=" << j << "] = " << *v << "\n";
    }
  }
  std::cout << out.str();
  write_text_file(resolve_out(report), out.str());
  return 0;
}

int cmd_eval_splice(const std::string& corpus_path, const std::string& ckpt,
                    const std::string& split, const std::string& conditioning,
                    const std::string& report) {
  auto corpus = load_corpus(corpus_path);
  Model model = model_from_checkpoint(ckpt);
  require_vocab_compatible(corpus.registry, model.vocabs());
  bool conditioned = conditioning == "tss_tes";
  auto logit_fn = model_splice_logits(model, corpus.registry);
  auto records = corpus.split_samples(split_from_name(split));
  auto res = splice_site_eval(logit_fn, records, corpus.registry, conditioned);
  std::ostringstream out;
  out << "records " << res.records << "  skipped " << res.skipped << "  mode "
      << (conditioned ? "tss_tes" : "none") << "\n";
  out << "aupr donor    " << res.aupr_donor << "\n";
  out << "aupr acceptor " << res.aupr_acceptor << "\n";
  out << "aupr macro    " << res.macro_aupr << "\n";
  out << "aupr micro    " << res.micro_aupr << "\n";
  for (const auto& [name, v] : res.strata_macro) out << "aupr macro [" << name << "] " << v << "\n";
  std::cout << out.str();
  write_text_file(resolve_out(report), out.str());
  return 0;
}

int cmd_eval_vep(const std::string& corpus_path, const std::string& ckpt, const std::string& wt,
                 const std::string& mut, long pos, std::size_t window, const std::string& split,
                 const std::string& report) {
  std::ostringstream out;
  if (!wt.empty()) {
    // File mode: two-column (index, value) profiles.
    VariantScoreInput in;
    in.wt_profile = read_two_column(wt);
    in.mut_profile = read_two_column(mut);
    in.variant_position = static_cast<std::size_t>(pos);
    in.window = window;
    auto score = phylop_vep(in);
    out << "s_delta_p " << score.score << "  window_used " << score.window_used << "\n";
  } else {
    // Model mode: predict conservation for each test sample and for a center
    // substitution, then score the perturbation.
    auto corpus = load_corpus(corpus_path);
    Model model = model_from_checkpoint(ckpt);
    require_vocab_compatible(corpus.registry, model.vocabs());
    std::vector<std::vector<double>> rows;
    for (const auto& sample : corpus.samples) {
      if (sample.split != split_from_name(split) || !sample.has("nt_seq") ||
          !sample.has("phylop"))
        continue;
      std::size_t center = sample.track("nt_seq").size() / 2;
      auto wt_profile = predict_profile(model, corpus.registry, sample, "phylop", {"nt_seq"});
      MultimodalSample mutant = sample;
      auto& nt = mutant.tracks["nt_seq"];
      nt[center] = (nt[center] + 1) % 4;
      auto mut_profile = predict_profile(model, corpus.registry, mutant, "phylop", {"nt_seq"});
      VariantScoreInput in;
      in.wt_profile = wt_profile;
      in.mut_profile = mut_profile;
      in.variant_position = center;
      in.window = window;
      auto score = phylop_vep(in);
      out << sample.id << "\ts_delta_p " << score.score << "\n";
      rows.push_back({static_cast<double>(rows.size()), score.score,
                      static_cast<double>(score.window_used)});
    }
    if (rows.empty()) throw std::runtime_error("no test samples with nt_seq and phylop");
    write_columns(resolve_out(report + ".columns.tsv"), {"record", "s_delta_p", "window"}, rows);
  }
  std::cout << out.str();
  write_text_file(resolve_out(report), out.str());
  return 0;
}

int cmd_eval_shape(const std::string& corpus_path, const std::string& ckpt,
                   const std::string& pairs_path, const std::string& reactivity_path,
                   double slope, double intercept, const std::string& split,
                   const std::string& report) {
  std::ostringstream out;
  std::vector<std::vector<double>> rows;
  if (!pairs_path.empty()) {
    // Structure mode: JSONL records {id, pred, seq, ref} of dot-bracket strings.
    std::istringstream in(read_text_file(pairs_path));
    std::string line;
    std::vector<std::pair<double, double>> f1_pairs;
    long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      auto ref = parse_dot_bracket(j.at("ref").get<std::string>());
      auto pred = pair_metrics(parse_dot_bracket(j.at("pred").get<std::string>()), ref);
      auto seq = pair_metrics(parse_dot_bracket(j.at("seq").get<std::string>()), ref);
      double df1 = delta_f1(pred.f1, seq.f1);
      f1_pairs.push_back({pred.f1, seq.f1});
      out << j.value("id", std::to_string(line_no)) << "\tF1_pred " << pred.f1 << "\tF1_seq "
          << seq.f1 << "\tdeltaF1 " << df1 << "\n";
      rows.push_back({static_cast<double>(line_no), pred.f1, seq.f1, df1});
    }
    if (f1_pairs.empty()) throw std::runtime_error("no structure records in " + pairs_path);
    try {
      auto w = wilcoxon_signed_rank_one_sided(f1_pairs);
      out << "wilcoxon one-sided p " << w.p_one_sided << (w.exact ? " (exact)" : " (normal)")
          << "  n " << w.n << "\n";
    } catch (const std::exception& e) {
      out << "wilcoxon: " << e.what() << "\n";
    }
    write_columns(resolve_out(report + ".columns.tsv"), {"record", "f1_pred", "f1_seq", "delta_f1"},
                  rows);
  } else if (!reactivity_path.empty()) {
    // Reactivity file mode: normalize and emit Deigan pseudo-energies.
    auto values = read_two_column(reactivity_path);
    auto norm = normalize_reactivity(values);
    DeiganParams dp{slope, intercept};
    for (std::size_t i = 0; i < norm.size(); ++i) {
      if (!std::isfinite(norm[i])) continue;
      rows.push_back({static_cast<double>(i + 1), norm[i], deigan_pseudo_energy(norm[i], dp)});
    }
    out << "normalized " << rows.size() << " reactivities (m " << slope << ", b " << intercept
        << ")\n";
    write_columns(resolve_out(report + ".columns.tsv"), {"index", "reactivity", "pseudo_energy"},
                  rows);
  } else {
    // Model mode: predicted reactivity vs ground truth, Pearson per sample.
    auto corpus = load_corpus(corpus_path);
    Model model = model_from_checkpoint(ckpt);
    require_vocab_compatible(corpus.registry, model.vocabs());
    const TokenizerSpec& spec = corpus.registry.at("rasp").tokenizer;
    std::vector<double> rs;
    for (const auto& sample : corpus.samples) {
      if (sample.split != split_from_name(split) || !sample.has("rasp") || !sample.has("nt_seq"))
        continue;
      auto predicted = predict_profile(model, corpus.registry, sample, "rasp",
                                       {"nt_seq", "context"});
      std::vector<double> truth, pred;
      const auto& ids = sample.track("rasp");
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (spec.is_special(ids[i]) || !std::isfinite(predicted[i])) continue;
        truth.push_back(spec.bin_centers[static_cast<std::size_t>(ids[i])]);
        pred.push_back(predicted[i]);
      }
      if (truth.size() < 2) continue;
      try {
        double r = pearson(truth, pred);
        rs.push_back(r);
        out << sample.id << "\tpearson " << r << "\n";
        rows.push_back({static_cast<double>(rows.size()), r});
      } catch (const std::exception&) {
        // zero-variance record: skipped
      }
    }
    if (rs.empty()) throw std::runtime_error("no scorable reactivity records");
    double mean = 0;
    for (double r : rs) mean += r;
    out << "mean pearson " << mean / static_cast<double>(rs.size()) << " over " << rs.size()
        << " records\n";
    write_columns(resolve_out(report + ".columns.tsv"), {"record", "pearson"}, rows);
  }
  std::cout << out.str();
  write_text_file(resolve_out(report), out.str());
  return 0;
}

int cmd_design_rna(const std::string& corpus_path, const std::string& ckpt,
                   const std::string& sample_id, long mutation, std::size_t width,
                   const std::string& conditioning, std::uint64_t seed, const std::string& out,
                   const std::vector<std::string>& argv_echo) {
  auto corpus = load_corpus(corpus_path);
  Model model = model_from_checkpoint(ckpt);
  require_vocab_compatible(corpus.registry, model.vocabs());
  const MultimodalSample* sample = nullptr;
  for (const auto& s : corpus.samples)
    if ((sample_id.empty() && s.has("nt_seq") && s.has("splice")) || s.id == sample_id) {
      sample = &s;
      break;
    }
  if (!sample) throw std::runtime_error("no suitable sample found (need nt_seq + splice)");

  std::set<std::string> cond = {"splice"};
  if (conditioning == "splice+phylop") cond.insert("phylop");
  else if (conditioning != "splice") throw std::runtime_error("unknown conditioning: " + conditioning);

  WindowCenterSpec spec;
  spec.mutation_pos = mutation;
  spec.width = width;
  spec.sequence_length = sample->track("nt_seq").size();
  auto centers = window_centers(spec);
  if (centers.empty()) throw std::runtime_error("no feasible design windows for this sequence");

  fs::path dir = resolve_out(out);
  fs::create_directories(dir);
  std::ostringstream designs;
  const auto& vocab = corpus.registry.at("nt_seq").tokenizer.vocab;
  for (std::int64_t center : centers) {
    DesignWindow w;
    w.center = center;
    w.width = width;
    auto ids = design_rna_window(model, corpus.registry, *sample, w, mutation, cond, 1e-8, seed);
    std::string seq;
    for (int id : ids)
      seq += id >= 0 && static_cast<std::size_t>(id) < vocab.size() ? vocab[static_cast<std::size_t>(id)] : "N";
    nlohmann::json j;
    j["center"] = center;
    j["width"] = width;
    j["sequence"] = seq;
    designs << j.dump() << "\n";
  }
  write_text_file(dir / "designs.jsonl", designs.str());
  write_manifest(dir, argv_echo, seed, 0, file_digest(fs::path(corpus_path) / "corpus.jsonl"));
  std::cout << "wrote " << centers.size() << " window designs to " << (dir / "designs.jsonl").string()
            << "\n";
  return 0;
}

int cmd_design_protein(const std::string& corpus_path, const std::string& ckpt,
                       const std::string& sample_id, const std::string& conditioning,
                       std::size_t n_draws, std::uint64_t seed, const std::string& out,
                       const std::vector<std::string>& argv_echo) {
  auto corpus = load_corpus(corpus_path);
  Model model = model_from_checkpoint(ckpt);
  require_vocab_compatible(corpus.registry, model.vocabs());

  std::set<std::string> mods;
  double coverage = 1.0;
  if (conditioning == "backbone") {
    mods = {"struct"};
  } else if (conditioning == "surface40" || conditioning == "surface100") {
    mods = {"masif_si", "masif_charge", "masif_hbond", "masif_hydro"};
    coverage = conditioning == "surface40" ? 0.4 : 1.0;
  } else if (conditioning == "backbone+surface40" || conditioning == "backbone+surface100") {
    mods = {"struct", "masif_si", "masif_charge", "masif_hbond", "masif_hydro"};
    coverage = conditioning == "backbone+surface40" ? 0.4 : 1.0;
  } else {
    throw std::runtime_error("unknown conditioning: " + conditioning);
  }

  const MultimodalSample* sample = nullptr;
  for (const auto& s : corpus.samples) {
    bool ok = s.has("aa_seq") && (sample_id.empty() || s.id == sample_id);
    for (const auto& m : mods) ok = ok && s.has(m);
    if (ok) {
      sample = &s;
      break;
    }
  }
  if (!sample) throw std::runtime_error("no sample carries the requested conditioning tracks");

  // Partial-coverage surfaces: keep a prefix fraction of positions, mask the
  // rest (uncovered positions are excluded from verification).
  MultimodalSample cond_sample = *sample;
  if (coverage < 1.0) {
    std::size_t len = cond_sample.track("aa_seq").size();
    std::size_t keep = static_cast<std::size_t>(coverage * static_cast<double>(len));
    for (const auto& m : mods) {
      if (m == "struct") continue;
      int mask_id = corpus.registry.at(m).tokenizer.mask_id;
      auto& ids = cond_sample.tracks[m];
      for (std::size_t i = keep; i < ids.size(); ++i) ids[i] = mask_id;
    }
  }

  auto conditioning_tracks = conditioning_from_sample(cond_sample, corpus.registry, mods);
  auto api = model_design_api(model, corpus.registry, cond_sample, mods);
  std::size_t len = cond_sample.track("aa_seq").size();

  fs::path dir = resolve_out(out);
  fs::create_directories(dir);
  std::ostringstream lines;
  const auto& vocab = corpus.registry.at("aa_seq").tokenizer.vocab;
  std::size_t satisfied_exits = 0;
  for (std::size_t d = 0; d < n_draws; ++d) {
    Rng hp_rng(derive_seed(seed, d));
    auto hp = sample_design_hyperparams(hp_rng);
    auto res = iterative_design(api, len, conditioning_tracks, hp, derive_seed(seed, 1000 + d));
    std::string seq;
    for (int id : res.sequence)
      seq += id >= 0 && static_cast<std::size_t>(id) < vocab.size() ? vocab[static_cast<std::size_t>(id)] : "X";
    bool ok = res.trace.exit_reason == DesignTrace::ExitReason::all_satisfied;
    satisfied_exits += ok ? 1 : 0;
    nlohmann::json j;
    j["draw"] = d;
    j["sequence"] = seq;
    j["cycles"] = res.trace.cycles.size();
    j["exit"] = ok ? "all_satisfied" : "max_cycles";
    j["temperature"] = {anneal_kind_name(hp.temperature_kind), hp.t_start, hp.t_end};
    j["resample"] = {anneal_kind_name(hp.resample_kind), hp.r_start, hp.r_end};
    j["acceptance"] = hp.acceptance_threshold;
    j["repeat_p"] = hp.repeat_resample_p;
    lines << j.dump() << "\n";
  }
  write_text_file(dir / "designs.jsonl", lines.str());
  write_manifest(dir, argv_echo, seed, 0, file_digest(fs::path(corpus_path) / "corpus.jsonl"));
  std::cout << "wrote " << n_draws << " designs (" << satisfied_exits
            << " satisfied exits) to " << (dir / "designs.jsonl").string() << "\n";
  return 0;
}

int cmd_inspect(const std::string& ckpt, const std::string& config_path) {
  if (!ckpt.empty()) {
    Checkpoint c = load_checkpoint(ckpt);
    std::cout << "config: " << c.config.to_json().dump() << "\n";
    std::cout << "train_step: " << c.train_step << "  optimizer: "
              << (c.has_optimizer ? "yes" : "no") << "\n";
    std::cout << "modalities:";
    for (const auto& m : c.vocabs.mods) std::cout << " " << m.name << "(" << m.vocab_size << ")";
    std::cout << "\n";
    std::size_t total = 0;
    for (const auto& e : c.params.entries) total += e.value.size();
    std::cout << "parameters: " << total << "\n";
    return 0;
  }
  Profile p = load_profile(config_path);
  std::cout << "config: " << p.model.to_json().dump() << "\n";
  VocabMap empty;
  std::cout << "core parameters (without embeddings/heads): "
            << parameter_count(p.model, empty) << "\n";
  std::cout << "stages: " << p.train.stages.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal split-track encoder-decoder toolkit"};
  app.set_version_flag("--version", std::string("strand ") + kArtifactVersion +
                                        " (corpus v1, checkpoint v1, tokenizer v1)");
  app.require_subcommand(1);

  std::vector<std::string> argv_echo(argv, argv + argc);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
  std::string g_recipe, g_out;
  std::size_t g_n = 100;
  std::uint64_t g_seed = 1;
  gen->add_option("--recipe", g_recipe, "recipe file")->required();
  gen->add_option("--n", g_n, "number of samples")->required();
  gen->add_option("--seed", g_seed, "rng seed");
  gen->add_option("--out", g_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string t_corpus, t_config, t_stages, t_pathways = "configs/pathways.json", t_out;
  std::uint64_t t_seed = 1;
  tr->add_option("--corpus", t_corpus, "corpus directory")->required();
  tr->add_option("--config", t_config, "profile file (desk.profile / paper.profile)")->required();
  tr->add_option("--stages", t_stages, "stage spec file (overrides profile stages)");
  tr->add_option("--pathways", t_pathways, "pathway registry file");
  tr->add_option("--seed", t_seed, "rng seed");
  tr->add_option("--out", t_out, "run directory")->required();

  // sched-sim
  auto* ss = app.add_subcommand("sched-sim", "simulate batching strategies");
  std::string s_corpus, s_affinity = "on", s_strategy = "bucketed", s_report;
  std::size_t s_stage = 0, s_budget = 0, s_workers = 4, s_buckets = 8;
  std::uint64_t s_seed = 1;
  ss->add_option("--corpus", s_corpus, "corpus directory")->required();
  ss->add_option("--stage", s_stage, "curriculum stage index (budgets 1k,2k,4k,8k,10k)");
  ss->add_option("--budget", s_budget, "explicit context budget (overrides --stage)");
  ss->add_option("--workers", s_workers, "worker count");
  ss->add_option("--affinity", s_affinity, "on|off")->check(CLI::IsMember({"on", "off"}));
  ss->add_option("--strategy", s_strategy, "naive|bucketed|packed")
      ->check(CLI::IsMember({"naive", "bucketed", "packed"}));
  ss->add_option("--buckets", s_buckets, "bucket count");
  ss->add_option("--seed", s_seed, "rng seed");
  ss->add_option("--report", s_report, "report path")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "evaluation procedures");
  ev->require_subcommand(1);
  auto* ec = ev->add_subcommand("complete", "masked sequence completion");
  std::string ec_corpus, ec_ckpt, ec_split = "test", ec_cond, ec_aux, ec_report;
  std::size_t ec_width = 100;
  ec->add_option("--corpus", ec_corpus)->required();
  ec->add_option("--ckpt", ec_ckpt)->required();
  ec->add_option("--split", ec_split)->check(CLI::IsMember({"train", "val", "test"}));
  ec->add_option("--mask-width", ec_width);
  ec->add_option("--conditioning", ec_cond, "comma-separated modalities");
  ec->add_option("--uplift-aux", ec_aux, "aux modality for uplift attribution");
  ec->add_option("--report", ec_report)->required();

  auto* es = ev->add_subcommand("splice", "splice-site AUPR");
  std::string es_corpus, es_ckpt, es_split = "test", es_cond = "none", es_report;
  es->add_option("--corpus", es_corpus)->required();
  es->add_option("--ckpt", es_ckpt)->required();
  es->add_option("--split", es_split)->check(CLI::IsMember({"train", "val", "test"}));
  es->add_option("--conditioning", es_cond)->check(CLI::IsMember({"none", "tss_tes"}));
  es->add_option("--report", es_report)->required();

  auto* evp = ev->add_subcommand("vep", "variant effect scoring");
  std::string ev_corpus, ev_ckpt, ev_wt, ev_mut, ev_split = "test", ev_report;
  long ev_pos = 0;
  std::size_t ev_window = 30;
  evp->add_option("--split", ev_split)->check(CLI::IsMember({"train", "val", "test"}));
  evp->add_option("--corpus", ev_corpus);
  evp->add_option("--ckpt", ev_ckpt);
  evp->add_option("--wt", ev_wt, "wild-type profile (two-column text)");
  evp->add_option("--mut", ev_mut, "mutant profile (two-column text)");
  evp->add_option("--pos", ev_pos, "variant position (0-based)");
  evp->add_option("--window", ev_window);
  evp->add_option("--report", ev_report)->required();

  auto* esh = ev->add_subcommand("shape", "structure and reactivity metrics");
  std::string sh_corpus, sh_ckpt, sh_pairs, sh_react, sh_split = "test", sh_report;
  double sh_m = 1.8, sh_b = -0.6;
  esh->add_option("--split", sh_split)->check(CLI::IsMember({"train", "val", "test"}));
  esh->add_option("--corpus", sh_corpus);
  esh->add_option("--ckpt", sh_ckpt);
  esh->add_option("--pairs", sh_pairs, "JSONL of {id, pred, seq, ref} dot-brackets");
  esh->add_option("--reactivity", sh_react, "two-column reactivity file");
  esh->add_option("--m", sh_m, "pseudo-energy slope");
  esh->add_option("--b", sh_b, "pseudo-energy intercept");
  esh->add_option("--report", sh_report)->required();

  // design
  auto* de = app.add_subcommand("design", "constrained generation");
  de->require_subcommand(1);
  auto* dr = de->add_subcommand("rna", "splice-conditioned window redesign");
  std::string dr_corpus, dr_ckpt, dr_sample, dr_cond = "splice", dr_out;
  long dr_mut = 0;
  std::size_t dr_width = 30;
  std::uint64_t dr_seed = 1;
  dr->add_option("--corpus", dr_corpus)->required();
  dr->add_option("--ckpt", dr_ckpt)->required();
  dr->add_option("--seq", dr_sample, "sample id (defaults to the first suitable record)");
  dr->add_option("--mutation", dr_mut, "protected variant position")->required();
  dr->add_option("--width", dr_width)->check(CLI::IsMember({"30", "50"}));
  dr->add_option("--conditioning", dr_cond)->check(CLI::IsMember({"splice", "splice+phylop"}));
  dr->add_option("--seed", dr_seed);
  dr->add_option("--out", dr_out)->required();

  auto* dp = de->add_subcommand("protein", "iterative generate-verify design");
  std::string dp_corpus, dp_ckpt, dp_sample, dp_cond = "backbone", dp_out;
  std::size_t dp_draws = 20;
  std::uint64_t dp_seed = 1;
  dp->add_option("--corpus", dp_corpus)->required();
  dp->add_option("--ckpt", dp_ckpt)->required();
  dp->add_option("--sample", dp_sample, "sample id");
  dp->add_option("--conditioning", dp_cond)
      ->check(CLI::IsMember({"backbone", "surface40", "surface100", "backbone+surface40",
                             "backbone+surface100"}));
  dp->add_option("--n-draws", dp_draws);
  dp->add_option("--seed", dp_seed);
  dp->add_option("--out", dp_out)->required();

  // inspect
  auto* in = app.add_subcommand("inspect", "print checkpoint or profile facts");
  std::string i_ckpt, i_config;
  in->add_option("--ckpt", i_ckpt, "checkpoint file");
  in->add_option("--config", i_config, "profile file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints usage/help
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(g_recipe, g_n, g_seed, g_out, argv_echo);
    if (tr->parsed())
      return cmd_train(t_corpus, t_config, t_stages, t_pathways, t_seed, t_out, argv_echo);
    if (ss->parsed())
      return cmd_sched_sim(s_corpus, s_stage, s_budget, s_workers, s_affinity, s_strategy,
                           s_buckets, s_seed, s_report, argv_echo);
    if (ec->parsed())
      return cmd_eval_complete(ec_corpus, ec_ckpt, ec_split, ec_width, ec_cond, ec_aux, ec_report);
    if (es->parsed()) return cmd_eval_splice(es_corpus, es_ckpt, es_split, es_cond, es_report);
    if (evp->parsed())
      return cmd_eval_vep(ev_corpus, ev_ckpt, ev_wt, ev_mut, ev_pos, ev_window, ev_split,
                          ev_report);
    if (esh->parsed())
      return cmd_eval_shape(sh_corpus, sh_ckpt, sh_pairs, sh_react, sh_m, sh_b, sh_split,
                            sh_report);
    if (dr->parsed())
      return cmd_design_rna(dr_corpus, dr_ckpt, dr_sample, dr_mut, dr_width, dr_cond, dr_seed,
                            dr_out, argv_echo);
    if (dp->parsed())
      return cmd_design_protein(dp_corpus, dp_ckpt, dp_sample, dp_cond, dp_draws, dp_seed, dp_out,
                                argv_echo);
    if (in->parsed()) {
      if (i_ckpt.empty() && i_config.empty())
        throw std::runtime_error("inspect needs --ckpt or --config");
      return cmd_inspect(i_ckpt, i_config);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
