#include "mmlm/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <set>
#include <thread>

#include "mmlm/checkpoint.hpp"
#include "mmlm/errors.hpp"
#include "mmlm/generation.hpp"
#include "mmlm/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using nlohmann::ordered_json;

namespace mmlm {

namespace {

struct VariantRow {
  Variant variant;
  const char* name;
  bool transfer;
  bool source_visual;
  bool target_visual;
};

constexpr VariantRow kVariants[] = {
    {Variant::LM_only, "LM_only", false, false, false},
    {Variant::MLM_only, "MLM_only", false, false, true},
    {Variant::LM_to_LM, "LM_to_LM", true, false, false},
    {Variant::MLM_to_MLM, "MLM_to_MLM", true, true, true},
    {Variant::LM_to_MLM, "LM_to_MLM", true, false, true},
    {Variant::MLM_to_LM, "MLM_to_LM", true, true, false},
};

const VariantRow& row(Variant v) {
  for (const auto& r : kVariants) {
    if (r.variant == v) return r;
  }
  throw ConfigError("unknown variant");
}

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string fixed2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string pm(const RunSummary& s) { return fixed2(s.mean) + " ± " + fixed2(s.stddev); }

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

// Rejects keys outside `allowed` so that typos in config files fail loudly.
void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(std::string("unknown key '") + key + "' in " + what);
    }
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "': " + j.at(key).dump());
  }
}

SideModel side_from_json(const json& j, const char* what) {
  check_keys(j, {"hidden_size", "embedding_size"}, what);
  SideModel s;
  read_if(j, "hidden_size", s.hidden_size);
  read_if(j, "embedding_size", s.embedding_size);
  return s;
}

std::string split_fingerprint(const std::string& language, const std::vector<std::string>& ids) {
  std::string joined;
  for (const auto& id : ids) joined += id + "\n";
  return language + ":" + git_blob_sha1(joined);
}

ordered_json metrics_json(const SideMetrics& m) {
  ordered_json j;
  j["bleu"] = m.bleu;
  j["perplexity"] = m.perplexity;
  j["best_epoch"] = m.best_epoch;
  j["epochs"] = m.epochs;
  return j;
}

SideMetrics metrics_from(const json& j) {
  SideMetrics m;
  m.bleu = j.at("bleu").get<double>();
  m.perplexity = j.at("perplexity").get<double>();
  m.best_epoch = j.at("best_epoch").get<std::size_t>();
  m.epochs = j.at("epochs").get<std::size_t>();
  return m;
}

ordered_json summary_json(const RunSummary& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }
RunSummary summary_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

// Which stage a seed is in, for error reports.
struct StageError : Error {
  StageError(std::string stage, const std::string& what) : Error(what), stage(std::move(stage)) {}
  std::string stage;
};

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct SideRun {
  ConditionedSequenceModel model;
  SideMetrics metrics;
};

// Distinct, reproducible streams for the source (0) and target (1) side.
std::uint64_t side_seed(std::uint64_t seed, std::uint64_t side) { return seed * 2 + side; }

SideRun train_side(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed, std::uint64_t side,
                   const TrainingData& train_data, const TrainingData& val_data, TrainerConfig trainer,
                   const fs::path& dir, const std::string& prefix) {
  Rng rng(side_seed(seed, side));
  const ConditionedSequenceModel init(config, vocab, initialize_params(config, rng));
  trainer.seed = side_seed(seed, side);
  const fs::path ckpt = dir / (prefix + ".ckpt");
  auto result = train(init, train_data, val_data, trainer,
                      [&](const ConditionedSequenceModel& best, const EpochRecord&, bool improved) {
                        if (improved) save_checkpoint(ckpt, best);
                      });
  write_file_atomic(dir / (prefix + ".log.jsonl"), result.log.jsonl());
  SideMetrics m;
  m.best_epoch = result.log.best_epoch;
  m.epochs = result.log.epochs.size();
  return {std::move(result.model), m};
}

void evaluate_side(SideRun& run, const TrainingData& test, const TrainerConfig& trainer, const fs::path& dir,
                   const std::string& prefix) {
  GenerationConfig gen;
  gen.max_steps = trainer.generation_max_steps;
  const Generations hyps = generate_corpus(run.model, test.corpus->ids(), test.visual, test.source, gen);
  TokenMap refs;
  for (const auto& item : test.corpus->items()) refs[item.id] = item.tokens;
  run.metrics.bleu = bleu4(hyps, refs).bleu;
  run.metrics.perplexity = evaluate_perplexity(run.model, test);
  write_file_atomic(dir / (prefix + ".test.gen"), format_generations(hyps));
}

ModelConfig side_config(const SideModel& side, std::size_t vocab_size, ConditioningSpec spec) {
  ModelConfig c;
  c.hidden_size = side.hidden_size;
  c.embedding_size = side.embedding_size;
  c.vocab_size = vocab_size;
  c.conditioning = spec;
  return c;
}

SeedOutcome run_seed(const ExperimentConfig& cfg, const PreparedDataset& data, std::uint64_t seed,
                     const fs::path& dir) {
  SeedOutcome out;
  out.seed = seed;
  const VariantRow& v = row(cfg.variant);
  const FeatureStore* images = (v.source_visual || v.target_visual) ? &data.features() : nullptr;
  try {
    fs::create_directories(dir);
    std::optional<TransferFeatures> transfer[3];
    static constexpr const char* kSplits[] = {"train", "val", "test"};
    if (v.transfer) {
      const auto& lang = cfg.source_language;
      const Vocabulary& vocab = data.vocabulary(lang);
      const ConditioningSpec spec = v.source_visual ? ConditioningSpec::visual(data.feature_dim()) : ConditioningSpec::none();
      auto src = stage("source-train", [&] {
        return train_side(side_config(cfg.source_model, vocab.size(), spec), vocab, seed, 0,
                          {&data.corpus(lang, "train"), images, nullptr}, {&data.corpus(lang, "val"), images, nullptr},
                          cfg.trainer, dir, "source");
      });
      stage("source-evaluate", [&] {
        evaluate_side(src, {&data.corpus(lang, "test"), images, nullptr}, cfg.trainer, dir, "source");
        return 0;
      });
      out.source = src.metrics;
      stage("extract", [&] {
        for (int s = 0; s < 3; ++s) {
          const fs::path path = dir / ("transfer." + std::string(kSplits[s]) + ".mmf");
          save_transfer_features(path, extract_stage(dir / "source.ckpt", data.corpus(lang, kSplits[s]), vocab, images));
          // Read back so the target sees exactly what the file holds.
          transfer[s] = load_transfer_features(path);
        }
        if (transfer[0]->source_checkpoint != transfer[1]->source_checkpoint ||
            transfer[0]->source_checkpoint != transfer[2]->source_checkpoint) {
          throw DataError("transfer features for train/val/test come from different source checkpoints");
        }
        return 0;
      });
    }

    const auto& lang = cfg.target_language;
    const Vocabulary& vocab = data.vocabulary(lang);
    ConditioningSpec spec;
    if (v.target_visual) {
      spec.use_visual = true;
      spec.visual_dim = data.feature_dim();
    }
    if (v.transfer) {
      spec.use_source = true;
      spec.source_dim = cfg.source_model.hidden_size;
    }
    auto feats = [&](int s) { return v.transfer ? &transfer[s]->store : nullptr; };
    auto tgt = stage("target-train", [&] {
      return train_side(side_config(cfg.target_model, vocab.size(), spec), vocab, seed, 1,
                        {&data.corpus(lang, "train"), images, feats(0)}, {&data.corpus(lang, "val"), images, feats(1)},
                        cfg.trainer, dir, "target");
    });
    stage("target-evaluate", [&] {
      evaluate_side(tgt, {&data.corpus(lang, "test"), images, feats(2)}, cfg.trainer, dir, "target");
      return 0;
    });
    out.target = tgt.metrics;

    ordered_json m;
    m["seed"] = seed;
    if (out.source) m["source"] = metrics_json(*out.source);
    m["target"] = metrics_json(*out.target);
    write_file_atomic(dir / "metrics.json", m.dump(2) + "\n");
  } catch (const StageError& e) {
    out.failed_stage = e.stage;
    out.error = e.what();
  } catch (const std::exception& e) {
    out.failed_stage = "setup";
    out.error = e.what();
  }
  return out;
}

}  // namespace

std::string_view variant_name(Variant v) { return row(v).name; }

Variant parse_variant(std::string_view name) {
  for (const auto& r : kVariants) {
    if (name == r.name) return r.variant;
  }
  std::string known;
  for (const auto& r : kVariants) known += std::string(known.empty() ? "" : ", ") + r.name;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected one of " + known + ")");
}

bool is_transfer(Variant v) { return row(v).transfer; }
bool source_is_multimodal(Variant v) { return row(v).source_visual; }
bool target_is_multimodal(Variant v) { return row(v).target_visual; }

std::string variant_label(Variant v, const std::string& source_language, const std::string& target_language) {
  const VariantRow& r = row(v);
  const std::string target = capitalized(target_language) + (r.target_visual ? " MLM" : " LM");
  if (!r.transfer) return target;
  return capitalized(source_language) + (r.source_visual ? " MLM" : " LM") + " -> " + target;
}

void save_transfer_features(const fs::path& path, const TransferFeatures& features) {
  save_features(path, features.store);
  ordered_json j;
  j["source_checkpoint"] = features.source_checkpoint;
  j["split"] = features.split;
  j["dim"] = features.store.dim();
  j["count"] = features.store.size();
  j["features_sha1"] = git_blob_sha1_file(path);
  write_file_atomic(fs::path(path.string() + ".json"), j.dump(2) + "\n");
}

TransferFeatures load_transfer_features(const fs::path& path) {
  const fs::path sidecar(path.string() + ".json");
  if (!fs::exists(sidecar)) throw DataError("transfer features " + path.string() + " have no provenance file " + sidecar.string());
  json j;
  try {
    j = json::parse(read_file(sidecar));
  } catch (const json::exception& e) {
    throw FormatError(sidecar.string() + ": " + e.what());
  }
  TransferFeatures out;
  out.store = load_features(path, j.value("dim", std::size_t{0}));
  out.source_checkpoint = j.value("source_checkpoint", "");
  out.split = j.value("split", "");
  if (j.contains("features_sha1") && j["features_sha1"] != git_blob_sha1_file(path)) {
    throw DataError(path.string() + " does not match the hash recorded in " + sidecar.string());
  }
  return out;
}

TransferFeatures extract_stage(const fs::path& checkpoint, const Corpus& corpus, const Vocabulary& vocabulary,
                               const FeatureStore* visual) {
  const ConditionedSequenceModel model = load_checkpoint(checkpoint);
  if (!(model.vocabulary() == vocabulary)) {
    throw DataError("checkpoint " + checkpoint.string() + " was trained with a different " + corpus.language() +
                    " vocabulary (" + std::to_string(model.vocabulary().size()) + " vs " +
                    std::to_string(vocabulary.size()) + " entries)");
  }
  if (model.conditioning().use_source) {
    throw ConfigError("transfer features come from source models without source conditioning");
  }
  TransferFeatures out;
  out.store = extract_final_hidden(model, corpus, visual);
  out.source_checkpoint = git_blob_sha1_file(checkpoint);
  out.split = corpus.split();
  return out;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (std::set(seeds.begin(), seeds.end()).size() != seeds.size()) throw ConfigError("seeds must be distinct");
  if (jobs == 0) throw ConfigError("jobs must be at least 1");
  if (target_language.empty()) throw ConfigError("target_language is required");
  if (is_transfer(variant) && source_language == target_language) {
    throw ConfigError("transfer variants need different source and target languages");
  }
  for (const SideModel* s : {&source_model, &target_model}) {
    if (s->hidden_size == 0 || s->embedding_size == 0) throw ConfigError("model sizes must be positive");
  }
  trainer.validate();
}

void to_json(json& j, const TrainerConfig& c) {
  j = ordered_json{{"batch_size", c.batch_size},
                   {"learning_rate", c.learning_rate},
                   {"beta1", c.beta1},
                   {"beta2", c.beta2},
                   {"epsilon", c.epsilon},
                   {"dropout_p", c.dropout_p},
                   {"l2_lambda", c.l2_lambda},
                   {"patience", c.patience},
                   {"max_epochs", c.max_epochs},
                   {"seed", c.seed},
                   {"generation_max_steps", c.generation_max_steps}};
}

void from_json(const json& j, TrainerConfig& c) {
  check_keys(j,
             {"batch_size", "learning_rate", "beta1", "beta2", "epsilon", "dropout_p", "l2_lambda", "patience",
              "max_epochs", "seed", "generation_max_steps"},
             "trainer");
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "learning_rate", c.learning_rate);
  read_if(j, "beta1", c.beta1);
  read_if(j, "beta2", c.beta2);
  read_if(j, "epsilon", c.epsilon);
  read_if(j, "dropout_p", c.dropout_p);
  read_if(j, "l2_lambda", c.l2_lambda);
  read_if(j, "patience", c.patience);
  read_if(j, "max_epochs", c.max_epochs);
  read_if(j, "seed", c.seed);
  read_if(j, "generation_max_steps", c.generation_max_steps);
}

void to_json(json& j, const ExperimentConfig& c) {
  j = ordered_json{
      {"variant", std::string(variant_name(c.variant))},
      {"source_language", c.source_language},
      {"target_language", c.target_language},
      {"source_model", {{"hidden_size", c.source_model.hidden_size}, {"embedding_size", c.source_model.embedding_size}}},
      {"target_model", {{"hidden_size", c.target_model.hidden_size}, {"embedding_size", c.target_model.embedding_size}}},
      {"trainer", c.trainer},
      {"seeds", c.seeds},
      {"jobs", c.jobs}};
}

void from_json(const json& j, ExperimentConfig& c) {
  check_keys(j,
             {"variant", "source_language", "target_language", "source_model", "target_model", "trainer", "seeds",
              "jobs", "dataset"},
             "experiment config");
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  read_if(j, "source_language", c.source_language);
  read_if(j, "target_language", c.target_language);
  if (j.contains("source_model")) c.source_model = side_from_json(j.at("source_model"), "source_model");
  if (j.contains("target_model")) c.target_model = side_from_json(j.at("target_model"), "target_model");
  if (j.contains("trainer")) from_json(j.at("trainer"), c.trainer);
  read_if(j, "seeds", c.seeds);
  read_if(j, "jobs", c.jobs);
}

std::string ExperimentReport::table() const {
  const bool transfer = is_transfer(variant);
  std::string out = pad("Variant", 24) + pad("BLEU", 16) + "PPLX\n";
  out += pad(label(), 24) + pad(pm(bleu), 17) + pm(perplexity) + "\n";
  if (transfer && source_bleu && source_perplexity) {
    out += pad("  source " + capitalized(source_language) + (source_is_multimodal(variant) ? " MLM" : " LM"), 24) +
           pad(pm(*source_bleu), 17) + pm(*source_perplexity) + "\n";
  }
  std::size_t ok = 0;
  for (const auto& s : seeds) ok += s.ok();
  out += "seeds: " + std::to_string(ok) + "/" + std::to_string(seeds.size()) + " succeeded\n";
  for (const auto& s : seeds) {
    if (!s.ok()) out += "  seed " + std::to_string(s.seed) + " failed in " + s.failed_stage + ": " + s.error + "\n";
  }
  return out;
}

std::string ExperimentReport::json() const {
  ordered_json j;
  j["variant"] = std::string(variant_name(variant));
  j["label"] = label();
  j["source_language"] = source_language;
  j["target_language"] = target_language;
  j["test_split"] = test_split;
  j["bleu"] = summary_json(bleu);
  j["perplexity"] = summary_json(perplexity);
  if (source_bleu) j["source_bleu"] = summary_json(*source_bleu);
  if (source_perplexity) j["source_perplexity"] = summary_json(*source_perplexity);
  j["seeds"] = ordered_json::array();
  for (const auto& s : seeds) {
    ordered_json e;
    e["seed"] = s.seed;
    if (s.source) e["source"] = metrics_json(*s.source);
    if (s.target) e["target"] = metrics_json(*s.target);
    if (!s.ok()) {
      e["failed_stage"] = s.failed_stage;
      e["error"] = s.error;
    }
    j["seeds"].push_back(e);
  }
  return j.dump(2) + "\n";
}

ExperimentReport ExperimentReport::from_json(const std::string& text, const std::string& origin) {
  try {
    const auto j = json::parse(text);
    ExperimentReport r;
    r.variant = parse_variant(j.at("variant").get<std::string>());
    r.source_language = j.at("source_language").get<std::string>();
    r.target_language = j.at("target_language").get<std::string>();
    r.test_split = j.at("test_split").get<std::string>();
    r.bleu = summary_from(j.at("bleu"));
    r.perplexity = summary_from(j.at("perplexity"));
    if (j.contains("source_bleu")) r.source_bleu = summary_from(j.at("source_bleu"));
    if (j.contains("source_perplexity")) r.source_perplexity = summary_from(j.at("source_perplexity"));
    for (const auto& e : j.at("seeds")) {
      SeedOutcome s;
      s.seed = e.at("seed").get<std::uint64_t>();
      if (e.contains("source")) s.source = metrics_from(e.at("source"));
      if (e.contains("target")) s.target = metrics_from(e.at("target"));
      s.failed_stage = e.value("failed_stage", "");
      s.error = e.value("error", "");
      r.seeds.push_back(s);
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(origin + ": not an experiment report: " + e.what());
  }
}

ExperimentReport run_experiment(const ExperimentConfig& config, const PreparedDataset& data, const fs::path& out_dir) {
  config.validate();
  const VariantRow& v = row(config.variant);
  if (!data.has_language(config.target_language)) {
    throw ConfigError("dataset has no target language '" + config.target_language + "'");
  }
  if (v.transfer && !data.has_language(config.source_language)) {
    throw ConfigError("dataset has no source language '" + config.source_language + "'");
  }
  if ((v.source_visual || v.target_visual)) {
    if (!data.has_features()) {
      throw ConfigError(std::string(v.name) + " needs image features but the dataset has none");
    }
    data.features();  // load once before the workers share it
  }
  for (const char* s : {"train", "val", "test"}) {
    if (data.split(s).empty()) throw DataError(std::string("dataset has an empty ") + s + " split");
  }

  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "config.json", json(config).dump(2) + "\n");

  const auto& seeds = config.seeds;
  std::vector<SeedOutcome> outcomes(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < seeds.size();) {
      outcomes[i] = run_seed(config, data, seeds[i], out_dir / ("seed-" + std::to_string(seeds[i])));
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n = std::min(config.jobs, seeds.size());
    for (std::size_t k = 1; k < n; ++k) pool.emplace_back(worker);
    worker();
  }

  ExperimentReport report;
  report.variant = config.variant;
  report.source_language = v.transfer ? config.source_language : "";
  report.target_language = config.target_language;
  report.test_split = split_fingerprint(config.target_language, data.split("test"));
  report.seeds = outcomes;

  std::vector<double> bleu, ppl, sbleu, sppl;
  std::string failures;
  for (const auto& o : outcomes) {
    if (!o.ok()) {
      failures += "\n  seed " + std::to_string(o.seed) + " [" + o.failed_stage + "]: " + o.error;
      continue;
    }
    bleu.push_back(o.target->bleu);
    ppl.push_back(o.target->perplexity);
    if (o.source) {
      sbleu.push_back(o.source->bleu);
      sppl.push_back(o.source->perplexity);
    }
  }
  if (bleu.empty()) throw Error("every seed failed:" + failures);
  report.bleu = aggregate_runs(bleu);
  report.perplexity = aggregate_runs(ppl);
  if (!sbleu.empty()) {
    report.source_bleu = aggregate_runs(sbleu);
    report.source_perplexity = aggregate_runs(sppl);
  }
  write_file_atomic(out_dir / "report.json", report.json());
  write_file_atomic(out_dir / "report.txt", report.table());
  return report;
}

std::vector<ComparisonRow> compare_variants(std::span<const ExperimentReport> reports) {
  if (reports.empty()) throw DataError("nothing to compare");
  for (const auto& r : reports) {
    if (r.test_split != reports.front().test_split) {
      throw DataError("reports were evaluated on different test splits (" + reports.front().test_split + " vs " +
                      r.test_split + ")");
    }
  }
  const ExperimentReport* baseline = nullptr;
  for (Variant b : {Variant::MLM_only, Variant::LM_only}) {
    for (const auto& r : reports) {
      if (!baseline && r.variant == b) baseline = &r;
    }
  }
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) {
    ComparisonRow c{r.label(), r.variant, r.bleu, r.perplexity, std::nullopt};
    if (baseline) c.delta_bleu = r.bleu.mean - baseline->bleu.mean;
    rows.push_back(c);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ComparisonRow& a, const ComparisonRow& b) { return a.bleu.mean > b.bleu.mean; });
  return rows;
}

std::string format_comparison(std::span<const ComparisonRow> rows) {
  std::string out = pad("Variant", 24) + pad("BLEU", 16) + pad("PPLX", 16) + "dBLEU\n";
  for (const auto& r : rows) {
    std::string delta = "-";
    if (r.delta_bleu) delta = (*r.delta_bleu >= 0 ? "+" : "") + fixed2(*r.delta_bleu);
    out += pad(r.label, 24) + pad(pm(r.bleu), 17) + pad(pm(r.perplexity), 17) + delta + "\n";
  }
  return out;
}

}  // namespace mmlm
