#include "mmlm/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmlm/checkpoint.hpp"
#include "mmlm/dataset.hpp"
#include "mmlm/errors.hpp"
#include "mmlm/generation.hpp"
#include "mmlm/io.hpp"
#include "mmlm/metrics.hpp"
#include "mmlm/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mmlm {
namespace {

constexpr const char* kVersion = "0.1.0";

// Files a command read and wrote, for the run manifest.
struct RunRecord {
  std::map<std::string, fs::path> inputs;
};

using Command = std::function<std::string(const json& config, const fs::path& run_dir, RunRecord& record)>;

std::string hash_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& f : files) listing += fs::relative(f, dir).generic_string() + "\t" + git_blob_sha1_file(f) + "\n";
  return git_blob_sha1(listing);
}

std::string hash_path(const fs::path& p) {
  if (fs::is_directory(p)) return hash_dir(p);
  return git_blob_sha1_file(p);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + what + " config");
    }
  }
}

std::string need_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) throw ConfigError(std::string("missing required setting '") + key + "'");
  if (!j.at(key).is_string()) throw ConfigError(std::string("setting '") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return need_string(j, key);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "': " + j.at(key).dump());
  }
}

fs::path input_file(RunRecord& record, const std::string& key, const std::string& path) {
  if (!fs::exists(path)) throw DataError(key + ": file not found: " + path);
  record.inputs[key] = path;
  return path;
}

PreparedDataset load_dataset(const json& cfg, RunRecord& record) {
  const fs::path dir = input_file(record, "dataset", need_string(cfg, "dataset"));
  return PreparedDataset::load(dir);
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

// --- prepare ---------------------------------------------------------------

std::string cmd_prepare(const json& cfg, const fs::path& run_dir, RunRecord& record) {
  check_keys(cfg, {"captions", "features", "feature_dim", "split_manifest", "val_fraction", "test_fraction", "seed", "min_count"},
             "prepare");
  PrepareConfig pc;
  if (!cfg.contains("captions") || !cfg.at("captions").is_object() || cfg.at("captions").empty()) {
    throw ConfigError("prepare needs 'captions': {\"<language>\": \"<file>\", ...}");
  }
  for (const auto& [lang, path] : cfg.at("captions").items()) {
    if (!path.is_string()) throw ConfigError("captions." + lang + " must be a path");
    pc.captions[lang] = input_file(record, "captions." + lang, path.get<std::string>());
  }
  if (auto f = opt_string(cfg, "features")) pc.features = input_file(record, "features", *f);
  if (auto s = opt_string(cfg, "split_manifest")) pc.split_manifest = input_file(record, "split_manifest", *s);
  pc.feature_dim = get_or<std::size_t>(cfg, "feature_dim", 0);
  pc.fractions.val = get_or<double>(cfg, "val_fraction", 0.1);
  pc.fractions.test = get_or<double>(cfg, "test_fraction", 0.1);
  pc.seed = get_or<std::uint64_t>(cfg, "seed", 1);
  pc.min_count = get_or<int>(cfg, "min_count", 3);
  return prepare_dataset(pc, run_dir).str();
}

// --- train -----------------------------------------------------------------

std::optional<TransferFeatures> load_source(RunRecord& record, const json& cfg, const char* split) {
  if (!cfg.contains("source_features") || cfg.at("source_features").is_null()) return std::nullopt;
  const json& sf = cfg.at("source_features");
  if (!sf.is_object() || !sf.contains(split)) {
    throw ConfigError(std::string("source_features must map '") + split + "' to a transfer feature file");
  }
  const std::string key = std::string("source_features.") + split;
  return load_transfer_features(input_file(record, key, sf.at(split).get<std::string>()));
}

std::string cmd_train(const json& cfg, const fs::path& run_dir, RunRecord& record) {
  check_keys(cfg, {"dataset", "language", "visual", "source_features", "model", "trainer", "seed"}, "train");
  const PreparedDataset data = load_dataset(cfg, record);
  const std::string lang = need_string(cfg, "language");
  const bool visual = get_or<bool>(cfg, "visual", false);
  if (visual && !data.has_features()) {
    throw ConfigError("visual conditioning requested but the dataset has no image features");
  }
  const auto src_train = load_source(record, cfg, "train");
  const auto src_val = load_source(record, cfg, "val");
  if (src_train && src_train->source_checkpoint != src_val->source_checkpoint) {
    throw DataError("train and val source features come from different source checkpoints");
  }

  ExperimentConfig defaults;
  SideModel side = defaults.target_model;
  if (cfg.contains("model")) {
    json m = cfg.at("model");
    check_keys(m, {"hidden_size", "embedding_size"}, "train.model");
    side.hidden_size = get_or(m, "hidden_size", side.hidden_size);
    side.embedding_size = get_or(m, "embedding_size", side.embedding_size);
  }
  TrainerConfig trainer;
  if (cfg.contains("trainer")) trainer = cfg.at("trainer").get<TrainerConfig>();
  trainer.seed = get_or<std::uint64_t>(cfg, "seed", 1);

  const Vocabulary& vocab = data.vocabulary(lang);
  ModelConfig mc;
  mc.hidden_size = side.hidden_size;
  mc.embedding_size = side.embedding_size;
  mc.vocab_size = vocab.size();
  if (visual) mc.conditioning = ConditioningSpec::visual(data.feature_dim());
  if (src_train) {
    mc.conditioning.use_source = true;
    mc.conditioning.source_dim = src_train->store.dim();
  }
  mc.validate();
  const FeatureStore* images = visual ? &data.features() : nullptr;

  Rng rng(trainer.seed);
  const ConditionedSequenceModel init(mc, vocab, initialize_params(mc, rng));
  const fs::path ckpt = run_dir / "model.ckpt";
  auto result = train(init, {&data.corpus(lang, "train"), images, src_train ? &src_train->store : nullptr},
                      {&data.corpus(lang, "val"), images, src_val ? &src_val->store : nullptr}, trainer,
                      [&](const ConditionedSequenceModel& best, const EpochRecord&, bool improved) {
                        if (improved) save_checkpoint(ckpt, best);
                      });
  write_file_atomic(run_dir / "train.log.jsonl", result.log.jsonl());
  const auto& best = result.log.epochs.at(result.log.best_epoch - 1);
  json summary;
  summary["best_epoch"] = result.log.best_epoch;
  summary["epochs"] = result.log.epochs.size();
  summary["stop_reason"] = result.log.stop_reason;
  summary["val_bleu"] = best.val_bleu;
  summary["val_perplexity"] = best.val_perplexity;
  write_file_atomic(run_dir / "summary.json", summary.dump(2) + "\n");
  return "trained " + std::to_string(result.log.epochs.size()) + " epochs (" + result.log.stop_reason +
         "); best epoch " + std::to_string(result.log.best_epoch) + ": val BLEU " + fixed(best.val_bleu, 2) +
         ", val PPLX " + fixed(best.val_perplexity, 3) + "\n";
}

// --- extract ---------------------------------------------------------------

std::string cmd_extract(const json& cfg, const fs::path& run_dir, RunRecord& record) {
  check_keys(cfg, {"checkpoint", "dataset", "language", "splits"}, "extract");
  const PreparedDataset data = load_dataset(cfg, record);
  const fs::path ckpt = input_file(record, "checkpoint", need_string(cfg, "checkpoint"));
  const std::string lang = need_string(cfg, "language");
  const auto splits = get_or<std::vector<std::string>>(cfg, "splits", {"train", "val", "test"});
  const ConditionedSequenceModel probe = load_checkpoint(ckpt);
  const FeatureStore* images = nullptr;
  if (probe.conditioning().use_visual) {
    if (!data.has_features()) throw ConfigError("checkpoint is image-conditioned but the dataset has no image features");
    images = &data.features();
  }
  std::string out;
  for (const auto& split : splits) {
    const TransferFeatures tf = extract_stage(ckpt, data.corpus(lang, split), data.vocabulary(lang), images);
    save_transfer_features(run_dir / ("transfer." + split + ".mmf"), tf);
    out += split + ": " + std::to_string(tf.store.size()) + " vectors of dim " + std::to_string(tf.store.dim()) + "\n";
  }
  return out;
}

// --- generate --------------------------------------------------------------

std::string cmd_generate(const json& cfg, const fs::path& run_dir, RunRecord& record) {
  check_keys(cfg, {"checkpoint", "dataset", "language", "split", "source_features", "max_steps", "include_markers"},
             "generate");
  const PreparedDataset data = load_dataset(cfg, record);
  const ConditionedSequenceModel model = load_checkpoint(input_file(record, "checkpoint", need_string(cfg, "checkpoint")));
  const std::string lang = need_string(cfg, "language");
  const std::string split = get_or<std::string>(cfg, "split", "test");
  if (!(model.vocabulary() == data.vocabulary(lang))) {
    throw DataError("checkpoint vocabulary does not match the dataset's " + lang + " vocabulary");
  }
  const FeatureStore* images = nullptr;
  if (model.conditioning().use_visual) {
    if (!data.has_features()) throw ConfigError("checkpoint is image-conditioned but the dataset has no image features");
    images = &data.features();
  }
  std::optional<TransferFeatures> source;
  if (model.conditioning().use_source) {
    const auto path = opt_string(cfg, "source_features");
    if (!path) throw ConfigError("checkpoint is source-conditioned; set source_features to a transfer feature file");
    source = load_transfer_features(input_file(record, "source_features", *path));
  }
  GenerationConfig gen;
  gen.max_steps = get_or<std::size_t>(cfg, "max_steps", 30);
  gen.include_markers = get_or<bool>(cfg, "include_markers", false);
  const Generations g =
      generate_corpus(model, data.split(split), images, source ? &source->store : nullptr, gen);
  write_file_atomic(run_dir / "generations.txt", format_generations(g));
  return "generated " + std::to_string(g.size()) + " descriptions\n";
}

// --- evaluate --------------------------------------------------------------

std::string cmd_evaluate(const json& cfg, const fs::path& run_dir, RunRecord& record) {
  check_keys(cfg, {"hypotheses", "references"}, "evaluate");
  const Generations hyps = read_generations(input_file(record, "hypotheses", need_string(cfg, "hypotheses")));
  const Generations refs = read_generations(input_file(record, "references", need_string(cfg, "references")));
  const BleuReport bleu = bleu4(hyps, refs);
  json j;
  j["bleu"] = bleu.bleu;
  j["precisions"] = bleu.precisions;
  j["brevity_penalty"] = bleu.brevity_penalty;
  j["hypothesis_length"] = bleu.hypothesis_length;
  j["reference_length"] = bleu.reference_length;
  j["sentence_metric"] = "add-one smoothed sentence BLEU-4 (in place of sentence Meteor)";
  write_file_atomic(run_dir / "bleu.json", j.dump(2) + "\n");
  std::string scores;
  for (const auto& [id, s] : sentence_scores(hyps, refs)) scores += id + "\t" + fixed(s, 6) + "\n";
  write_file_atomic(run_dir / "sentence_scores.tsv", scores);
  write_file_atomic(run_dir / "report.txt", bleu.str() + "\n");
  return bleu.str() + "\n";
}

// --- analyze ---------------------------------------------------------------

std::map<std::string, double> read_scores(const fs::path& path) {
  std::map<std::string, double> out;
  const std::string text = read_file(path);
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (tab == std::string::npos) throw DataError(where + ": expected <item_id>\\t<score>");
    double v;
    try {
      std::size_t used = 0;
      v = std::stod(line.substr(tab + 1), &used);
    } catch (const std::exception&) {
      throw DataError(where + ": bad score");
    }
    if (!out.emplace(line.substr(0, tab), v).second) throw DataError(where + ": duplicate item id");
  }
  return out;
}

std::string cmd_analyze(const json& cfg, const fs::path& run_dir, RunRecord& record) {
  check_keys(cfg, {"compare", "bins", "features", "query", "k", "reports"}, "analyze");
  const int modes = int(cfg.contains("compare")) + int(cfg.contains("features")) + int(cfg.contains("reports"));
  if (modes != 1) throw ConfigError("analyze needs exactly one of --compare, --neighbors or --reports");

  if (cfg.contains("compare")) {
    const auto files = cfg.at("compare").get<std::vector<std::string>>();
    if (files.size() != 2) throw ConfigError("--compare takes two sentence score files: A (baseline) and B");
    const auto a = read_scores(input_file(record, "compare.a", files[0]));
    const auto b = read_scores(input_file(record, "compare.b", files[1]));
    const ScoreHistogram h = score_histogram(a, b, get_or<std::size_t>(cfg, "bins", 10));
    write_file_atomic(run_dir / "histogram.csv", h.csv());
    return h.csv();
  }
  if (cfg.contains("features")) {
    const FeatureStore store = load_features(input_file(record, "features", need_string(cfg, "features")));
    const auto top = nearest_neighbors(store.entries(), need_string(cfg, "query"), get_or<std::size_t>(cfg, "k", 5));
    std::string out = "rank\tid\tcosine\n";
    for (std::size_t i = 0; i < top.size(); ++i) {
      out += std::to_string(i + 1) + "\t" + top[i].id + "\t" + fixed(top[i].similarity, 6) + "\n";
    }
    write_file_atomic(run_dir / "neighbors.tsv", out);
    return out;
  }
  std::vector<ExperimentReport> reports;
  std::size_t i = 0;
  for (const auto& p : cfg.at("reports").get<std::vector<std::string>>()) {
    const fs::path path = input_file(record, "reports." + std::to_string(i++), p);
    reports.push_back(ExperimentReport::from_json(read_file(path), path.string()));
  }
  const auto rows = compare_variants(reports);
  const std::string table = format_comparison(rows);
  write_file_atomic(run_dir / "comparison.txt", table);
  return table;
}

// --- experiment ------------------------------------------------------------

std::string cmd_experiment(const json& cfg, const fs::path& run_dir, RunRecord& record) {
  const PreparedDataset data = load_dataset(cfg, record);
  const ExperimentConfig ec = cfg.get<ExperimentConfig>();
  return run_experiment(ec, data, run_dir).table();
}

// --- driver ----------------------------------------------------------------

// Sets a dotted key; the value is parsed as JSON when possible, else taken as a string.
void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  if (value.is_object() || value.is_array()) throw ConfigError("--set only overrides scalar fields ('" + key + "')");
  json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("bad key '" + key + "'");
    if (!node->is_object()) throw ConfigError("'" + key + "' does not address a field of an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  // A run manifest can be fed back in to repeat the run.
  if (j.is_object() && j.contains("command") && j.contains("config")) return j.at("config");
  if (!j.is_object()) throw ConfigError(path + ": top level must be a JSON object");
  return j;
}

std::string seed_tag(const json& cfg) {
  if (cfg.contains("seed") && cfg["seed"].is_number_unsigned()) return std::to_string(cfg["seed"].get<std::uint64_t>());
  if (cfg.contains("seeds") && cfg["seeds"].is_array()) {
    std::string s;
    for (const auto& v : cfg["seeds"]) s += (s.empty() ? "" : "_") + v.dump();
    return s;
  }
  return "0";
}

void replace_dir(const fs::path& from, const fs::path& to) {
  fs::remove_all(to);
  fs::create_directories(to.parent_path());
  fs::rename(from, to);
}

int execute(const std::string& name, const Command& command, json cfg, const std::string& out_root, std::ostream& out,
            std::ostream& err) {
  // Canonical (key-sorted) form for the hash.
  const std::string canonical = nlohmann::json(cfg).dump();
  const std::string run_name = name + "-" + sha1_hex(canonical).substr(0, 12) + "-s" + seed_tag(cfg);
  const fs::path root(out_root);
  const fs::path staging = root / (".staging-" + run_name);
  const fs::path final_dir = root / run_name;
  try {
    fs::remove_all(staging);
    fs::create_directories(staging);
    RunRecord record;
    const std::string summary = command(cfg, staging, record);

    json manifest;
    manifest["command"] = name;
    manifest["config"] = cfg;
    manifest["inputs"] = json::object();
    for (const auto& [key, path] : record.inputs) manifest["inputs"][key] = {{"path", path.string()}, {"sha1", hash_path(path)}};
    manifest["outputs"] = json::object();
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(staging)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) manifest["outputs"][fs::relative(f, staging).generic_string()] = git_blob_sha1_file(f);
    manifest["versions"] = {{"mmlm", kVersion},
                            {"checkpoint_format", kCheckpointVersion},
                            {"real", sizeof(Real) == 8 ? "float64" : "float32"}};
    manifest["rerun"] = "mmlm " + name + " --config " + (final_dir / "manifest.json").string() + " --out " + out_root;
    write_file_atomic(staging / "manifest.json", manifest.dump(2) + "\n");
    replace_dir(staging, final_dir);
    out << summary;
    out << final_dir.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "mmlm " << name << ": " << e.what() << "\n";
    try {
      if (fs::exists(staging)) {
        replace_dir(staging, root / "failed" / run_name);
        err << "partial outputs moved to " << (root / "failed" / run_name).string() << "\n";
      }
    } catch (const std::exception& e2) {
      err << "mmlm " << name << ": could not quarantine partial outputs: " << e2.what() << "\n";
    }
    return 1;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditioned LSTM language models: prepare data, train, transfer, generate and evaluate."};
  app.name("mmlm");
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out = "runs";
  };
  std::map<std::string, Common> common;
  auto add_common = [&](CLI::App* sub) {
    Common& c = common[sub->get_name()];
    sub->add_option("-c,--config", c.config, "JSON config file (or a run manifest to repeat a run)");
    sub->add_option("--set", c.sets, "Override a scalar config field: key=value, dotted keys for nesting");
    sub->add_option("-o,--out", c.out, "Directory that receives the run directory")->capture_default_str();
    return sub;
  };

  // Flag sugar: each writes into the config after the file is loaded and before --set.
  std::vector<std::function<void(json&)>> flag_setters;
  auto string_flag = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<std::string>();
    auto* opt = sub->add_option(flag, *value, help);
    flag_setters.push_back([value, opt, key](json& cfg) {
      if (opt->count()) cfg[key] = *value;
    });
  };

  auto* prepare = add_common(app.add_subcommand("prepare", "Tokenize captions, build vocabularies and splits"));
  auto captions = std::make_shared<std::vector<std::string>>();
  auto* captions_opt = prepare->add_option("--captions", *captions, "LANG=FILE caption file (repeatable)");
  flag_setters.push_back([captions, captions_opt](json& cfg) {
    if (!captions_opt->count()) return;
    for (const auto& c : *captions) {
      const auto eq = c.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--captions expects LANG=FILE, got '" + c + "'");
      cfg["captions"][c.substr(0, eq)] = c.substr(eq + 1);
    }
  });
  string_flag(prepare, "--features", "features", "Image feature file (MMF1)");
  string_flag(prepare, "--splits", "split_manifest", "Split manifest (<split>\\t<item_id> lines)");

  auto* train_cmd = add_common(app.add_subcommand("train", "Train one language model"));
  string_flag(train_cmd, "--dataset", "dataset", "Prepared dataset directory");
  string_flag(train_cmd, "--language", "language", "Language to model");

  auto* extract = add_common(app.add_subcommand("extract", "Extract transfer features from a source checkpoint"));
  string_flag(extract, "--checkpoint", "checkpoint", "Source model checkpoint");
  string_flag(extract, "--dataset", "dataset", "Prepared dataset directory");
  string_flag(extract, "--language", "language", "Source language");

  auto* generate = add_common(app.add_subcommand("generate", "Greedy-decode descriptions"));
  string_flag(generate, "--checkpoint", "checkpoint", "Model checkpoint");
  string_flag(generate, "--dataset", "dataset", "Prepared dataset directory");
  string_flag(generate, "--language", "language", "Language of the model");
  string_flag(generate, "--split", "split", "train, val or test");
  string_flag(generate, "--source-features", "source_features", "Transfer features for source-conditioned models");

  auto* evaluate = add_common(app.add_subcommand("evaluate", "Corpus BLEU-4 and sentence scores"));
  string_flag(evaluate, "--hypotheses", "hypotheses", "Generated descriptions (<item_id>\\t<tokens>)");
  string_flag(evaluate, "--references", "references", "Reference descriptions, same format");

  auto* analyze = add_common(app.add_subcommand("analyze", "Score histograms, nearest neighbours, variant tables"));
  auto compare = std::make_shared<std::vector<std::string>>();
  auto* compare_opt = analyze->add_option("--compare", *compare, "Sentence score files A B")->expected(2);
  flag_setters.push_back([compare, compare_opt](json& cfg) {
    if (compare_opt->count()) cfg["compare"] = *compare;
  });
  string_flag(analyze, "--neighbors", "features", "Feature file to search");
  string_flag(analyze, "--query", "query", "Query item id for --neighbors");
  auto reports = std::make_shared<std::vector<std::string>>();
  auto* reports_opt = analyze->add_option("--reports", *reports, "Experiment report.json files to rank");
  flag_setters.push_back([reports, reports_opt](json& cfg) {
    if (reports_opt->count()) cfg["reports"] = *reports;
  });

  auto* experiment = add_common(app.add_subcommand("experiment", "Run a variant over several seeds"));
  string_flag(experiment, "--dataset", "dataset", "Prepared dataset directory");
  auto jobs = std::make_shared<std::size_t>(0);
  auto* jobs_opt = experiment->add_option("-j,--jobs", *jobs, "Seeds to run concurrently");
  flag_setters.push_back([jobs, jobs_opt](json& cfg) {
    if (jobs_opt->count()) cfg["jobs"] = *jobs;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  static const std::map<std::string, Command> commands = {
      {"prepare", cmd_prepare},   {"train", cmd_train},     {"extract", cmd_extract},       {"generate", cmd_generate},
      {"evaluate", cmd_evaluate}, {"analyze", cmd_analyze}, {"experiment", cmd_experiment},
  };
  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  const Common& c = common.at(name);
  json cfg;
  try {
    cfg = load_config(c.config);
    for (const auto& set : flag_setters) set(cfg);
    for (const auto& s : c.sets) apply_override(cfg, s);
  } catch (const std::exception& e) {
    err << "mmlm " << name << ": " << e.what() << "\n";
    return 2;
  }
  // Record the seed actually used so the run directory name reflects it.
  if ((name == "prepare" || name == "train") && !cfg.contains("seed")) cfg["seed"] = 1;
  if (name == "experiment" && !cfg.contains("seeds")) cfg["seeds"] = ExperimentConfig{}.seeds;
  return execute(name, commands.at(name), std::move(cfg), c.out, out, err);
}

}  // namespace mmlm
