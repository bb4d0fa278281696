#include "mmlm/dataset.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mmlm/errors.hpp"
#include "mmlm/io.hpp"
#include "mmlm/text.hpp"

namespace fs = std::filesystem;

namespace mmlm {
namespace {

constexpr const char* kSplitNames[] = {"train", "val", "test"};

const std::vector<std::string>& split_of(const SplitIds& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

std::vector<std::string> split_line(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == sep) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != sep) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    pos = end + 1;
  }
  return out;
}

std::string format_sentences(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) out += s.id + "\t" + join_tokens(s.tokens) + "\n";
  return out;
}

// Already-tokenized sentence files: split on single spaces, no re-tokenizing.
std::vector<Sentence> parse_sentences(const std::string& text, const std::string& origin) {
  std::vector<Sentence> out;
  std::size_t line_no = 0;
  for (auto line : lines_of(text)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": expected <item_id>\\t<tokens>");
    }
    out.push_back({std::string(line.substr(0, tab)), split_line(line.substr(tab + 1), ' ')});
  }
  return out;
}

}  // namespace

std::string format_vocabulary(const Vocabulary& vocab) {
  std::string out;
  for (Index i = Vocabulary::kReserved; i < vocab.size(); ++i) {
    out += vocab.token(i) + "\t" + std::to_string(vocab.count(i)) + "\n";
  }
  return out;
}

Vocabulary parse_vocabulary(const std::string& text, int min_count, const std::string& origin) {
  std::vector<std::string> types;
  std::vector<std::uint64_t> counts;
  std::size_t line_no = 0;
  for (auto line : lines_of(text)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw DataError(origin + ":" + std::to_string(line_no) + ": expected <token>\\t<count>");
    types.emplace_back(line.substr(0, tab));
    try {
      counts.push_back(std::stoull(std::string(line.substr(tab + 1))));
    } catch (const std::exception&) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": bad count");
    }
  }
  return Vocabulary::from_types(std::move(types), std::move(counts), min_count);
}

std::string PrepareReport::str() const {
  std::ostringstream out;
  out << "items: train " << train_items << ", val " << val_items << ", test " << test_items;
  if (dropped_items) out << " (" << dropped_items << " dropped: not present in every language)";
  out << "\n";
  for (const auto& [lang, s] : languages) {
    out << lang << ": vocabulary " << s.vocabulary_size << " (" << s.vocabulary_size - Vocabulary::kReserved
        << " types + " << Vocabulary::kReserved << " reserved), training types " << s.training_types
        << ", training tokens " << s.training_tokens << " before <unk> replacement, " << s.kept_tokens()
        << " in vocabulary (" << s.training_unk_tokens << " mapped to <unk>)\n";
  }
  return out.str();
}

std::string PrepareReport::json() const {
  nlohmann::ordered_json j;
  j["items"] = {{"train", train_items}, {"val", val_items}, {"test", test_items}, {"dropped", dropped_items}};
  for (const auto& [lang, s] : languages) {
    j["languages"][lang] = {{"vocabulary_size", s.vocabulary_size},
                            {"training_types", s.training_types},
                            {"training_tokens", s.training_tokens},
                            {"training_tokens_in_vocabulary", s.kept_tokens()},
                            {"training_unk_tokens", s.training_unk_tokens}};
  }
  return j.dump(2) + "\n";
}

PrepareReport prepare_dataset(const PrepareConfig& config, const fs::path& out_dir) {
  if (config.captions.empty()) throw ConfigError("prepare needs at least one caption file");
  if (config.min_count < 1) throw ConfigError("min_count must be at least 1");

  std::map<std::string, std::map<std::string, std::vector<std::string>>> by_lang;
  for (const auto& [lang, path] : config.captions) {
    if (lang.empty() || lang.find_first_of("./\\\t ") != std::string::npos) {
      throw ConfigError("invalid language code '" + lang + "'");
    }
    for (auto& s : read_caption_file(path)) by_lang[lang].emplace(s.id, std::move(s.tokens));
  }

  // Keep ids present in every language.
  std::set<std::string> all_ids;
  for (const auto& [lang, m] : by_lang) {
    for (const auto& [id, _] : m) all_ids.insert(id);
  }
  std::vector<std::string> ids;
  for (const auto& id : all_ids) {
    bool everywhere = true;
    for (const auto& [lang, m] : by_lang) everywhere = everywhere && m.count(id);
    if (everywhere) ids.push_back(id);
  }
  if (ids.empty()) throw DataError("no item id is present in every caption file");

  PrepareReport report;
  report.dropped_items = all_ids.size() - ids.size();

  std::optional<FeatureStore> features;
  if (config.features) {
    const FeatureStore all = load_features(*config.features, config.feature_dim);
    FeatureStore kept(all.dim());
    for (const auto& id : ids) {
      const Tensor* v = all.find(id);
      if (!v) throw DataError("item '" + id + "' has captions but no vector in " + config.features->string());
      kept.insert(id, *v);
    }
    features = std::move(kept);
  }

  SplitIds splits;
  if (config.split_manifest) {
    splits = read_split_manifest(*config.split_manifest);
    const std::set<std::string> known(ids.begin(), ids.end());
    for (const char* name : kSplitNames) {
      for (const auto& id : split_of(splits, name)) {
        if (!known.count(id)) throw DataError("split manifest lists unknown item '" + id + "'");
      }
    }
    if (splits.train.empty()) throw DataError("split manifest has no training items");
    for (auto* v : {&splits.train, &splits.val, &splits.test}) std::sort(v->begin(), v->end());
  } else {
    splits = split_ids(ids, config.fractions, config.seed);
    for (auto* v : {&splits.train, &splits.val, &splits.test}) std::sort(v->begin(), v->end());
  }
  report.train_items = splits.train.size();
  report.val_items = splits.val.size();
  report.test_items = splits.test.size();

  fs::create_directories(out_dir);
  nlohmann::ordered_json meta;
  meta["format"] = "mmlm-dataset";
  meta["version"] = 1;
  meta["languages"] = nlohmann::json::array();
  meta["min_count"] = config.min_count;
  meta["feature_dim"] = features ? features->dim() : 0;

  for (const auto& [lang, m] : by_lang) {
    meta["languages"].push_back(lang);
    std::vector<std::vector<std::string>> train_tokens;
    for (const auto& id : splits.train) train_tokens.push_back(m.at(id));
    const Vocabulary vocab = build_vocabulary(train_tokens, config.min_count);

    LanguageStats stats;
    std::set<std::string> types;
    for (const auto& t : train_tokens) {
      stats.training_tokens += t.size();
      for (const auto& w : t) {
        types.insert(w);
        if (!vocab.contains(w)) ++stats.training_unk_tokens;
      }
    }
    stats.training_types = types.size();
    stats.vocabulary_size = vocab.size();
    report.languages[lang] = stats;

    write_file_atomic(out_dir / ("vocab." + lang + ".tsv"), format_vocabulary(vocab));
    for (const char* name : kSplitNames) {
      std::vector<Sentence> sentences;
      for (const auto& id : split_of(splits, name)) sentences.push_back({id, m.at(id)});
      write_file_atomic(out_dir / (std::string(name) + "." + lang + ".tsv"), format_sentences(sentences));
    }
  }

  if (features) {
    save_features(out_dir / "features.mmf", *features);
  } else {
    fs::remove(out_dir / "features.mmf");
  }
  write_file_atomic(out_dir / "splits.tsv", format_split_manifest(splits));
  write_file_atomic(out_dir / "report.json", report.json());
  write_file_atomic(out_dir / "report.txt", report.str());
  write_file_atomic(out_dir / "dataset.json", meta.dump(2) + "\n");
  return report;
}

PreparedDataset PreparedDataset::load(const fs::path& dir) {
  const fs::path meta_path = dir / "dataset.json";
  if (!fs::exists(meta_path)) throw DataError("not a prepared dataset directory (no dataset.json): " + dir.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  if (meta.value("format", "") != "mmlm-dataset") throw FormatError(meta_path.string() + ": unknown format");
  if (meta.value("version", 0) != 1) {
    throw VersionError(meta_path.string() + ": unsupported dataset version " + meta.value("version", nlohmann::json()).dump());
  }

  PreparedDataset out;
  out.dir_ = dir;
  out.languages_ = meta.at("languages").get<std::vector<std::string>>();
  out.feature_dim_ = meta.at("feature_dim").get<std::size_t>();
  const int min_count = meta.at("min_count").get<int>();
  out.splits_ = read_split_manifest(dir / "splits.tsv");
  for (auto* v : {&out.splits_.train, &out.splits_.val, &out.splits_.test}) std::sort(v->begin(), v->end());

  for (const auto& lang : out.languages_) {
    const fs::path vocab_path = dir / ("vocab." + lang + ".tsv");
    const Vocabulary vocab = parse_vocabulary(read_file(vocab_path), min_count, vocab_path.string());
    out.vocabularies_.emplace(lang, vocab);
    for (const char* name : kSplitNames) {
      const fs::path p = dir / (std::string(name) + "." + lang + ".tsv");
      const auto sentences = parse_sentences(read_file(p), p.string());
      std::vector<std::string> got;
      for (const auto& s : sentences) got.push_back(s.id);
      if (got != split_of(out.splits_, name)) {
        throw DataError(p.string() + " does not match the " + name + " ids in splits.tsv");
      }
      out.corpora_.emplace(std::pair{lang, std::string(name)}, Corpus::encode(lang, name, sentences, vocab));
    }
  }
  if (out.feature_dim_ > 0 && !fs::exists(out.features_path())) {
    throw DataError("dataset declares image features but " + out.features_path().string() + " is missing");
  }
  return out;
}

bool PreparedDataset::has_language(const std::string& language) const {
  return vocabularies_.count(language) > 0;
}

const Vocabulary& PreparedDataset::vocabulary(const std::string& language) const {
  auto it = vocabularies_.find(language);
  if (it == vocabularies_.end()) throw ConfigError("dataset has no language '" + language + "'");
  return it->second;
}

const std::vector<std::string>& PreparedDataset::split(const std::string& name) const {
  return split_of(splits_, name);
}

const Corpus& PreparedDataset::corpus(const std::string& language, const std::string& split) const {
  split_of(splits_, split);
  auto it = corpora_.find({language, split});
  if (it == corpora_.end()) throw ConfigError("dataset has no language '" + language + "'");
  return it->second;
}

const FeatureStore& PreparedDataset::features() const {
  if (!has_features()) throw DataError("dataset " + dir_.string() + " has no image features");
  if (!features_) features_ = load_features(features_path(), feature_dim_);
  return *features_;
}

}  // namespace mmlm
