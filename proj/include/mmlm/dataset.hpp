#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmlm/corpus.hpp"
#include "mmlm/features.hpp"

namespace mmlm {

struct PrepareConfig {
  std::map<std::string, std::filesystem::path> captions;  // language -> caption file
  std::optional<std::filesystem::path> features;
  std::size_t feature_dim = 0;  // 0 accepts the file header
  std::optional<std::filesystem::path> split_manifest;
  SplitFractions fractions;
  std::uint64_t seed = 1;
  int min_count = 3;
};

struct LanguageStats {
  std::size_t vocabulary_size = 0;    // including the reserved entries
  std::size_t training_types = 0;     // distinct training types before the count cut
  std::size_t training_tokens = 0;    // before <unk> replacement
  std::size_t training_unk_tokens = 0;
  std::size_t kept_tokens() const { return training_tokens - training_unk_tokens; }
};

struct PrepareReport {
  std::map<std::string, LanguageStats> languages;
  std::size_t train_items = 0;
  std::size_t val_items = 0;
  std::size_t test_items = 0;
  std::size_t dropped_items = 0;  // ids missing from some language

  std::string str() const;
  std::string json() const;
};

// Layout of a prepared dataset directory:
//   dataset.json          languages, min_count, feature dimension
//   splits.tsv            split manifest
//   vocab.<lang>.tsv      "<token>\t<count>" for learned types in index order
//   <split>.<lang>.tsv    "<item_id>\t<tokens>" in id order, tokenized
//   features.mmf          image features of the kept items (optional)
//   report.json, report.txt
PrepareReport prepare_dataset(const PrepareConfig& config, const std::filesystem::path& out_dir);

class PreparedDataset {
 public:
  static PreparedDataset load(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const { return dir_; }
  const std::vector<std::string>& languages() const { return languages_; }
  bool has_language(const std::string& language) const;
  const Vocabulary& vocabulary(const std::string& language) const;
  const SplitIds& splits() const { return splits_; }
  const std::vector<std::string>& split(const std::string& name) const;
  // Encoded with the language's vocabulary.
  const Corpus& corpus(const std::string& language, const std::string& split) const;

  bool has_features() const { return feature_dim_ > 0; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::filesystem::path features_path() const { return dir_ / "features.mmf"; }
  // Loaded on first use; call once before sharing across threads.
  const FeatureStore& features() const;

 private:
  std::filesystem::path dir_;
  std::vector<std::string> languages_;
  std::size_t feature_dim_ = 0;
  SplitIds splits_;
  std::map<std::string, Vocabulary> vocabularies_;
  std::map<std::pair<std::string, std::string>, Corpus> corpora_;
  mutable std::optional<FeatureStore> features_;
};

std::string format_vocabulary(const Vocabulary& vocab);
Vocabulary parse_vocabulary(const std::string& text, int min_count, const std::string& origin);

}  // namespace mmlm
