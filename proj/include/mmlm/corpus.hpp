#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmlm/vocabulary.hpp"

namespace mmlm {

// One tokenized sentence with its item (image) id.
struct Sentence {
  std::string id;
  std::vector<std::string> tokens;
};

struct CorpusItem {
  std::string id;
  std::vector<std::string> tokens;  // tokenized text before <unk> replacement
  std::vector<Index> indices;       // <s> ... </s>
};

// Encoded sentences of one language and split.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::string language, std::string split, std::vector<CorpusItem> items);

  static Corpus encode(std::string language, std::string split,
                       const std::vector<Sentence>& sentences, const Vocabulary& vocab);

  const std::string& language() const { return language_; }
  const std::string& split() const { return split_; }
  const std::vector<CorpusItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  const CorpusItem* find(const std::string& id) const;
  std::vector<std::string> ids() const;
  // Subset in the order of `ids`; every id must exist.
  Corpus select(const std::vector<std::string>& ids, std::string split) const;

 private:
  std::string language_;
  std::string split_;
  std::vector<CorpusItem> items_;
  std::map<std::string, std::size_t> by_id_;
};

struct BitextItem {
  std::string id;
  std::vector<std::string> source;
  std::vector<std::string> target;
};

// Source and target sentences joined on item id.
struct AlignedBitext {
  std::vector<BitextItem> items;

  static AlignedBitext align(const std::vector<Sentence>& source,
                             const std::vector<Sentence>& target);
};

// `<item_id>\t<sentence>` lines. Only the first sentence per id is kept.
std::vector<Sentence> read_caption_file(const std::filesystem::path& path);
std::vector<Sentence> parse_captions(const std::string& text, const std::string& origin);

struct SplitFractions {
  double val = 0.1;
  double test = 0.0;
};

struct SplitIds {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

// Deterministic shuffle-and-cut. Splits with a zero fraction stay empty; any
// split with a positive fraction (and train) must end up non-empty.
SplitIds split_ids(std::vector<std::string> ids, SplitFractions fractions, std::uint64_t seed);

struct CorpusSplits {
  Corpus train;
  Corpus val;
  Corpus test;
};
CorpusSplits split_dataset(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed);

// `<split>\t<item_id>` lines; '#' starts a comment.
SplitIds read_split_manifest(const std::filesystem::path& path);
std::string format_split_manifest(const SplitIds& splits);

}  // namespace mmlm
