#include "mmlm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mmlm/errors.hpp"
#include "mmlm/rng.hpp"
#include "mmlm/text.hpp"

namespace mmlm {

Corpus::Corpus(std::string language, std::string split, std::vector<CorpusItem> items)
    : language_(std::move(language)), split_(std::move(split)), items_(std::move(items)) {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (!by_id_.emplace(items_[i].id, i).second) {
      throw DataError("duplicate item id '" + items_[i].id + "' in " + language_ + "/" + split_);
    }
  }
}

Corpus Corpus::encode(std::string language, std::string split,
                      const std::vector<Sentence>& sentences, const Vocabulary& vocab) {
  std::vector<CorpusItem> items;
  items.reserve(sentences.size());
  for (const auto& s : sentences) {
    items.push_back({s.id, s.tokens, vocab.encode(s.tokens)});
  }
  return Corpus(std::move(language), std::move(split), std::move(items));
}

const CorpusItem* Corpus::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &items_[it->second];
}

std::vector<std::string> Corpus::ids() const {
  std::vector<std::string> out;
  out.reserve(items_.size());
  for (const auto& item : items_) out.push_back(item.id);
  return out;
}

Corpus Corpus::select(const std::vector<std::string>& ids, std::string split) const {
  std::vector<CorpusItem> items;
  items.reserve(ids.size());
  for (const auto& id : ids) {
    const CorpusItem* item = find(id);
    if (item == nullptr) throw DataError("item id '" + id + "' not found in " + language_ + " corpus");
    items.push_back(*item);
  }
  return Corpus(language_, std::move(split), std::move(items));
}

AlignedBitext AlignedBitext::align(const std::vector<Sentence>& source,
                                   const std::vector<Sentence>& target) {
  std::map<std::string, const Sentence*> by_id;
  for (const auto& s : target) by_id.emplace(s.id, &s);
  if (source.size() != target.size()) {
    throw DataError("bitext sides differ in size: " + std::to_string(source.size()) + " vs " +
                    std::to_string(target.size()));
  }
  AlignedBitext out;
  for (const auto& s : source) {
    auto it = by_id.find(s.id);
    if (it == by_id.end()) throw DataError("item id '" + s.id + "' missing from target side");
    out.items.push_back({s.id, s.tokens, it->second->tokens});
  }
  return out;
}

std::vector<Sentence> parse_captions(const std::string& text, const std::string& origin) {
  std::vector<Sentence> out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": expected <item_id>\\t<sentence>");
    }
    std::string id = line.substr(0, tab);
    if (!seen.insert(id).second) continue;  // later descriptions of the same image
    out.push_back({std::move(id), tokenize(std::string_view(line).substr(tab + 1))});
  }
  return out;
}

std::vector<Sentence> read_caption_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open caption file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_captions(buffer.str(), path.string());
}

SplitIds split_ids(std::vector<std::string> ids, SplitFractions fractions, std::uint64_t seed) {
  if (fractions.val < 0 || fractions.test < 0 || fractions.val + fractions.test > 1.0) {
    std::ostringstream msg;
    msg << "invalid split fractions (val=" << fractions.val << ", test=" << fractions.test << ")";
    throw ConfigError(msg.str());
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw DataError("duplicate item ids passed to split");
  }
  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::swap(ids[i - 1], ids[rng.below(i)]);
  }
  const auto n = ids.size();
  const auto n_val = static_cast<std::size_t>(std::llround(fractions.val * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(fractions.test * static_cast<double>(n)));
  if ((fractions.val > 0 && n_val == 0) || (fractions.test > 0 && n_test == 0) ||
      n_val + n_test >= n) {
    throw DataError("split of " + std::to_string(n) + " items leaves an empty split");
  }
  SplitIds out;
  out.val.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  out.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val),
                  ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  out.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), ids.end());
  return out;
}

CorpusSplits split_dataset(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed) {
  const SplitIds ids = split_ids(corpus.ids(), fractions, seed);
  return {corpus.select(ids.train, "train"), corpus.select(ids.val, "val"),
          corpus.select(ids.test, "test")};
}

SplitIds read_split_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split manifest " + path.string());
  SplitIds out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected <split>\\t<item_id>");
    }
    const std::string split = line.substr(0, tab);
    std::string id = line.substr(tab + 1);
    if (!seen.insert(id).second) {
      throw DataError(path.string() + ": item id '" + id + "' assigned to more than one split");
    }
    if (split == "train") {
      out.train.push_back(std::move(id));
    } else if (split == "val") {
      out.val.push_back(std::move(id));
    } else if (split == "test") {
      out.test.push_back(std::move(id));
    } else {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown split '" + split + "'");
    }
  }
  if (out.train.empty()) throw DataError(path.string() + ": no training items");
  return out;
}

std::string format_split_manifest(const SplitIds& splits) {
  std::string out;
  for (const auto& id : splits.train) out += "train\t" + id + "\n";
  for (const auto& id : splits.val) out += "val\t" + id + "\n";
  for (const auto& id : splits.test) out += "test\t" + id + "\n";
  return out;
}

}  // namespace mmlm
