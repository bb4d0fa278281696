#include "mmlm/vocabulary.hpp"

#include <algorithm>
#include <map>

#include "mmlm/errors.hpp"

namespace mmlm {
namespace {

constexpr std::string_view kReservedTokens[] = {"<pad>", "<s>", "</s>", "<unk>"};

}  // namespace

Vocabulary::Vocabulary() {
  for (auto token : kReservedTokens) add(std::string(token), 0);
}

bool Vocabulary::is_reserved(std::string_view token) {
  return std::find(std::begin(kReservedTokens), std::end(kReservedTokens), token) !=
         std::end(kReservedTokens);
}

void Vocabulary::add(std::string token, std::uint64_t count) {
  if (lookup_.contains(token)) throw DataError("duplicate vocabulary entry '" + token + "'");
  lookup_.emplace(token, static_cast<Index>(tokens_.size()));
  tokens_.push_back(std::move(token));
  counts_.push_back(count);
}

Vocabulary Vocabulary::from_types(std::vector<std::string> types, std::vector<std::uint64_t> counts,
                                  int min_count) {
  if (types.size() != counts.size()) throw DataError("vocabulary types and counts differ in length");
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  Vocabulary vocab;
  vocab.min_count_ = min_count;
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (is_reserved(types[i])) throw DataError("reserved token '" + types[i] + "' in type list");
    vocab.add(std::move(types[i]), counts[i]);
  }
  return vocab;
}

std::optional<Index> Vocabulary::find(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

Index Vocabulary::index(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(Index index) const {
  if (index >= tokens_.size()) {
    throw IndexError("vocabulary index " + std::to_string(index) + " out of range (size " +
                     std::to_string(tokens_.size()) + ")");
  }
  return tokens_[index];
}

std::vector<Index> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<Index> out;
  out.reserve(tokens.size() + 2);
  out.push_back(kBos);
  for (const auto& t : tokens) out.push_back(index(t));
  out.push_back(kEos);
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const Index> indices) const {
  std::vector<std::string> out;
  for (Index i : indices) {
    if (i == kBos || i == kEos || i == kPad) continue;
    out.push_back(token(i));
  }
  return out;
}

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> train, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  if (train.empty()) throw DataError("cannot build a vocabulary from an empty training set");

  std::map<std::string, std::uint64_t> counts;
  for (const auto& sentence : train) {
    for (const auto& token : sentence) {
      if (!Vocabulary::is_reserved(token)) ++counts[token];
    }
  }
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [token, n] : counts) {
    if (n >= static_cast<std::uint64_t>(min_count)) kept.emplace_back(token, n);
  }
  // std::map iteration is already lexicographic, so a stable sort on count
  // alone gives the tie order.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> types;
  std::vector<std::uint64_t> type_counts;
  for (auto& [token, n] : kept) {
    types.push_back(token);
    type_counts.push_back(n);
  }
  return Vocabulary::from_types(std::move(types), std::move(type_counts), min_count);
}

}  // namespace mmlm
