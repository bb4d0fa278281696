#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mmlm {

using Index = std::uint32_t;

// Bidirectional token <-> index map. Indices 0..3 are reserved for
// <pad>, <s>, </s> and <unk>; learned types follow in frequency order.
class Vocabulary {
 public:
  static constexpr Index kPad = 0;
  static constexpr Index kBos = 1;
  static constexpr Index kEos = 2;
  static constexpr Index kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();

  // Rebuilds a vocabulary from its serialized form (types past the reserved
  // entries, in index order, with their training counts).
  static Vocabulary from_types(std::vector<std::string> types, std::vector<std::uint64_t> counts,
                               int min_count);

  std::size_t size() const { return tokens_.size(); }
  int min_count() const { return min_count_; }

  std::optional<Index> find(std::string_view token) const;
  Index index(std::string_view token) const;  // kUnk when absent
  const std::string& token(Index index) const;
  std::uint64_t count(Index index) const { return counts_.at(index); }
  bool contains(std::string_view token) const { return find(token).has_value(); }

  // <s> w1 .. wn </s>, unknown words mapped to <unk>.
  std::vector<Index> encode(std::span<const std::string> tokens) const;
  // Drops <s>, </s> and <pad>.
  std::vector<std::string> decode(std::span<const Index> indices) const;

  static bool is_reserved(std::string_view token);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.counts_ == b.counts_ && a.min_count_ == b.min_count_;
  }

 private:
  void add(std::string token, std::uint64_t count);

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, Index> lookup_;
  int min_count_ = 1;
};

// Keeps types seen at least min_count times; ordered by descending count,
// ties broken lexicographically.
Vocabulary build_vocabulary(std::span<const std::vector<std::string>> train, int min_count);

}  // namespace mmlm
