#include "mmlm/text.hpp"

#include <algorithm>

namespace mmlm {
namespace {

constexpr std::string_view kDetachable = ".,;:!?\"'()";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_detachable(char c) { return kDetachable.find(c) != std::string_view::npos; }

void split_word(std::string_view word, std::vector<std::string>& out) {
  std::size_t begin = 0;
  std::size_t end = word.size();
  while (begin < end && is_detachable(word[begin])) {
    out.emplace_back(1, word[begin]);
    ++begin;
  }
  std::vector<std::string> trailing;
  while (end > begin && is_detachable(word[end - 1])) {
    trailing.emplace_back(1, word[end - 1]);
    --end;
  }
  if (end > begin) out.emplace_back(word.substr(begin, end - begin));
  out.insert(out.end(), trailing.rbegin(), trailing.rend());
}

}  // namespace

std::string to_lower_utf8(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c >= 'A' && c <= 'Z') {
      out.push_back(static_cast<char>(c + ('a' - 'A')));
    } else if (c == 0xC3 && i + 1 < text.size()) {
      // U+00C0..U+00DE map to U+00E0..U+00FE, except U+00D7 (multiplication sign).
      const auto next = static_cast<unsigned char>(text[i + 1]);
      out.push_back(static_cast<char>(c));
      if (next >= 0x80 && next <= 0x9E && next != 0x97) {
        out.push_back(static_cast<char>(next + 0x20));
      } else {
        out.push_back(static_cast<char>(next));
      }
      ++i;
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view line) {
  const std::string lowered = to_lower_utf8(line);
  std::vector<std::string> tokens;
  std::string_view rest = lowered;
  std::size_t i = 0;
  while (i < rest.size()) {
    while (i < rest.size() && is_space(rest[i])) ++i;
    std::size_t j = i;
    while (j < rest.size() && !is_space(rest[j])) ++j;
    if (j > i) split_word(rest.substr(i, j - i), tokens);
    i = j;
  }
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += sep;
    out += tokens[i];
  }
  return out;
}

}  // namespace mmlm
