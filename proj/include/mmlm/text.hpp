#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mmlm {

// Lowercases (ASCII and Latin-1 letters), splits on whitespace and detaches
// leading/trailing .,;:!?"'() as separate tokens. Not a full PTB tokenizer.
std::vector<std::string> tokenize(std::string_view line);

std::string to_lower_utf8(std::string_view text);

std::string join_tokens(const std::vector<std::string>& tokens, std::string_view sep = " ");

}  // namespace mmlm
