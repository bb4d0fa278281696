#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace mmlm::testing {

using Tokens = std::vector<std::string>;

// Occurrences of `gram` in `seq`, by direct comparison.
inline std::size_t occurrences(const Tokens& seq, const Tokens& gram) {
  std::size_t c = 0;
  for (std::size_t i = 0; i + gram.size() <= seq.size(); ++i) {
    if (std::equal(gram.begin(), gram.end(), seq.begin() + static_cast<std::ptrdiff_t>(i))) ++c;
  }
  return c;
}

// Brute-force corpus BLEU-4: for every distinct hypothesis n-gram, clip its
// count against the reference by scanning both sequences.
inline double brute_force_bleu(const std::map<std::string, Tokens>& hyps, const std::map<std::string, Tokens>& refs) {
  double matches[4] = {}, totals[4] = {};
  double c = 0, r = 0;
  for (const auto& [id, h] : hyps) {
    const Tokens& ref = refs.at(id);
    c += static_cast<double>(h.size());
    r += static_cast<double>(ref.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      std::vector<Tokens> seen;
      for (std::size_t i = 0; i + n <= h.size(); ++i) {
        Tokens gram(h.begin() + static_cast<std::ptrdiff_t>(i), h.begin() + static_cast<std::ptrdiff_t>(i + n));
        totals[n - 1] += 1;
        if (std::find(seen.begin(), seen.end(), gram) != seen.end()) continue;
        seen.push_back(gram);
        matches[n - 1] += static_cast<double>(std::min(occurrences(h, gram), occurrences(ref, gram)));
      }
    }
  }
  double product = 1;
  for (int n = 0; n < 4; ++n) {
    if (totals[n] == 0 || matches[n] == 0) return 0;
    product *= matches[n] / totals[n];
  }
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::pow(product, 0.25);
}

}  // namespace mmlm::testing
