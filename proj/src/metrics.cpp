#include "mmlm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "mmlm/errors.hpp"

namespace mmlm {
namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      key += tokens[i + j];
      key.push_back('\x1f');
    }
    ++out[key];
  }
  return out;
}

// Clipped matches and hypothesis n-gram count for one sentence pair.
std::pair<std::size_t, std::size_t> clipped(std::span<const std::string> hyp,
                                            std::span<const std::string> ref, std::size_t n) {
  const NgramCounts h = count_ngrams(hyp, n);
  const NgramCounts r = count_ngrams(ref, n);
  std::size_t matches = 0;
  for (const auto& [gram, c] : h) {
    auto it = r.find(gram);
    if (it != r.end()) matches += std::min(c, it->second);
  }
  return {matches, hyp.size() >= n ? hyp.size() - n + 1 : 0};
}

double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len == 0) return 0;
  if (hyp_len >= ref_len) return 1;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

}  // namespace

std::string BleuReport::str() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << "BLEU = " << bleu << ", " << std::setprecision(1)
      << 100 * precisions[0] << "/" << 100 * precisions[1] << "/" << 100 * precisions[2] << "/"
      << 100 * precisions[3] << " (BP=" << std::setprecision(3) << brevity_penalty
      << ", ratio=" << (reference_length ? double(hypothesis_length) / double(reference_length) : 0.0)
      << ", hyp_len=" << hypothesis_length << ", ref_len=" << reference_length << ")";
  return out.str();
}

BleuReport bleu4(const TokenMap& hypotheses, const TokenMap& references) {
  if (hypotheses.empty()) throw DataError("BLEU needs at least one hypothesis");
  if (hypotheses.size() != references.size()) {
    throw DataError("hypotheses and references cover different item sets (" +
                    std::to_string(hypotheses.size()) + " vs " + std::to_string(references.size()) + ")");
  }
  BleuReport report;
  for (const auto& [id, hyp] : hypotheses) {
    auto it = references.find(id);
    if (it == references.end()) throw DataError("no reference for item '" + id + "'");
    const auto& ref = it->second;
    report.hypothesis_length += hyp.size();
    report.reference_length += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto [m, t] = clipped(hyp, ref, n);
      report.matches[n - 1] += m;
      report.totals[n - 1] += t;
    }
  }
  double log_sum = 0;
  bool any_zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    report.precisions[n] =
        report.totals[n] ? static_cast<double>(report.matches[n]) / static_cast<double>(report.totals[n]) : 0.0;
    if (report.precisions[n] == 0) {
      any_zero = true;
    } else {
      log_sum += std::log(report.precisions[n]);
    }
  }
  report.brevity_penalty = brevity_penalty(report.hypothesis_length, report.reference_length);
  report.bleu = any_zero ? 0.0 : 100.0 * report.brevity_penalty * std::exp(log_sum / 4);
  return report;
}

double sentence_bleu(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
  if (hypothesis.empty()) return 0;
  double log_sum = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto [m, t] = clipped(hypothesis, reference, n);
    if (n == 1) {
      if (m == 0) return 0;
      log_sum += std::log(static_cast<double>(m) / static_cast<double>(t));
    } else {
      log_sum += std::log(static_cast<double>(m + 1) / static_cast<double>(t + 1));
    }
  }
  return 100.0 * brevity_penalty(hypothesis.size(), reference.size()) * std::exp(log_sum / 4);
}

std::map<std::string, double> sentence_scores(const TokenMap& hypotheses, const TokenMap& references) {
  std::map<std::string, double> out;
  for (const auto& [id, hyp] : hypotheses) {
    auto it = references.find(id);
    if (it == references.end()) throw DataError("no reference for item '" + id + "'");
    out[id] = sentence_bleu(hyp, it->second);
  }
  if (out.size() != references.size()) throw DataError("references contain items without hypotheses");
  return out;
}

std::string ScoreHistogram::csv() const {
  std::ostringstream out;
  out << "bin,count,mean_delta\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out << edges[i] << "," << counts[i] << "," << std::setprecision(10) << mean_delta[i] << "\n";
  }
  return out.str();
}

ScoreHistogram score_histogram(const std::map<std::string, double>& baseline,
                               const std::map<std::string, double>& comparison, std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (baseline.size() != comparison.size()) {
    throw DataError("score sets cover different items (" + std::to_string(baseline.size()) + " vs " +
                    std::to_string(comparison.size()) + ")");
  }
  ScoreHistogram h;
  const double width = 100.0 / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(width * static_cast<double>(i));
  h.counts.assign(bins, 0);
  std::vector<double> sums(bins, 0.0);
  for (const auto& [id, a] : baseline) {
    auto it = comparison.find(id);
    if (it == comparison.end()) throw DataError("item '" + id + "' missing from comparison scores");
    if (a < 0 || a > 100) throw DataError("score for '" + id + "' outside [0, 100]");
    auto bin = static_cast<std::size_t>(a / width);
    if (bin >= bins) bin = bins - 1;
    ++h.counts[bin];
    sums[bin] += it->second - a;
  }
  h.mean_delta.assign(bins, 0.0);
  for (std::size_t i = 0; i < bins; ++i) {
    if (h.counts[i] > 0) h.mean_delta[i] = sums[i] / static_cast<double>(h.counts[i]);
  }
  return h;
}

std::vector<Neighbor> nearest_neighbors(const std::map<std::string, Tensor>& vectors,
                                        const std::string& query, std::size_t k) {
  auto q = vectors.find(query);
  if (q == vectors.end()) throw DataError("query id '" + query + "' not found");
  if (k >= vectors.size()) {
    throw ConfigError("k = " + std::to_string(k) + " must be smaller than the " +
                      std::to_string(vectors.size()) + " stored vectors");
  }
  auto norm = [](const std::string& id, const Tensor& t) {
    double s = 0;
    for (Real v : t.data()) s += static_cast<double>(v) * static_cast<double>(v);
    if (s == 0) throw DataError("vector for '" + id + "' is zero; cosine similarity undefined");
    return std::sqrt(s);
  };
  const double qn = norm(query, q->second);
  std::vector<Neighbor> all;
  for (const auto& [id, t] : vectors) {
    const double tn = norm(id, t);
    if (id == query) continue;
    if (t.size() != q->second.size()) throw ShapeError("vector for '" + id + "' has a different dimension");
    double dot = 0;
    for (std::size_t i = 0; i < t.size(); ++i) dot += static_cast<double>(t[i]) * static_cast<double>(q->second[i]);
    all.push_back({id, dot / (qn * tn)});
  }
  // `all` is in id order already; stable sort keeps it for ties.
  std::stable_sort(all.begin(), all.end(),
                   [](const Neighbor& a, const Neighbor& b) { return a.similarity > b.similarity; });
  all.resize(k);
  return all;
}

RunSummary aggregate_runs(std::span<const double> values) {
  if (values.empty()) throw DataError("cannot aggregate zero runs");
  RunSummary out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace mmlm
