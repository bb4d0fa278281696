#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmlm/tensor.hpp"

namespace mmlm {

using TokenMap = std::map<std::string, std::vector<std::string>>;

struct BleuReport {
  double bleu = 0;  // 0..100
  std::array<double, 4> precisions{};
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;

  std::string str() const;
};

// Corpus BLEU-4 with one reference per item: clipped n-gram precisions for
// n = 1..4, geometric mean, brevity penalty exp(1 - r/c) when c < r.
BleuReport bleu4(const TokenMap& hypotheses, const TokenMap& references);

// Smoothed sentence BLEU-4 (add-one on n >= 2 precisions), 0..100.
double sentence_bleu(std::span<const std::string> hypothesis, std::span<const std::string> reference);

std::map<std::string, double> sentence_scores(const TokenMap& hypotheses, const TokenMap& references);

struct ScoreHistogram {
  std::vector<double> edges;  // bins + 1 edges over [0, 100]
  std::vector<std::size_t> counts;
  std::vector<double> mean_delta;  // mean(B - A) per bin; 0 for empty bins

  // bin,count,mean_delta with bin = lower edge.
  std::string csv() const;
};

// Bins system A's sentence scores; the last bin is closed at 100.
ScoreHistogram score_histogram(const std::map<std::string, double>& baseline,
                               const std::map<std::string, double>& comparison, std::size_t bins = 10);

struct Neighbor {
  std::string id;
  double similarity = 0;
};

// Top-k by cosine similarity to `query`, query excluded, ties by id.
std::vector<Neighbor> nearest_neighbors(const std::map<std::string, Tensor>& vectors,
                                        const std::string& query, std::size_t k);

struct RunSummary {
  double mean = 0;
  double stddev = 0;  // sample (n - 1); 0 for a single run
};

RunSummary aggregate_runs(std::span<const double> values);

}  // namespace mmlm
