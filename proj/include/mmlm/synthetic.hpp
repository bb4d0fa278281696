#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mmlm/corpus.hpp"
#include "mmlm/features.hpp"

namespace mmlm {

// Small monolingual corpus for capacity checks: `sentences` distinct random
// word sequences of `length` tokens drawn from a pool of `pool` words.
std::vector<Sentence> memorization_corpus(std::size_t sentences = 8, std::size_t length = 30,
                                          std::size_t pool = 40, std::uint64_t seed = 1);

// German source captions where "rad" is ambiguous between bicycle and wheel,
// English targets that resolve it, and 4-dim image features that identify
// the sense: [1,0,1,0] for bicycle, [0,1,0,1] for wheel.
struct GroundedDataset {
  std::vector<Sentence> source;
  std::vector<Sentence> target;
  FeatureStore images;
};

GroundedDataset grounded_disambiguation(std::size_t items = 200, std::uint64_t seed = 7);

// Writes captions.de.txt, captions.en.txt and images.mmf into `dir`.
void write_grounded_files(const GroundedDataset& data, const std::filesystem::path& dir);

}  // namespace mmlm
