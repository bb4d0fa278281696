#include "mmlm/synthetic.hpp"

#include <array>
#include <cstdio>
#include <set>

#include "mmlm/errors.hpp"
#include "mmlm/io.hpp"
#include "mmlm/text.hpp"
#include "mmlm/rng.hpp"

namespace mmlm {

namespace {

std::string item_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
  return buf;
}

}  // namespace

std::vector<Sentence> memorization_corpus(std::size_t sentences, std::size_t length, std::size_t pool,
                                          std::uint64_t seed) {
  if (sentences == 0 || length == 0 || pool < 2) throw ConfigError("memorization corpus needs sentences, length and pool >= 2");
  Rng rng(seed);
  std::set<std::vector<std::string>> seen;
  std::vector<Sentence> out;
  while (out.size() < sentences) {
    std::vector<std::string> tokens;
    for (std::size_t j = 0; j < length; ++j) tokens.push_back("m" + std::to_string(rng.below(pool)));
    if (!seen.insert(tokens).second) continue;
    out.push_back({item_id("mem", out.size()), std::move(tokens)});
  }
  return out;
}

GroundedDataset grounded_disambiguation(std::size_t items, std::uint64_t seed) {
  if (items == 0) throw ConfigError("grounded dataset needs at least one item");
  static constexpr std::array<std::pair<const char*, const char*>, 6> kColors{{
      {"red", "rotes"}, {"blue", "blaues"}, {"green", "gruenes"},
      {"yellow", "gelbes"}, {"black", "schwarzes"}, {"white", "weisses"},
  }};
  static constexpr std::array<std::pair<const char*, const char*>, 4> kPlaces{{
      {"house", "haus"}, {"river", "fluss"}, {"station", "bahnhof"}, {"park", "park"},
  }};

  Rng rng(seed);
  GroundedDataset out{{}, {}, FeatureStore(4)};
  for (std::size_t i = 0; i < items; ++i) {
    const std::string id = item_id("syn", i);
    const bool bicycle = rng.bernoulli(0.5);
    const auto& [color_en, color_de] = kColors[rng.below(kColors.size())];
    const auto& [place_en, place_de] = kPlaces[rng.below(kPlaces.size())];

    out.source.push_back({id, {"ein", color_de, "rad", "am", place_de}});
    if (bicycle) {
      out.target.push_back({id, {"a", color_en, "bicycle", "stands", "in", "front", "of", "the", place_en}});
      out.images.insert(id, Tensor::vector({1, 0, 1, 0}));
    } else {
      out.target.push_back({id, {"a", color_en, "wheel", "lies", "next", "to", "the", place_en}});
      out.images.insert(id, Tensor::vector({0, 1, 0, 1}));
    }
  }
  return out;
}

void write_grounded_files(const GroundedDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto captions = [](const std::vector<Sentence>& sentences) {
    std::string out;
    for (const auto& s : sentences) out += s.id + "\t" + join_tokens(s.tokens) + "\n";
    return out;
  };
  write_file_atomic(dir / "captions.de.txt", captions(data.source));
  write_file_atomic(dir / "captions.en.txt", captions(data.target));
  save_features(dir / "images.mmf", data.images);
}

}  // namespace mmlm
