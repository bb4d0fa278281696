#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmlm/model.hpp"

namespace mmlm {

struct GenerationConfig {
  std::size_t max_steps = 30;   // cap on generated content tokens
  bool include_markers = false; // wrap output in <s> ... </s>
};

using Generations = std::map<std::string, std::vector<std::string>>;

// Feeds <s>, then repeatedly the argmax word (lowest index wins ties) until
// </s> or max_steps words. <pad> and <s> are never emitted.
std::vector<Index> greedy_generate_indices(const ModelParams& params, const ConditioningSpec& spec,
                                           ConditioningInputs inputs, const GenerationConfig& config = {});
std::vector<std::string> greedy_generate(const ConditionedSequenceModel& model, ConditioningInputs inputs,
                                         const GenerationConfig& config = {});

Generations generate_corpus(const ConditionedSequenceModel& model, const std::vector<std::string>& ids,
                            const FeatureStore* visual, const FeatureStore* source,
                            const GenerationConfig& config = {});

// `<item_id>\t<sentence>` lines in id order.
std::string format_generations(const Generations& generations);
Generations parse_generations(const std::string& text, const std::string& origin);
Generations read_generations(const std::filesystem::path& path);

}  // namespace mmlm
