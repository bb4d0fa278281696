#include "mmlm/generation.hpp"

#include "mmlm/errors.hpp"
#include "mmlm/io.hpp"
#include "mmlm/text.hpp"

namespace mmlm {
namespace {

Index argmax_word(const Tensor& dist) {
  Index best = Vocabulary::kEos;
  for (Index i = 0; i < dist.size(); ++i) {
    if (i == Vocabulary::kPad || i == Vocabulary::kBos) continue;
    if (dist[i] > dist[best] || (dist[i] == dist[best] && i < best)) best = i;
  }
  return best;
}

}  // namespace

std::vector<Index> greedy_generate_indices(const ModelParams& params, const ConditioningSpec& spec,
                                           ConditioningInputs inputs, const GenerationConfig& config) {
  if (config.max_steps == 0) throw ConfigError("max_steps must be at least 1");
  Tape tape;
  const ParamVars p = bind(tape, params);
  const InitialState init = init_state(tape, p, spec, inputs);
  LstmState state = init.state;
  std::vector<Index> out;
  Index word = Vocabulary::kBos;
  for (std::size_t step = 0; out.size() < config.max_steps; ++step) {
    state = lstm_step(tape, p, state, embed(tape, p, word), step == 0 ? init.conditioning : std::nullopt);
    word = argmax_word(tape.value(output_distribution(tape, p, state.h)));
    if (word == Vocabulary::kEos) break;
    out.push_back(word);
  }
  if (config.include_markers) {
    const bool ended = word == Vocabulary::kEos;
    out.insert(out.begin(), Vocabulary::kBos);
    if (ended) out.push_back(Vocabulary::kEos);
  }
  return out;
}

std::vector<std::string> greedy_generate(const ConditionedSequenceModel& model, ConditioningInputs inputs,
                                         const GenerationConfig& config) {
  const auto indices = greedy_generate_indices(model.params(), model.conditioning(), inputs, config);
  std::vector<std::string> out;
  out.reserve(indices.size());
  for (Index i : indices) out.push_back(model.vocabulary().token(i));
  return out;
}

Generations generate_corpus(const ConditionedSequenceModel& model, const std::vector<std::string>& ids,
                            const FeatureStore* visual, const FeatureStore* source,
                            const GenerationConfig& config) {
  Generations out;
  for (const auto& id : ids) {
    const ConditioningInputs inputs = conditioning_for(model.conditioning(), id, visual, source);
    out[id] = greedy_generate(model, inputs, config);
  }
  return out;
}

std::string format_generations(const Generations& generations) {
  std::string out;
  for (const auto& [id, tokens] : generations) out += id + "\t" + join_tokens(tokens) + "\n";
  return out;
}

Generations parse_generations(const std::string& text, const std::string& origin) {
  Generations out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": expected <item_id>\\t<sentence>");
    }
    std::string id = line.substr(0, tab);
    std::vector<std::string> tokens;
    std::string_view rest = std::string_view(line).substr(tab + 1);
    std::size_t i = 0;
    while (i < rest.size()) {
      while (i < rest.size() && rest[i] == ' ') ++i;
      std::size_t j = i;
      while (j < rest.size() && rest[j] != ' ') ++j;
      if (j > i) tokens.emplace_back(rest.substr(i, j - i));
      i = j;
    }
    if (!out.emplace(id, std::move(tokens)).second) {
      throw DataError(origin + ": duplicate item id '" + id + "'");
    }
  }
  return out;
}

Generations read_generations(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("file not found: " + path.string());
  return parse_generations(read_file(path), path.string());
}

}  // namespace mmlm
