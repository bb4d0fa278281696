#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "mmlm/model.hpp"

namespace mmlm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// MMC1 container: magic, u32 version, model configuration, vocabulary, then
// every named parameter tensor with its shape and float64 values.
std::string encode_checkpoint(const ConditionedSequenceModel& model);
ConditionedSequenceModel decode_checkpoint(std::string_view bytes, const std::string& origin = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const ConditionedSequenceModel& model);
ConditionedSequenceModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mmlm
