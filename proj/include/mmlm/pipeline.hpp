#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmlm/dataset.hpp"
#include "mmlm/features.hpp"
#include "mmlm/metrics.hpp"
#include "mmlm/training.hpp"

namespace mmlm {

// LM_only is the unconditioned target-language model; the others follow the
// "<source model> to <target model>" naming of the transfer matrix.
enum class Variant { LM_only, MLM_only, LM_to_LM, MLM_to_MLM, LM_to_MLM, MLM_to_LM };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
bool is_transfer(Variant v);
bool source_is_multimodal(Variant v);
bool target_is_multimodal(Variant v);
// e.g. "De MLM -> En LM" or "En MLM".
std::string variant_label(Variant v, const std::string& source_language, const std::string& target_language);

// Final hidden states of a source model, with the checkpoint they came from.
struct TransferFeatures {
  FeatureStore store;
  std::string source_checkpoint;  // git blob SHA-1 of the checkpoint file
  std::string split;
};

// Writes `path` (MMF1) and `path`.json with the provenance.
void save_transfer_features(const std::filesystem::path& path, const TransferFeatures& features);
TransferFeatures load_transfer_features(const std::filesystem::path& path);

// Loads the checkpoint, checks it against the corpus vocabulary and extracts
// one vector per sentence.
TransferFeatures extract_stage(const std::filesystem::path& checkpoint, const Corpus& corpus,
                               const Vocabulary& vocabulary, const FeatureStore* visual);

struct SideModel {
  std::size_t hidden_size = 256;
  std::size_t embedding_size = 256;
};

struct ExperimentConfig {
  Variant variant = Variant::MLM_only;
  std::string source_language = "de";
  std::string target_language = "en";
  SideModel source_model;
  SideModel target_model;
  TrainerConfig trainer;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t jobs = 1;

  void validate() const;
};

void to_json(nlohmann::ordered_json& j, const TrainerConfig& c);
void from_json(const nlohmann::ordered_json& j, TrainerConfig& c);
void to_json(nlohmann::ordered_json& j, const ExperimentConfig& c);
void from_json(const nlohmann::ordered_json& j, ExperimentConfig& c);

struct SideMetrics {
  double bleu = 0;
  double perplexity = 0;
  std::size_t best_epoch = 0;
  std::size_t epochs = 0;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::optional<SideMetrics> source;
  std::optional<SideMetrics> target;
  std::string failed_stage;  // empty on success
  std::string error;

  bool ok() const { return failed_stage.empty(); }
};

struct ExperimentReport {
  Variant variant = Variant::MLM_only;
  std::string source_language;
  std::string target_language;
  std::string test_split;  // target language plus a hash of the test ids
  std::vector<SeedOutcome> seeds;
  RunSummary bleu;
  RunSummary perplexity;
  std::optional<RunSummary> source_bleu;
  std::optional<RunSummary> source_perplexity;

  std::string label() const { return variant_label(variant, source_language, target_language); }
  // Variant, BLEU +- std and PPLX +- std over the successful seeds.
  std::string table() const;
  std::string json() const;
  static ExperimentReport from_json(const std::string& text, const std::string& origin = "<memory>");
};

// Per seed: train the source model (transfer variants), extract features for
// train/val/test, train the target model and evaluate it on the test split.
// Everything is written under out_dir/seed-<n>/; report.json and report.txt
// summarize. Failed seeds are recorded; if every seed fails this throws.
ExperimentReport run_experiment(const ExperimentConfig& config, const PreparedDataset& data,
                                 const std::filesystem::path& out_dir);

struct ComparisonRow {
  std::string label;
  Variant variant = Variant::MLM_only;
  RunSummary bleu;
  RunSummary perplexity;
  std::optional<double> delta_bleu;  // against the image-only baseline, if present
};

// Sorted by mean BLEU, best first. Reports must share a test split.
std::vector<ComparisonRow> compare_variants(std::span<const ExperimentReport> reports);
std::string format_comparison(std::span<const ComparisonRow> rows);

}  // namespace mmlm
