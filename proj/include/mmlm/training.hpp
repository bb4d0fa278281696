#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmlm/generation.hpp"
#include "mmlm/model.hpp"
#include "mmlm/rng.hpp"

namespace mmlm {

struct TrainerConfig {
  std::size_t batch_size = 100;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double dropout_p = 0.5;
  double l2_lambda = 1e-8;
  std::size_t patience = 10;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 1;
  std::size_t generation_max_steps = 30;

  void validate() const;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)) for a rank-2 shape.
Tensor glorot_init(const Shape& shape, Rng& rng);

// Glorot for every matrix, zeros for biases and the initial state, forget
// gate bias 1.
ModelParams initialize_params(const ModelConfig& config, Rng& rng);

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

// One bias-corrected ADAM update. The L2 term l2_lambda * theta is added to
// each gradient first. Moments are created on the first call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const TrainerConfig& config, std::span<const std::string> names = {});
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainerConfig& config);

struct DropoutShapes {
  std::size_t visual_dim = 0;
  std::size_t source_dim = 0;
  std::size_t embedding_dim = 0;
  std::size_t steps = 0;
};

// Inverted dropout: each mask entry is 0 or 1 / (1 - p).
DropoutPlan make_dropout_plan(Rng& rng, double p, const DropoutShapes& shapes);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;  // mean per-token cross-entropy, training mode
  double val_perplexity = 0;
  double val_bleu = 0;
  double wall_seconds = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::string stop_reason;

  // One JSON object per epoch plus a closing summary record. Wall time is
  // omitted so that reruns serialize identically.
  std::string jsonl() const;
  // Compares everything except wall time.
  bool same_trajectory(const TrainLog& other) const;
};

// True when validation BLEU has not risen above its earlier best during the
// last `patience` epochs AND the lowest perplexity in that window is no better
// than the earlier minimum minus 1e-4.
bool should_stop(std::span<const double> bleu_history, std::span<const double> perplexity_history,
                 std::size_t patience);

// A corpus with whatever conditioning vectors its items need.
struct TrainingData {
  const Corpus* corpus = nullptr;
  const FeatureStore* visual = nullptr;
  const FeatureStore* source = nullptr;
};

double evaluate_perplexity(const ConditionedSequenceModel& model, const TrainingData& data);

struct TrainResult {
  ConditionedSequenceModel model;  // parameters from the best-BLEU epoch
  TrainLog log;
};

using EpochCallback = std::function<void(const ConditionedSequenceModel& best, const EpochRecord& record,
                                         bool improved)>;

TrainResult train(const ConditionedSequenceModel& initial, const TrainingData& train_data,
                  const TrainingData& val_data, const TrainerConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace mmlm
