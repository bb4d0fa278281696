#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmlm/corpus.hpp"
#include "mmlm/features.hpp"
#include "mmlm/tape.hpp"
#include "mmlm/tensor.hpp"
#include "mmlm/vocabulary.hpp"

namespace mmlm {

// Which fixed vectors condition the first timestep.
struct ConditioningSpec {
  bool use_visual = false;
  bool use_source = false;
  std::size_t visual_dim = 0;
  std::size_t source_dim = 0;

  static ConditioningSpec none() { return {}; }
  static ConditioningSpec visual(std::size_t dim) { return {true, false, dim, 0}; }
  static ConditioningSpec source(std::size_t dim) { return {false, true, 0, dim}; }
  static ConditioningSpec both(std::size_t visual_dim, std::size_t source_dim) {
    return {true, true, visual_dim, source_dim};
  }

  void validate() const;
  friend bool operator==(const ConditioningSpec&, const ConditioningSpec&) = default;
};

struct ModelConfig {
  std::size_t hidden_size = 256;
  std::size_t embedding_size = 256;
  std::size_t vocab_size = 0;
  ConditioningSpec conditioning;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Gate { input = 0, forget = 1, output = 2, candidate = 3 };
inline constexpr std::array<Gate, 4> kGates = {Gate::input, Gate::forget, Gate::output,
                                               Gate::candidate};
std::string_view gate_name(Gate gate);

template <class T>
struct GateParams {
  T input_weight;   // [H x E]
  T hidden_weight;  // [H x H]
  T bias;           // [H]
};

// Every learned quantity of the model. Instantiated with Tensor for storage
// and with Var for a copy bound to a tape.
template <class T>
struct ParamSet {
  T embedding;  // [E x |V|]; column i embeds word i
  std::array<GateParams<T>, 4> gates;
  T output_weight;  // [|V| x H]
  T output_bias;    // [|V|]
  std::optional<T> visual_projection;  // [H x visual_dim]
  std::optional<T> source_projection;  // [H x source_dim]
  T h_init;  // learned h_{-1}
  T c_init;

  const GateParams<T>& gate(Gate g) const { return gates[static_cast<std::size_t>(g)]; }
  GateParams<T>& gate(Gate g) { return gates[static_cast<std::size_t>(g)]; }

  // f(name, T&) in a fixed order; optional projections only when present.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  template <class U, class F>
  ParamSet<U> transform(F&& f) const {
    ParamSet<U> out;
    out.embedding = f(embedding);
    for (std::size_t i = 0; i < gates.size(); ++i) {
      out.gates[i] = {f(gates[i].input_weight), f(gates[i].hidden_weight), f(gates[i].bias)};
    }
    out.output_weight = f(output_weight);
    out.output_bias = f(output_bias);
    if (visual_projection) out.visual_projection = f(*visual_projection);
    if (source_projection) out.source_projection = f(*source_projection);
    out.h_init = f(h_init);
    out.c_init = f(c_init);
    return out;
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    f(std::string_view("embedding"), self.embedding);
    static constexpr std::string_view kNames[4][3] = {
        {"lstm.input.input_weight", "lstm.input.hidden_weight", "lstm.input.bias"},
        {"lstm.forget.input_weight", "lstm.forget.hidden_weight", "lstm.forget.bias"},
        {"lstm.output.input_weight", "lstm.output.hidden_weight", "lstm.output.bias"},
        {"lstm.candidate.input_weight", "lstm.candidate.hidden_weight", "lstm.candidate.bias"},
    };
    for (std::size_t i = 0; i < 4; ++i) {
      f(kNames[i][0], self.gates[i].input_weight);
      f(kNames[i][1], self.gates[i].hidden_weight);
      f(kNames[i][2], self.gates[i].bias);
    }
    f(std::string_view("output.weight"), self.output_weight);
    f(std::string_view("output.bias"), self.output_bias);
    if (self.visual_projection) f(std::string_view("visual_projection"), *self.visual_projection);
    if (self.source_projection) f(std::string_view("source_projection"), *self.source_projection);
    f(std::string_view("h_init"), self.h_init);
    f(std::string_view("c_init"), self.c_init);
  }
};

using ModelParams = ParamSet<Tensor>;
using ParamVars = ParamSet<Var>;

// All-zero parameters with the shapes `config` demands.
ModelParams zero_params(const ModelConfig& config);
// ShapeError unless every tensor (and the set of projections) matches `config`.
void check_params(const ModelParams& params, const ModelConfig& config);
ParamVars bind(Tape& tape, const ModelParams& params);

struct ConditioningInputs {
  const Tensor* visual = nullptr;
  const Tensor* source = nullptr;
};

// Inverted-dropout masks for one training example. Absent entries mean "keep
// everything"; `embeddings[t]` masks the word fed at step t.
struct DropoutPlan {
  std::optional<Tensor> visual;
  std::optional<Tensor> source;
  std::vector<Tensor> embeddings;

  bool is_identity() const { return !visual && !source && embeddings.empty(); }
};

struct LstmState {
  Var h;
  Var c;
};

struct InitialState {
  LstmState state;
  // W_vh v + W_hs s, added to every gate preactivation at step 0 only.
  std::optional<Var> conditioning;
};

struct SequenceVars {
  std::vector<Var> distributions;
  Var loss;
  Var final_hidden;
};

// Tape-level building blocks (used for training and by the value-level API).
Var embed(Tape& tape, const ParamVars& params, Index word);
InitialState init_state(Tape& tape, const ParamVars& params, const ConditioningSpec& spec,
                        ConditioningInputs inputs, const DropoutPlan* dropout = nullptr);
LstmState lstm_step(Tape& tape, const ParamVars& params, LstmState state, Var input,
                    std::optional<Var> conditioning = std::nullopt);
Var output_distribution(Tape& tape, const ParamVars& params, Var h);
// Sums the cross-entropy of predicting indices[t + 1] from the state after
// consuming indices[0..t]. final_hidden is the state that predicts </s>.
SequenceVars forward_sequence(Tape& tape, const ParamVars& params, const ConditioningSpec& spec,
                              std::span<const Index> indices, ConditioningInputs inputs,
                              const DropoutPlan* dropout = nullptr);

// Value-level API.
struct StateValues {
  Tensor h;
  Tensor c;
};

struct InitialStateValues {
  StateValues state;
  std::optional<Tensor> conditioning;
};

struct SequenceResult {
  std::vector<Tensor> distributions;
  Real loss = 0;
  Tensor final_hidden;
};

Tensor embed(const ModelParams& params, Index word);
InitialStateValues init_state(const ModelParams& params, const ConditioningSpec& spec,
                              ConditioningInputs inputs);
StateValues lstm_step(const ModelParams& params, const StateValues& state, const Tensor& input,
                      const Tensor* conditioning = nullptr);
Tensor output_distribution(const ModelParams& params, const Tensor& h);
SequenceResult forward_sequence(const ModelParams& params, const ConditioningSpec& spec,
                                std::span<const Index> indices, ConditioningInputs inputs,
                                const DropoutPlan* dropout = nullptr);

// Configuration, vocabulary and parameters: everything a checkpoint holds.
class ConditionedSequenceModel {
 public:
  ConditionedSequenceModel(ModelConfig config, Vocabulary vocab, ModelParams params);

  const ModelConfig& config() const { return config_; }
  const ConditioningSpec& conditioning() const { return config_.conditioning; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const ModelParams& params() const { return params_; }
  ModelParams& mutable_params() { return params_; }

  SequenceResult forward(std::span<const Index> indices, ConditioningInputs inputs) const {
    return forward_sequence(params_, config_.conditioning, indices, inputs);
  }

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  ModelParams params_;
};

// Looks up the conditioning vectors `model` needs for `id`. Throws DataError
// when a required store is missing or lacks the id.
ConditioningInputs conditioning_for(const ConditioningSpec& spec, const std::string& id,
                                    const FeatureStore* visual, const FeatureStore* source);

// Final hidden state of `model` over every sentence of `corpus`, dropout off.
// `visual` is required when the model is image-conditioned.
FeatureStore extract_final_hidden(const ConditionedSequenceModel& model, const Corpus& corpus,
                                  const FeatureStore* visual = nullptr);

}  // namespace mmlm
