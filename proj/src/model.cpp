#include "mmlm/model.hpp"

#include <sstream>

#include "mmlm/errors.hpp"

namespace mmlm {

void ConditioningSpec::validate() const {
  if (use_visual != (visual_dim > 0)) {
    throw ConfigError("visual_dim must be positive exactly when visual conditioning is enabled");
  }
  if (use_source != (source_dim > 0)) {
    throw ConfigError("source_dim must be positive exactly when source conditioning is enabled");
  }
}

void ModelConfig::validate() const {
  if (hidden_size == 0 || embedding_size == 0) {
    throw ConfigError("hidden_size and embedding_size must be positive");
  }
  if (vocab_size <= Vocabulary::kReserved) {
    throw ConfigError("vocab_size must exceed the " + std::to_string(Vocabulary::kReserved) +
                      " reserved entries");
  }
  conditioning.validate();
}

std::string_view gate_name(Gate gate) {
  switch (gate) {
    case Gate::input:
      return "input";
    case Gate::forget:
      return "forget";
    case Gate::output:
      return "output";
    case Gate::candidate:
      return "candidate";
  }
  return "?";
}

ModelParams zero_params(const ModelConfig& config) {
  config.validate();
  const auto h = config.hidden_size;
  const auto e = config.embedding_size;
  const auto v = config.vocab_size;
  ModelParams p;
  p.embedding = Tensor::zeros(e, v);
  for (auto& g : p.gates) {
    g.input_weight = Tensor::zeros(h, e);
    g.hidden_weight = Tensor::zeros(h, h);
    g.bias = Tensor::zeros(h);
  }
  p.output_weight = Tensor::zeros(v, h);
  p.output_bias = Tensor::zeros(v);
  if (config.conditioning.use_visual) {
    p.visual_projection = Tensor::zeros(h, config.conditioning.visual_dim);
  }
  if (config.conditioning.use_source) {
    p.source_projection = Tensor::zeros(h, config.conditioning.source_dim);
  }
  p.h_init = Tensor::zeros(h);
  p.c_init = Tensor::zeros(h);
  return p;
}

void check_params(const ModelParams& params, const ModelConfig& config) {
  const ModelParams expected = zero_params(config);
  std::vector<std::pair<std::string, Shape>> want;
  expected.visit([&](std::string_view name, const Tensor& t) { want.emplace_back(name, t.shape()); });
  std::vector<std::pair<std::string, Shape>> got;
  params.visit([&](std::string_view name, const Tensor& t) { got.emplace_back(name, t.shape()); });
  if (want.size() != got.size()) {
    throw ShapeError("parameter set has " + std::to_string(got.size()) + " tensors, configuration needs " +
                     std::to_string(want.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i] != got[i]) {
      throw ShapeError("parameter " + got[i].first + " has shape " + got[i].second.str() + ", expected " +
                       want[i].first + " " + want[i].second.str());
    }
  }
}

ParamVars bind(Tape& tape, const ModelParams& params) {
  return params.transform<Var>([&](const Tensor& t) { return tape.parameter(t); });
}

Var embed(Tape& tape, const ParamVars& params, Index word) {
  return tape.column(params.embedding, word);
}

namespace {

void check_input(const Tensor* v, bool wanted, std::size_t dim, const char* what) {
  if (wanted && v == nullptr) {
    throw ConfigError(std::string("model is conditioned on ") + what + " features but none were given");
  }
  if (!wanted && v != nullptr) {
    throw ConfigError(std::string("model takes no ") + what + " features but a vector was given");
  }
  if (v != nullptr && (v->rank() != 1 || v->size() != dim)) {
    throw ShapeError(std::string(what) + " feature vector has shape " + v->shape().str() +
                     ", expected [" + std::to_string(dim) + "]");
  }
}

Var masked(Tape& tape, Var x, const std::optional<Tensor>& mask) {
  if (!mask) return x;
  return tape.mul(x, tape.constant(*mask));
}

void require_finite(const Tape& tape, Var v, std::string_view what) {
  if (!tape.value(v).all_finite()) {
    throw NumericError("non-finite value in LSTM " + std::string(what));
  }
}

}  // namespace

InitialState init_state(Tape& tape, const ParamVars& params, const ConditioningSpec& spec,
                        ConditioningInputs inputs, const DropoutPlan* dropout) {
  check_input(inputs.visual, spec.use_visual, spec.visual_dim, "visual");
  check_input(inputs.source, spec.use_source, spec.source_dim, "source");
  if (spec.use_visual != params.visual_projection.has_value() ||
      spec.use_source != params.source_projection.has_value()) {
    throw ConfigError("conditioning spec does not match the model's projections");
  }

  InitialState out{{params.h_init, params.c_init}, std::nullopt};
  static const std::optional<Tensor> kNoMask;
  if (spec.use_visual) {
    Var v = masked(tape, tape.constant(*inputs.visual), dropout ? dropout->visual : kNoMask);
    out.conditioning = tape.matvec(*params.visual_projection, v);
  }
  if (spec.use_source) {
    Var s = masked(tape, tape.constant(*inputs.source), dropout ? dropout->source : kNoMask);
    Var term = tape.matvec(*params.source_projection, s);
    out.conditioning = out.conditioning ? tape.add(*out.conditioning, term) : term;
  }
  return out;
}

LstmState lstm_step(Tape& tape, const ParamVars& params, LstmState state, Var input,
                    std::optional<Var> conditioning) {
  std::array<Var, 4> act;
  for (Gate g : kGates) {
    const auto& gp = params.gate(g);
    Var pre = tape.add(tape.affine(gp.input_weight, input, gp.bias), tape.matvec(gp.hidden_weight, state.h));
    if (conditioning) pre = tape.add(pre, *conditioning);
    Var a = g == Gate::candidate ? tape.tanh(pre) : tape.sigmoid(pre);
    require_finite(tape, a, std::string(gate_name(g)) + " gate");
    act[static_cast<std::size_t>(g)] = a;
  }
  const Var i = act[0];
  const Var f = act[1];
  const Var o = act[2];
  const Var cand = act[3];
  Var c = tape.add(tape.mul(f, state.c), tape.mul(i, cand));
  require_finite(tape, c, "cell state");
  Var h = tape.mul(o, tape.tanh(c));
  require_finite(tape, h, "hidden state");
  return {h, c};
}

Var output_distribution(Tape& tape, const ParamVars& params, Var h) {
  return tape.softmax(tape.affine(params.output_weight, h, params.output_bias));
}

SequenceVars forward_sequence(Tape& tape, const ParamVars& params, const ConditioningSpec& spec,
                              std::span<const Index> indices, ConditioningInputs inputs,
                              const DropoutPlan* dropout) {
  if (indices.size() < 2) throw DataError("sequence must hold at least <s> and </s>");
  const std::size_t steps = indices.size() - 1;
  if (dropout && !dropout->embeddings.empty() && dropout->embeddings.size() != steps) {
    throw ConfigError("dropout plan has " + std::to_string(dropout->embeddings.size()) +
                      " embedding masks for " + std::to_string(steps) + " steps");
  }
  const std::size_t vocab = tape.value(params.output_bias).size();
  for (Index w : indices) {
    if (w >= vocab) {
      throw IndexError("token index " + std::to_string(w) + " out of range for vocabulary of " +
                       std::to_string(vocab));
    }
  }

  InitialState init = init_state(tape, params, spec, inputs, dropout);
  LstmState state = init.state;
  SequenceVars out;
  out.distributions.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Var e = embed(tape, params, indices[t]);
    if (dropout && !dropout->embeddings.empty()) e = tape.mul(e, tape.constant(dropout->embeddings[t]));
    state = lstm_step(tape, params, state, e, t == 0 ? init.conditioning : std::nullopt);
    Var dist = output_distribution(tape, params, state.h);
    Var ce = tape.cross_entropy(dist, indices[t + 1]);
    out.loss = t == 0 ? ce : tape.add(out.loss, ce);
    out.distributions.push_back(dist);
  }
  out.final_hidden = state.h;
  return out;
}

Tensor embed(const ModelParams& params, Index word) {
  Tape tape;
  return tape.value(embed(tape, bind(tape, params), word));
}

InitialStateValues init_state(const ModelParams& params, const ConditioningSpec& spec,
                              ConditioningInputs inputs) {
  Tape tape;
  const InitialState s = init_state(tape, bind(tape, params), spec, inputs);
  InitialStateValues out{{tape.value(s.state.h), tape.value(s.state.c)}, std::nullopt};
  if (s.conditioning) out.conditioning = tape.value(*s.conditioning);
  return out;
}

StateValues lstm_step(const ModelParams& params, const StateValues& state, const Tensor& input,
                      const Tensor* conditioning) {
  Tape tape;
  const ParamVars p = bind(tape, params);
  std::optional<Var> cond;
  if (conditioning != nullptr) cond = tape.constant(*conditioning);
  const LstmState next =
      lstm_step(tape, p, {tape.constant(state.h), tape.constant(state.c)}, tape.constant(input), cond);
  return {tape.value(next.h), tape.value(next.c)};
}

Tensor output_distribution(const ModelParams& params, const Tensor& h) {
  Tape tape;
  return tape.value(output_distribution(tape, bind(tape, params), tape.constant(h)));
}

SequenceResult forward_sequence(const ModelParams& params, const ConditioningSpec& spec,
                                std::span<const Index> indices, ConditioningInputs inputs,
                                const DropoutPlan* dropout) {
  Tape tape;
  const SequenceVars vars = forward_sequence(tape, bind(tape, params), spec, indices, inputs, dropout);
  SequenceResult out;
  for (Var d : vars.distributions) out.distributions.push_back(tape.value(d));
  out.loss = tape.scalar(vars.loss);
  out.final_hidden = tape.value(vars.final_hidden);
  return out;
}

ConditionedSequenceModel::ConditionedSequenceModel(ModelConfig config, Vocabulary vocab, ModelParams params)
    : config_(config), vocab_(std::move(vocab)), params_(std::move(params)) {
  config_.validate();
  if (vocab_.size() != config_.vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(vocab_.size()) + " entries, model expects " +
                      std::to_string(config_.vocab_size));
  }
  check_params(params_, config_);
}

ConditioningInputs conditioning_for(const ConditioningSpec& spec, const std::string& id,
                                    const FeatureStore* visual, const FeatureStore* source) {
  ConditioningInputs inputs;
  if (spec.use_visual) {
    if (visual == nullptr) throw DataError("image features required but no feature store was given");
    inputs.visual = &visual->at(id);
  }
  if (spec.use_source) {
    if (source == nullptr) throw DataError("source features required but no transfer features were given");
    inputs.source = &source->at(id);
  }
  return inputs;
}

FeatureStore extract_final_hidden(const ConditionedSequenceModel& model, const Corpus& corpus,
                                  const FeatureStore* visual) {
  const auto& spec = model.conditioning();
  if (spec.use_source) throw ConfigError("cannot extract transfer features from a source-conditioned model");
  FeatureStore out(model.config().hidden_size);
  for (const auto& item : corpus.items()) {
    Tape tape;
    const ConditioningInputs inputs = conditioning_for(spec, item.id, visual, nullptr);
    const SequenceVars seq = forward_sequence(tape, bind(tape, model.params()), spec, item.indices, inputs);
    out.insert(item.id, tape.value(seq.final_hidden));
  }
  return out;
}

}  // namespace mmlm
