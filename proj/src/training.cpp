#include "mmlm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "mmlm/errors.hpp"
#include "mmlm/metrics.hpp"

namespace mmlm {

void TrainerConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("ADAM betas must lie in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("ADAM epsilon must be positive");
  if (!(dropout_p >= 0 && dropout_p < 1)) throw ConfigError("dropout_p must lie in [0, 1)");
  if (!(l2_lambda >= 0)) throw ConfigError("l2_lambda must be non-negative");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (generation_max_steps < 1) throw ConfigError("generation_max_steps must be at least 1");
}

Tensor glorot_init(const Shape& shape, Rng& rng) {
  if (shape.rank() != 2) throw ShapeError("glorot_init expects a matrix shape, got " + shape.str());
  const double bound = std::sqrt(6.0 / static_cast<double>(shape.rows() + shape.cols()));
  Tensor out(shape);
  for (auto& v : out.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return out;
}

ModelParams initialize_params(const ModelConfig& config, Rng& rng) {
  ModelParams p = zero_params(config);
  p.visit([&](std::string_view, Tensor& t) {
    if (t.rank() == 2) t = glorot_init(t.shape(), rng);
  });
  for (auto& v : p.gate(Gate::forget).bias.data()) v = 1;
  return p;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const TrainerConfig& config, std::span<const std::string> names) {
  if (params.size() != grads.size()) throw ConfigError("adam_step: parameter and gradient counts differ");
  auto label = [&](std::size_t i) { return i < names.size() ? names[i] : "parameter #" + std::to_string(i); };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      throw ShapeError("adam_step: gradient for " + label(i) + " has shape " + grads[i].shape().str() +
                       ", parameter is " + params[i]->shape().str());
    }
    if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient for " + label(i));
  }
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  } else if (state.first_moment.size() != params.size()) {
    throw ConfigError("adam_step: optimizer state does not match the parameter list");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i]->data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double grad = static_cast<double>(g[k]) + config.l2_lambda * static_cast<double>(theta[k]);
      m[k] = static_cast<Real>(config.beta1 * m[k] + (1 - config.beta1) * grad);
      v[k] = static_cast<Real>(config.beta2 * v[k] + (1 - config.beta2) * grad * grad);
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      theta[k] = static_cast<Real>(theta[k] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
  }
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainerConfig& config) {
  std::vector<Tensor*> ps;
  std::vector<std::string> names;
  params.visit([&](std::string_view name, Tensor& t) {
    ps.push_back(&t);
    names.emplace_back(name);
  });
  std::vector<Tensor> gs;
  grads.visit([&](std::string_view, const Tensor& t) { gs.push_back(t); });
  adam_step(ps, gs, state, config, names);
}

namespace {

Tensor dropout_mask(Rng& rng, double p, std::size_t n) {
  const auto keep = static_cast<Real>(1.0 / (1.0 - p));
  Tensor mask = Tensor::zeros(n);
  for (auto& v : mask.data()) v = rng.bernoulli(p) ? Real(0) : keep;
  return mask;
}

}  // namespace

DropoutPlan make_dropout_plan(Rng& rng, double p, const DropoutShapes& shapes) {
  if (!(p >= 0 && p < 1)) throw ConfigError("dropout probability must lie in [0, 1)");
  DropoutPlan plan;
  if (shapes.visual_dim > 0) plan.visual = dropout_mask(rng, p, shapes.visual_dim);
  if (shapes.source_dim > 0) plan.source = dropout_mask(rng, p, shapes.source_dim);
  if (shapes.embedding_dim > 0) {
    for (std::size_t t = 0; t < shapes.steps; ++t) plan.embeddings.push_back(dropout_mask(rng, p, shapes.embedding_dim));
  }
  return plan;
}

std::string TrainLog::jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_perplexity"] = e.val_perplexity;
    j["val_bleu"] = e.val_bleu;
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json summary;
  summary["best_epoch"] = best_epoch;
  summary["stop_reason"] = stop_reason;
  out += summary.dump() + "\n";
  return out;
}

bool TrainLog::same_trajectory(const TrainLog& other) const {
  if (epochs.size() != other.epochs.size() || best_epoch != other.best_epoch || stop_reason != other.stop_reason) {
    return false;
  }
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const auto& a = epochs[i];
    const auto& b = other.epochs[i];
    if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.val_perplexity != b.val_perplexity ||
        a.val_bleu != b.val_bleu) {
      return false;
    }
  }
  return true;
}

bool should_stop(std::span<const double> bleu_history, std::span<const double> perplexity_history,
                 std::size_t patience) {
  if (bleu_history.size() != perplexity_history.size()) {
    throw ConfigError("BLEU and perplexity histories differ in length");
  }
  const std::size_t n = bleu_history.size();
  if (patience == 0 || n <= patience) return false;
  const std::size_t split = n - patience;
  const double best_bleu_before = *std::max_element(bleu_history.begin(), bleu_history.begin() + split);
  const double best_bleu_window = *std::max_element(bleu_history.begin() + split, bleu_history.end());
  const double best_ppl_before = *std::min_element(perplexity_history.begin(), perplexity_history.begin() + split);
  const double best_ppl_window = *std::min_element(perplexity_history.begin() + split, perplexity_history.end());
  const bool bleu_stalled = best_bleu_window <= best_bleu_before;
  const bool perplexity_stalled = best_ppl_window >= best_ppl_before - 1e-4;
  return bleu_stalled && perplexity_stalled;
}

namespace {

void check_data(const ConditionedSequenceModel& model, const TrainingData& data, const char* which) {
  if (data.corpus == nullptr || data.corpus->empty()) throw DataError(std::string(which) + " corpus is empty");
  const auto vocab = model.vocabulary().size();
  for (const auto& item : data.corpus->items()) {
    for (Index w : item.indices) {
      if (w >= vocab) {
        throw DataError(std::string(which) + " item '" + item.id +
                        "' was encoded with a different vocabulary (index " + std::to_string(w) + ")");
      }
    }
    // Fails fast on missing conditioning vectors.
    conditioning_for(model.conditioning(), item.id, data.visual, data.source);
  }
}

TokenMap references_of(const Corpus& corpus) {
  TokenMap out;
  for (const auto& item : corpus.items()) out[item.id] = item.tokens;
  return out;
}

}  // namespace

double evaluate_perplexity(const ConditionedSequenceModel& model, const TrainingData& data) {
  if (data.corpus == nullptr || data.corpus->empty()) throw DataError("cannot compute perplexity of an empty corpus");
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& item : data.corpus->items()) {
    const ConditioningInputs inputs = conditioning_for(model.conditioning(), item.id, data.visual, data.source);
    total += static_cast<double>(model.forward(item.indices, inputs).loss);
    tokens += item.indices.size() - 1;
  }
  return std::exp(total / static_cast<double>(tokens));
}

TrainResult train(const ConditionedSequenceModel& initial, const TrainingData& train_data,
                  const TrainingData& val_data, const TrainerConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  check_data(initial, train_data, "training");
  check_data(initial, val_data, "validation");

  const auto& spec = initial.conditioning();
  const auto& items = train_data.corpus->items();
  ConditionedSequenceModel model = initial;
  ConditionedSequenceModel best = initial;
  ModelParams& params = model.mutable_params();
  ModelParams grads = zero_params(model.config());
  AdamState adam;
  Rng rng(config.seed);
  // Conditioning masks come from their own stream, so that word dropout is
  // the same whatever conditioning a model has.
  Rng conditioning_rng = rng.fork();

  const TokenMap val_refs = references_of(*val_data.corpus);
  const std::vector<std::string> val_ids = val_data.corpus->ids();
  GenerationConfig gen;
  gen.max_steps = config.generation_max_steps;

  std::vector<std::size_t> order(items.size());
  std::vector<double> bleu_history;
  std::vector<double> ppl_history;
  double best_bleu = -1;
  TrainLog log;
  log.stop_reason = "max_epochs";

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0;
    std::size_t epoch_tokens = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      grads.visit([](std::string_view, Tensor& t) { std::fill(t.data().begin(), t.data().end(), Real(0)); });
      for (std::size_t k = begin; k < end; ++k) {
        const CorpusItem& item = items[order[k]];
        const ConditioningInputs inputs = conditioning_for(spec, item.id, train_data.visual, train_data.source);
        DropoutPlan plan;
        if (config.dropout_p > 0) {
          plan = make_dropout_plan(rng, config.dropout_p,
                                   {0, 0, model.config().embedding_size, item.indices.size() - 1});
          const DropoutPlan cond =
              make_dropout_plan(conditioning_rng, config.dropout_p, {spec.visual_dim, spec.source_dim, 0, 0});
          plan.visual = cond.visual;
          plan.source = cond.source;
        }
        Tape tape;
        const ParamVars vars = bind(tape, params);
        const SequenceVars seq = forward_sequence(tape, vars, spec, item.indices, inputs,
                                                  config.dropout_p > 0 ? &plan : nullptr);
        tape.backward(seq.loss);
        std::vector<Var> flat;
        vars.visit([&](std::string_view, const Var& v) { flat.push_back(v); });
        std::size_t idx = 0;
        grads.visit([&](std::string_view, Tensor& g) { tape.accumulate_grad(flat[idx++], g); });
        epoch_loss += static_cast<double>(tape.scalar(seq.loss));
        epoch_tokens += item.indices.size() - 1;
      }
      const auto scale = static_cast<Real>(1.0 / static_cast<double>(end - begin));
      grads.visit([&](std::string_view, Tensor& t) {
        for (auto& v : t.data()) v *= scale;
      });
      adam_step(params, grads, adam, config);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
    record.val_perplexity = evaluate_perplexity(model, val_data);
    const Generations hyps = generate_corpus(model, val_ids, val_data.visual, val_data.source, gen);
    record.val_bleu = bleu4(hyps, val_refs).bleu;
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!std::isfinite(record.train_loss) || !std::isfinite(record.val_perplexity)) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch));
    }
    log.epochs.push_back(record);
    bleu_history.push_back(record.val_bleu);
    ppl_history.push_back(record.val_perplexity);

    const bool improved = record.val_bleu > best_bleu;
    if (improved) {
      best_bleu = record.val_bleu;
      best = model;
      log.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(best, record, improved);
    if (should_stop(bleu_history, ppl_history, config.patience)) {
      log.stop_reason = "early_stop";
      break;
    }
  }
  return {std::move(best), std::move(log)};
}

}  // namespace mmlm
