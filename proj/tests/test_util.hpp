#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "mmlm/grad_check.hpp"
#include "mmlm/model.hpp"
#include "mmlm/rng.hpp"
#include "mmlm/training.hpp"

namespace mmlm::testing {

// Vocabulary with `n` learned types w0..w{n-1} after the reserved entries.
inline Vocabulary toy_vocab(std::size_t n) {
  std::vector<std::string> types;
  std::vector<std::uint64_t> counts;
  for (std::size_t i = 0; i < n; ++i) {
    types.push_back("w" + std::to_string(i));
    counts.push_back(100 - i);
  }
  return Vocabulary::from_types(types, counts, 1);
}

inline ModelConfig toy_config(std::size_t vocab, std::size_t e, std::size_t h, ConditioningSpec spec = {}) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.embedding_size = e;
  c.hidden_size = h;
  c.conditioning = spec;
  return c;
}

// Glorot weights plus random biases and initial state, so that no parameter
// sits at a special value.
inline ConditionedSequenceModel random_model(const ModelConfig& config, std::uint64_t seed, double bias_scale = 0.5) {
  Rng rng(seed);
  ModelParams p = initialize_params(config, rng);
  p.visit([&](std::string_view, Tensor& t) {
    if (t.rank() == 1) {
      for (auto& v : t.data()) v += static_cast<Real>(rng.uniform(-bias_scale, bias_scale));
    }
  });
  return ConditionedSequenceModel(config, toy_vocab(config.vocab_size - Vocabulary::kReserved), std::move(p));
}

inline Tensor random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  Tensor t = Tensor::zeros(n);
  for (auto& v : t.data()) v = static_cast<Real>(rng.uniform(-scale, scale));
  return t;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mmlm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i] - b[i])));
  return m;
}

struct ModelGradCheck {
  GradCheckResult result;
  std::vector<std::string> names;
};

// Finite-difference check of the full sequence loss over every parameter tensor.
inline ModelGradCheck model_grad_check(const ConditionedSequenceModel& model, std::span<const Index> sequence,
                                       ConditioningInputs inputs, Real eps = Real(1e-5)) {
  std::vector<Tensor> flat;
  std::vector<std::string> names;
  model.params().visit([&](std::string_view name, const Tensor& t) {
    flat.push_back(t);
    names.emplace_back(name);
  });
  const TapeFunction f = [&](Tape& tape, std::span<const Var> vars) {
    ParamVars pv = model.params().transform<Var>([](const Tensor&) { return Var{}; });
    std::size_t i = 0;
    pv.visit([&](std::string_view, Var& v) { v = vars[i++]; });
    return forward_sequence(tape, pv, model.conditioning(), sequence, inputs).loss;
  };
  return {grad_check(f, flat, eps, names), names};
}

}  // namespace mmlm::testing
