#include "mmlm/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mmlm/errors.hpp"

namespace mmlm {
namespace {

std::string describe(std::span<const std::string> names, std::size_t i) {
  if (i < names.size()) return names[i];
  return "parameter #" + std::to_string(i);
}

Real evaluate(const TapeFunction& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.parameter(p));
  return tape.scalar(f(tape, vars));
}

}  // namespace

GradCheckResult grad_check(const TapeFunction& f, const std::vector<Tensor>& params, Real eps,
                           std::span<const std::string> names) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.parameter(p));
    const Var loss = f(tape, vars);
    if (!std::isfinite(tape.scalar(loss))) throw NumericError("grad_check: loss is not finite");
    tape.backward(loss);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      analytic.push_back(tape.grad(vars[i]));
      if (!analytic.back().all_finite()) {
        throw NumericError("grad_check: non-finite analytic gradient for " + describe(names, i));
      }
    }
  }

  GradCheckResult result;
  result.per_parameter.assign(params.size(), 0);
  std::vector<Tensor> probe = params;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t k = 0; k < probe[i].size(); ++k) {
      const Real original = probe[i][k];
      probe[i][k] = original + eps;
      const Real up = evaluate(f, probe);
      probe[i][k] = original - eps;
      const Real down = evaluate(f, probe);
      probe[i][k] = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss while perturbing " + describe(names, i));
      }
      const Real numeric = (up - down) / (2 * eps);
      const Real a = analytic[i][k];
      const Real denom = std::max({std::abs(a), std::abs(numeric), Real(1e-8)});
      const Real rel = std::abs(a - numeric) / denom;
      result.per_parameter[i] = std::max(result.per_parameter[i], rel);
    }
    if (result.per_parameter[i] > result.max_relative_error) {
      result.max_relative_error = result.per_parameter[i];
      result.worst_parameter = i;
    }
  }
  return result;
}

}  // namespace mmlm
