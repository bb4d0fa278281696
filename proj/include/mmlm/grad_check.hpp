#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmlm/tape.hpp"

namespace mmlm {

// Builds a scalar loss on `tape` from one Var per parameter tensor.
using TapeFunction = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckResult {
  Real max_relative_error = 0;
  std::vector<Real> per_parameter;  // max relative error within each tensor
  std::size_t worst_parameter = 0;
};

// Compares tape gradients against central finite differences, coordinate by
// coordinate. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const TapeFunction& f, const std::vector<Tensor>& params,
                           Real eps = Real(1e-5), std::span<const std::string> names = {});

}  // namespace mmlm
