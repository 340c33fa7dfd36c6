#pragma once

#include <functional>
#include <vector>

#include "xtalgen/autodiff/tape.hpp"

namespace xtalgen::ad {

inline constexpr double kFiniteDifferenceStep = 1e-5;

// Compares the tape gradient of a scalar function with central finite
// differences. Returns max over components of |g_ad - g_fd| / max(1, |g_fd|).
double grad_check(const std::function<Var(Tape&, Var)>& function, const Matrix& input,
                  double step = kFiniteDifferenceStep);

// Same check over every entry of a set of parameters; `loss` must record a
// fresh forward pass on the given tape and return the 1x1 loss node.
double grad_check_parameters(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                             double step = kFiniteDifferenceStep);

}  // namespace xtalgen::ad
