#pragma once

#include <functional>
#include <vector>

#include "dipro/tensor.hpp"

namespace dipro {

// Compare analytic gradients of a parameterized scalar loss against central
// finite differences. Returns max over parameter entries of
// |analytic - numeric| / max(1, |numeric|). The loss function must be a pure
// function of the current parameter values.
double grad_check(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& params,
                  double step = 1e-5);

}  // namespace dipro
