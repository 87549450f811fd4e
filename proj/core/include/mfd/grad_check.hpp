#pragma once

#include <functional>

#include "mfd/tensor.hpp"

namespace mfd {

// Compares the analytic gradient of f at x0 against central finite
// differences and returns the max relative error over elements:
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// f must be a scalar-valued function of one tensor.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x0,
                  double step = 1e-5);

}  // namespace mfd
