#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hhkg/parameter.hpp"

namespace hhkg {

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t coords_per_tensor = 100;  // all coordinates when the tensor is smaller
  double denom_floor = 1e-6;            // |a - n| / max(|a|, |n|, floor)
  std::uint64_t seed = 0;
};

struct TensorCheck {
  std::string name;
  std::size_t coords = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<TensorCheck> tensors;
};

// `loss(with_grad)` must evaluate the same deterministic loss on every call.
// With with_grad it also runs backward so each Parameter::grad holds the
// analytic gradient. Every trainable tensor is checked against central
// differences. Throws NumericError on a non-finite loss.
GradCheckReport grad_check(const std::function<double(bool with_grad)>& loss,
                           ParameterStore<double>& store, const GradCheckOptions& options = {});

}  // namespace hhkg
