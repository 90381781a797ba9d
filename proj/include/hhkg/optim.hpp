#pragma once

#include <vector>

#include "hhkg/parameter.hpp"

namespace hhkg {

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // decoupled; skipped for parameters with decay == false
};

// Bias-corrected Adam with decoupled weight decay. Moment buffers are
// keyed by position in the store, so the store must not change shape.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(ParameterStore<T>& store);
  std::size_t steps() const noexcept { return t_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

// One update of a single tensor given its moment buffers and step count t >= 1.
template <typename T>
void adam_step(Matrix<T>& w, const Matrix<T>& g, Matrix<T>& m, Matrix<T>& v, std::size_t t,
               const AdamConfig& config, bool decay);

}  // namespace hhkg
