#pragma once

#include <cmath>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "hhkg/matrix.hpp"

namespace hhkg {

// A named tensor with a same-shape gradient accumulator. Non-trainable
// entries (batch-norm running statistics) live alongside the weights so
// they are checkpointed with them.
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool trainable = true;
  bool decay = true;

  void zero_grad() { grad = Matrix<T>(value.rows(), value.cols()); }
};

template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add(const std::string& name, Matrix<T> init, bool decay = true,
                    bool trainable = true) {
    require(find(name) == nullptr, "duplicate parameter name " + name);
    auto& p = params_.emplace_back();
    p.name = name;
    p.value = std::move(init);
    p.trainable = trainable;
    p.decay = decay;
    p.zero_grad();
    return p;
  }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
  Parameter<T>& at(const std::string& name) {
    auto* p = find(name);
    if (!p) throw DataError("no parameter named " + name);
    return *p;
  }

  std::deque<Parameter<T>>& all() noexcept { return params_; }
  const std::deque<Parameter<T>>& all() const noexcept { return params_; }

  std::vector<Parameter<T>*> trainable() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) {
      if (p.trainable) out.push_back(&p);
    }
    return out;
  }

  std::size_t scalar_count(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (p.trainable && p.name.rfind(prefix, 0) == 0) n += p.value.size();
    }
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::deque<Parameter<T>> params_;  // deque keeps addresses stable
};

template <typename T>
Matrix<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix<T> m(fan_in, fan_out);
  for (auto& v : m.flat()) v = static_cast<T>(dist(rng));
  return m;
}

}  // namespace hhkg
