#include "hhkg/optim.hpp"

#include <cmath>

namespace hhkg {

template <typename T>
void adam_step(Matrix<T>& w, const Matrix<T>& g, Matrix<T>& m, Matrix<T>& v, std::size_t t,
               const AdamConfig& c, bool decay) {
  if (!w.same_shape(g) || !w.same_shape(m) || !w.same_shape(v)) {
    throw DataError("adam_step: shape mismatch");
  }
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  auto wf = w.flat();
  auto gf = g.flat();
  auto mf = m.flat();
  auto vf = v.flat();
  for (std::size_t i = 0; i < wf.size(); ++i) {
    const double gi = gf[i];
    const double mi = c.beta1 * mf[i] + (1.0 - c.beta1) * gi;
    const double vi = c.beta2 * vf[i] + (1.0 - c.beta2) * gi * gi;
    mf[i] = static_cast<T>(mi);
    vf[i] = static_cast<T>(vi);
    double wi = wf[i];
    if (decay && c.weight_decay > 0.0) wi -= c.lr * c.weight_decay * wi;
    wi -= c.lr * (mi / bc1) / (std::sqrt(vi / bc2) + c.eps);
    wf[i] = static_cast<T>(wi);
  }
}

template <typename T>
void Adam<T>::step(ParameterStore<T>& store) {
  auto& params = store.all();
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.rows(), p.value.cols());
      v_.emplace_back(p.value.rows(), p.value.cols());
    }
  }
  require(m_.size() == params.size(), "Adam: parameter store changed shape");
  ++t_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    adam_step(p.value, p.grad, m_[i], v_[i], t_, config_, p.decay);
  }
}

template void adam_step<float>(Matrix<float>&, const Matrix<float>&, Matrix<float>&,
                               Matrix<float>&, std::size_t, const AdamConfig&, bool);
template void adam_step<double>(Matrix<double>&, const Matrix<double>&, Matrix<double>&,
                                Matrix<double>&, std::size_t, const AdamConfig&, bool);
template class Adam<float>;
template class Adam<double>;

}  // namespace hhkg
