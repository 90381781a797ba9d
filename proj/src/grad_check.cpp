#include "hhkg/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hhkg {

namespace {

double finite_or_throw(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("grad_check: non-finite loss ") + what);
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<double(bool)>& loss,
                           ParameterStore<double>& store, const GradCheckOptions& options) {
  GradCheckReport report;
  store.zero_grad();
  finite_or_throw(loss(true), "at base point");
  std::mt19937_64 rng(options.seed);

  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    TensorCheck tc;
    tc.name = p.name;
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.coords_per_tensor);
    }
    auto w = p.value.flat();
    auto g = p.grad.flat();
    for (std::size_t i : coords) {
      const double saved = w[i];
      w[i] = saved + options.eps;
      const double up = finite_or_throw(loss(false), "at +eps");
      w[i] = saved - options.eps;
      const double down = finite_or_throw(loss(false), "at -eps");
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double abs_err = std::abs(g[i] - numeric);
      const double denom = std::max({std::abs(g[i]), std::abs(numeric), options.denom_floor});
      tc.max_abs_error = std::max(tc.max_abs_error, abs_err);
      tc.max_rel_error = std::max(tc.max_rel_error, abs_err / denom);
    }
    tc.coords = coords.size();
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.tensors.push_back(tc);
  }
  return report;
}

}  // namespace hhkg
