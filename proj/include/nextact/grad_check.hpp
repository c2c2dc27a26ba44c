#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <string>

#include "nextact/nn.hpp"
#include "nextact/tensor.hpp"

namespace nextact {

template <class R>
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
  double autodiff = 0.0;
  double numeric = 0.0;
};

// Compares the reverse-mode gradient of f against central finite differences,
// componentwise over every parameter. f must rebuild its graph on each call
// and be bitwise deterministic; a repeated-eval mismatch raises a
// determinism error. Relative error is |a-n| / max(1, |a|, |n|).
template <class R>
GradCheckReport<R> grad_check_report(const std::function<Tensor<R>()>& f, ParamSet<R>& params,
                                     double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-2))
    throw ValidationError("grad_check: eps must lie in [1e-7, 1e-2]");

  const R l0 = f().item();
  const R l1 = f().item();
  if (std::memcmp(&l0, &l1, sizeof(R)) != 0)
    throw NumericError("grad_check: non-deterministic function (repeated evaluations differ)");

  params.zero_grad();
  backward(f());

  GradCheckReport<R> rep;
  for (auto& [name, p] : params.items()) {
    auto& w = p.data();
    const auto& g = p.grad();
    for (size_t i = 0; i < w.size(); ++i) {
      const R theta = w[i];
      const R hp = theta + static_cast<R>(eps);
      const R hm = theta - static_cast<R>(eps);
      w[i] = hp;
      const double fp = static_cast<double>(f().item());
      w[i] = hm;
      const double fm = static_cast<double>(f().item());
      w[i] = theta;
      // Use the step that survived rounding, not the nominal eps.
      const double h = static_cast<double>(hp) - static_cast<double>(hm);
      const double numeric = (fp - fm) / h;
      const double autodiff = static_cast<double>(g[i]);
      const double rel = std::abs(autodiff - numeric) /
                         std::max({1.0, std::abs(autodiff), std::abs(numeric)});
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = name;
        rep.worst_index = static_cast<int>(i);
        rep.autodiff = autodiff;
        rep.numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return rep;
}

template <class R>
double grad_check(const std::function<Tensor<R>()>& f, ParamSet<R>& params, double eps) {
  return grad_check_report<R>(f, params, eps).max_rel_err;
}

}  // namespace nextact
