// Central-difference gradient checking against the tape's analytic gradients.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "gpit/param_store.hpp"

namespace gpit {

// Loss functional over a parameter store. When the gradient map pointer is
// non-null the callee must also run backward and fill analytic gradients.
template <class S>
using LossFnT = std::function<S(ParamStoreT<S>&, GradMapT<S>*)>;
using LossFn = LossFnT<double>;

template <class S>
struct GradCheckReportT {
  S max_rel_err = S(0);
  std::string worst_param;
  Index worst_coord = -1;
  std::map<std::string, S> per_param;
};
using GradCheckReport = GradCheckReportT<double>;

namespace detail {

// Relative error with an absolute-error fallback when both values are tiny.
template <class S>
S grad_discrepancy(S analytic, S numeric) {
  const S denom = std::max(std::abs(analytic), std::abs(numeric));
  const S diff = std::abs(analytic - numeric);
  if (denom < S(1e-6)) return diff;
  return diff / denom;
}

}  // namespace detail

// Central differences per coordinate vs analytic gradient; returns the worst
// relative error over all requires-grad coordinates.
template <class S>
GradCheckReportT<S> finite_diff_check(const LossFnT<S>& f, ParamStoreT<S>& params,
                                      S eps = S(1e-5)) {
  if (!(eps >= S(1e-7) && eps <= S(1e-3)))
    throw std::invalid_argument("finite_diff_check: eps must lie in [1e-7, 1e-3]");

  GradMapT<S> analytic;
  const S base = f(params, &analytic);
  if (!std::isfinite(base)) throw std::runtime_error("finite_diff_check: non-finite loss");

  GradCheckReportT<S> report;
  for (const std::string& name : params.names()) {
    TensorT<S>& p = params.at(name);
    if (!p.requires_grad) continue;
    const MatX<S>* an = nullptr;
    auto it = analytic.find(name);
    if (it != analytic.end()) an = &it->second;
    S worst = S(0);
    for (Index r = 0; r < p.rows(); ++r) {
      for (Index c = 0; c < p.cols(); ++c) {
        const S saved = p(r, c);
        p(r, c) = saved + eps;
        const S fp = f(params, nullptr);
        p(r, c) = saved - eps;
        const S fm = f(params, nullptr);
        p(r, c) = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
          throw std::runtime_error("finite_diff_check: non-finite loss during perturbation");
        const S numeric = (fp - fm) / (S(2) * eps);
        const S a = an ? (*an)(r, c) : S(0);
        const S err = detail::grad_discrepancy(a, numeric);
        worst = std::max(worst, err);
        if (err > report.max_rel_err) {
          report.max_rel_err = err;
          report.worst_param = name;
          report.worst_coord = r * p.cols() + c;
        }
      }
    }
    report.per_param[name] = worst;
  }
  return report;
}

}  // namespace gpit
