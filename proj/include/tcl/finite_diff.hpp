#pragma once

// Central-difference gradient oracle. The caller evaluates the loss once with
// backward() so the analytic gradient sits in the parameter buffers, then
// hands over a pure re-evaluation function. Each coordinate is perturbed
// symmetrically and compared against the stored analytic value.

#include <cmath>
#include <functional>
#include <vector>

#include "tcl/common.hpp"
#include "tcl/tensor.hpp"

namespace tcl::ad {

struct FiniteDiffReport {
  double max_rel_err = 0.0;  // |analytic - numeric| / max(1, |analytic|, |numeric|)
  double max_abs_err = 0.0;
  size_t coords_checked = 0;
};

// f re-evaluates the loss from the parameters' current values and must not
// mutate them. Parameter values are restored exactly after each perturbation.
inline FiniteDiffReport finite_diff_check(const std::function<double()>& f,
                                          std::vector<Tensor<double>> params,
                                          double h = 1e-5) {
  check(h > 0.0, "finite_diff_check: step size must be positive");
  FiniteDiffReport rep;
  for (auto& p : params) {
    const double* analytic = p.grad_data();
    for (size_t j = 0; j < p.size(); ++j) {
      const double saved = p.data()[j];
      p.data()[j] = saved + h;
      const double fp = f();
      p.data()[j] = saved - h;
      const double fm = f();
      p.data()[j] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("finite_diff_check: non-finite loss during probe");
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic ? analytic[j] : 0.0;
      const double abs_err = std::abs(a - numeric);
      const double rel =
          abs_err / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > rep.max_rel_err) rep.max_rel_err = rel;
      if (abs_err > rep.max_abs_err) rep.max_abs_err = abs_err;
      ++rep.coords_checked;
    }
  }
  return rep;
}

}  // namespace tcl::ad
