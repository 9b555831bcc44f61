#pragma once

// Shared helpers for the test suites: finite-difference gradient checking and
// small random-tensor builders. Test-only code, independent of the library's
// backward implementations.

#include <functional>
#include <vector>

#include "speechut/autodiff.hpp"
#include "speechut/common.hpp"
#include "speechut/tensor.hpp"

namespace testsup {

using speechut::Parameter;
using speechut::Rng;
using speechut::Tensor;

struct GradCheck {
  long total = 0;
  long passed = 0;
  double worst_rel = 0.0;
  double pass_fraction() const { return total == 0 ? 1.0 : static_cast<double>(passed) / static_cast<double>(total); }
  bool all_ok() const { return passed == total; }
};

// Central finite differences against already-populated param->grad buffers.
// forward_loss() must rebuild the computation from current param values.
// abs_floor covers the FD roundoff noise (~eps*|f|/h), which dominates the
// comparison when the true derivative is itself near zero.
inline GradCheck finite_diff_check(const std::vector<Parameter*>& params,
                                   const std::function<double()>& forward_loss,
                                   double h = 1e-6, double tol = 1e-4, double abs_floor = 1e-8) {
  GradCheck res;
  for (Parameter* p : params) {
    for (size_t i = 0; i < p->value.v.size(); ++i) {
      const double saved = p->value.v[i];
      p->value.v[i] = saved + h;
      const double f_plus = forward_loss();
      p->value.v[i] = saved - h;
      const double f_minus = forward_loss();
      p->value.v[i] = saved;
      const double fd = (f_plus - f_minus) / (2.0 * h);
      const double an = p->grad.v[i];
      const double denom = std::max(std::abs(fd), std::abs(an));
      const double rel = denom > 0 ? std::abs(fd - an) / denom : 0.0;
      ++res.total;
      const bool ok = (std::abs(fd - an) <= tol * denom) || (std::abs(fd - an) <= abs_floor);
      if (ok) ++res.passed;
      if (!ok || denom > 1e-6) res.worst_rel = std::max(res.worst_rel, rel);
    }
  }
  return res;
}

inline Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.v) x = scale * rng.normal();
  return t;
}

inline Tensor random_logprob_rows(int64_t rows, int64_t cols, Rng& rng) {
  Tensor logits = random_tensor({rows, cols}, rng, 1.0);
  Tensor out;
  speechut::kern::log_softmax_rows(logits, out);
  return out;
}

}  // namespace testsup
