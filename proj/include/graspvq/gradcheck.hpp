#pragma once

#include <functional>
#include <stdexcept>

#include "graspvq/autograd.hpp"

namespace graspvq {

class NonDeterministicFunction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::int64_t worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Compares the backward() gradient of `f` with respect to `wrt` against
/// central differences of step `eps`. `f` must rebuild its graph from the
/// current value of `wrt` on each call. Per element the error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport finite_difference_check(const std::function<Var<double>()>& f, Var<double> wrt,
                                         double eps);

/// Convenience form for a function of a single tensor.
double finite_difference_check(const std::function<Var<double>(const Var<double>&)>& f,
                               const Tensor<double>& x, double eps);

}  // namespace graspvq
