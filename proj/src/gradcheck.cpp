#include "graspvq/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace graspvq {

GradCheckReport finite_difference_check(const std::function<Var<double>()>& f, Var<double> wrt,
                                        double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be positive");

  const double first = f().value().item();
  const Var<double> loss = f();
  if (loss.value().item() != first) {
    throw NonDeterministicFunction("finite_difference_check: two evaluations disagree (" +
                                   std::to_string(first) + " vs " +
                                   std::to_string(loss.value().item()) + ")");
  }
  const bool had_flag = wrt.requires_grad();
  wrt.set_requires_grad(true);
  wrt.zero_grad();
  // The graph above was built before the flag may have been set; rebuild.
  const Var<double> tracked = f();
  backward(tracked);
  const Tensor<double> analytic = wrt.grad();
  wrt.zero_grad();

  GradCheckReport report;
  Tensor<double>& x = wrt.mutable_value();
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double plus = f().value().item();
    x[i] = saved - eps;
    const double minus = f().value().item();
    x[i] = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double err = std::abs(analytic[i] - numeric) / denom;
    if (err > report.max_relative_error || report.worst_index < 0) {
      report.max_relative_error = err;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  wrt.set_requires_grad(had_flag);
  return report;
}

double finite_difference_check(const std::function<Var<double>(const Var<double>&)>& f,
                               const Tensor<double>& x, double eps) {
  Var<double> input = Var<double>::leaf(x, true);
  return finite_difference_check([&] { return f(input); }, input, eps).max_relative_error;
}

}  // namespace graspvq
