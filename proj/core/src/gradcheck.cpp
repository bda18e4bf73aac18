#include "symspot/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "symspot/errors.hpp"

namespace symspot::ad {

GradCheckReport finite_difference_check(const ProbeFunction& f, std::span<const double> params,
                                        double h, double rel_tol) {
  GradCheckReport report;
  std::vector<double> x(params.begin(), params.end());
  const Probe base = f(x, true);
  if (base.gradient.size() != x.size())
    throw ShapeMismatch("gradient length does not match parameter count");
  report.rel_errors.assign(x.size(), std::numeric_limits<double>::quiet_NaN());

  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    const double up = saved + h, down = saved - h;
    x[i] = up;
    const Probe plus = f(x, false);
    x[i] = down;
    const Probe minus = f(x, false);
    x[i] = saved;
    if (plus.signature != base.signature || minus.signature != base.signature) {
      ++report.skipped_kinks;
      continue;
    }
    // Divide by the step actually taken; saved +- h is rounded.
    const auto numeric = static_cast<double>((plus.value - minus.value) / (static_cast<long double>(up) - down));
    const double analytic = base.gradient[i];
    const double err =
        std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    report.rel_errors[i] = err;
    ++report.checked;
    if (report.checked == 1 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.checked > 0 && report.max_rel_error <= rel_tol;
  return report;
}

}  // namespace symspot::ad
