#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace symspot::ad {

/// One evaluation of a scalar function. `signature` identifies the branch
/// pattern (see Tape::branch_signature); `gradient` is only filled when the
/// caller asked for it.
struct Probe {
  long double value = 0.0;
  std::uint64_t signature = 0;
  std::vector<double> gradient;
};

using ProbeFunction = std::function<Probe(std::span<const double> params, bool want_gradient)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  /// Parameters whose +h or -h probe changed the branch signature (a relu
  /// kink, max-pool switch or clamp was crossed). They are not compared.
  std::size_t skipped_kinks = 0;
  std::vector<double> rel_errors;  // NaN for skipped parameters
  bool passed = false;
};

/// Central differences against the analytic gradient. Relative error per
/// parameter is |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
GradCheckReport finite_difference_check(const ProbeFunction& f, std::span<const double> params,
                                        double h, double rel_tol);

}  // namespace symspot::ad
