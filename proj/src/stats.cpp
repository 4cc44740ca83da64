#include "padis/stats.hpp"

#include "padis/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace padis {

double normal_two_sided_quantile(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0))
    throw DomainError("normal quantile: confidence must lie in (0, 1)");
  // Solve erfc(z / sqrt 2) = 1 - confidence by bisection, polish with Newton.
  const double target = 1.0 - confidence;
  auto tail = [](double z) { return std::erfc(z / std::numbers::sqrt2); };
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (tail(mid) > target ? lo : hi) = mid;
  }
  double z = 0.5 * (lo + hi);
  for (int i = 0; i < 3; ++i) {
    const double density = 2.0 * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    z += (tail(z) - target) / density;
  }
  return z;
}

Interval wilson_ci(const VoteTally& tally, double confidence) {
  if (tally.total < 1) throw DomainError("wilson_ci: total must be at least 1");
  if (tally.picks < 0 || tally.picks > tally.total) throw DomainError("wilson_ci: picks out of range");
  const double z = normal_two_sided_quantile(confidence);
  const double n = tally.total;
  const double p = tally.proportion();
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  Interval ci{std::clamp(center - half, 0.0, 1.0), std::clamp(center + half, 0.0, 1.0)};
  if (tally.picks == 0) ci.lower = 0.0;
  if (tally.picks == tally.total) ci.upper = 1.0;
  return ci;
}

double exact_binomial_onesided(const VoteTally& tally, double p0) {
  if (!(p0 > 0.0 && p0 < 1.0)) throw DomainError("exact_binomial: p0 must lie in (0, 1)");
  if (tally.picks < 0 || tally.picks > tally.total || tally.total < 0)
    throw DomainError("exact_binomial: picks out of range");
  if (tally.picks == 0) return 1.0;
  const int n = tally.total;
  const double lp = std::log(p0);
  const double lq = std::log1p(-p0);
  std::vector<double> terms;
  terms.reserve(n - tally.picks + 1);
  for (int i = tally.picks; i <= n; ++i)
    terms.push_back(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) +
                    i * lp + (n - i) * lq);
  const double mx = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return std::min(1.0, std::exp(mx + std::log(acc)));
}

double majority_null_p0(int raters, int methods) {
  if (raters < 1 || raters % 2 == 0) throw DomainError("majority_null_p0: raters must be odd");
  if (methods < 1) throw DomainError("majority_null_p0: need at least one method");
  if (methods == 1) return 1.0;
  return exact_binomial_onesided({raters / 2 + 1, raters}, 1.0 / methods);
}

}  // namespace padis
