#pragma once

#include <utility>

namespace padis {

struct VoteTally {
  int picks = 0;
  int total = 0;
  double proportion() const { return static_cast<double>(picks) / total; }
};

/// Two-sided standard normal quantile z such that P(|Z| <= z) = confidence.
double normal_two_sided_quantile(double confidence);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Wilson score interval for a binomial proportion, clamped to [0, 1].
Interval wilson_ci(const VoteTally& tally, double confidence = 0.95);

/// P(X >= picks) for X ~ Binomial(total, p0).
double exact_binomial_onesided(const VoteTally& tally, double p0);

/// Probability that one designated method gets a strict majority of
/// `raters` independent votes, each uniform over `methods`.
double majority_null_p0(int raters, int methods);

}  // namespace padis
