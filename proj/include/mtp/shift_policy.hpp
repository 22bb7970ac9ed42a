#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mtp/errors.hpp"

namespace mtp {

// d(a): add delta2 years where that stays within a_max, otherwise delta1,
// otherwise leave the exposure unchanged.
struct BoundedAdditiveShift {
  double delta1 = 1.0;
  double delta2 = 2.0;
  double a_max = 4.79;

  void validate() const {
    if (!(delta1 >= 0.0) || !(delta2 >= delta1)) throw DomainError("shift policy requires 0 <= delta1 <= delta2");
    if (!(a_max > 0.0) || !std::isfinite(a_max)) throw DomainError("shift policy requires a finite a_max > 0");
  }

  bool is_identity() const { return delta1 == 0.0 && delta2 == 0.0; }
};

// Tolerance for comparing exposures against a_max (years).
inline constexpr double kExposureTolerance = 1e-9;

inline double apply_shift(const BoundedAdditiveShift& policy, double a) {
  if (!(a >= -kExposureTolerance) || !(a <= policy.a_max + kExposureTolerance))
    throw DomainError("apply_shift: exposure " + std::to_string(a) + " outside [0, " + std::to_string(policy.a_max) + "]");
  if (a <= policy.a_max - policy.delta2) return a + policy.delta2;
  if (a <= policy.a_max - policy.delta1) return a + policy.delta1;
  return a;
}

inline std::vector<double> apply_shift(const BoundedAdditiveShift& policy, std::span<const double> a) {
  std::vector<double> out(a.size());
  std::transform(a.begin(), a.end(), out.begin(), [&](double x) { return apply_shift(policy, x); });
  return out;
}

// Delays the first enactment of a binary, non-decreasing exposure trajectory
// by `delay_steps` periods (truncated at the horizon).
struct LongitudinalDelayPolicy {
  int horizon = 2;
  int delay_steps = 2;
  int pre_window_exposure = 0;  // a_0

  void validate() const {
    if (horizon < 1) throw DomainError("delay policy requires horizon >= 1");
    if (delay_steps < 0) throw DomainError("delay policy requires delay_steps >= 0");
    if (pre_window_exposure != 0 && pre_window_exposure != 1) throw DomainError("pre-window exposure must be 0 or 1");
  }
};

namespace detail {

inline void require_trajectory(std::span<const int> a, bool monotone) {
  int prev = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t] != 0 && a[t] != 1) throw DomainError("exposure trajectory must be binary");
    if (monotone && t > 0 && a[t] < prev) throw DomainError("exposure trajectory must be non-decreasing");
    prev = a[t];
  }
}

// 0-based index of the first t with a_{t-1} = 0 and a_t = 1, or -1.
inline int first_enactment(std::span<const int> a, int a0) {
  int prev = a0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (prev == 0 && a[t] == 1) return static_cast<int>(t);
    prev = a[t];
  }
  return -1;
}

}  // namespace detail

inline std::vector<int> apply_delay(const LongitudinalDelayPolicy& policy, std::span<const int> a) {
  policy.validate();
  if (static_cast<int>(a.size()) != policy.horizon)
    throw DomainError("apply_delay: trajectory length " + std::to_string(a.size()) + " != horizon " +
                      std::to_string(policy.horizon));
  detail::require_trajectory(a, true);
  std::vector<int> out(a.begin(), a.end());
  const int first = detail::first_enactment(a, policy.pre_window_exposure);
  if (first < 0) return out;
  const int stop = std::min(first + policy.delay_steps, policy.horizon);
  for (int t = first; t < stop; ++t) out[static_cast<std::size_t>(t)] = 0;
  return out;
}

// Policy value at the last position of `prefix` (history a_1..a_{t-1} followed
// by the natural value a_t). Coordinate t of the delayed trajectory depends
// only on a_1..a_t, so this is the per-step form of apply_delay. The prefix is
// not required to be monotone: callers evaluate counterfactual natural values.
inline int delayed_value_at(const LongitudinalDelayPolicy& policy, std::span<const int> prefix) {
  if (prefix.empty()) throw DomainError("delayed_value_at: empty prefix");
  detail::require_trajectory(prefix, false);
  const int t = static_cast<int>(prefix.size()) - 1;
  const int first = detail::first_enactment(prefix, policy.pre_window_exposure);
  if (first >= 0 && t >= first && t < first + policy.delay_steps) return 0;
  return prefix.back();
}

struct SupportReport {
  bool support_holds = true;          // every d(a) within the observed exposure range
  double observed_min = 0.0;
  double observed_max = 0.0;
  double quantile_level = 0.99;
  double quantile_value = 0.0;
  double fraction_above_quantile = 0.0;  // shifted values beyond the q-th observed quantile
  double fraction_identity_branch = 0.0;
  double mean_increment = 0.0;           // mean of d(A) - A
  bool practical_warning = false;
};

// Type-7 (linear interpolation) sample quantile.
inline double sample_quantile(std::vector<double> x, double q) {
  if (x.empty()) throw DomainError("quantile of empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

// Support grid tolerance (years).
inline constexpr double kSupportTolerance = 0.01;

inline SupportReport check_shift_support(std::span<const double> exposures, const BoundedAdditiveShift& policy,
                                         double quantile_level = 0.99, double warn_fraction = 0.05) {
  if (exposures.empty()) throw DomainError("check_shift_support: empty panel");
  SupportReport rep;
  rep.quantile_level = quantile_level;
  std::vector<double> a(exposures.begin(), exposures.end());
  rep.observed_min = *std::min_element(a.begin(), a.end());
  rep.observed_max = *std::max_element(a.begin(), a.end());
  rep.quantile_value = sample_quantile(a, quantile_level);
  std::size_t above = 0, identity = 0;
  double inc = 0.0;
  for (double x : a) {
    const double d = apply_shift(policy, x);
    if (d > rep.observed_max + kSupportTolerance || d < rep.observed_min - kSupportTolerance) rep.support_holds = false;
    if (d > rep.quantile_value + kSupportTolerance) ++above;
    if (d == x) ++identity;
    inc += d - x;
  }
  const double n = static_cast<double>(a.size());
  rep.fraction_above_quantile = static_cast<double>(above) / n;
  rep.fraction_identity_branch = static_cast<double>(identity) / n;
  rep.mean_increment = inc / n;
  rep.practical_warning = !rep.support_holds || rep.fraction_above_quantile > warn_fraction;
  return rep;
}

}  // namespace mtp
