#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtp/errors.hpp"

namespace mtp {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Acklam's rational approximation followed by one Halley step against erfc.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - lo) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

inline std::pair<double, double> confidence_interval(double estimate, double se, double alpha = 0.05) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("confidence_interval: alpha must lie in (0, 1)");
  if (!(se >= 0.0)) throw DomainError("confidence_interval: se must be nonnegative");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  return {estimate - z * se, estimate + z * se};
}

// Clusters below this count get a small-sample warning on normal intervals.
inline constexpr std::size_t kFewClustersWarning = 30;

struct ClusteredVariance {
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.05;
  std::size_t n = 0;
  std::size_t n_clusters = 0;
  std::string method = "cluster_ic";
  bool few_clusters_warning = false;
};

// SE^2 = M/(M-1) * sum_c (S_c / n)^2 with S_c the cluster sum of IC values.
inline double cluster_robust_variance(std::span<const double> ic, std::span<const std::string> cluster_ids) {
  if (ic.size() != cluster_ids.size()) throw DomainError("cluster_robust_se: IC and cluster id lengths differ");
  std::map<std::string, double> sums;
  for (std::size_t i = 0; i < ic.size(); ++i) sums[cluster_ids[i]] += ic[i];
  const auto M = sums.size();
  if (M < 2) throw DomainError("cannot estimate cluster variance from one cluster");
  const double n = static_cast<double>(ic.size());
  double s = 0.0;
  for (const auto& [id, total] : sums) s += (total / n) * (total / n);
  return static_cast<double>(M) / static_cast<double>(M - 1) * s;
}

inline ClusteredVariance cluster_robust_se(double estimate, std::span<const double> ic, std::span<const std::string> cluster_ids,
                                           double alpha = 0.05) {
  ClusteredVariance v;
  v.estimate = estimate;
  v.alpha = alpha;
  v.n = ic.size();
  v.se = std::sqrt(cluster_robust_variance(ic, cluster_ids));
  v.n_clusters = std::set<std::string>(cluster_ids.begin(), cluster_ids.end()).size();
  v.few_clusters_warning = v.n_clusters < kFewClustersWarning;
  std::tie(v.ci_low, v.ci_high) = confidence_interval(estimate, v.se, alpha);
  return v;
}

// Naive SE treating units as independent: sqrt(sample variance(IC) / n).
inline ClusteredVariance iid_se(double estimate, std::span<const double> ic, double alpha = 0.05) {
  if (ic.size() < 2) throw DomainError("iid_se: at least two IC values required");
  ClusteredVariance v;
  v.estimate = estimate;
  v.alpha = alpha;
  v.n = ic.size();
  v.n_clusters = ic.size();
  v.method = "iid_ic";
  const double n = static_cast<double>(ic.size());
  double m = 0.0;
  for (double x : ic) m += x;
  m /= n;
  double ss = 0.0;
  for (double x : ic) ss += (x - m) * (x - m);
  v.se = std::sqrt(ss / (n - 1.0) / n);
  std::tie(v.ci_low, v.ci_high) = confidence_interval(estimate, v.se, alpha);
  return v;
}

}  // namespace mtp
