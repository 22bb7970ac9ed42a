#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mtp/errors.hpp"
#include "mtp/learners.hpp"
#include "mtp/panel_data.hpp"
#include "mtp/shift_policy.hpp"

namespace mtp {

struct RatioBounds {
  double r_min = 0.01;
  double r_max = 100.0;

  void validate() const {
    if (!(r_min > 0.0 && r_min <= 1.0 && r_max >= 1.0 && std::isfinite(r_max)))
      throw DomainError("ratio bounds require 0 < r_min <= 1 <= r_max < inf");
  }
};

inline double truncate_ratio(double r, const RatioBounds& b) { return std::clamp(r, b.r_min, b.r_max); }

// Design matrix [W..., A] with the exposure replaced by `a`.
inline FeatureMatrix point_design(const PanelTable& panel, std::span<const double> a) {
  if (a.size() != panel.size()) throw DomainError("point_design: exposure length differs from panel");
  FeatureMatrix X;
  X.names = panel.covariate_names;
  X.names.push_back("A");
  const auto p = panel.W.cols();
  X.values.resize(static_cast<Eigen::Index>(panel.size()), p + 1);
  if (p > 0) X.values.leftCols(p) = panel.W;
  for (std::size_t i = 0; i < a.size(); ++i) X.values(static_cast<Eigen::Index>(i), p) = a[i];
  return X;
}

// r(a, w) = p / (1 - p) where p = P(shifted | a, w) from a classifier trained
// on observed rows (label 0) against policy-shifted rows (label 1).
struct DensityRatioModel {
  FittedLearner classifier;
  RatioBounds bounds;
  double p_min = kDefaultProbabilityClip;

  std::vector<double> raw_ratio(const FeatureMatrix& X) const {
    auto p = classifier.predict(X);
    for (auto& v : p) {
      const double c = std::clamp(v, p_min, 1.0 - p_min);
      v = c / (1.0 - c);
    }
    return p;
  }

  std::vector<double> ratio(const FeatureMatrix& X) const {
    auto r = raw_ratio(X);
    for (auto& v : r) v = truncate_ratio(v, bounds);
    return r;
  }
};

// Fits the classifier on the 2n augmented sample built from matching natural
// and shifted designs.
inline DensityRatioModel fit_ratio(const FeatureMatrix& natural, const FeatureMatrix& shifted, const EnsembleSpec& learner,
                                   std::uint64_t seed, RatioBounds bounds = {}, double p_min = kDefaultProbabilityClip) {
  bounds.validate();
  if (natural.names != shifted.names || natural.rows() != shifted.rows())
    throw DomainError("fit_ratio: natural and shifted designs differ in shape");
  const auto n = natural.rows();
  if (n < 20) throw DomainError("fit_ratio: at least 20 rows required");
  FeatureMatrix aug{natural.names, Eigen::MatrixXd(2 * n, natural.cols())};
  aug.values.topRows(n) = natural.values;
  aug.values.bottomRows(n) = shifted.values;
  std::vector<double> label(static_cast<std::size_t>(2 * n), 0.0);
  std::fill(label.begin() + n, label.end(), 1.0);
  EnsembleSpec spec = learner;
  spec.loss = StackLoss::LogLoss;
  spec.p_min = p_min;
  DensityRatioModel model;
  model.classifier = fit_ensemble(spec, aug, label, {}, seed);
  model.bounds = bounds;
  model.p_min = p_min;
  return model;
}

inline DensityRatioModel fit_ratio(const PanelTable& panel, const BoundedAdditiveShift& policy, const EnsembleSpec& learner,
                                   std::uint64_t seed, RatioBounds bounds = {}, double p_min = kDefaultProbabilityClip) {
  policy.validate();
  auto shifted = apply_shift(policy, panel.A);
  return fit_ratio(point_design(panel, panel.A), point_design(panel, shifted), learner, seed, bounds, p_min);
}

struct PositivityProfile {
  std::vector<double> quantile_levels{0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99};
  std::vector<double> quantiles;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double fraction_truncated_high = 0.0;  // raw ratio above r_max
  double fraction_truncated_low = 0.0;   // raw ratio below r_min
  double fraction_truncated = 0.0;
  double threshold = 0.02;
  bool violation = false;
  std::size_t n = 0;
};

// Quantiles and moments of the weights actually used.
inline PositivityProfile describe_weights(std::span<const double> r, double threshold = 0.02) {
  if (r.empty()) throw DomainError("positivity profile of empty sample");
  PositivityProfile prof;
  prof.threshold = threshold;
  prof.n = r.size();
  std::vector<double> v(r.begin(), r.end());
  for (double q : prof.quantile_levels) prof.quantiles.push_back(sample_quantile(v, q));
  prof.min = *std::min_element(v.begin(), v.end());
  prof.max = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  prof.mean = s / static_cast<double>(v.size());
  return prof;
}

// Truncation counts come from the raw ratios; the distribution summary
// describes the truncated values.
inline PositivityProfile profile_ratios(std::span<const double> raw, const RatioBounds& bounds, double threshold = 0.02) {
  std::vector<double> r(raw.size());
  std::size_t hi = 0, lo = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] > bounds.r_max) ++hi;
    if (raw[i] < bounds.r_min) ++lo;
    r[i] = truncate_ratio(raw[i], bounds);
  }
  PositivityProfile prof = describe_weights(r, threshold);
  const double n = static_cast<double>(raw.size());
  prof.fraction_truncated_high = static_cast<double>(hi) / n;
  prof.fraction_truncated_low = static_cast<double>(lo) / n;
  prof.fraction_truncated = prof.fraction_truncated_high + prof.fraction_truncated_low;
  prof.violation = prof.fraction_truncated > threshold;
  return prof;
}

inline PositivityProfile positivity_profile(const DensityRatioModel& model, const FeatureMatrix& natural, double threshold = 0.02) {
  return profile_ratios(model.raw_ratio(natural), model.bounds, threshold);
}

inline PositivityProfile positivity_profile(const DensityRatioModel& model, const PanelTable& panel, double threshold = 0.02) {
  return positivity_profile(model, point_design(panel, panel.A), threshold);
}

}  // namespace mtp
