#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mtp/density_ratio.hpp"
#include "mtp/errors.hpp"
#include "mtp/learners.hpp"
#include "mtp/panel_data.hpp"
#include "mtp/parallel.hpp"
#include "mtp/random.hpp"
#include "mtp/shift_policy.hpp"

namespace mtp {

enum class EstimandKind { PointShift, LongitudinalDelay };
enum class Targeting { Tmle, OneStep };
enum class LongitudinalRatioMethod { Propensity, Classifier };

inline std::string_view to_string(EstimandKind k) { return k == EstimandKind::PointShift ? "POINT_SHIFT" : "LONGITUDINAL_DELAY"; }
inline std::string_view to_string(Targeting t) { return t == Targeting::Tmle ? "tmle" : "one_step"; }
inline std::string_view to_string(LongitudinalRatioMethod m) {
  return m == LongitudinalRatioMethod::Propensity ? "propensity" : "classifier";
}

struct EstimandSpec {
  EstimandKind kind = EstimandKind::PointShift;
  BoundedAdditiveShift shift;
  LongitudinalDelayPolicy delay;
  std::string outcome_name = "Y";
  int folds = 5;
  std::uint64_t seed = 0;
  Targeting targeting = Targeting::Tmle;
  RatioBounds ratio_bounds;
  double p_min = kDefaultProbabilityClip;
  double positivity_threshold = 0.02;
  LongitudinalRatioMethod ratio_method = LongitudinalRatioMethod::Propensity;
  bool monotone_propensity = true;

  void validate() const {
    if (folds < 2) throw InputError("estimand requires folds >= 2");
    if (!(p_min > 0.0 && p_min < 0.5)) throw InputError("estimand p_min must lie in (0, 0.5)");
    ratio_bounds.validate();
    if (kind == EstimandKind::PointShift) shift.validate();
    else delay.validate();
  }
};

// Bounded-logit prediction clip for the outcome regressions on the [0,1] scale.
inline constexpr double kOutcomeClip = 1e-5;

struct StepDiagnostics {
  int step = 1;
  double epsilon = 0.0;
  double outcome_cv_loss = 0.0;  // mean over folds of the ensemble CV loss
  std::size_t n_clipped_propensity = 0;
  double mean_cumulative_weight = 0.0;
};

struct EstimateReport {
  EstimandKind kind = EstimandKind::PointShift;
  Targeting targeting = Targeting::Tmle;
  std::size_t n = 0;
  std::size_t n_clusters = 0;
  int folds = 0;
  double psi_hat = 0.0;
  double mean_y = 0.0;
  double contrast_hat = 0.0;
  std::vector<double> ic_psi;
  std::vector<double> ic_contrast;  // IC_psi - (Y - mean(Y))
  double mean_ic_psi = 0.0;
  double mean_ic_contrast = 0.0;
  bool constant_outcome = false;
  PositivityProfile ratio_profile;
  std::vector<StepDiagnostics> steps;
};

// Cluster-respecting fold labels: clusters are shuffled with the seed and
// assigned greedily to the currently smallest fold.
inline std::vector<int> cluster_folds(std::span<const std::string> cluster_ids, int folds, std::uint64_t seed) {
  if (folds < 2) throw InputError("cross-fitting requires at least two folds");
  std::map<std::string, std::size_t> size;
  for (const auto& c : cluster_ids) ++size[c];
  if (size.size() < static_cast<std::size_t>(folds))
    throw InputError("cross-fitting needs at least as many clusters (" + std::to_string(size.size()) + ") as folds (" +
                     std::to_string(folds) + ")");
  std::vector<std::string> ids;
  for (const auto& [c, k] : size) ids.push_back(c);
  auto perm = random_permutation(ids.size(), derive_seed(seed, 0xF01D));
  std::vector<std::size_t> load(static_cast<std::size_t>(folds), 0);
  std::map<std::string, int> assignment;
  for (auto p : perm) {
    const auto k = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    assignment[ids[p]] = static_cast<int>(k);
    load[k] += size[ids[p]];
  }
  std::vector<int> out;
  out.reserve(cluster_ids.size());
  for (const auto& c : cluster_ids) out.push_back(assignment[c]);
  return out;
}

namespace detail {

inline double expit_exact(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Solves sum_i w_i (z_i - expit(o_i + eps)) = 0 for eps by safeguarded Newton.
inline double solve_fluctuation(std::span<const double> offset, std::span<const double> z, std::span<const double> w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) return 0.0;
  auto score = [&](double eps, double* deriv) {
    double f = 0.0, d = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (w[i] == 0.0) continue;
      const double p = expit_exact(offset[i] + eps);
      f += w[i] * (z[i] - p);
      d += w[i] * p * (1.0 - p);
    }
    if (deriv) *deriv = d;
    return f;
  };
  double f0 = score(0.0, nullptr);
  if (f0 == 0.0) return 0.0;
  double lo = 0.0, hi = 0.0;
  if (f0 > 0.0) {
    hi = 1.0;
    while (score(hi, nullptr) > 0.0 && hi < 64.0) hi *= 2.0;
    if (score(hi, nullptr) > 0.0) return hi;
  } else {
    lo = -1.0;
    while (score(lo, nullptr) < 0.0 && lo > -64.0) lo *= 2.0;
    if (score(lo, nullptr) < 0.0) return lo;
  }
  double eps = 0.0;
  for (int it = 0; it < 300; ++it) {
    double d = 0.0;
    const double f = score(eps, &d);
    if (std::abs(f) <= 1e-14 * total) break;
    if (f > 0.0) lo = eps;
    else hi = eps;
    double next = d > 0.0 ? eps + f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == eps || hi - lo < 1e-15) break;
    eps = next;
  }
  return eps;
}

// Per-step ratios written by a provider for the rows of one fold.
struct RatioOutput {
  std::vector<std::vector<double>> used;  // [step][unit]
  std::vector<std::vector<double>> raw;   // [step][unit], before truncation
  std::vector<std::vector<char>> clipped; // [step][unit], propensity clipped
};

using RatioProvider =
    std::function<void(int fold, const std::vector<std::size_t>& train, const std::vector<std::size_t>& test, RatioOutput& out)>;

struct SequentialProblem {
  std::vector<FeatureMatrix> natural;  // per step, history with the natural exposure
  std::vector<FeatureMatrix> shifted;  // per step, history with the policy exposure
  std::vector<double> y;
  std::vector<std::string> cluster_id;
  bool truncated_ratios = true;  // false: exact propensity ratios, never truncated
};

// Cross-fitted sequential-regression TMLE (T = 1 is the point estimator).
inline EstimateReport run_sequential(const SequentialProblem& prob, const EstimandSpec& spec, const EnsembleSpec& outcome_learner,
                                     const RatioProvider& ratios) {
  const std::size_t n = prob.y.size();
  const int T = static_cast<int>(prob.natural.size());
  EstimateReport rep;
  rep.targeting = spec.targeting;
  rep.n = n;
  rep.n_clusters = std::set<std::string>(prob.cluster_id.begin(), prob.cluster_id.end()).size();
  rep.folds = spec.folds;
  rep.mean_y = std::accumulate(prob.y.begin(), prob.y.end(), 0.0) / static_cast<double>(n);

  const auto [ymin_it, ymax_it] = std::minmax_element(prob.y.begin(), prob.y.end());
  const double lo = *ymin_it, range = *ymax_it - *ymin_it;
  if (range == 0.0) {
    rep.constant_outcome = true;
    rep.psi_hat = lo;
    rep.contrast_hat = rep.psi_hat - rep.mean_y;
    rep.ic_psi.assign(n, 0.0);
    rep.ic_contrast.assign(n, 0.0);
    rep.ratio_profile = describe_weights(std::vector<double>(n, 1.0), spec.positivity_threshold);
    return rep;
  }

  const auto fold = cluster_folds(prob.cluster_id, spec.folds, spec.seed);
  const auto V = static_cast<std::size_t>(spec.folds);
  std::vector<std::vector<std::size_t>> train(V), test(V);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < V; ++k) (static_cast<std::size_t>(fold[i]) == k ? test : train)[k].push_back(i);

  RatioOutput rat;
  rat.used.assign(static_cast<std::size_t>(T), std::vector<double>(n, 1.0));
  rat.raw.assign(static_cast<std::size_t>(T), std::vector<double>(n, 1.0));
  rat.clipped.assign(static_cast<std::size_t>(T), std::vector<char>(n, 0));
  parallel_for(V, [&](std::size_t k) {
    try {
      ratios(static_cast<int>(k), train[k], test[k], rat);
    } catch (const FoldFitError&) {
      throw;
    } catch (const std::exception& e) {
      throw FoldFitError(static_cast<int>(k) + 1, 0, std::string("ratio fit failed: ") + e.what());
    }
  });

  std::vector<std::vector<double>> cumw(static_cast<std::size_t>(T), std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double c = 1.0;
    for (int t = 0; t < T; ++t) {
      c *= rat.used[static_cast<std::size_t>(t)][i];
      cumw[static_cast<std::size_t>(t)][i] = c;
    }
  }

  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = (prob.y[i] - lo) / range;
  std::vector<double> ic(n, 0.0);
  rep.steps.resize(static_cast<std::size_t>(T));

  for (int t = T - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    std::vector<double> q_nat(n), q_shift(n), cv(V, 0.0);
    parallel_for(V, [&](std::size_t k) {
      try {
        auto Xtr = prob.natural[ts].take_rows(train[k]);
        auto ztr = take<double>(std::span<const double>(z), train[k]);
        auto model = fit_ensemble(outcome_learner, Xtr, ztr, {}, derive_seed(spec.seed, 100 + static_cast<std::uint64_t>(t) + 1, k));
        cv[k] = model.summary().ensemble_cv_loss;
        auto pn = model.predict(prob.natural[ts].take_rows(test[k]));
        auto ps = model.predict(prob.shifted[ts].take_rows(test[k]));
        for (std::size_t r = 0; r < test[k].size(); ++r) {
          q_nat[test[k][r]] = std::clamp(pn[r], kOutcomeClip, 1.0 - kOutcomeClip);
          q_shift[test[k][r]] = std::clamp(ps[r], kOutcomeClip, 1.0 - kOutcomeClip);
        }
      } catch (const std::exception& e) {
        throw FoldFitError(static_cast<int>(k) + 1, t + 1, std::string("outcome fit failed: ") + e.what());
      }
    });

    auto& diag = rep.steps[ts];
    diag.step = t + 1;
    diag.outcome_cv_loss = std::accumulate(cv.begin(), cv.end(), 0.0) / static_cast<double>(V);
    diag.n_clipped_propensity = static_cast<std::size_t>(std::count(rat.clipped[ts].begin(), rat.clipped[ts].end(), 1));
    diag.mean_cumulative_weight = std::accumulate(cumw[ts].begin(), cumw[ts].end(), 0.0) / static_cast<double>(n);

    if (spec.targeting == Targeting::Tmle) {
      std::vector<double> offset(n);
      for (std::size_t i = 0; i < n; ++i) offset[i] = logit(q_nat[i]);
      const double eps = solve_fluctuation(offset, z, cumw[ts]);
      diag.epsilon = eps;
      for (std::size_t i = 0; i < n; ++i) {
        q_nat[i] = expit_exact(offset[i] + eps);
        q_shift[i] = expit_exact(logit(q_shift[i]) + eps);
      }
    }
    for (std::size_t i = 0; i < n; ++i) ic[i] += cumw[ts][i] * (z[i] - q_nat[i]);
    z = q_shift;
  }

  double psi_scaled = 0.0;
  if (spec.targeting == Targeting::Tmle) {
    psi_scaled = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) ic[i] += z[i] - psi_scaled;
  } else {
    for (std::size_t i = 0; i < n; ++i) ic[i] += z[i];
    psi_scaled = std::accumulate(ic.begin(), ic.end(), 0.0) / static_cast<double>(n);
    for (auto& v : ic) v -= psi_scaled;
  }

  rep.psi_hat = lo + range * psi_scaled;
  rep.contrast_hat = rep.psi_hat - rep.mean_y;
  rep.ic_psi.resize(n);
  rep.ic_contrast.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rep.ic_psi[i] = range * ic[i];
    rep.ic_contrast[i] = rep.ic_psi[i] - (prob.y[i] - rep.mean_y);
  }
  rep.mean_ic_psi = std::accumulate(rep.ic_psi.begin(), rep.ic_psi.end(), 0.0) / static_cast<double>(n);
  rep.mean_ic_contrast = std::accumulate(rep.ic_contrast.begin(), rep.ic_contrast.end(), 0.0) / static_cast<double>(n);

  if (prob.truncated_ratios && T == 1) {
    rep.ratio_profile = profile_ratios(rat.raw[0], spec.ratio_bounds, spec.positivity_threshold);
  } else {
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bool any = false;
      for (int t = 0; t < T; ++t) any = any || rat.clipped[static_cast<std::size_t>(t)][i];
      flagged += any ? 1 : 0;
    }
    rep.ratio_profile = describe_weights(cumw.back(), spec.positivity_threshold);
    rep.ratio_profile.fraction_truncated_low = static_cast<double>(flagged) / static_cast<double>(n);
    rep.ratio_profile.fraction_truncated = rep.ratio_profile.fraction_truncated_low;
    rep.ratio_profile.violation = rep.ratio_profile.fraction_truncated > spec.positivity_threshold;
  }
  return rep;
}

inline std::uint64_t ratio_seed(std::uint64_t seed, int step, std::size_t fold) {
  return derive_seed(seed, 7 + 1000 * static_cast<std::uint64_t>(step), fold);
}

// Classification-trick ratio provider for one or more steps.
inline RatioProvider classifier_ratios(const SequentialProblem& prob, const EstimandSpec& spec, const EnsembleSpec& learner) {
  return [&prob, &spec, &learner](int k, const std::vector<std::size_t>& train, const std::vector<std::size_t>& test, RatioOutput& out) {
    for (std::size_t t = 0; t < prob.natural.size(); ++t) {
      auto model = fit_ratio(prob.natural[t].take_rows(train), prob.shifted[t].take_rows(train), learner,
                             ratio_seed(spec.seed, static_cast<int>(t), static_cast<std::size_t>(k)), spec.ratio_bounds, spec.p_min);
      auto raw = model.raw_ratio(prob.natural[t].take_rows(test));
      for (std::size_t r = 0; r < test.size(); ++r) {
        out.raw[t][test[r]] = raw[r];
        out.used[t][test[r]] = truncate_ratio(raw[r], spec.ratio_bounds);
      }
    }
  };
}

}  // namespace detail

// Point-treatment estimator for an arbitrary deterministic exposure map given
// as the vector of post-intervention exposures.
inline EstimateReport estimate_point_map(const PanelTable& panel, std::span<const double> shifted_a, const EstimandSpec& spec,
                                         const EnsembleSpec& outcome_learner, const EnsembleSpec& ratio_learner) {
  spec.validate();
  panel.validate();
  detail::SequentialProblem prob;
  prob.natural.push_back(point_design(panel, panel.A));
  prob.shifted.push_back(point_design(panel, shifted_a));
  prob.y = panel.Y;
  prob.cluster_id = panel.cluster_id;
  auto rep = detail::run_sequential(prob, spec, outcome_learner, detail::classifier_ratios(prob, spec, ratio_learner));
  rep.kind = EstimandKind::PointShift;
  return rep;
}

inline EstimateReport estimate_point_shift(const PanelTable& panel, const EstimandSpec& spec, const EnsembleSpec& outcome_learner,
                                           const EnsembleSpec& ratio_learner) {
  if (spec.kind != EstimandKind::PointShift) throw InputError("estimate_point_shift requires a POINT_SHIFT estimand");
  spec.validate();
  const auto shifted = apply_shift(spec.shift, panel.A);
  return estimate_point_map(panel, shifted, spec, outcome_learner, ratio_learner);
}

// Column layout of the step-t history: W, A_1, L_2, A_2, ..., L_t, A_t.
inline FeatureMatrix longitudinal_design(const LongitudinalPanel& panel, int step, std::span<const int> last_exposure = {}) {
  const auto n = static_cast<Eigen::Index>(panel.size());
  FeatureMatrix X;
  Eigen::Index cols = panel.W.cols();
  for (int s = 0; s <= step; ++s) cols += panel.L[static_cast<std::size_t>(s)].cols() + 1;
  X.values.resize(n, cols);
  Eigen::Index c = 0;
  for (const auto& name : panel.baseline_names) X.names.push_back("W." + name);
  if (panel.W.cols() > 0) X.values.leftCols(panel.W.cols()) = panel.W;
  c = panel.W.cols();
  for (int s = 0; s <= step; ++s) {
    const auto& Ls = panel.L[static_cast<std::size_t>(s)];
    for (const auto& name : panel.time_varying_names[static_cast<std::size_t>(s)])
      X.names.push_back("L." + std::to_string(s + 1) + "." + name);
    if (Ls.cols() > 0) X.values.middleCols(c, Ls.cols()) = Ls;
    c += Ls.cols();
    X.names.push_back("A." + std::to_string(s + 1));
    for (Eigen::Index i = 0; i < n; ++i)
      X.values(i, c) = (s == step && !last_exposure.empty()) ? last_exposure[static_cast<std::size_t>(i)] : panel.A(i, s);
    ++c;
  }
  return X;
}

// Policy exposure at step t evaluated on the observed history and natural A_t.
inline std::vector<int> policy_exposure_at(const LongitudinalPanel& panel, const LongitudinalDelayPolicy& policy, int step,
                                           std::optional<int> natural_override = std::nullopt) {
  std::vector<int> out(panel.size());
  std::vector<int> prefix(static_cast<std::size_t>(step) + 1);
  for (std::size_t i = 0; i < panel.size(); ++i) {
    for (int s = 0; s <= step; ++s) prefix[static_cast<std::size_t>(s)] = panel.A(static_cast<Eigen::Index>(i), s);
    if (natural_override) prefix.back() = *natural_override;
    out[i] = delayed_value_at(policy, prefix);
  }
  return out;
}

namespace detail {

// Binary-exposure ratios r_t = g^d(A_t | H_t) / g(A_t | H_t) from propensity
// models fitted on the training folds.
inline RatioProvider propensity_ratios(const LongitudinalPanel& panel, const SequentialProblem& prob, const EstimandSpec& spec,
                                       const EnsembleSpec& learner) {
  const int T = panel.horizon();
  std::vector<std::vector<int>> d0(static_cast<std::size_t>(T)), d1(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    d0[static_cast<std::size_t>(t)] = policy_exposure_at(panel, spec.delay, t, 0);
    d1[static_cast<std::size_t>(t)] = policy_exposure_at(panel, spec.delay, t, 1);
  }
  return [&panel, &prob, &spec, &learner, d0, d1, T](int k, const std::vector<std::size_t>& train, const std::vector<std::size_t>& test,
                                                      RatioOutput& out) {
    EnsembleSpec ls = learner;
    ls.loss = StackLoss::LogLoss;
    ls.p_min = spec.p_min;
    for (int t = 0; t < T; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      const auto& Xfull = prob.natural[ts];
      FeatureMatrix H{std::vector<std::string>(Xfull.names.begin(), Xfull.names.end() - 1), Xfull.values.leftCols(Xfull.cols() - 1)};
      auto at_risk = [&](std::size_t i) {
        if (!spec.monotone_propensity) return true;
        const int prev = t == 0 ? spec.delay.pre_window_exposure : panel.A(static_cast<Eigen::Index>(i), t - 1);
        return prev == 0;
      };
      std::vector<std::size_t> rows;
      std::vector<double> target;
      for (auto i : train)
        if (at_risk(i)) {
          rows.push_back(i);
          target.push_back(panel.A(static_cast<Eigen::Index>(i), t));
        }
      std::optional<FittedLearner> model;
      double constant = 0.5;
      if (rows.size() >= static_cast<std::size_t>(std::max(2 * ls.v_folds, 4))) {
        model = fit_ensemble(ls, H.take_rows(rows), target, {}, ratio_seed(spec.seed, t, static_cast<std::size_t>(k)));
      } else if (!rows.empty()) {
        constant = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(target.size());
      }
      std::vector<double> pred(test.size(), constant);
      if (model) pred = model->predict(H.take_rows(test));
      for (std::size_t r = 0; r < test.size(); ++r) {
        const auto i = test[r];
        const int a = panel.A(static_cast<Eigen::Index>(i), t);
        double g1 = 1.0;
        if (at_risk(i)) {
          g1 = std::clamp(pred[r], spec.p_min, 1.0 - spec.p_min);
          out.clipped[ts][i] = (pred[r] < spec.p_min || pred[r] > 1.0 - spec.p_min) ? 1 : 0;
        }
        const double g_obs = a == 1 ? g1 : 1.0 - g1;
        double gd = 0.0;
        if (d0[ts][i] == a) gd += 1.0 - g1;
        if (d1[ts][i] == a) gd += g1;
        const double ratio = g_obs > 0.0 ? gd / g_obs : 0.0;
        out.raw[ts][i] = ratio;
        out.used[ts][i] = ratio;
      }
    }
  };
}

}  // namespace detail

inline EstimateReport estimate_longitudinal_delay(const LongitudinalPanel& panel, const EstimandSpec& spec, const EnsembleSpec& outcome_learner,
                                                  const EnsembleSpec& ratio_learner) {
  if (spec.kind != EstimandKind::LongitudinalDelay) throw InputError("estimate_longitudinal_delay requires a LONGITUDINAL_DELAY estimand");
  spec.validate();
  panel.validate();
  const int T = panel.horizon();
  if (spec.delay.horizon != T)
    throw InputError("delay policy horizon " + std::to_string(spec.delay.horizon) + " differs from panel horizon " + std::to_string(T));
  detail::SequentialProblem prob;
  for (int t = 0; t < T; ++t) {
    prob.natural.push_back(longitudinal_design(panel, t));
    auto d = policy_exposure_at(panel, spec.delay, t);
    prob.shifted.push_back(longitudinal_design(panel, t, d));
  }
  prob.y = panel.Y;
  prob.cluster_id = panel.cluster_id;
  prob.truncated_ratios = spec.ratio_method == LongitudinalRatioMethod::Classifier;
  auto provider = spec.ratio_method == LongitudinalRatioMethod::Classifier
                      ? detail::classifier_ratios(prob, spec, ratio_learner)
                      : detail::propensity_ratios(panel, prob, spec, ratio_learner);
  auto rep = detail::run_sequential(prob, spec, outcome_learner, provider);
  rep.kind = EstimandKind::LongitudinalDelay;
  return rep;
}

inline EstimateReport estimate_longitudinal_delay(const LongitudinalPanel& panel, const EstimandSpec& spec, const EnsembleSpec& learners) {
  return estimate_longitudinal_delay(panel, spec, learners, learners);
}

// ---------------------------------------------------------------------------
// Identification checks

enum class CheckStatus { Assumed, CheckedPass, CheckedWarn };

inline std::string_view to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Assumed: return "ASSUMED";
    case CheckStatus::CheckedPass: return "CHECKED-PASS";
    case CheckStatus::CheckedWarn: return "CHECKED-WARN";
  }
  return "?";
}

struct AssumptionCheck {
  std::string name;
  CheckStatus status = CheckStatus::Assumed;
  std::string detail;
};

struct IdentificationReport {
  std::vector<AssumptionCheck> checks;
  std::optional<SupportReport> support;

  bool any_warning() const {
    return std::any_of(checks.begin(), checks.end(), [](const auto& c) { return c.status == CheckStatus::CheckedWarn; });
  }
  const AssumptionCheck* find(std::string_view name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

namespace detail {

inline std::vector<AssumptionCheck> untestable_assumptions() {
  return {
      {"randomization", CheckStatus::Assumed, "Y_a independent of A given W; not testable from observed data"},
      {"consistency", CheckStatus::Assumed, "observed outcome equals the potential outcome at the observed exposure"},
      {"no_cross_cluster_interference", CheckStatus::Assumed,
       "within-cluster spillover enters only through leave-one-out summaries"},
  };
}

inline AssumptionCheck positivity_check(const PositivityProfile* profile) {
  if (!profile) return {"positivity", CheckStatus::Assumed, "ratio profile not computed"};
  const std::string detail = "fraction truncated " + std::to_string(profile->fraction_truncated) + " (threshold " +
                             std::to_string(profile->threshold) + "), max weight " + std::to_string(profile->max);
  return {"positivity", profile->violation ? CheckStatus::CheckedWarn : CheckStatus::CheckedPass, detail};
}

}  // namespace detail

inline IdentificationReport identification_checks(const PanelTable& panel, const EstimandSpec& spec,
                                                  const PositivityProfile* profile = nullptr) {
  IdentificationReport rep;
  rep.checks = detail::untestable_assumptions();
  auto support = check_shift_support(panel.A, spec.shift);
  rep.support = support;
  std::string detail = "max shifted exposure within observed range: " + std::string(support.support_holds ? "yes" : "no") +
                       "; fraction beyond observed " + std::to_string(support.quantile_level) +
                       "-quantile: " + std::to_string(support.fraction_above_quantile);
  rep.checks.push_back({"support", support.practical_warning ? CheckStatus::CheckedWarn : CheckStatus::CheckedPass, detail});
  rep.checks.push_back(detail::positivity_check(profile));
  return rep;
}

inline IdentificationReport identification_checks(const LongitudinalPanel& panel, const EstimandSpec& spec,
                                                  const PositivityProfile* profile = nullptr) {
  IdentificationReport rep;
  rep.checks = detail::untestable_assumptions();
  std::size_t changed = 0;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    std::vector<int> a(static_cast<std::size_t>(panel.horizon()));
    for (int t = 0; t < panel.horizon(); ++t) a[static_cast<std::size_t>(t)] = panel.A(static_cast<Eigen::Index>(i), t);
    if (apply_delay(spec.delay, a) != a) ++changed;
  }
  rep.checks.push_back({"support", CheckStatus::CheckedPass,
                        "delayed trajectories are monotone binary paths; units changed by the policy: " + std::to_string(changed)});
  rep.checks.push_back(detail::positivity_check(profile));
  return rep;
}

}  // namespace mtp
