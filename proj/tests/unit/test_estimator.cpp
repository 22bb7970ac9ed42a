#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "mtp/estimator.hpp"
#include "mtp/inference.hpp"
#include "mtp/simulator.hpp"

using namespace mtp;

namespace {

EnsembleSpec glm_outcome() { return EnsembleSpec::single({LearnerKind::GlmLinear, {}}, StackLoss::SquaredError); }
EnsembleSpec glm_logistic() { return EnsembleSpec::single({LearnerKind::GlmLogistic, {}}, StackLoss::LogLoss); }
EnsembleSpec gbt_classifier() { return EnsembleSpec::single({LearnerKind::GbtClassify, {}}, StackLoss::LogLoss); }

EstimandSpec point_spec(double a_max, std::uint64_t seed = 1) {
  EstimandSpec s;
  s.shift = {1.0, 2.0, a_max};
  s.seed = seed;
  return s;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(ClusterFolds, KeepsClustersTogetherAndBalances) {
  std::vector<std::string> ids;
  for (int i = 0; i < 400; ++i) ids.push_back("c" + std::to_string(i % 20));
  auto f = cluster_folds(ids, 5, 3);
  std::map<std::string, std::set<int>> seen;
  std::vector<int> count(5, 0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    seen[ids[i]].insert(f[i]);
    ++count[static_cast<std::size_t>(f[i])];
  }
  for (const auto& [c, s] : seen) EXPECT_EQ(s.size(), 1u) << c;
  for (int c : count) EXPECT_EQ(c, 80);
  EXPECT_EQ(f, cluster_folds(ids, 5, 3));
  std::vector<std::string> few = {"a", "b", "a"};
  EXPECT_THROW(cluster_folds(few, 3, 1), InputError);
}

TEST(PointEstimator, NullEffectCoversZero) {
  auto panel = simulate(null_dgp(1500, 11));
  auto rep = estimate_point_shift(panel, point_spec(panel.exposure_max), glm_outcome(), gbt_classifier());
  auto v = cluster_robust_se(rep.contrast_hat, rep.ic_contrast, panel.cluster_id);
  EXPECT_LT(std::abs(rep.contrast_hat), 3.0 * v.se);
}

TEST(PointEstimator, LinearDgpWithinThreeStandardErrors) {
  auto dgp = linear_dgp(2000, 12);
  auto panel = simulate(dgp);
  auto spec = point_spec(dgp.a_max);
  auto truth = shift_contrast_quadrature(dgp, spec.shift);
  auto rep = estimate_point_shift(panel, spec, glm_outcome(), gbt_classifier());
  auto v = cluster_robust_se(rep.contrast_hat, rep.ic_contrast, panel.cluster_id);
  EXPECT_LT(std::abs(rep.contrast_hat - truth), 3.0 * v.se) << rep.contrast_hat << " vs " << truth;
  EXPECT_LT(std::abs(rep.mean_ic_psi), 1e-6);
  EXPECT_LT(std::abs(rep.mean_ic_contrast), 1e-6);
  const auto [lo, hi] = std::minmax_element(panel.Y.begin(), panel.Y.end());
  EXPECT_GE(rep.psi_hat, *lo);
  EXPECT_LE(rep.psi_hat, *hi);
  EXPECT_EQ(rep.n, 2000u);
  EXPECT_EQ(rep.n_clusters, 20u);
}

TEST(PointEstimator, IdentityPolicyGivesZeroContrast) {
  auto panel = simulate(linear_dgp(800, 13));
  auto spec = point_spec(panel.exposure_max);
  spec.shift = {0.0, 0.0, panel.exposure_max};
  auto rep = estimate_point_shift(panel, spec, glm_outcome(), glm_logistic());
  auto v = cluster_robust_se(rep.contrast_hat, rep.ic_contrast, panel.cluster_id);
  EXPECT_LT(std::abs(rep.contrast_hat), 0.02);
  EXPECT_LT(v.se, 0.05);
}

TEST(PointEstimator, OneStepAndTmleAgreeClosely) {
  auto panel = simulate(linear_dgp(1500, 14));
  auto spec = point_spec(panel.exposure_max);
  auto tmle = estimate_point_shift(panel, spec, glm_outcome(), gbt_classifier());
  spec.targeting = Targeting::OneStep;
  auto os = estimate_point_shift(panel, spec, glm_outcome(), gbt_classifier());
  auto v = cluster_robust_se(tmle.contrast_hat, tmle.ic_contrast, panel.cluster_id);
  EXPECT_LT(std::abs(tmle.psi_hat - os.psi_hat), v.se);
  EXPECT_LT(std::abs(os.mean_ic_psi), 1e-9);
}

TEST(PointEstimator, DeterministicGivenSeed) {
  auto panel = simulate(linear_dgp(600, 15));
  auto spec = point_spec(panel.exposure_max, 42);
  EnsembleSpec lib;
  lib.library = {{LearnerKind::GlmLinear, {}}, {LearnerKind::GbtRegress, {}}};
  auto a = estimate_point_shift(panel, spec, lib, gbt_classifier());
  auto b = estimate_point_shift(panel, spec, lib, gbt_classifier());
  EXPECT_EQ(a.psi_hat, b.psi_hat);
  EXPECT_EQ(a.ic_psi, b.ic_psi);
}

TEST(PointEstimator, ConstantOutcome) {
  auto panel = simulate(linear_dgp(200, 16));
  std::fill(panel.Y.begin(), panel.Y.end(), 3.5);
  auto rep = estimate_point_shift(panel, point_spec(panel.exposure_max), glm_outcome(), glm_logistic());
  EXPECT_TRUE(rep.constant_outcome);
  EXPECT_EQ(rep.psi_hat, 3.5);
  EXPECT_EQ(rep.contrast_hat, 0.0);
  for (double x : rep.ic_contrast) EXPECT_EQ(x, 0.0);
}

TEST(PointEstimator, RejectsWrongEstimandKind) {
  auto panel = simulate(linear_dgp(200, 17));
  auto spec = point_spec(panel.exposure_max);
  spec.kind = EstimandKind::LongitudinalDelay;
  EXPECT_THROW(estimate_point_shift(panel, spec, glm_outcome(), glm_logistic()), InputError);
}

TEST(Identification, StatusesForPointShift) {
  auto panel = simulate(linear_dgp(500, 18));
  auto identity = point_spec(panel.exposure_max);
  identity.shift = {0.0, 0.0, panel.exposure_max};
  auto rep = identification_checks(panel, identity);
  for (auto name : {"randomization", "consistency", "no_cross_cluster_interference"}) {
    ASSERT_NE(rep.find(name), nullptr);
    EXPECT_EQ(rep.find(name)->status, CheckStatus::Assumed);
  }
  ASSERT_NE(rep.find("support"), nullptr);
  EXPECT_EQ(rep.find("support")->status, CheckStatus::CheckedPass);
  EXPECT_EQ(rep.find("positivity")->status, CheckStatus::Assumed);

  PositivityProfile bad;
  bad.violation = true;
  bad.fraction_truncated = 0.1;
  EXPECT_EQ(identification_checks(panel, identity, &bad).find("positivity")->status,
            CheckStatus::CheckedWarn);
}

TEST(Identification, DisjointSupportWarns) {
  // Every unit sits near a_max: the shift leaves the upper 1% of exposures
  // and positivity collapses.
  auto panel = simulate(linear_dgp(600, 19));
  for (auto& a : panel.A) a = 0.5 * a / panel.exposure_max;
  panel.exposure_max = 10.0;
  auto spec = point_spec(10.0);
  spec.shift = {3.0, 3.0, 10.0};
  auto ident = identification_checks(panel, spec);
  EXPECT_EQ(ident.find("support")->status, CheckStatus::CheckedWarn);
  EXPECT_TRUE(ident.any_warning());
  auto rep = estimate_point_shift(panel, spec, glm_outcome(), gbt_classifier());
  EXPECT_TRUE(rep.ratio_profile.violation);
  EXPECT_EQ(identification_checks(panel, spec, &rep.ratio_profile).find("positivity")->status, CheckStatus::CheckedWarn);
}

TEST(LongitudinalEstimator, SingleStepMatchesPointMap) {
  LongitudinalDgpSpec s;
  s.n_units = 1200;
  s.n_clusters = 20;
  s.horizon = 1;
  s.seed = 21;
  auto lp = simulate_longitudinal(s);

  EstimandSpec spec;
  spec.kind = EstimandKind::LongitudinalDelay;
  spec.delay = {1, 1, 0};
  spec.seed = 5;
  spec.ratio_method = LongitudinalRatioMethod::Classifier;
  auto lrep = estimate_longitudinal_delay(lp, spec, glm_outcome(), glm_logistic());

  PanelTable p;
  p.unit_id = lp.unit_id;
  p.cluster_id = lp.cluster_id;
  p.covariate_names = lp.baseline_names;
  p.W = lp.W;
  p.Y = lp.Y;
  std::vector<double> shifted;
  for (Eigen::Index i = 0; i < lp.A.rows(); ++i) {
    p.A.push_back(lp.A(i, 0));
    shifted.push_back(0.0);
  }
  p.exposure_max = 1.0;
  auto pspec = spec;
  pspec.kind = EstimandKind::PointShift;
  auto prep = estimate_point_map(p, shifted, pspec, glm_outcome(), glm_logistic());
  EXPECT_NEAR(lrep.psi_hat, prep.psi_hat, 1e-6);
  EXPECT_NEAR(lrep.contrast_hat, prep.contrast_hat, 1e-6);
}

TEST(LongitudinalEstimator, ZeroDelayIsIdentity) {
  LongitudinalDgpSpec s;
  s.n_units = 1000;
  s.n_clusters = 20;
  s.horizon = 3;
  s.seed = 22;
  auto lp = simulate_longitudinal(s);
  EstimandSpec spec;
  spec.kind = EstimandKind::LongitudinalDelay;
  spec.delay = {3, 0, 0};
  auto rep = estimate_longitudinal_delay(lp, spec, glm_outcome(), glm_logistic());
  EXPECT_NEAR(rep.psi_hat, mean(lp.Y), 0.02);
  EXPECT_LT(std::abs(rep.mean_ic_contrast), 1e-6);
}

TEST(LongitudinalEstimator, NeverExposedPanelGivesZeroContrast) {
  LongitudinalDgpSpec s;
  s.n_units = 600;
  s.n_clusters = 20;
  s.horizon = 3;
  s.a0 = -40.0;  // exposure never switches on
  s.seed = 23;
  auto lp = simulate_longitudinal(s);
  ASSERT_EQ(lp.A.sum(), 0);
  EstimandSpec spec;
  spec.kind = EstimandKind::LongitudinalDelay;
  spec.delay = {3, 2, 0};
  auto rep = estimate_longitudinal_delay(lp, spec, glm_outcome(), glm_logistic());
  EXPECT_NEAR(rep.contrast_hat, 0.0, 1e-6);
  auto ident = identification_checks(lp, spec);
  EXPECT_EQ(ident.find("support")->status, CheckStatus::CheckedPass);
}

TEST(LongitudinalEstimator, RecoversExactContrast) {
  LongitudinalDgpSpec s;
  s.n_units = 4000;
  s.n_clusters = 40;
  s.horizon = 3;
  s.seed = 24;
  auto lp = simulate_longitudinal(s);
  EstimandSpec spec;
  spec.kind = EstimandKind::LongitudinalDelay;
  spec.delay = {3, 2, 0};
  EnsembleSpec lib;
  lib.library = {{LearnerKind::GlmLinear, {}}, {LearnerKind::GbtRegress, {}}};
  auto rep = estimate_longitudinal_delay(lp, spec, lib, glm_logistic());
  auto truth = true_longitudinal_contrast(s, spec.delay);
  EXPECT_EQ(truth.method, "exact_enumeration");
  auto v = cluster_robust_se(rep.contrast_hat, rep.ic_contrast, lp.cluster_id);
  EXPECT_LT(std::abs(rep.contrast_hat - truth.value), 3.0 * v.se) << rep.contrast_hat << " vs " << truth.value;
  EXPECT_LT(std::abs(rep.mean_ic_psi), 1e-6);
}

TEST(LongitudinalEstimator, HorizonMismatchRejected) {
  LongitudinalDgpSpec s;
  s.n_units = 100;
  s.n_clusters = 10;
  s.horizon = 3;
  auto lp = simulate_longitudinal(s);
  EstimandSpec spec;
  spec.kind = EstimandKind::LongitudinalDelay;
  spec.delay = {2, 1, 0};
  EXPECT_THROW(estimate_longitudinal_delay(lp, spec, glm_outcome()), InputError);
}
