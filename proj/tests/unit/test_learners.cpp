#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mtp/learners.hpp"

using namespace mtp;

namespace {

FeatureMatrix column(const std::vector<double>& x, const std::string& name = "x") {
  FeatureMatrix X{{name}, Eigen::MatrixXd(static_cast<Eigen::Index>(x.size()), 1)};
  for (std::size_t i = 0; i < x.size(); ++i) X.values(static_cast<Eigen::Index>(i), 0) = x[i];
  return X;
}

double mse(const std::vector<double>& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

struct Data {
  FeatureMatrix X;
  std::vector<double> y;
};

// y = 3 x1 + 0 x2 + N(0, 0.5^2)
Data signal_and_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Data d{{{"signal", "noise"}, Eigen::MatrixXd(static_cast<Eigen::Index>(n), 2)}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = nd(rng), x2 = nd(rng);
    d.X.values(static_cast<Eigen::Index>(i), 0) = x1;
    d.X.values(static_cast<Eigen::Index>(i), 1) = x2;
    d.y.push_back(3.0 * x1 + 0.5 * nd(rng));
  }
  return d;
}

Data binary_outcome(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u;
  Data d{{{"x"}, Eigen::MatrixXd(static_cast<Eigen::Index>(n), 1)}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = nd(rng);
    d.X.values(static_cast<Eigen::Index>(i), 0) = x;
    d.y.push_back(u(rng) < 1.0 / (1.0 + std::exp(-1.5 * x)) ? 1.0 : 0.0);
  }
  return d;
}

}  // namespace

TEST(Fit, InterceptOnlyPredictsMean) {
  auto m = fit({LearnerKind::InterceptOnly, {}}, column({0.0, 5.0}), std::vector<double>{1.0, 3.0});
  for (double p : m.predict(column({-4.0, 0.0, 100.0}))) EXPECT_EQ(p, 2.0);
}

TEST(Fit, GlmLinearRecoversExactSlope) {
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(0.37 * i - 4.0);
    y.push_back(2.0 * x.back());
  }
  auto m = fit({LearnerKind::GlmLinear, {}}, column(x), y);
  auto p = m.predict(column({0.0, 1.0}));
  EXPECT_NEAR(p[1] - p[0], 2.0, 1e-8);
  EXPECT_NEAR(p[0], 0.0, 1e-8);
  EXPECT_FALSE(m.summary().singular_fallback);
}

TEST(Fit, GlmLinearSingularDesignFallsBackAndFlags) {
  Data d = signal_and_noise(200, 1);
  FeatureMatrix X{{"a", "b"}, Eigen::MatrixXd(200, 2)};
  X.values.col(0) = d.X.values.col(0);
  X.values.col(1) = d.X.values.col(0);
  auto m = fit({LearnerKind::GlmLinear, {}}, X, d.y);
  EXPECT_TRUE(m.summary().singular_fallback);
  EXPECT_LT(mse(m.predict(X), d.y), 0.3);
}

TEST(Fit, ConstantTargetBehavesAsIntercept) {
  Data d = signal_and_noise(100, 2);
  std::vector<double> y(100, 4.25);
  for (auto kind : {LearnerKind::GlmLinear, LearnerKind::GbtRegress}) {
    auto m = fit({kind, {}}, d.X, y);
    EXPECT_TRUE(m.summary().constant_target);
    for (double p : m.predict(d.X)) EXPECT_NEAR(p, 4.25, 1e-12);
  }
}

TEST(Fit, GbtBeatsInterceptOnSine) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> x(500), y(500);
  for (std::size_t i = 0; i < 500; ++i) {
    x[i] = u(rng);
    y[i] = std::sin(x[i]);
  }
  auto X = column(x);
  auto gbt = fit({LearnerKind::GbtRegress, {}}, X, y);
  auto base = fit({LearnerKind::InterceptOnly, {}}, X, y);
  EXPECT_LT(mse(gbt.predict(X), y), mse(base.predict(X), y));
  EXPECT_LT(mse(gbt.predict(X), y), 0.01);
}

TEST(Fit, GbtTrainingLossNonIncreasing) {
  Data d = signal_and_noise(300, 3);
  auto reg = fit({LearnerKind::GbtRegress, {}}, d.X, d.y);
  const auto& l = reg.summary().training_loss;
  ASSERT_EQ(l.size(), 201u);
  for (std::size_t b = 1; b < l.size(); ++b) EXPECT_LE(l[b], l[b - 1] + 1e-12);
  Data c = binary_outcome(300, 4);
  auto cls = fit({LearnerKind::GbtClassify, {}}, c.X, c.y);
  const auto& lc = cls.summary().training_loss;
  for (std::size_t b = 1; b < lc.size(); ++b) EXPECT_LE(lc[b], lc[b - 1] + 1e-12);
}

TEST(Fit, ProbabilityRanges) {
  Data c = binary_outcome(400, 6);
  auto logit = fit({LearnerKind::GlmLogistic, {}}, c.X, c.y);
  for (double p : logit.predict(c.X)) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  // Separable data pushes boosted scores to the clip.
  std::vector<double> x, y;
  for (int i = 0; i < 200; ++i) {
    x.push_back(i);
    y.push_back(i < 100 ? 0.0 : 1.0);
  }
  auto gbt = fit({LearnerKind::GbtClassify, {{"trees", 300}, {"learning_rate", 0.5}}}, column(x), y);
  auto p = gbt.predict(column(x));
  for (double v : p) {
    EXPECT_GE(v, kDefaultProbabilityClip);
    EXPECT_LE(v, 1.0 - kDefaultProbabilityClip);
  }
  EXPECT_EQ(p.front(), kDefaultProbabilityClip);
  EXPECT_EQ(p.back(), 1.0 - kDefaultProbabilityClip);
}

TEST(Fit, UniformWeightsMatchUnweighted) {
  Data d = signal_and_noise(300, 7);
  Data c = binary_outcome(300, 8);
  std::vector<double> ones(300, 1.0), twos(300, 2.0);
  for (auto kind : {LearnerKind::GlmLinear, LearnerKind::GbtRegress}) {
    auto a = fit({kind, {}}, d.X, d.y).predict(d.X);
    auto b = fit({kind, {}}, d.X, d.y, ones).predict(d.X);
    auto e = fit({kind, {}}, d.X, d.y, twos).predict(d.X);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-8);
      EXPECT_NEAR(a[i], e[i], 1e-8);
    }
  }
  auto a = fit({LearnerKind::GlmLogistic, {}}, c.X, c.y).predict(c.X);
  auto b = fit({LearnerKind::GlmLogistic, {}}, c.X, c.y, ones).predict(c.X);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-8);
}

TEST(Fit, DeterministicBitIdentical) {
  Data d = signal_and_noise(300, 9);
  EnsembleSpec e;
  e.library = {{LearnerKind::GlmLinear, {}}, {LearnerKind::GbtRegress, {{"trees", 50}}}};
  auto a = fit_ensemble(e, d.X, d.y, {}, 42).predict(d.X);
  auto b = fit_ensemble(e, d.X, d.y, {}, 42).predict(d.X);
  EXPECT_EQ(a, b);
}

TEST(Fit, PredictRejectsForeignFeatureIndex) {
  Data d = signal_and_noise(50, 10);
  auto m = fit({LearnerKind::GlmLinear, {}}, d.X, d.y);
  FeatureMatrix other = d.X;
  std::swap(other.names[0], other.names[1]);
  EXPECT_THROW(m.predict(other), DomainError);
}

TEST(Fit, HyperparameterValidation) {
  Data d = signal_and_noise(50, 11);
  EXPECT_THROW(fit({LearnerKind::GbtRegress, {{"depth", 0}}}, d.X, d.y), InputError);
  EXPECT_THROW(fit({LearnerKind::GbtRegress, {{"learning_rate", 1.5}}}, d.X, d.y), InputError);
  EXPECT_THROW(fit({LearnerKind::GlmLinear, {{"trees", 10}}}, d.X, d.y), InputError);
  EXPECT_THROW(fit({LearnerKind::GlmLogistic, {}}, d.X, d.y), DomainError);
}

TEST(Ensemble, SingletonLibraryEqualsSingleFit) {
  Data d = signal_and_noise(100, 12);
  auto single = fit({LearnerKind::InterceptOnly, {}}, d.X, d.y).predict(d.X);
  auto ens = fit_ensemble(EnsembleSpec::single({LearnerKind::InterceptOnly, {}}), d.X, d.y, {}, 1);
  EXPECT_EQ(ens.predict(d.X), single);
  EXPECT_EQ(ens.summary().weights, std::vector<double>{1.0});
}

TEST(Ensemble, LinearTruthWeightsGlm) {
  Data d = signal_and_noise(1000, 13);
  EnsembleSpec e;
  e.library = {{LearnerKind::InterceptOnly, {}}, {LearnerKind::GlmLinear, {}}};
  auto m = fit_ensemble(e, d.X, d.y, {}, 3);
  EXPECT_GE(m.summary().weights[1], 0.9);
}

TEST(Ensemble, WeightsOnSimplexAndStackNoWorseThanBestMember) {
  for (std::uint64_t seed : {1, 2, 3}) {
    Data d = signal_and_noise(400, 20 + seed);
    for (auto& v : d.y) v = std::sin(v);
    EnsembleSpec e;
    e.library = {{LearnerKind::InterceptOnly, {}}, {LearnerKind::GlmLinear, {}}, {LearnerKind::GbtRegress, {{"trees", 60}}}};
    auto s = fit_ensemble(e, d.X, d.y, {}, seed).summary();
    double sum = 0.0;
    for (double w : s.weights) {
      EXPECT_GE(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-8);
    EXPECT_LE(s.ensemble_cv_loss, *std::min_element(s.cv_losses.begin(), s.cv_losses.end()) + 1e-10);
  }
}

TEST(Ensemble, LogLossStackOnSimplex) {
  Data c = binary_outcome(500, 30);
  EnsembleSpec e;
  e.library = {{LearnerKind::GlmLogistic, {}}, {LearnerKind::GbtClassify, {{"trees", 50}}}};
  e.loss = StackLoss::LogLoss;
  auto m = fit_ensemble(e, c.X, c.y, {}, 2);
  const auto& s = m.summary();
  EXPECT_NEAR(s.weights[0] + s.weights[1], 1.0, 1e-8);
  EXPECT_LE(s.ensemble_cv_loss, *std::min_element(s.cv_losses.begin(), s.cv_losses.end()) + 1e-10);
  for (double p : m.predict(c.X)) {
    EXPECT_GE(p, e.p_min);
    EXPECT_LE(p, 1.0 - e.p_min);
  }
}

TEST(Ensemble, ConstantFoldTargetUsesClippedLogLoss) {
  // Every positive falls in one region; some folds may see a single class.
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(i);
    y.push_back(i == 39 ? 1.0 : 0.0);
  }
  EnsembleSpec e;
  e.library = {{LearnerKind::GlmLogistic, {}}, {LearnerKind::InterceptOnly, {}}};
  e.loss = StackLoss::LogLoss;
  auto m = fit_ensemble(e, column(x), y, {}, 1);
  for (double l : m.summary().cv_losses) EXPECT_TRUE(std::isfinite(l));
}

TEST(Ensemble, DiscreteSelectPicksCvMinimizer) {
  Data d = signal_and_noise(300, 31);
  EnsembleSpec e;
  e.library = {{LearnerKind::InterceptOnly, {}}, {LearnerKind::GlmLinear, {}}};
  e.weighting = StackWeighting::DiscreteSelect;
  auto s = fit_ensemble(e, d.X, d.y, {}, 1).summary();
  EXPECT_EQ(s.weights, (std::vector<double>{0.0, 1.0}));
}

TEST(Ensemble, InvalidSpecRejected) {
  Data d = signal_and_noise(30, 32);
  EnsembleSpec e;
  EXPECT_THROW(fit_ensemble(e, d.X, d.y), InputError);
  e.library = {{LearnerKind::GlmLinear, {}}};
  e.v_folds = 1;
  EXPECT_THROW(fit_ensemble(e, d.X, d.y), InputError);
}

TEST(ProjectSimplex, KnownProjection) {
  Eigen::Vector3d v(0.5, 0.5, 0.5);
  auto p = detail::project_simplex(v);
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  EXPECT_NEAR(p(0), 1.0 / 3.0, 1e-15);
  auto q = detail::project_simplex(Eigen::Vector3d(2.0, 0.0, -1.0));
  EXPECT_EQ(q, Eigen::Vector3d(1.0, 0.0, 0.0));
}

TEST(Importance, NoiseNearZeroSignalLarge) {
  Data d = signal_and_noise(800, 40);
  auto m = fit({LearnerKind::GbtRegress, {}}, d.X, d.y);
  auto sig = permutation_importance(m, d.X, d.y, "signal", 20, 1);
  auto noise = permutation_importance(m, d.X, d.y, "noise", 20, 1);
  EXPECT_GT(sig.score, 0.0);
  EXPECT_GT(sig.score, noise.score);
  auto glm = fit({LearnerKind::GlmLinear, {}}, d.X, d.y);
  auto noise_glm = permutation_importance(glm, d.X, d.y, "noise", 30, 2);
  EXPECT_LT(std::abs(noise_glm.score), 2.0 * noise_glm.se + 1e-3);
}

TEST(Importance, DuplicatedFeatureSharesImportance) {
  Data d = signal_and_noise(800, 41);
  FeatureMatrix one{{"x"}, d.X.values.leftCols(1)};
  FeatureMatrix two{{"x", "x_copy"}, Eigen::MatrixXd(800, 2)};
  two.values.col(0) = d.X.values.col(0);
  two.values.col(1) = d.X.values.col(0);
  const LearnerSpec ridge{LearnerKind::GlmLinear, {{"l2", 1.0}}};
  auto m1 = fit(ridge, one, d.y);
  auto m2 = fit(ridge, two, d.y);
  const double solo = permutation_importance(m1, one, d.y, "x", 10, 3).score;
  EXPECT_LT(permutation_importance(m2, two, d.y, "x", 10, 3).score, solo);
  EXPECT_LT(permutation_importance(m2, two, d.y, "x_copy", 10, 3).score, solo);
}

TEST(Importance, UnknownFeature) {
  Data d = signal_and_noise(50, 42);
  auto m = fit({LearnerKind::GlmLinear, {}}, d.X, d.y);
  EXPECT_THROW(permutation_importance(m, d.X, d.y, "nope", 5, 1), DomainError);
}
