#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mtp/inference.hpp"

using namespace mtp;

TEST(NormalQuantile, KnownValues) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-14);
  EXPECT_NEAR(normal_quantile(0.95), 1.6448536269514722, 1e-12);
  EXPECT_NEAR(normal_quantile(0.001), -3.090232306167813, 1e-10);
  for (double p : {1e-8, 0.01, 0.3, 0.7, 0.99, 1 - 1e-8}) EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-12 * std::max(1.0, p));
  EXPECT_THROW(normal_quantile(0.0), DomainError);
  EXPECT_THROW(normal_quantile(1.0), DomainError);
}

TEST(ConfidenceInterval, PaperExample) {
  auto [lo, hi] = confidence_interval(0.28, 0.051);
  EXPECT_NEAR(lo, 0.18004184, 1e-6);
  EXPECT_NEAR(hi, 0.37995816, 1e-6);
  auto [lo0, hi0] = confidence_interval(0.28, 0.0);
  EXPECT_EQ(lo0, 0.28);
  EXPECT_EQ(hi0, 0.28);
  EXPECT_THROW(confidence_interval(0.0, -1.0), DomainError);
  EXPECT_THROW(confidence_interval(0.0, 1.0, 0.0), DomainError);
}

TEST(ConfidenceInterval, WidthMonotoneInSeAndAlpha) {
  double prev = 0.0;
  for (double se : {0.01, 0.05, 0.1, 0.5}) {
    auto [lo, hi] = confidence_interval(1.0, se);
    EXPECT_GT(hi - lo, prev);
    prev = hi - lo;
  }
  auto [l90, h90] = confidence_interval(0.0, 1.0, 0.10);
  auto [l95, h95] = confidence_interval(0.0, 1.0, 0.05);
  EXPECT_LT(h90 - l90, h95 - l95);
}

TEST(ClusterSe, TwoSingletonClusters) {
  std::vector<double> ic = {-1.0, 1.0};
  std::vector<std::string> ids = {"a", "b"};
  auto v = cluster_robust_se(0.0, ic, ids);
  EXPECT_NEAR(v.se, 1.0, 1e-15);
  EXPECT_EQ(v.n_clusters, 2u);
  EXPECT_TRUE(v.few_clusters_warning);
}

TEST(ClusterSe, ZeroIcGivesZeroSe) {
  std::vector<double> ic(10, 0.0);
  std::vector<std::string> ids = {"a", "b", "c", "d", "e", "a", "b", "c", "d", "e"};
  EXPECT_EQ(cluster_robust_se(0.3, ic, ids).se, 0.0);
}

TEST(ClusterSe, SingleClusterIsAnError) {
  std::vector<double> ic = {1.0, -1.0, 0.5};
  std::vector<std::string> ids(3, "only");
  EXPECT_THROW(cluster_robust_se(0.0, ic, ids), DomainError);
  std::vector<std::string> short_ids = {"a", "b"};
  EXPECT_THROW(cluster_robust_se(0.0, ic, short_ids), DomainError);
}

TEST(ClusterSe, MatchesDirectFormula) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  const std::size_t n = 300, M = 12;
  std::vector<double> ic(n);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    ic[i] = nd(rng);
    ids[i] = "c" + std::to_string(i % M);
  }
  std::vector<double> sums(M, 0.0);
  for (std::size_t i = 0; i < n; ++i) sums[i % M] += ic[i];
  double s = 0.0;
  for (double c : sums) s += c * c;
  const double expected = std::sqrt(static_cast<double>(M) / (M - 1) * s) / static_cast<double>(n);
  EXPECT_NEAR(cluster_robust_se(0.0, ic, ids).se, expected, 1e-14);
}

TEST(ClusterSe, PermutationInvariant) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  std::vector<double> ic(200);
  std::vector<std::string> ids(200);
  for (std::size_t i = 0; i < ic.size(); ++i) {
    ic[i] = nd(rng);
    ids[i] = "c" + std::to_string(i % 7);
  }
  const double base = cluster_robust_se(0.0, ic, ids).se;
  std::vector<std::size_t> perm(ic.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> ic2;
  std::vector<std::string> ids2;
  for (auto k : perm) {
    ic2.push_back(ic[k]);
    ids2.push_back(ids[k]);
  }
  EXPECT_NEAR(cluster_robust_se(0.0, ic2, ids2).se, base, 1e-14);
}

TEST(ClusterSe, DuplicatedWithinClusterIcInflatesOverIid) {
  // Identical IC values within a cluster: clustering must not understate the SE.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  const std::size_t M = 40, per = 25;
  std::vector<double> ic;
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < M; ++c) {
    const double v = nd(rng);
    for (std::size_t j = 0; j < per; ++j) {
      ic.push_back(v);
      ids.push_back("c" + std::to_string(c));
    }
  }
  const double clustered = cluster_robust_se(0.0, ic, ids).se;
  const double iid = iid_se(0.0, ic).se;
  EXPECT_GT(clustered / iid, 4.0);
  EXPECT_FALSE(cluster_robust_se(0.0, ic, ids).few_clusters_warning);
}

TEST(IidSe, SampleVarianceFormula) {
  std::vector<double> ic = {1.0, 2.0, 3.0, 4.0};
  // sample variance 5/3, n = 4
  EXPECT_NEAR(iid_se(0.0, ic).se, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  EXPECT_EQ(iid_se(0.0, ic).method, "iid_ic");
  EXPECT_THROW(iid_se(0.0, std::vector<double>{1.0}), DomainError);
}
