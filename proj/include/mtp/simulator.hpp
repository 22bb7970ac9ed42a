#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mtp/csv.hpp"
#include "mtp/errors.hpp"
#include "mtp/inference.hpp"
#include "mtp/panel_data.hpp"
#include "mtp/parallel.hpp"
#include "mtp/random.hpp"
#include "mtp/shift_policy.hpp"

namespace mtp {

enum class ExposureNoise { Uniform, Normal };

// W_1..W_p ~ N(0,1) truncated to [-w_trunc, w_trunc] (untruncated if w_trunc <= 0).
// A = a_intercept + a_slope * W_1 + V_c + U, V_c ~ Uniform(-h, h) per cluster,
//   U ~ Uniform(u_lo, u_hi) or N(0, u_sd) truncated so that A lies in [0, a_max].
// Y = y0 + beta_a * A + beta_w * W_1 + beta_aw * A * W_1 + b_c + eps,
//   b_c ~ N(0, cluster_sd), eps ~ N(0, noise_sd).
struct DgpSpec {
  std::size_t n_units = 1000;
  std::size_t n_clusters = 20;
  int w_dim = 1;
  double w_trunc = 2.0;
  double a_intercept = 1.0;
  double a_slope = 0.5;
  double cluster_exposure_halfwidth = 0.0;
  ExposureNoise noise = ExposureNoise::Uniform;
  double u_lo = 0.0;
  double u_hi = 4.0;
  double u_sd = 1.0;
  double a_max = 6.0;
  double y0 = 0.0;
  double beta_a = 2.0;
  double beta_w = 1.0;
  double beta_aw = 0.0;
  double cluster_sd = 0.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 1;
  Stratum stratum = Stratum::Unspecified;

  void validate() const {
    if (n_units < 2) throw InputError("dgp: n_units must be at least 2");
    if (n_clusters < 1 || n_clusters > n_units) throw InputError("dgp: n_clusters must lie in [1, n_units]");
    if (w_dim < 1) throw InputError("dgp: w_dim must be positive");
    if (!(a_max > 0.0)) throw InputError("dgp: a_max must be positive");
    if (cluster_exposure_halfwidth < 0 || u_sd < 0 || cluster_sd < 0 || noise_sd < 0)
      throw InputError("dgp: variance parameters must be nonnegative");
    if (noise == ExposureNoise::Uniform) {
      if (!(u_hi >= u_lo)) throw InputError("dgp: u_hi must be >= u_lo");
      if (!(w_trunc > 0.0)) throw InputError("dgp: uniform exposure noise needs bounded W");
      const double spread = std::abs(a_slope) * w_trunc + cluster_exposure_halfwidth;
      if (a_intercept - spread + u_lo < -1e-12 || a_intercept + spread + u_hi > a_max + 1e-12)
        throw InputError("dgp: exposure support exceeds [0, a_max]");
    } else {
      if (!(u_sd > 0.0)) throw InputError("dgp: normal exposure noise needs u_sd > 0");
    }
  }

  double structural(double a, double w1) const { return y0 + beta_a * a + beta_w * w1 + beta_aw * a * w1; }
};

namespace detail {

inline double draw_truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  std::normal_distribution<double> nd(mean, sd);
  for (int k = 0; k < 100000; ++k) {
    const double x = nd(rng);
    if (x >= lo && x <= hi) return x;
  }
  throw InputError("dgp: truncation region has negligible probability");
}

inline double draw_w(Rng& rng, const DgpSpec& s) {
  if (s.w_trunc > 0.0) return draw_truncated_normal(rng, 0.0, 1.0, -s.w_trunc, s.w_trunc);
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double draw_exposure(Rng& rng, const DgpSpec& s, double w1, double v) {
  const double m = s.a_intercept + s.a_slope * w1 + v;
  if (s.noise == ExposureNoise::Uniform) {
    const double a = m + std::uniform_real_distribution<double>(s.u_lo, s.u_hi)(rng);
    return std::clamp(a, 0.0, s.a_max);
  }
  return draw_truncated_normal(rng, m, s.u_sd, 0.0, s.a_max);
}

inline double draw_cluster_shift(Rng& rng, const DgpSpec& s) {
  if (s.cluster_exposure_halfwidth == 0.0) return 0.0;
  return std::uniform_real_distribution<double>(-s.cluster_exposure_halfwidth, s.cluster_exposure_halfwidth)(rng);
}

}  // namespace detail

// Unit i belongs to cluster i mod n_clusters, so sizes differ by at most one.
inline PanelTable simulate(const DgpSpec& s) {
  s.validate();
  Rng rng(derive_seed(s.seed, 0x51));
  PanelTable p;
  p.stratum = s.stratum;
  for (int j = 0; j < s.w_dim; ++j) p.covariate_names.push_back("W" + std::to_string(j + 1));
  std::vector<double> v(s.n_clusters), b(s.n_clusters);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t c = 0; c < s.n_clusters; ++c) {
    v[c] = detail::draw_cluster_shift(rng, s);
    b[c] = s.cluster_sd * nd(rng);
  }
  p.W.resize(static_cast<Eigen::Index>(s.n_units), s.w_dim);
  for (std::size_t i = 0; i < s.n_units; ++i) {
    const auto c = i % s.n_clusters;
    for (int j = 0; j < s.w_dim; ++j) p.W(static_cast<Eigen::Index>(i), j) = detail::draw_w(rng, s);
    const double w1 = p.W(static_cast<Eigen::Index>(i), 0);
    const double a = detail::draw_exposure(rng, s, w1, v[c]);
    p.unit_id.push_back("u" + std::to_string(i + 1));
    p.cluster_id.push_back("c" + std::to_string(c + 1));
    p.A.push_back(a);
    p.Y.push_back(s.structural(a, w1) + b[c] + s.noise_sd * nd(rng));
  }
  p.exposure_max = s.a_max;
  p.validate();
  return p;
}

struct OracleResult {
  double value = 0.0;
  double mc_se = 0.0;
  std::string method;
  std::size_t draws = 0;
};

inline constexpr std::size_t kOracleChunks = 64;

// Monte Carlo oracle for E[Y_d] - E[Y]; noise and cluster effects cancel in
// the paired difference.
inline OracleResult true_shift_contrast(const DgpSpec& s, const BoundedAdditiveShift& policy, std::size_t draws = 1000000,
                                        std::uint64_t seed = 0) {
  s.validate();
  policy.validate();
  if (draws < 2) throw DomainError("oracle: at least two draws required");
  std::vector<double> sum(kOracleChunks, 0.0), sumsq(kOracleChunks, 0.0);
  parallel_for(kOracleChunks, [&](std::size_t k) {
    const std::size_t begin = draws * k / kOracleChunks, end = draws * (k + 1) / kOracleChunks;
    Rng rng(derive_seed(seed ^ s.seed, 0x0AC1E, k));
    for (std::size_t i = begin; i < end; ++i) {
      const double w1 = detail::draw_w(rng, s);
      for (int j = 1; j < s.w_dim; ++j) detail::draw_w(rng, s);
      const double v = detail::draw_cluster_shift(rng, s);
      const double a = detail::draw_exposure(rng, s, w1, v);
      const double da = a > policy.a_max ? a : apply_shift(policy, a);
      const double d = s.structural(da, w1) - s.structural(a, w1);
      sum[k] += d;
      sumsq[k] += d * d;
    }
  });
  double total = 0.0, total_sq = 0.0;
  for (std::size_t k = 0; k < kOracleChunks; ++k) {
    total += sum[k];
    total_sq += sumsq[k];
  }
  const double n = static_cast<double>(draws);
  const double mean = total / n;
  const double var = std::max(0.0, (total_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), "monte_carlo", draws};
}

namespace detail {

// P(A <= x | W_1 = w, V = v).
inline double exposure_cdf(const DgpSpec& s, double x, double w, double v) {
  const double m = s.a_intercept + s.a_slope * w + v;
  if (s.noise == ExposureNoise::Uniform) {
    if (s.u_hi == s.u_lo) return x >= m + s.u_lo ? 1.0 : 0.0;
    return std::clamp((x - m - s.u_lo) / (s.u_hi - s.u_lo), 0.0, 1.0);
  }
  const double lo = normal_cdf((0.0 - m) / s.u_sd), hi = normal_cdf((s.a_max - m) / s.u_sd);
  const double xc = std::clamp(x, 0.0, s.a_max);
  return (normal_cdf((xc - m) / s.u_sd) - lo) / (hi - lo);
}

inline double mean_exposure(const DgpSpec& s, double w, double v) {
  const double m = s.a_intercept + s.a_slope * w + v;
  if (s.noise == ExposureNoise::Uniform) return m + 0.5 * (s.u_lo + s.u_hi);
  const double a = (0.0 - m) / s.u_sd, b = (s.a_max - m) / s.u_sd;
  const double phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }(a);
  const double phib = std::exp(-0.5 * b * b) / std::sqrt(2.0 * std::numbers::pi);
  return m + s.u_sd * (phi - phib) / (normal_cdf(b) - normal_cdf(a));
}

// Composite Simpson rule on [a, b] with an even number of panels.
template <typename F>
double simpson(F&& f, double a, double b, int panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int k = 1; k < panels; ++k) s += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace detail

// Closed-form cross-check for the linear structural function:
// E[(beta_a + beta_aw W_1) (delta2 F(a_max - delta2 | W) + delta1 (F(a_max - delta1 | W) - F(a_max - delta2 | W)))].
// Requires the policy bound to cover the exposure support.
inline double shift_contrast_quadrature(const DgpSpec& s, const BoundedAdditiveShift& policy) {
  s.validate();
  policy.validate();
  const double wb = s.w_trunc > 0.0 ? s.w_trunc : 8.0;
  const double wnorm = s.w_trunc > 0.0 ? normal_cdf(s.w_trunc) - normal_cdf(-s.w_trunc) : 1.0;
  const double h = s.cluster_exposure_halfwidth;
  auto inner = [&](double w, double v) {
    const double f2 = detail::exposure_cdf(s, policy.a_max - policy.delta2, w, v);
    const double f1 = detail::exposure_cdf(s, policy.a_max - policy.delta1, w, v);
    return policy.delta2 * f2 + policy.delta1 * (f1 - f2);
  };
  auto given_w = [&](double w) {
    const double inc = h > 0.0 ? detail::simpson([&](double v) { return inner(w, v); }, -h, h, 400) / (2.0 * h) : inner(w, 0.0);
    const double dens = std::exp(-0.5 * w * w) / std::sqrt(2.0 * std::numbers::pi) / wnorm;
    return (s.beta_a + s.beta_aw * w) * inc * dens;
  };
  return detail::simpson(given_w, -wb, wb, 4000);
}

// ---------------------------------------------------------------------------
// Longitudinal discrete DGP

// W ~ Bernoulli(p_w). For t = 1..T:
//   L_t (t >= 2) ~ Bernoulli(expit(l0 + l_w W + l_a A_{t-1} + l_l L_{t-1})), L_1 := 0;
//   A_t = 1 if A_{t-1} = 1, else Bernoulli(expit(a0 + a_w W + a_l L_t)).
// Y = y0 + y_w W + y_a sum_t A_t + y_l L_T + b_c + eps.
struct LongitudinalDgpSpec {
  std::size_t n_units = 4000;
  std::size_t n_clusters = 40;
  int horizon = 3;
  double p_w = 0.5;
  double l0 = -0.5, l_w = 0.8, l_a = 0.7, l_l = 0.9;
  double a0 = -1.2, a_w = 0.6, a_l = 0.8;
  double y0 = 1.0, y_w = 0.5, y_a = 1.5, y_l = 1.0;
  double cluster_sd = 0.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 1;
  Stratum stratum = Stratum::Unspecified;

  void validate() const {
    if (n_units < 2) throw InputError("dgp: n_units must be at least 2");
    if (n_clusters < 1 || n_clusters > n_units) throw InputError("dgp: n_clusters must lie in [1, n_units]");
    if (horizon < 1) throw InputError("dgp: horizon must be positive");
    if (!(p_w >= 0.0 && p_w <= 1.0)) throw InputError("dgp: p_w must lie in [0, 1]");
    if (cluster_sd < 0 || noise_sd < 0) throw InputError("dgp: variance parameters must be nonnegative");
  }

  double l_prob(int w, int a_prev, int l_prev) const { return 1.0 / (1.0 + std::exp(-(l0 + l_w * w + l_a * a_prev + l_l * l_prev))); }
  double a_prob(int w, int l) const { return 1.0 / (1.0 + std::exp(-(a0 + a_w * w + a_l * l))); }
  double outcome_mean(int w, int sum_a, int l_last) const { return y0 + y_w * w + y_a * sum_a + y_l * l_last; }
};

inline LongitudinalPanel simulate_longitudinal(const LongitudinalDgpSpec& s) {
  s.validate();
  Rng rng(derive_seed(s.seed, 0x52));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int T = s.horizon;
  const auto n = static_cast<Eigen::Index>(s.n_units);
  LongitudinalPanel lp;
  lp.stratum = s.stratum;
  lp.baseline_names = {"W"};
  lp.W.resize(n, 1);
  lp.A.resize(n, T);
  lp.time_varying_names.assign(static_cast<std::size_t>(T), {});
  lp.L.assign(static_cast<std::size_t>(T), Eigen::MatrixXd(n, 0));
  for (int t = 1; t < T; ++t) {
    lp.time_varying_names[static_cast<std::size_t>(t)] = {"L"};
    lp.L[static_cast<std::size_t>(t)].resize(n, 1);
  }
  std::vector<double> b(s.n_clusters);
  for (auto& x : b) x = s.cluster_sd * nd(rng);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(i) % s.n_clusters;
    const int w = unif(rng) < s.p_w ? 1 : 0;
    lp.W(i, 0) = w;
    int a_prev = 0, l_prev = 0, sum_a = 0;
    for (int t = 0; t < T; ++t) {
      int l = 0;
      if (t >= 1) {
        l = unif(rng) < s.l_prob(w, a_prev, l_prev) ? 1 : 0;
        lp.L[static_cast<std::size_t>(t)](i, 0) = l;
      }
      const int a = a_prev == 1 ? 1 : (unif(rng) < s.a_prob(w, l) ? 1 : 0);
      lp.A(i, t) = a;
      sum_a += a;
      a_prev = a;
      l_prev = l;
    }
    lp.unit_id.push_back("u" + std::to_string(i + 1));
    lp.cluster_id.push_back("c" + std::to_string(c + 1));
    lp.Y.push_back(s.outcome_mean(w, sum_a, l_prev) + b[c] + s.noise_sd * nd(rng));
  }
  lp.validate();
  return lp;
}

// Path count above which the longitudinal oracle switches to Monte Carlo.
inline constexpr std::size_t kMaxEnumerationPaths = 256;

namespace detail {

// Mean outcome under the regime that feeds the intervened past and the
// natural exposure draw into the per-step policy rule.
inline double enumerate_regime(const LongitudinalDgpSpec& s, const LongitudinalDelayPolicy* policy) {
  const int T = s.horizon;
  double total = 0.0;
  // Recursive walk over (L_t, natural A_t) with the intervened history.
  std::vector<int> past;
  auto walk = [&](auto&& self, int t, int w, int l_prev, int sum_a, double prob) -> void {
    if (prob == 0.0) return;
    if (t == T) {
      total += prob * s.outcome_mean(w, sum_a, l_prev);
      return;
    }
    const int a_prev = t == 0 ? 0 : past.back();
    for (int l = 0; l <= (t >= 1 ? 1 : 0); ++l) {
      double pl = 1.0;
      if (t >= 1) {
        const double q = s.l_prob(w, a_prev, l_prev);
        pl = l ? q : 1.0 - q;
      }
      for (int a = 0; a <= 1; ++a) {
        double pa;
        if (a_prev == 1) pa = a == 1 ? 1.0 : 0.0;
        else {
          const double q = s.a_prob(w, l);
          pa = a ? q : 1.0 - q;
        }
        int ad = a;
        if (policy) {
          past.push_back(a);
          ad = delayed_value_at(*policy, past);
          past.pop_back();
        }
        past.push_back(ad);
        self(self, t + 1, w, t >= 1 ? l : 0, sum_a + ad, prob * pl * pa);
        past.pop_back();
      }
    }
  };
  for (int w = 0; w <= 1; ++w) {
    const double pw = w ? s.p_w : 1.0 - s.p_w;
    walk(walk, 0, w, 0, 0, pw);
  }
  return total;
}

}  // namespace detail

// g-computation oracle for E[Y_d] - E[Y]: exact enumeration when the path
// count is within kMaxEnumerationPaths, otherwise paired Monte Carlo.
inline OracleResult true_longitudinal_contrast(const LongitudinalDgpSpec& s, const LongitudinalDelayPolicy& policy,
                                               std::size_t mc_draws = 1000000, std::uint64_t seed = 0,
                                               bool force_monte_carlo = false) {
  s.validate();
  policy.validate();
  if (policy.horizon != s.horizon) throw DomainError("oracle: policy horizon differs from DGP horizon");
  const double paths = std::pow(4.0, s.horizon);  // binary W, then (L_t, A_t) pairs
  if (!force_monte_carlo && paths <= static_cast<double>(kMaxEnumerationPaths)) {
    const double v = detail::enumerate_regime(s, &policy) - detail::enumerate_regime(s, nullptr);
    return {v, 0.0, "exact_enumeration", static_cast<std::size_t>(paths)};
  }
  std::vector<double> sum(kOracleChunks, 0.0), sumsq(kOracleChunks, 0.0);
  parallel_for(kOracleChunks, [&](std::size_t k) {
    const std::size_t begin = mc_draws * k / kOracleChunks, end = mc_draws * (k + 1) / kOracleChunks;
    Rng rng(derive_seed(seed ^ s.seed, 0x10A6, k));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<int> past;
    for (std::size_t i = begin; i < end; ++i) {
      const int w = unif(rng) < s.p_w ? 1 : 0;
      // Common random numbers: both regimes consume the same uniforms.
      std::vector<double> ul(static_cast<std::size_t>(s.horizon)), ua(static_cast<std::size_t>(s.horizon));
      for (int t = 0; t < s.horizon; ++t) {
        ul[static_cast<std::size_t>(t)] = unif(rng);
        ua[static_cast<std::size_t>(t)] = unif(rng);
      }
      auto run = [&](bool intervene) {
        past.clear();
        int l_prev = 0, sum_a = 0;
        for (int t = 0; t < s.horizon; ++t) {
          const int a_prev = t == 0 ? 0 : past.back();
          const int l = t >= 1 ? (ul[static_cast<std::size_t>(t)] < s.l_prob(w, a_prev, l_prev) ? 1 : 0) : 0;
          const int a = a_prev == 1 ? 1 : (ua[static_cast<std::size_t>(t)] < s.a_prob(w, l) ? 1 : 0);
          int ad = a;
          if (intervene) {
            past.push_back(a);
            ad = delayed_value_at(policy, past);
            past.pop_back();
          }
          past.push_back(ad);
          sum_a += ad;
          l_prev = l;
        }
        return s.outcome_mean(w, sum_a, l_prev);
      };
      const double d = run(true) - run(false);
      sum[k] += d;
      sumsq[k] += d * d;
    }
  });
  double total = 0.0, total_sq = 0.0;
  for (std::size_t k = 0; k < kOracleChunks; ++k) {
    total += sum[k];
    total_sq += sumsq[k];
  }
  const double n = static_cast<double>(mc_draws);
  const double mean = total / n;
  const double var = std::max(0.0, (total_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), "monte_carlo", mc_draws};
}

// ---------------------------------------------------------------------------
// Presets

inline DgpSpec linear_dgp(std::size_t n, std::uint64_t seed, std::size_t clusters = 20) {
  DgpSpec s;
  s.n_units = n;
  s.n_clusters = clusters;
  s.seed = seed;
  return s;
}

// Exposure given W is a normal truncated to [0, a_max], so every shifted value
// keeps positive conditional density (the uniform design of linear_dgp does not).
inline DgpSpec null_dgp(std::size_t n, std::uint64_t seed, std::size_t clusters = 20) {
  DgpSpec s = linear_dgp(n, seed, clusters);
  s.noise = ExposureNoise::Normal;
  s.a_intercept = 3.0;
  s.u_sd = 1.5;
  s.a_max = 6.0;
  s.beta_a = 0.0;
  s.beta_aw = 0.0;
  return s;
}

// Gaussian exposure far from both bounds, so a +delta shift keeps a logistic
// log-density-ratio linear in (W, A).
inline DgpSpec gaussian_dgp(std::size_t n, std::uint64_t seed, std::size_t clusters = 20) {
  DgpSpec s = linear_dgp(n, seed, clusters);
  s.noise = ExposureNoise::Normal;
  s.a_intercept = 5.0;
  s.a_slope = 0.5;
  s.u_sd = 1.0;
  s.a_max = 1000.0;
  return s;
}

inline BoundedAdditiveShift unbounded_shift(double delta, double a_max = 1000.0) { return {delta, delta, a_max}; }

// Cluster-level exposure and outcome components; truncated-normal exposure
// noise as in null_dgp.
inline DgpSpec clustered_dgp(std::size_t n, std::uint64_t seed, std::size_t clusters = 40) {
  DgpSpec s = linear_dgp(n, seed, clusters);
  s.noise = ExposureNoise::Normal;
  s.a_intercept = 3.5;
  s.cluster_exposure_halfwidth = 1.0;
  s.u_sd = 1.5;
  s.a_max = 7.0;
  s.cluster_sd = 1.0;
  return s;
}

// Paper-shaped strata: 409 units / 9 clusters and 2298 units / 39 clusters.
inline DgpSpec early_like(std::uint64_t seed, double scale = 1.0) {
  DgpSpec s = linear_dgp(static_cast<std::size_t>(std::lround(409 * scale)), seed, 9);
  s.stratum = Stratum::Early;
  s.a_intercept = 1.2;
  s.u_hi = 3.7;
  s.a_max = 5.91;
  s.cluster_sd = 0.5;
  return s;
}

inline DgpSpec late_like(std::uint64_t seed, double scale = 1.0) {
  DgpSpec s = linear_dgp(static_cast<std::size_t>(std::lround(2298 * scale)), seed, 39);
  s.stratum = Stratum::Late;
  s.a_intercept = 1.0;
  s.u_hi = 2.79;
  s.a_max = 4.79;
  s.cluster_sd = 0.5;
  return s;
}

// ---------------------------------------------------------------------------
// Raw fixtures in the ingestion schemas

enum class LawPattern { Independent, CoEnacted, Entangled };

struct RawFixtureSpec {
  std::size_t n_states = 20;
  std::size_t counties_per_state = 10;
  int first_year = 2013;
  int last_year = 2018;
  LawPattern pattern = LawPattern::CoEnacted;
  std::vector<LawCode> never_enacted;     // constant-zero law columns
  double unresolvable_masked_fraction = 0.0;  // of counties, exact count rounded
  double resolvable_masked_fraction = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_states < 2 || counties_per_state < 1) throw InputError("fixture: need at least two states with one county each");
    if (last_year < first_year) throw InputError("fixture: last_year before first_year");
    if (unresolvable_masked_fraction < 0 || resolvable_masked_fraction < 0 ||
        unresolvable_masked_fraction + resolvable_masked_fraction > 1)
      throw InputError("fixture: masking fractions must be nonnegative and sum to at most 1");
  }
};

struct RawFixture {
  csv::Table county_year;
  csv::Table law_dates;
};

namespace detail {

inline Date random_date(Rng& rng, int from_year, int to_year) {
  using namespace std::chrono;
  const sys_days a = make_date(from_year, 1, 1), b = make_date(to_year, 12, 31);
  std::uniform_int_distribution<long> off(0, (b - a).count());
  return year_month_day{a + days{off(rng)}};
}

inline Date shift_years(Date d, double years) {
  using namespace std::chrono;
  return year_month_day{sys_days{d} + days{static_cast<long>(std::lround(years * kDaysPerYear))}};
}

}  // namespace detail

// Laws per state. CoEnacted: NAL provisions 1-3 and GSL share one date.
// Entangled: NAL dates track the PDMP date with noise (exposure largely
// explained by the other opioid laws). Independent: every law draws its own date.
inline std::vector<LawDateRecord> simulate_law_dates(const RawFixtureSpec& s) {
  Rng rng(derive_seed(s.seed, 0x1A3));
  std::vector<LawDateRecord> out;
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto skip = [&](LawCode c) { return std::find(s.never_enacted.begin(), s.never_enacted.end(), c) != s.never_enacted.end(); };
  for (std::size_t k = 0; k < s.n_states; ++k) {
    const std::string state = "S" + std::to_string(k + 1);
    std::map<LawCode, Date> dates;
    switch (s.pattern) {
      case LawPattern::Independent:
        for (auto c : kAllLawCodes) dates[c] = detail::random_date(rng, 2005, 2020);
        break;
      case LawPattern::CoEnacted: {
        const Date d = detail::random_date(rng, 2007, 2017);
        for (auto c : nal_gsl_bundle()) dates[c] = d;
        dates[LawCode::NAL_P4] = detail::random_date(rng, 2007, 2020);
        for (auto c : {LawCode::PMCL, LawCode::MML, LawCode::PDMP_OPERATIONAL, LawCode::PDMP_MUSTQUERY})
          dates[c] = detail::random_date(rng, 2005, 2020);
        break;
      }
      case LawPattern::Entangled: {
        const Date pdmp = detail::random_date(rng, 2006, 2017);
        dates[LawCode::PDMP_OPERATIONAL] = pdmp;
        dates[LawCode::PDMP_MUSTQUERY] = detail::shift_years(pdmp, 1.0 + 2.0 * unif(rng));
        dates[LawCode::PMCL] = detail::shift_years(pdmp, 0.5 + 1.5 * nd(rng));
        dates[LawCode::MML] = detail::random_date(rng, 2005, 2020);
        const Date nal = detail::shift_years(pdmp, 0.8 + 1.8 * nd(rng));
        for (auto c : nal_gsl_bundle()) dates[c] = nal;
        dates[LawCode::NAL_P4] = detail::random_date(rng, 2007, 2020);
        break;
      }
    }
    for (const auto& [code, date] : dates)
      if (!skip(code)) out.push_back({state, code, date});
  }
  return out;
}

inline RawFixture simulate_raw_fixture(const RawFixtureSpec& s) {
  s.validate();
  RawFixture fx;
  auto laws_v = simulate_law_dates(s);
  LawDates laws(laws_v);
  fx.law_dates.header = {"state_id", "law_code", "effective_date"};
  for (const auto& r : laws_v) fx.law_dates.rows.push_back({r.state_id, std::string(to_string(r.law_code)), format_date(r.effective_date)});

  Rng rng(derive_seed(s.seed, 0xC0));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t n_counties = s.n_states * s.counties_per_state;
  const auto n_unres = static_cast<std::size_t>(std::lround(s.unresolvable_masked_fraction * static_cast<double>(n_counties)));
  const auto n_res = static_cast<std::size_t>(std::lround(s.resolvable_masked_fraction * static_cast<double>(n_counties)));
  auto order = random_permutation(n_counties, derive_seed(s.seed, 0xA5));
  std::vector<int> mask_kind(n_counties, 0);  // 1 unresolvable, 2 resolvable
  for (std::size_t k = 0; k < n_unres; ++k) mask_kind[order[k]] = 1;
  for (std::size_t k = n_unres; k < n_unres + n_res; ++k) mask_kind[order[k]] = 2;

  fx.county_year.header = county_year_required_columns();
  fx.county_year.header.push_back("median_income");
  fx.county_year.header.push_back("unemployment");
  const Window window{make_date(2013, 3, 19), make_date(s.last_year - 1, 12, 31)};
  for (std::size_t c = 0; c < n_counties; ++c) {
    const auto st = c / s.counties_per_state;
    const std::string state = "S" + std::to_string(st + 1);
    const std::string county = state + "C" + std::to_string(c % s.counties_per_state + 1);
    const auto pop = static_cast<std::int64_t>(5000 + std::floor(unif(rng) * 200000));
    const double income = 40 + 10 * nd(rng);
    const double unemp = 5 + nd(rng);
    const double a = exposure_years(laws, state, nal_gsl_bundle(), window);
    const std::int64_t pharmacies = 3 + static_cast<std::int64_t>(unif(rng) * 8);
    for (int yr = s.first_year; yr <= s.last_year; ++yr) {
      const double nal_rate = std::max(0.0, 20 + 8 * a + 0.2 * (income - 40) + 3 * nd(rng));
      const double od_rate = std::max(0.0, 15 + 0.5 * a + unemp + 2 * nd(rng));
      const auto nal = static_cast<std::int64_t>(std::lround(nal_rate * static_cast<double>(pop) / 1e5));
      const auto od = static_cast<std::int64_t>(std::lround(od_rate * static_cast<double>(pop) / 1e5));
      std::string nal_cell = std::to_string(nal), pharm_cell = std::to_string(pharmacies), flag = "1";
      if (yr == s.last_year && mask_kind[c] == 1) {
        nal_cell = "MASKED";
        pharm_cell = "2";
        flag = "0";
      } else if (yr == s.last_year && mask_kind[c] == 2) {
        nal_cell = "MASKED";
        flag = "1";
      }
      fx.county_year.rows.push_back({county, state, std::to_string(yr), std::to_string(pop), nal_cell, std::to_string(od),
                                     pharm_cell, flag, csv::format_double(income), csv::format_double(unemp)});
    }
  }
  return fx;
}

}  // namespace mtp
