#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mtp/mtp.hpp"

using namespace mtp;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double g_max_mean_ic = 0.0;
std::size_t g_runs = 0;

void track(const EstimateReport& r) {
  g_max_mean_ic = std::max({g_max_mean_ic, std::abs(r.mean_ic_psi), std::abs(r.mean_ic_contrast)});
  ++g_runs;
}

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

EnsembleSpec single(LearnerKind k, StackLoss loss) { return EnsembleSpec::single({k, {}}, loss); }
EnsembleSpec glm_outcome() { return single(LearnerKind::GlmLinear, StackLoss::SquaredError); }
EnsembleSpec glm_ratio() { return single(LearnerKind::GlmLogistic, StackLoss::LogLoss); }

EstimandSpec point_spec(const BoundedAdditiveShift& policy, std::uint64_t seed) {
  EstimandSpec s;
  s.shift = policy;
  s.seed = seed;
  return s;
}

double point_error(const DgpSpec& dgp, const BoundedAdditiveShift& policy, double truth, const EnsembleSpec& outcome,
                   const EnsembleSpec& ratio) {
  auto panel = simulate(dgp);
  auto rep = estimate_point_shift(panel, point_spec(policy, dgp.seed), outcome, ratio);
  track(rep);
  return rep.contrast_hat - truth;
}

double mean_abs(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------

Verdict bounded_shift_exactness() {
  auto reference = [](double a, double d1, double d2, double amax) {
    if (a + d2 <= amax) return a + d2;
    if (a + d1 <= amax) return a + d1;
    return a;
  };
  std::size_t mismatches = 0, points = 0;
  for (double amax : {4.79, 5.91}) {
    const BoundedAdditiveShift p{1.0, 2.0, amax};
    for (int k = 0; k < 1000; ++k) {
      const double a = amax * k / 999.0;
      mismatches += apply_shift(p, a) != reference(a, 1.0, 2.0, amax);
      ++points;
    }
  }
  return {mismatches == 0, std::to_string(points) + " grid points, " + std::to_string(mismatches) + " mismatches"};
}

Verdict delay_exactness() {
  std::size_t mismatches = 0, trajectories = 0;
  for (int T = 1; T <= 6; ++T) {
    for (int delay = 0; delay <= T; ++delay) {
      const LongitudinalDelayPolicy policy{T, delay, 0};
      // Monotone binary paths: first 1 at position k (k = T means never).
      for (int k = 0; k <= T; ++k) {
        std::vector<int> a(static_cast<std::size_t>(T), 0), expected(static_cast<std::size_t>(T), 0);
        for (int t = k; t < T; ++t) a[static_cast<std::size_t>(t)] = 1;
        for (int t = std::min(k + delay, T); t < T; ++t) expected[static_cast<std::size_t>(t)] = 1;
        mismatches += apply_delay(policy, a) != expected;
        ++trajectories;
      }
    }
  }
  return {mismatches == 0, std::to_string(trajectories) + " trajectory/delay pairs, " + std::to_string(mismatches) + " mismatches"};
}

Verdict point_consistency() {
  auto dgp = linear_dgp(5000, 20260101);
  const BoundedAdditiveShift policy{1.0, 2.0, dgp.a_max};
  const auto oracle = true_shift_contrast(dgp, policy, 1000000, 99);
  const double closed = shift_contrast_quadrature(dgp, policy);
  auto panel = simulate(dgp);
  auto rep = estimate_point_shift(panel, point_spec(policy, 7), default_outcome_ensemble(), default_ratio_ensemble());
  track(rep);
  const auto v = cluster_robust_se(rep.contrast_hat, rep.ic_contrast, panel.cluster_id);
  const double err = std::abs(rep.contrast_hat - oracle.value);
  const double tol = std::max(0.05 * std::abs(oracle.value), 3.0 * v.se);
  const bool single_ok = err < tol;

  std::vector<double> small, large;
  for (std::uint64_t s = 1; s <= 50; ++s) {
    small.push_back(point_error(linear_dgp(1000, 1000 + s), policy, closed, glm_outcome(), glm_ratio()));
    large.push_back(point_error(linear_dgp(10000, 5000 + s), policy, closed, glm_outcome(), glm_ratio()));
  }
  const double b1 = mean_abs(small), b10 = mean_abs(large);
  return {single_ok && b10 < b1, "n=5000: |est-oracle|=" + fmt(err) + " < " + fmt(tol) + " (oracle " + fmt(oracle.value) +
                                     " +/- " + fmt(oracle.mc_se, 2) + ", closed form " + fmt(closed) + "); mean |bias| n=1000 " +
                                     fmt(b1) + ", n=10000 " + fmt(b10)};
}

Verdict double_robustness() {
  const auto policy = unbounded_shift(1.0);
  const double truth = 2.0;  // beta_a * delta
  const auto intercept_outcome = single(LearnerKind::InterceptOnly, StackLoss::SquaredError);
  const auto intercept_ratio = single(LearnerKind::InterceptOnly, StackLoss::LogLoss);
  struct Case {
    const char* name;
    EnsembleSpec outcome, ratio;
  };
  const Case cases[] = {{"wrong outcome/correct ratio", intercept_outcome, glm_ratio()},
                        {"correct outcome/wrong ratio", glm_outcome(), intercept_ratio}};
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    std::vector<double> small, large;
    for (std::uint64_t s = 1; s <= 50; ++s) {
      small.push_back(point_error(gaussian_dgp(1000, 2000 + s), policy, truth, c.outcome, c.ratio));
      large.push_back(point_error(gaussian_dgp(10000, 3000 + s), policy, truth, c.outcome, c.ratio));
    }
    const double b1 = mean_abs(small), b10 = mean_abs(large);
    ok = ok && b10 < 0.5 * b1;
    detail += std::string(detail.empty() ? "" : "; ") + c.name + ": n=1000 " + fmt(b1) + ", n=10000 " + fmt(b10) +
              " (ratio " + fmt(b10 / b1, 3) + ")";
  }
  return {ok, detail};
}

Verdict null_safety() {
  int covered = 0;
  for (std::uint64_t s = 1; s <= 100; ++s) {
    auto dgp = null_dgp(1000, 4000 + s);
    auto panel = simulate(dgp);
    auto rep = estimate_point_shift(panel, point_spec({1.0, 2.0, dgp.a_max}, s), glm_outcome(), glm_ratio());
    track(rep);
    const auto v = cluster_robust_se(rep.contrast_hat, rep.ic_contrast, panel.cluster_id);
    covered += v.ci_low <= 0.0 && 0.0 <= v.ci_high;
  }
  return {covered >= 90, std::to_string(covered) + "/100 intervals cover 0"};
}

Verdict clustered_coverage() {
  int cluster_cov = 0, iid_cov = 0;
  double truth = 0.0;
  for (std::uint64_t s = 1; s <= 200; ++s) {
    auto dgp = clustered_dgp(1000, 6000 + s);
    const BoundedAdditiveShift policy{1.0, 2.0, dgp.a_max};
    truth = shift_contrast_quadrature(dgp, policy);
    auto panel = simulate(dgp);
    auto rep = estimate_point_shift(panel, point_spec(policy, s), glm_outcome(), glm_ratio());
    track(rep);
    const auto c = cluster_robust_se(rep.contrast_hat, rep.ic_contrast, panel.cluster_id);
    const auto i = iid_se(rep.contrast_hat, rep.ic_contrast);
    cluster_cov += c.ci_low <= truth && truth <= c.ci_high;
    iid_cov += i.ci_low <= truth && truth <= i.ci_high;
  }
  return {cluster_cov >= 180 && iid_cov < cluster_cov,
          "cluster-robust " + std::to_string(cluster_cov) + "/200, iid " + std::to_string(iid_cov) + "/200 (oracle " + fmt(truth) + ")"};
}

Verdict longitudinal_equivalence() {
  int passes = 0;
  double truth = 0.0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    LongitudinalDgpSpec dgp;
    dgp.n_units = 4000;
    dgp.horizon = 3;
    dgp.seed = 7000 + s;
    EstimandSpec spec;
    spec.kind = EstimandKind::LongitudinalDelay;
    spec.delay = {3, 2, 0};
    spec.seed = s;
    truth = true_longitudinal_contrast(dgp, spec.delay).value;
    auto panel = simulate_longitudinal(dgp);
    auto rep = estimate_longitudinal_delay(panel, spec, glm_outcome(), glm_ratio());
    track(rep);
    const auto v = cluster_robust_se(rep.contrast_hat, rep.ic_contrast, panel.cluster_id);
    passes += std::abs(rep.contrast_hat - truth) < 3.0 * v.se;
  }
  return {passes >= 18, std::to_string(passes) + "/20 seeds within 3 SE of the exact truth " + fmt(truth)};
}

Verdict eif_solved() {
  return {g_runs > 0 && g_max_mean_ic < 1e-6,
          "max |mean IC| = " + fmt(g_max_mean_ic, 3) + " over " + std::to_string(g_runs) + " estimation runs"};
}

Verdict diagnostics_fidelity() {
  auto states = [](std::size_t n) {
    std::vector<std::string> s;
    for (std::size_t k = 0; k < n; ++k) s.push_back("S" + std::to_string(k + 1));
    return s;
  };
  RawFixtureSpec co;
  co.pattern = LawPattern::CoEnacted;
  co.seed = 1;
  auto t = state_year_law_table(LawDates(simulate_law_dates(co)), states(co.n_states), 2013, 2018, nal_gsl_bundle());
  auto m = cooccurrence_matrix(t);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m.values.rows(); ++i)
    for (Eigen::Index j = 0; j < m.values.cols(); ++j)
      worst = std::max(worst, std::isfinite(m.values(i, j)) ? std::abs(m.values(i, j) - 1.0) : 1.0);

  RawFixtureSpec ent;
  ent.pattern = LawPattern::Entangled;
  ent.n_states = 50;
  ent.seed = 1;
  auto e = state_year_law_table(LawDates(simulate_law_dates(ent)), states(ent.n_states), 2013, 2018,
                                {LawCode::NAL_P1, LawCode::PMCL, LawCode::MML, LawCode::PDMP_OPERATIONAL, LawCode::PDMP_MUSTQUERY});
  std::vector<double> y(static_cast<std::size_t>(e.values.rows()));
  for (Eigen::Index i = 0; i < e.values.rows(); ++i) y[static_cast<std::size_t>(i)] = e.values(i, 0);
  const double r2 = variance_explained(y, e.values.rightCols(4)).r_squared;
  return {worst <= 1e-12 && r2 >= 0.48 && r2 <= 0.78,
          "co-enacted max |corr-1| = " + fmt(worst, 3) + "; entangled R^2 = " + fmt(r2)};
}

Verdict ci_arithmetic() {
  const auto [lo, hi] = confidence_interval(0.28, 0.0510, 0.05);
  const double rlo = std::round(lo * 100.0) / 100.0, rhi = std::round(hi * 100.0) / 100.0;
  return {rlo == 0.18 && rhi == 0.38, "(" + fmt(lo, 6) + ", " + fmt(hi, 6) + ")"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict cli_determinism(const std::string& cli, const fs::path& work) {
  if (cli.empty()) return {false, "CLI path not provided"};
  fs::remove_all(work);
  fs::create_directories(work);
  struct Run {
    std::string name, command, config;
  };
  const auto w = work.string();
  const std::vector<Run> runs = {
      {"sim_point", "simulate",
       R"({"seed": 11, "simulate": {"kind": "point", "dgp": {"preset": "late_like", "scale": 0.1}, "mc_draws": 20000}})"},
      {"est_point", "estimate",
       R"({"seed": 12, "estimate": {"panel": ")" + w + R"(/sim_point_a/panel.csv", "policy": {"delta1": 1, "delta2": 2, "a_max": 4.79}}})"},
      {"sim_long", "simulate",
       R"({"seed": 13, "simulate": {"kind": "longitudinal", "longitudinal_dgp": {"n_units": 400, "n_clusters": 20, "horizon": 3},
           "policy": {"horizon": 3, "delay_steps": 2}}})"},
      {"est_long", "estimate",
       R"({"seed": 14, "estimate": {"panel": ")" + w + R"(/sim_long_a/longitudinal.csv", "kind": "LONGITUDINAL_DELAY",
           "policy": {"horizon": 3, "delay_steps": 2}}})"},
      {"sim_raw", "simulate",
       R"({"seed": 15, "simulate": {"kind": "raw", "raw": {"pattern": "co_enacted", "unresolvable_masked_fraction": 0.05}}})"},
      {"ingest", "ingest",
       R"({"seed": 16, "ingest": {"county_year": ")" + w + R"(/sim_raw_a/county_year.csv", "law_dates": ")" + w +
           R"(/sim_raw_a/law_dates.csv", "stratum": "UNSPECIFIED"}})"},
      {"diagnose", "diagnose", R"({"seed": 17, "diagnose": {"law_dates": ")" + w + R"(/sim_raw_a/law_dates.csv"}})"},
  };
  std::size_t files = 0;
  for (const auto& r : runs) {
    const auto cfg = work / (r.name + ".json");
    std::ofstream(cfg) << r.config;
    for (const char* suffix : {"_a", "_b"}) {
      const std::string cmd = "\"" + cli + "\" " + r.command + " --config \"" + cfg.string() + "\" --out \"" +
                              (work / (r.name + suffix)).string() + "\" > \"" + (work / (r.name + suffix + std::string(".log"))).string() +
                              "\" 2>&1";
      const int rc = std::system(cmd.c_str());
      if (rc != 0) return {false, r.name + " exited with status " + std::to_string(rc)};
    }
    const auto a = work / (r.name + "_a"), b = work / (r.name + "_b");
    std::vector<std::string> names_a, names_b;
    for (const auto& e : fs::directory_iterator(a)) names_a.push_back(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(b)) names_b.push_back(e.path().filename().string());
    std::sort(names_a.begin(), names_a.end());
    std::sort(names_b.begin(), names_b.end());
    if (names_a != names_b || names_a.empty()) return {false, r.name + ": output file sets differ"};
    for (const auto& n : names_a) {
      if (slurp(a / n) != slurp(b / n)) return {false, r.name + "/" + n + " differs between runs"};
      ++files;
    }
  }
  return {true, std::to_string(runs.size()) + " commands, " + std::to_string(files) + " output files byte-identical"};
}

Verdict data_rules() {
  int failures = 0;
  auto masked = [] {
    CountyYearRecord r;
    r.naloxone_count = EventCount::masked();
    return r;
  };
  failures += !(impute_masked_dispensing(masked(), TriState::True, std::nullopt).naloxone_count == EventCount::of(0));
  failures += !(impute_masked_dispensing(masked(), TriState::Unknown, 3).naloxone_count == EventCount::of(0));
  failures += !(impute_masked_dispensing(masked(), TriState::Unknown, 0).naloxone_count == EventCount::of(0));
  failures += !impute_masked_dispensing(masked(), TriState::False, 2).naloxone_count.is_masked();

  failures += compute_rate(5, 100000) != 5.0;
  failures += compute_rate(0, 50000) != 0.0;
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::int64_t> ev(0, 100000), pop(1, 10000000);
  for (int k = 0; k < 10000; ++k) {
    const auto e = ev(rng), p = pop(rng);
    failures += compute_rate(2 * e, p) != 2.0 * compute_rate(e, p);
    failures += compute_rate(e, 2 * p) != 0.5 * compute_rate(e, p);
  }
  bool threw = false;
  try {
    compute_rate(1, 0);
  } catch (const DomainError&) {
    threw = true;
  }
  failures += !threw;
  return {failures == 0, "masking truth table (4 cases) and 20002 rate checks, " + std::to_string(failures) + " failures"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "mtp_acceptance";

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Verdict()> run;
  };
  // Criterion 8 aggregates over the estimation runs of 3-7, so it runs after them.
  const std::vector<Criterion> criteria = {
      {1, "bounded shift exactness", 1, bounded_shift_exactness},
      {2, "delay policy exactness", 1, delay_exactness},
      {3, "point estimator consistency", 300, point_consistency},
      {4, "double robustness", 600, double_robustness},
      {5, "null safety", 300, null_safety},
      {6, "clustered CI coverage", 900, clustered_coverage},
      {7, "longitudinal oracle equivalence", 600, longitudinal_equivalence},
      {8, "influence curve equation solved", 1e9, eif_solved},
      {9, "diagnostics fidelity", 1e9, diagnostics_fidelity},
      {10, "CI arithmetic", 1e9, ci_arithmetic},
      {11, "CLI determinism", 120, [&] { return cli_determinism(cli, work); }},
      {12, "data rules", 1e9, data_rules},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = v.pass && in_time;
    failed += !pass;
    std::string timing = fmt(secs, 3) + " s";
    if (c.budget_s < 1e9) timing += " of " + fmt(c.budget_s, 4) + " s";
    std::printf("%s criterion %d: %s: %s [%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
