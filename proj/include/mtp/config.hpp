#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtp/density_ratio.hpp"
#include "mtp/diagnostics.hpp"
#include "mtp/errors.hpp"
#include "mtp/estimator.hpp"
#include "mtp/learners.hpp"
#include "mtp/panel_data.hpp"
#include "mtp/shift_policy.hpp"
#include "mtp/simulator.hpp"

namespace mtp {

using json = nlohmann::ordered_json;

// Reads a JSON object and rejects keys that no reader consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError(path_ + ": expected an object");
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InputError(path_ + "." + key + ": wrong type");
    }
  }

  std::optional<json> child(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw InputError(path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Learner specs

inline std::string_view to_string(StackLoss l) { return l == StackLoss::SquaredError ? "squared_error" : "log_loss"; }
inline std::string_view to_string(StackWeighting w) { return w == StackWeighting::ConvexStack ? "convex_stack" : "discrete_select"; }

inline json to_json(const LearnerSpec& s) {
  json j;
  j["kind"] = std::string(to_string(s.kind));
  json h = json::object();
  for (const auto& [k, v] : s.hyperparameters) h[k] = v;
  j["hyperparameters"] = h;
  return j;
}

inline LearnerSpec learner_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  LearnerSpec s;
  s.kind = parse_learner_kind(r.get<std::string>("kind", ""));
  if (auto h = r.child("hyperparameters")) {
    if (!h->is_object()) throw InputError(path + ".hyperparameters: expected an object");
    for (auto it = h->begin(); it != h->end(); ++it) {
      if (!it.value().is_number()) throw InputError(path + ".hyperparameters." + it.key() + ": expected a number");
      s.hyperparameters[it.key()] = it.value().get<double>();
    }
  }
  r.finish();
  s.validate();
  return s;
}

inline json to_json(const EnsembleSpec& e) {
  json j;
  j["library"] = json::array();
  for (const auto& l : e.library) j["library"].push_back(to_json(l));
  j["v_folds"] = e.v_folds;
  j["loss"] = std::string(to_string(e.loss));
  j["weighting"] = std::string(to_string(e.weighting));
  j["p_min"] = e.p_min;
  return j;
}

inline EnsembleSpec ensemble_from_json(const json& j, const std::string& path, EnsembleSpec fallback) {
  ObjectReader r(j, path);
  EnsembleSpec e = fallback;
  if (auto lib = r.child("library")) {
    if (!lib->is_array()) throw InputError(path + ".library: expected an array");
    e.library.clear();
    for (std::size_t k = 0; k < lib->size(); ++k) e.library.push_back(learner_from_json((*lib)[k], path + ".library[" + std::to_string(k) + "]"));
  }
  e.v_folds = r.get<int>("v_folds", e.v_folds);
  const auto loss = r.get<std::string>("loss", std::string(to_string(e.loss)));
  if (loss == "squared_error") e.loss = StackLoss::SquaredError;
  else if (loss == "log_loss") e.loss = StackLoss::LogLoss;
  else throw InputError(path + ".loss: expected squared_error or log_loss");
  const auto w = r.get<std::string>("weighting", std::string(to_string(e.weighting)));
  if (w == "convex_stack") e.weighting = StackWeighting::ConvexStack;
  else if (w == "discrete_select") e.weighting = StackWeighting::DiscreteSelect;
  else throw InputError(path + ".weighting: expected convex_stack or discrete_select");
  e.p_min = r.get<double>("p_min", e.p_min);
  r.finish();
  try {
    e.validate();
  } catch (const InputError& ex) {
    throw InputError(path + ": " + ex.what());
  }
  return e;
}

inline EnsembleSpec default_outcome_ensemble() {
  EnsembleSpec e;
  e.library = {{LearnerKind::GlmLinear, {}}, {LearnerKind::GbtRegress, {}}};
  e.loss = StackLoss::SquaredError;
  return e;
}

inline EnsembleSpec default_ratio_ensemble() {
  EnsembleSpec e;
  e.library = {{LearnerKind::GlmLogistic, {}}, {LearnerKind::GbtClassify, {}}};
  e.loss = StackLoss::LogLoss;
  return e;
}

// ---------------------------------------------------------------------------
// Sections

struct IngestConfig {
  std::string county_year;
  std::string law_dates;
  PanelBuildOptions panel;
  std::optional<LongitudinalBuildOptions> longitudinal;
};

struct EstimateConfig {
  std::string panel;
  EstimandSpec estimand;
  EnsembleSpec outcome_learner = default_outcome_ensemble();
  EnsembleSpec ratio_learner = default_ratio_ensemble();
  double alpha = 0.05;
  bool strict_positivity = false;
  bool export_ic = true;
};

struct DiagnoseConfig {
  std::string law_dates;
  std::vector<std::string> states;  // empty: every state in the file
  int first_year = 2013;
  int last_year = 2017;
  std::vector<LawCode> law_codes = {LawCode::NAL_P1, LawCode::NAL_P2, LawCode::NAL_P3, LawCode::GSL, LawCode::PMCL,
                                    LawCode::MML,    LawCode::PDMP_OPERATIONAL, LawCode::PDMP_MUSTQUERY};
  CorrelationType correlation = CorrelationType::Pearson;
  double threshold = 0.7;
  std::vector<LawCode> exposure_laws = {LawCode::NAL_P1, LawCode::NAL_P2, LawCode::NAL_P3};
  std::vector<LawCode> covariate_laws = {LawCode::PMCL, LawCode::MML, LawCode::PDMP_OPERATIONAL, LawCode::PDMP_MUSTQUERY};
  Stratum stratum = Stratum::Unspecified;
  bool per_year = false;
};

enum class SimulateKind { Point, Longitudinal, Raw };

struct SimulateConfig {
  SimulateKind kind = SimulateKind::Point;
  DgpSpec dgp;
  BoundedAdditiveShift policy{1.0, 2.0, 6.0};
  LongitudinalDgpSpec longitudinal;
  LongitudinalDelayPolicy delay{3, 2, 0};
  RawFixtureSpec raw;
  std::size_t mc_draws = 1000000;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::optional<IngestConfig> ingest;
  std::optional<EstimateConfig> estimate;
  std::optional<DiagnoseConfig> diagnose;
  std::optional<SimulateConfig> simulate;
};

namespace detail {

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_relative()) path = base / path;
  return std::filesystem::weakly_canonical(path).string();
}

inline std::vector<LawCode> law_list(ObjectReader& r, const std::string& key, std::vector<LawCode> fallback) {
  auto j = r.child(key);
  if (!j) return fallback;
  if (!j->is_array()) throw InputError(key + ": expected an array of law codes");
  std::vector<LawCode> out;
  for (const auto& v : *j) out.push_back(parse_law_code(v.get<std::string>()));
  return out;
}

inline json law_json(const std::vector<LawCode>& v) {
  json a = json::array();
  for (auto c : v) a.push_back(std::string(to_string(c)));
  return a;
}

inline json shift_json(const BoundedAdditiveShift& p) { return json{{"delta1", p.delta1}, {"delta2", p.delta2}, {"a_max", p.a_max}}; }

inline BoundedAdditiveShift shift_from(const json& j, const std::string& path, BoundedAdditiveShift s) {
  ObjectReader r(j, path);
  s.delta1 = r.get<double>("delta1", s.delta1);
  s.delta2 = r.get<double>("delta2", s.delta2);
  s.a_max = r.get<double>("a_max", s.a_max);
  r.finish();
  try {
    s.validate();
  } catch (const DomainError& e) {
    throw InputError(path + ": " + e.what());
  }
  return s;
}

inline json delay_json(const LongitudinalDelayPolicy& p) {
  return json{{"horizon", p.horizon}, {"delay_steps", p.delay_steps}, {"pre_window_exposure", p.pre_window_exposure}};
}

inline LongitudinalDelayPolicy delay_from(const json& j, const std::string& path, LongitudinalDelayPolicy p) {
  ObjectReader r(j, path);
  p.horizon = r.get<int>("horizon", p.horizon);
  p.delay_steps = r.get<int>("delay_steps", p.delay_steps);
  p.pre_window_exposure = r.get<int>("pre_window_exposure", p.pre_window_exposure);
  r.finish();
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw InputError(path + ": " + e.what());
  }
  return p;
}

inline IngestConfig ingest_from(const json& j, const std::filesystem::path& base) {
  ObjectReader r(j, "ingest");
  IngestConfig c;
  c.county_year = resolve_path(r.get<std::string>("county_year", ""), base);
  c.law_dates = resolve_path(r.get<std::string>("law_dates", ""), base);
  if (c.county_year.empty() || c.law_dates.empty()) throw InputError("ingest: county_year and law_dates paths are required");
  auto& o = c.panel;
  o.stratum = parse_stratum(r.get<std::string>("stratum", std::string(to_string(o.stratum))));
  o.outcome = parse_outcome_kind(r.get<std::string>("outcome", std::string(to_string(o.outcome))));
  o.baseline_year = r.get<int>("baseline_year", o.baseline_year);
  o.outcome_year = r.get<int>("outcome_year", o.outcome_year);
  o.window.start = parse_date(r.get<std::string>("window_start", format_date(o.window.start)));
  o.window.end = parse_date(r.get<std::string>("window_end", format_date(o.window.end)));
  o.exposure_laws = law_list(r, "exposure_laws", o.exposure_laws);
  o.clip_to_window_start = r.get<bool>("clip_to_window_start", o.clip_to_window_start);
  o.covariates = r.get<std::vector<std::string>>("covariates", o.covariates);
  o.policy_covariates = r.get<bool>("policy_covariates", o.policy_covariates);
  o.loo_summaries = r.get<bool>("loo_summaries", o.loo_summaries);
  if (auto lj = r.child("longitudinal")) {
    ObjectReader lr(*lj, "ingest.longitudinal");
    LongitudinalBuildOptions lo;
    lo.stratum = o.stratum;
    lo.outcome = o.outcome;
    lo.exposure_laws = o.exposure_laws;
    lo.covariates = o.covariates;
    lo.policy_covariates = o.policy_covariates;
    lo.first_year = lr.get<int>("first_year", lo.first_year);
    lo.last_year = lr.get<int>("last_year", lo.last_year);
    lr.finish();
    c.longitudinal = lo;
  }
  r.finish();
  return c;
}

inline json ingest_json(const IngestConfig& c) {
  const auto& o = c.panel;
  json j;
  j["county_year"] = c.county_year;
  j["law_dates"] = c.law_dates;
  j["stratum"] = std::string(to_string(o.stratum));
  j["outcome"] = std::string(to_string(o.outcome));
  j["baseline_year"] = o.baseline_year;
  j["outcome_year"] = o.outcome_year;
  j["window_start"] = format_date(o.window.start);
  j["window_end"] = format_date(o.window.end);
  j["exposure_laws"] = law_json(o.exposure_laws);
  j["clip_to_window_start"] = o.clip_to_window_start;
  j["covariates"] = o.covariates;
  j["policy_covariates"] = o.policy_covariates;
  j["loo_summaries"] = o.loo_summaries;
  if (c.longitudinal) j["longitudinal"] = json{{"first_year", c.longitudinal->first_year}, {"last_year", c.longitudinal->last_year}};
  return j;
}

inline EstimateConfig estimate_from(const json& j, const std::filesystem::path& base) {
  ObjectReader r(j, "estimate");
  EstimateConfig c;
  auto& e = c.estimand;
  c.panel = resolve_path(r.get<std::string>("panel", ""), base);
  if (c.panel.empty()) throw InputError("estimate: panel path is required");
  const auto kind = r.get<std::string>("kind", "POINT_SHIFT");
  if (kind == "POINT_SHIFT") e.kind = EstimandKind::PointShift;
  else if (kind == "LONGITUDINAL_DELAY") e.kind = EstimandKind::LongitudinalDelay;
  else throw InputError("estimate.kind: expected POINT_SHIFT or LONGITUDINAL_DELAY");
  if (auto p = r.child("policy")) {
    if (e.kind == EstimandKind::PointShift) e.shift = shift_from(*p, "estimate.policy", e.shift);
    else e.delay = delay_from(*p, "estimate.policy", e.delay);
  }
  e.outcome_name = r.get<std::string>("outcome_name", e.outcome_name);
  e.folds = r.get<int>("folds", e.folds);
  const auto targeting = r.get<std::string>("targeting", "tmle");
  if (targeting == "tmle") e.targeting = Targeting::Tmle;
  else if (targeting == "one_step") e.targeting = Targeting::OneStep;
  else throw InputError("estimate.targeting: expected tmle or one_step");
  auto bounds = r.get<std::vector<double>>("ratio_bounds", {e.ratio_bounds.r_min, e.ratio_bounds.r_max});
  if (bounds.size() != 2) throw InputError("estimate.ratio_bounds: expected [r_min, r_max]");
  e.ratio_bounds = {bounds[0], bounds[1]};
  e.p_min = r.get<double>("p_min", e.p_min);
  e.positivity_threshold = r.get<double>("positivity_threshold", e.positivity_threshold);
  const auto method = r.get<std::string>("ratio_method", "propensity");
  if (method == "propensity") e.ratio_method = LongitudinalRatioMethod::Propensity;
  else if (method == "classifier") e.ratio_method = LongitudinalRatioMethod::Classifier;
  else throw InputError("estimate.ratio_method: expected propensity or classifier");
  e.monotone_propensity = r.get<bool>("monotone_propensity", e.monotone_propensity);
  if (auto o = r.child("outcome_learner")) c.outcome_learner = ensemble_from_json(*o, "estimate.outcome_learner", c.outcome_learner);
  if (auto o = r.child("ratio_learner")) c.ratio_learner = ensemble_from_json(*o, "estimate.ratio_learner", c.ratio_learner);
  c.alpha = r.get<double>("alpha", c.alpha);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw InputError("estimate.alpha must lie in (0, 1)");
  c.strict_positivity = r.get<bool>("strict_positivity", c.strict_positivity);
  c.export_ic = r.get<bool>("export_ic", c.export_ic);
  r.finish();
  try {
    e.validate();
  } catch (const DomainError& ex) {
    throw InputError(std::string("estimate: ") + ex.what());
  }
  return c;
}

inline json estimate_json(const EstimateConfig& c) {
  const auto& e = c.estimand;
  json j;
  j["panel"] = c.panel;
  j["kind"] = std::string(to_string(e.kind));
  j["policy"] = e.kind == EstimandKind::PointShift ? shift_json(e.shift) : delay_json(e.delay);
  j["outcome_name"] = e.outcome_name;
  j["folds"] = e.folds;
  j["targeting"] = std::string(to_string(e.targeting));
  j["ratio_bounds"] = {e.ratio_bounds.r_min, e.ratio_bounds.r_max};
  j["p_min"] = e.p_min;
  j["positivity_threshold"] = e.positivity_threshold;
  j["ratio_method"] = std::string(to_string(e.ratio_method));
  j["monotone_propensity"] = e.monotone_propensity;
  j["outcome_learner"] = to_json(c.outcome_learner);
  j["ratio_learner"] = to_json(c.ratio_learner);
  j["alpha"] = c.alpha;
  j["strict_positivity"] = c.strict_positivity;
  j["export_ic"] = c.export_ic;
  return j;
}

inline CorrelationType parse_correlation(const std::string& s) {
  if (s == "pearson") return CorrelationType::Pearson;
  if (s == "spearman") return CorrelationType::Spearman;
  throw InputError("diagnose.correlation: expected pearson or spearman");
}

inline DiagnoseConfig diagnose_from(const json& j, const std::filesystem::path& base) {
  ObjectReader r(j, "diagnose");
  DiagnoseConfig c;
  c.law_dates = resolve_path(r.get<std::string>("law_dates", ""), base);
  if (c.law_dates.empty()) throw InputError("diagnose: law_dates path is required");
  c.states = r.get<std::vector<std::string>>("states", c.states);
  c.first_year = r.get<int>("first_year", c.first_year);
  c.last_year = r.get<int>("last_year", c.last_year);
  c.law_codes = law_list(r, "law_codes", c.law_codes);
  c.correlation = parse_correlation(r.get<std::string>("correlation", "pearson"));
  c.threshold = r.get<double>("threshold", c.threshold);
  c.exposure_laws = law_list(r, "exposure_laws", c.exposure_laws);
  c.covariate_laws = law_list(r, "covariate_laws", c.covariate_laws);
  c.stratum = parse_stratum(r.get<std::string>("stratum", std::string(to_string(c.stratum))));
  c.per_year = r.get<bool>("per_year", c.per_year);
  r.finish();
  return c;
}

inline json diagnose_json(const DiagnoseConfig& c) {
  json j;
  j["law_dates"] = c.law_dates;
  j["states"] = c.states;
  j["first_year"] = c.first_year;
  j["last_year"] = c.last_year;
  j["law_codes"] = law_json(c.law_codes);
  j["correlation"] = c.correlation == CorrelationType::Pearson ? "pearson" : "spearman";
  j["threshold"] = c.threshold;
  j["exposure_laws"] = law_json(c.exposure_laws);
  j["covariate_laws"] = law_json(c.covariate_laws);
  j["stratum"] = std::string(to_string(c.stratum));
  j["per_year"] = c.per_year;
  return j;
}

inline DgpSpec dgp_from(const json& j, DgpSpec s) {
  ObjectReader r(j, "simulate.dgp");
  if (auto preset = r.child("preset")) {
    const auto name = preset->get<std::string>();
    const double scale = r.get<double>("scale", 1.0);
    if (name == "linear") s = linear_dgp(s.n_units, s.seed, s.n_clusters);
    else if (name == "null") s = null_dgp(s.n_units, s.seed, s.n_clusters);
    else if (name == "gaussian") s = gaussian_dgp(s.n_units, s.seed, s.n_clusters);
    else if (name == "clustered") s = clustered_dgp(s.n_units, s.seed);
    else if (name == "early_like") s = early_like(s.seed, scale);
    else if (name == "late_like") s = late_like(s.seed, scale);
    else throw InputError("simulate.dgp.preset: unknown preset '" + name + "'");
  } else {
    r.get<double>("scale", 1.0);
  }
  s.n_units = r.get<std::size_t>("n_units", s.n_units);
  s.n_clusters = r.get<std::size_t>("n_clusters", s.n_clusters);
  s.w_dim = r.get<int>("w_dim", s.w_dim);
  s.w_trunc = r.get<double>("w_trunc", s.w_trunc);
  s.a_intercept = r.get<double>("a_intercept", s.a_intercept);
  s.a_slope = r.get<double>("a_slope", s.a_slope);
  s.cluster_exposure_halfwidth = r.get<double>("cluster_exposure_halfwidth", s.cluster_exposure_halfwidth);
  const auto noise = r.get<std::string>("noise", s.noise == ExposureNoise::Uniform ? "uniform" : "normal");
  if (noise == "uniform") s.noise = ExposureNoise::Uniform;
  else if (noise == "normal") s.noise = ExposureNoise::Normal;
  else throw InputError("simulate.dgp.noise: expected uniform or normal");
  s.u_lo = r.get<double>("u_lo", s.u_lo);
  s.u_hi = r.get<double>("u_hi", s.u_hi);
  s.u_sd = r.get<double>("u_sd", s.u_sd);
  s.a_max = r.get<double>("a_max", s.a_max);
  s.y0 = r.get<double>("y0", s.y0);
  s.beta_a = r.get<double>("beta_a", s.beta_a);
  s.beta_w = r.get<double>("beta_w", s.beta_w);
  s.beta_aw = r.get<double>("beta_aw", s.beta_aw);
  s.cluster_sd = r.get<double>("cluster_sd", s.cluster_sd);
  s.noise_sd = r.get<double>("noise_sd", s.noise_sd);
  s.stratum = parse_stratum(r.get<std::string>("stratum", std::string(to_string(s.stratum))));
  r.finish();
  return s;
}

inline json dgp_json(const DgpSpec& s) {
  return json{{"n_units", s.n_units},
              {"n_clusters", s.n_clusters},
              {"w_dim", s.w_dim},
              {"w_trunc", s.w_trunc},
              {"a_intercept", s.a_intercept},
              {"a_slope", s.a_slope},
              {"cluster_exposure_halfwidth", s.cluster_exposure_halfwidth},
              {"noise", s.noise == ExposureNoise::Uniform ? "uniform" : "normal"},
              {"u_lo", s.u_lo},
              {"u_hi", s.u_hi},
              {"u_sd", s.u_sd},
              {"a_max", s.a_max},
              {"y0", s.y0},
              {"beta_a", s.beta_a},
              {"beta_w", s.beta_w},
              {"beta_aw", s.beta_aw},
              {"cluster_sd", s.cluster_sd},
              {"noise_sd", s.noise_sd},
              {"stratum", std::string(to_string(s.stratum))}};
}

inline LongitudinalDgpSpec longitudinal_dgp_from(const json& j, LongitudinalDgpSpec s) {
  ObjectReader r(j, "simulate.longitudinal_dgp");
  s.n_units = r.get<std::size_t>("n_units", s.n_units);
  s.n_clusters = r.get<std::size_t>("n_clusters", s.n_clusters);
  s.horizon = r.get<int>("horizon", s.horizon);
  s.p_w = r.get<double>("p_w", s.p_w);
  s.l0 = r.get<double>("l0", s.l0);
  s.l_w = r.get<double>("l_w", s.l_w);
  s.l_a = r.get<double>("l_a", s.l_a);
  s.l_l = r.get<double>("l_l", s.l_l);
  s.a0 = r.get<double>("a0", s.a0);
  s.a_w = r.get<double>("a_w", s.a_w);
  s.a_l = r.get<double>("a_l", s.a_l);
  s.y0 = r.get<double>("y0", s.y0);
  s.y_w = r.get<double>("y_w", s.y_w);
  s.y_a = r.get<double>("y_a", s.y_a);
  s.y_l = r.get<double>("y_l", s.y_l);
  s.cluster_sd = r.get<double>("cluster_sd", s.cluster_sd);
  s.noise_sd = r.get<double>("noise_sd", s.noise_sd);
  s.stratum = parse_stratum(r.get<std::string>("stratum", std::string(to_string(s.stratum))));
  r.finish();
  return s;
}

inline json longitudinal_dgp_json(const LongitudinalDgpSpec& s) {
  return json{{"n_units", s.n_units}, {"n_clusters", s.n_clusters}, {"horizon", s.horizon}, {"p_w", s.p_w},
              {"l0", s.l0},           {"l_w", s.l_w},               {"l_a", s.l_a},           {"l_l", s.l_l},
              {"a0", s.a0},           {"a_w", s.a_w},               {"a_l", s.a_l},           {"y0", s.y0},
              {"y_w", s.y_w},         {"y_a", s.y_a},               {"y_l", s.y_l},           {"cluster_sd", s.cluster_sd},
              {"noise_sd", s.noise_sd}, {"stratum", std::string(to_string(s.stratum))}};
}

inline std::string_view to_string(LawPattern p) {
  switch (p) {
    case LawPattern::Independent: return "independent";
    case LawPattern::CoEnacted: return "co_enacted";
    case LawPattern::Entangled: return "entangled";
  }
  return "?";
}

inline RawFixtureSpec raw_from(const json& j, RawFixtureSpec s) {
  ObjectReader r(j, "simulate.raw");
  s.n_states = r.get<std::size_t>("n_states", s.n_states);
  s.counties_per_state = r.get<std::size_t>("counties_per_state", s.counties_per_state);
  s.first_year = r.get<int>("first_year", s.first_year);
  s.last_year = r.get<int>("last_year", s.last_year);
  const auto pattern = r.get<std::string>("pattern", std::string(to_string(s.pattern)));
  if (pattern == "independent") s.pattern = LawPattern::Independent;
  else if (pattern == "co_enacted") s.pattern = LawPattern::CoEnacted;
  else if (pattern == "entangled") s.pattern = LawPattern::Entangled;
  else throw InputError("simulate.raw.pattern: expected independent, co_enacted or entangled");
  s.never_enacted = law_list(r, "never_enacted", s.never_enacted);
  s.unresolvable_masked_fraction = r.get<double>("unresolvable_masked_fraction", s.unresolvable_masked_fraction);
  s.resolvable_masked_fraction = r.get<double>("resolvable_masked_fraction", s.resolvable_masked_fraction);
  r.finish();
  return s;
}

inline json raw_json(const RawFixtureSpec& s) {
  return json{{"n_states", s.n_states},
              {"counties_per_state", s.counties_per_state},
              {"first_year", s.first_year},
              {"last_year", s.last_year},
              {"pattern", std::string(to_string(s.pattern))},
              {"never_enacted", law_json(s.never_enacted)},
              {"unresolvable_masked_fraction", s.unresolvable_masked_fraction},
              {"resolvable_masked_fraction", s.resolvable_masked_fraction}};
}

inline SimulateConfig simulate_from(const json& j) {
  ObjectReader r(j, "simulate");
  SimulateConfig c;
  const auto kind = r.get<std::string>("kind", "point");
  if (kind == "point") c.kind = SimulateKind::Point;
  else if (kind == "longitudinal") c.kind = SimulateKind::Longitudinal;
  else if (kind == "raw") c.kind = SimulateKind::Raw;
  else throw InputError("simulate.kind: expected point, longitudinal or raw");
  if (auto d = r.child("dgp")) c.dgp = dgp_from(*d, c.dgp);
  if (auto p = r.child("policy")) {
    if (c.kind == SimulateKind::Longitudinal) c.delay = delay_from(*p, "simulate.policy", c.delay);
    else c.policy = shift_from(*p, "simulate.policy", c.policy);
  }
  if (auto d = r.child("longitudinal_dgp")) c.longitudinal = longitudinal_dgp_from(*d, c.longitudinal);
  if (auto d = r.child("raw")) c.raw = raw_from(*d, c.raw);
  c.mc_draws = r.get<std::size_t>("mc_draws", c.mc_draws);
  if (c.mc_draws < 2) throw InputError("simulate.mc_draws must be at least 2");
  r.finish();
  return c;
}

inline json simulate_json(const SimulateConfig& c) {
  json j;
  j["kind"] = c.kind == SimulateKind::Point ? "point" : c.kind == SimulateKind::Longitudinal ? "longitudinal" : "raw";
  j["dgp"] = dgp_json(c.dgp);
  j["policy"] = c.kind == SimulateKind::Longitudinal ? delay_json(c.delay) : shift_json(c.policy);
  j["longitudinal_dgp"] = longitudinal_dgp_json(c.longitudinal);
  j["raw"] = raw_json(c.raw);
  j["mc_draws"] = c.mc_draws;
  return j;
}

}  // namespace detail

// Relative data paths resolve against `base` (the config file's directory).
inline RunConfig parse_run_config(const json& j, const std::filesystem::path& base = std::filesystem::current_path()) {
  ObjectReader r(j, "config");
  RunConfig c;
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  c.output_dir = r.get<std::string>("output_dir", c.output_dir);
  if (auto s = r.child("ingest")) c.ingest = detail::ingest_from(*s, base);
  if (auto s = r.child("estimate")) c.estimate = detail::estimate_from(*s, base);
  if (auto s = r.child("diagnose")) c.diagnose = detail::diagnose_from(*s, base);
  if (auto s = r.child("simulate")) c.simulate = detail::simulate_from(*s);
  r.finish();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  auto base = std::filesystem::absolute(path).parent_path();
  return parse_run_config(j, base);
}

// Fully resolved configuration. The output directory is an invocation detail
// and is omitted so that echoes from different output locations match.
inline json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  if (c.ingest) j["ingest"] = detail::ingest_json(*c.ingest);
  if (c.estimate) j["estimate"] = detail::estimate_json(*c.estimate);
  if (c.diagnose) j["diagnose"] = detail::diagnose_json(*c.diagnose);
  if (c.simulate) j["simulate"] = detail::simulate_json(*c.simulate);
  return j;
}

}  // namespace mtp
