#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtp/config.hpp"
#include "mtp/csv.hpp"
#include "mtp/density_ratio.hpp"
#include "mtp/diagnostics.hpp"
#include "mtp/errors.hpp"
#include "mtp/estimator.hpp"
#include "mtp/inference.hpp"
#include "mtp/panel_data.hpp"
#include "mtp/simulator.hpp"

namespace mtp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitIdentification = 3;

inline json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline void write_json(const std::filesystem::path& path, const json& j) { csv::write_atomic(path, j.dump(2) + "\n"); }

inline json to_json(const Attrition& a) {
  return json{{"n_input", a.n_input},
              {"n_masked_resolved", a.n_masked_resolved},
              {"n_excluded", a.n_excluded},
              {"fraction_excluded", a.fraction_excluded}};
}

inline json to_json(const PositivityProfile& p) {
  json q = json::object();
  for (std::size_t k = 0; k < p.quantiles.size(); ++k) q[csv::format_double(p.quantile_levels[k])] = nullable(p.quantiles[k]);
  return json{{"n", p.n},
              {"quantiles", q},
              {"min", nullable(p.min)},
              {"max", nullable(p.max)},
              {"mean", nullable(p.mean)},
              {"fraction_truncated_high", p.fraction_truncated_high},
              {"fraction_truncated_low", p.fraction_truncated_low},
              {"fraction_truncated", p.fraction_truncated},
              {"threshold", p.threshold},
              {"violation", p.violation}};
}

inline json to_json(const IdentificationReport& r) {
  json a = json::array();
  for (const auto& c : r.checks) a.push_back(json{{"assumption", c.name}, {"status", std::string(to_string(c.status))}, {"detail", c.detail}});
  return a;
}

inline json to_json(const ClusteredVariance& v) {
  return json{{"estimate", v.estimate}, {"se", v.se},       {"ci_low", v.ci_low}, {"ci_high", v.ci_high},
              {"alpha", v.alpha},       {"method", v.method}, {"n_clusters", v.n_clusters}};
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

inline void write_resolved_config(const std::filesystem::path& out, const RunConfig& cfg) {
  write_json(out / "resolved_config.json", to_json(cfg));
}

// ---------------------------------------------------------------------------

inline int cmd_ingest(const RunConfig& cfg, const std::filesystem::path& out) {
  if (!cfg.ingest) throw InputError("config has no 'ingest' section");
  const auto& ic = *cfg.ingest;
  ensure_dir(out);
  auto records = parse_county_year(csv::read_file(ic.county_year), ic.county_year);
  LawDates laws(parse_law_dates(csv::read_file(ic.law_dates), ic.law_dates));
  auto built = build_panel(records, laws, ic.panel);
  csv::write_file(out / "panel.csv", panel_to_table(built.panel));
  json attrition = to_json(built.attrition);
  if (ic.longitudinal) {
    auto lb = build_longitudinal_panel(records, laws, *ic.longitudinal);
    csv::write_file(out / "longitudinal.csv", longitudinal_to_table(lb.panel));
    attrition["longitudinal"] = to_json(lb.attrition);
  }
  write_json(out / "attrition.json", attrition);
  write_resolved_config(out, cfg);
  return kExitOk;
}

inline json analyst_choices(const EstimateConfig& c) {
  const auto& e = c.estimand;
  json a = json::array();
  if (e.kind == EstimandKind::PointShift || e.ratio_method == LongitudinalRatioMethod::Classifier)
    a.push_back("density ratio estimated by probabilistic classification of observed vs policy-shifted rows");
  else
    a.push_back("binary-exposure density ratios from cross-fitted propensity models");
  a.push_back("ratio truncation bounds [" + csv::format_double(e.ratio_bounds.r_min) + ", " + csv::format_double(e.ratio_bounds.r_max) +
              "], probability clip " + csv::format_double(e.p_min));
  a.push_back("cross-fitting with " + std::to_string(e.folds) + " cluster-respecting folds");
  a.push_back(std::string("targeting: ") + std::string(to_string(e.targeting)));
  a.push_back("stacking weights: " + std::string(to_string(c.outcome_learner.weighting)));
  return a;
}

inline int cmd_estimate(const RunConfig& cfg, const std::filesystem::path& out, bool strict_override = false) {
  if (!cfg.estimate) throw InputError("config has no 'estimate' section");
  EstimateConfig ec = *cfg.estimate;
  ec.estimand.seed = cfg.seed;
  const bool strict = ec.strict_positivity || strict_override;
  ensure_dir(out);

  auto table = csv::read_file(ec.panel);
  EstimateReport rep;
  IdentificationReport ident;
  std::vector<std::string> unit_id, cluster_id;
  Stratum stratum = Stratum::Unspecified;
  if (ec.estimand.kind == EstimandKind::PointShift) {
    auto panel = panel_from_table(table, ec.panel);
    rep = estimate_point_shift(panel, ec.estimand, ec.outcome_learner, ec.ratio_learner);
    ident = identification_checks(panel, ec.estimand, &rep.ratio_profile);
    unit_id = panel.unit_id;
    cluster_id = panel.cluster_id;
    stratum = panel.stratum;
  } else {
    auto panel = longitudinal_from_table(table, ec.panel);
    rep = estimate_longitudinal_delay(panel, ec.estimand, ec.outcome_learner, ec.ratio_learner);
    ident = identification_checks(panel, ec.estimand, &rep.ratio_profile);
    unit_id = panel.unit_id;
    cluster_id = panel.cluster_id;
    stratum = panel.stratum;
  }
  write_json(out / "identification.json", to_json(ident));
  write_resolved_config(out, cfg);
  const auto* pos = ident.find("positivity");
  if (strict && pos && pos->status == CheckStatus::CheckedWarn)
    throw IdentificationError("practical positivity violation under strict mode: " + pos->detail);

  auto contrast = cluster_robust_se(rep.contrast_hat, rep.ic_contrast, cluster_id, ec.alpha);
  auto psi = cluster_robust_se(rep.psi_hat, rep.ic_psi, cluster_id, ec.alpha);

  json steps = json::array();
  for (const auto& s : rep.steps)
    steps.push_back(json{{"step", s.step},
                         {"epsilon", s.epsilon},
                         {"outcome_cv_loss", nullable(s.outcome_cv_loss)},
                         {"n_clipped_propensity", s.n_clipped_propensity},
                         {"mean_cumulative_weight", s.mean_cumulative_weight}});
  json j;
  j["command"] = "estimate";
  j["estimand"] = std::string(to_string(rep.kind));
  j["outcome_name"] = ec.estimand.outcome_name;
  j["stratum"] = std::string(to_string(stratum));
  j["psi_hat"] = rep.psi_hat;
  j["mean_y"] = rep.mean_y;
  j["contrast_hat"] = rep.contrast_hat;
  j["se"] = contrast.se;
  j["ci_low"] = contrast.ci_low;
  j["ci_high"] = contrast.ci_high;
  j["alpha"] = ec.alpha;
  j["n"] = rep.n;
  j["n_clusters"] = rep.n_clusters;
  j["folds"] = rep.folds;
  j["se_method"] = contrast.method;
  j["few_clusters_warning"] = contrast.few_clusters_warning;
  j["psi"] = to_json(psi);
  j["mean_ic"] = json{{"psi", rep.mean_ic_psi}, {"contrast", rep.mean_ic_contrast}};
  j["diagnostics"] = json{{"constant_outcome", rep.constant_outcome}, {"ratio_profile", to_json(rep.ratio_profile)}, {"steps", steps}};
  j["identification"] = to_json(ident);
  j["analyst_choices"] = analyst_choices(ec);
  j["config"] = to_json(cfg);
  write_json(out / "results.json", j);

  csv::Table t;
  t.header = {"stratum", "outcome", "estimand", "psi_hat", "contrast_hat", "se", "ci_low", "ci_high", "n", "n_clusters"};
  t.rows.push_back({std::string(to_string(stratum)), ec.estimand.outcome_name, std::string(to_string(rep.kind)),
                    csv::format_double(rep.psi_hat), csv::format_double(rep.contrast_hat), csv::format_double(contrast.se),
                    csv::format_double(contrast.ci_low), csv::format_double(contrast.ci_high), std::to_string(rep.n),
                    std::to_string(rep.n_clusters)});
  csv::write_file(out / "results_table.csv", t);

  if (ec.export_ic) {
    csv::Table ict;
    ict.header = {"unit_id", "cluster_id", "ic_psi", "ic_contrast"};
    for (std::size_t i = 0; i < rep.n; ++i)
      ict.rows.push_back({unit_id[i], cluster_id[i], csv::format_double(rep.ic_psi[i]), csv::format_double(rep.ic_contrast[i])});
    csv::write_file(out / "ic.csv", ict);
  }
  return kExitOk;
}

inline json matrix_json(const CooccurrenceMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) r.push_back(nullable(m.values(i, j)));
    rows.push_back(r);
  }
  return json{{"law_codes", m.law_codes}, {"abs_corr", rows}, {"undefined", m.undefined}, {"first_year", m.first_year},
              {"last_year", m.last_year}};
}

inline int cmd_diagnose(const RunConfig& cfg, const std::filesystem::path& out) {
  if (!cfg.diagnose) throw InputError("config has no 'diagnose' section");
  const auto& dc = *cfg.diagnose;
  ensure_dir(out);
  LawDates laws(parse_law_dates(csv::read_file(dc.law_dates), dc.law_dates));
  std::vector<std::string> states = dc.states;
  if (states.empty()) states.assign(laws.states().begin(), laws.states().end());
  auto table = state_year_law_table(laws, states, dc.first_year, dc.last_year, dc.law_codes);
  auto m = cooccurrence_matrix(table, dc.correlation);
  m.stratum = std::string(to_string(dc.stratum));
  csv::write_file(out / "heatmap.csv", heatmap_table(m));

  auto covariates = state_year_law_table(laws, states, dc.first_year, dc.last_year, dc.covariate_laws);
  json ve = json::array();
  auto explain = [&](const std::string& name, const std::vector<double>& y) {
    json e{{"exposure", name}};
    try {
      auto v = variance_explained(y, covariates.values);
      e["r_squared"] = v.r_squared;
      e["collinear"] = v.collinear;
      e["rank"] = v.rank;
    } catch (const DomainError& ex) {
      e["r_squared"] = nullptr;
      e["reason"] = ex.what();
    }
    ve.push_back(e);
  };
  for (auto code : dc.exposure_laws) {
    auto col = state_year_law_table(laws, states, dc.first_year, dc.last_year, {code});
    explain(std::string(to_string(code)), std::vector<double>(col.values.data(), col.values.data() + col.values.rows()));
  }
  {
    std::vector<double> y;
    for (const auto& s : states)
      for (int yr = dc.first_year; yr <= dc.last_year; ++yr) {
        auto d = laws.earliest(s, dc.exposure_laws);
        y.push_back(d ? proportion_of_year_in_effect(*d, yr) : 0.0);
      }
    explain("bundle", y);
  }

  json bundles = json::array();
  for (const auto& b : bundle_recommendation(m, dc.threshold)) {
    json merges = json::array();
    for (const auto& mg : b.merges) merges.push_back(json{{"law_a", mg.law_a}, {"law_b", mg.law_b}, {"abs_corr", mg.abs_corr}});
    bundles.push_back(json{{"members", b.members}, {"merges", merges}});
  }
  json j;
  j["command"] = "diagnose";
  j["stratum"] = m.stratum;
  j["correlation"] = dc.correlation == CorrelationType::Pearson ? "pearson" : "spearman";
  j["n_state_years"] = table.values.rows();
  j["cooccurrence"] = matrix_json(m);
  j["variance_explained"] = ve;
  j["bundle_threshold"] = dc.threshold;
  j["bundles"] = bundles;
  j["bundling_note"] = "advisory only; never applied to an analysis automatically";
  if (dc.per_year) {
    json py = json::object();
    for (const auto& [year, ym] : cooccurrence_by_year(table, dc.correlation)) py[std::to_string(year)] = matrix_json(ym);
    j["per_year"] = py;
  }
  j["config"] = to_json(cfg);
  write_json(out / "entanglement.json", j);
  write_resolved_config(out, cfg);
  return kExitOk;
}

inline int cmd_simulate(const RunConfig& cfg, const std::filesystem::path& out) {
  if (!cfg.simulate) throw InputError("config has no 'simulate' section");
  SimulateConfig sc = *cfg.simulate;
  ensure_dir(out);
  json truth;
  if (sc.kind == SimulateKind::Point) {
    sc.dgp.seed = cfg.seed;
    auto panel = simulate(sc.dgp);
    std::vector<double> shifted;
    const bool exportable = std::all_of(panel.A.begin(), panel.A.end(), [&](double a) { return a <= sc.policy.a_max; });
    if (exportable) shifted = apply_shift(sc.policy, panel.A);
    csv::write_file(out / "panel.csv", panel_to_table(panel, exportable ? &shifted : nullptr));
    auto oracle = true_shift_contrast(sc.dgp, sc.policy, sc.mc_draws, cfg.seed);
    truth = json{{"true_contrast", oracle.value}, {"mc_se", oracle.mc_se}, {"oracle_method", oracle.method}, {"draws", oracle.draws}};
    if (sc.policy.a_max >= sc.dgp.a_max) truth["closed_form"] = shift_contrast_quadrature(sc.dgp, sc.policy);
  } else if (sc.kind == SimulateKind::Longitudinal) {
    sc.longitudinal.seed = cfg.seed;
    auto panel = simulate_longitudinal(sc.longitudinal);
    csv::write_file(out / "longitudinal.csv", longitudinal_to_table(panel));
    auto oracle = true_longitudinal_contrast(sc.longitudinal, sc.delay, sc.mc_draws, cfg.seed);
    truth = json{{"true_contrast", oracle.value}, {"mc_se", oracle.mc_se}, {"oracle_method", oracle.method}, {"draws", oracle.draws}};
  } else {
    sc.raw.seed = cfg.seed;
    auto fx = simulate_raw_fixture(sc.raw);
    csv::write_file(out / "county_year.csv", fx.county_year);
    csv::write_file(out / "law_dates.csv", fx.law_dates);
    truth = json{{"true_contrast", nullptr}, {"mc_se", nullptr}, {"oracle_method", "none"}};
  }
  write_json(out / "truth.json", truth);
  write_resolved_config(out, cfg);
  return kExitOk;
}

}  // namespace mtp::cli
