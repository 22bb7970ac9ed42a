#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtp/csv.hpp"
#include "mtp/errors.hpp"

namespace mtp {

using Date = std::chrono::year_month_day;

enum class Stratum { Early, Late, Unspecified };

enum class LawCode { NAL_P1, NAL_P2, NAL_P3, NAL_P4, GSL, PMCL, MML, PDMP_OPERATIONAL, PDMP_MUSTQUERY };

inline constexpr std::array<LawCode, 9> kAllLawCodes = {
    LawCode::NAL_P1, LawCode::NAL_P2, LawCode::NAL_P3, LawCode::NAL_P4,          LawCode::GSL,
    LawCode::PMCL,   LawCode::MML,    LawCode::PDMP_OPERATIONAL, LawCode::PDMP_MUSTQUERY};

// NAL provisions 1-3 plus GSL; provision 4 is screened out.
inline const std::vector<LawCode>& nal_gsl_bundle() {
  static const std::vector<LawCode> bundle = {LawCode::NAL_P1, LawCode::NAL_P2, LawCode::NAL_P3, LawCode::GSL};
  return bundle;
}

inline std::string_view to_string(LawCode c) {
  switch (c) {
    case LawCode::NAL_P1: return "NAL_P1";
    case LawCode::NAL_P2: return "NAL_P2";
    case LawCode::NAL_P3: return "NAL_P3";
    case LawCode::NAL_P4: return "NAL_P4";
    case LawCode::GSL: return "GSL";
    case LawCode::PMCL: return "PMCL";
    case LawCode::MML: return "MML";
    case LawCode::PDMP_OPERATIONAL: return "PDMP_OPERATIONAL";
    case LawCode::PDMP_MUSTQUERY: return "PDMP_MUSTQUERY";
  }
  return "?";
}

inline LawCode parse_law_code(std::string_view s) {
  for (auto c : kAllLawCodes)
    if (to_string(c) == s) return c;
  throw InputError("unknown law code '" + std::string(s) + "'");
}

inline std::string_view to_string(Stratum s) {
  switch (s) {
    case Stratum::Early: return "EARLY";
    case Stratum::Late: return "LATE";
    case Stratum::Unspecified: return "UNSPECIFIED";
  }
  return "?";
}

inline Stratum parse_stratum(std::string_view s) {
  if (s == "EARLY") return Stratum::Early;
  if (s == "LATE") return Stratum::Late;
  if (s == "UNSPECIFIED") return Stratum::Unspecified;
  throw InputError("unknown stratum '" + std::string(s) + "'");
}

inline Date parse_date(std::string_view s) {
  int y = 0;
  unsigned m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw InputError("invalid ISO-8601 date '" + std::string(s) + "'");
  auto num = [&](std::size_t from, std::size_t len) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data() + from, s.data() + from + len, v);
    if (ec != std::errc() || p != s.data() + from + len) throw InputError("invalid ISO-8601 date '" + std::string(s) + "'");
    return v;
  };
  y = static_cast<int>(num(0, 4));
  m = static_cast<unsigned>(num(5, 2));
  d = static_cast<unsigned>(num(8, 2));
  Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw InputError("invalid calendar date '" + std::string(s) + "'");
  return date;
}

inline std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

inline Date make_date(int y, unsigned m, unsigned d) {
  return Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
}

enum class TriState { False, True, Unknown };

// A count that may be masked by the data vendor.
struct EventCount {
  std::optional<std::int64_t> value;

  static EventCount masked() { return {}; }
  static EventCount of(std::int64_t v) { return {v}; }
  bool is_masked() const { return !value.has_value(); }
  friend bool operator==(const EventCount&, const EventCount&) = default;
};

struct CountyYearRecord {
  std::string county_id;
  std::string state_id;
  int year = 0;
  std::int64_t population_12plus = 0;
  EventCount naloxone_count;
  EventCount overdose_count;
  std::optional<std::int64_t> pharmacy_count;
  TriState opioid_dispensing_present = TriState::Unknown;
  std::map<std::string, double> covariates;
};

struct LawDateRecord {
  std::string state_id;
  LawCode law_code;
  Date effective_date;
};

// At most one effective date per (state, law); laws have no end dates.
class LawDates {
 public:
  LawDates() = default;
  explicit LawDates(const std::vector<LawDateRecord>& records) {
    for (const auto& r : records) add(r);
  }

  void add(const LawDateRecord& r) {
    auto key = std::make_pair(r.state_id, r.law_code);
    if (dates_.count(key))
      throw DataError("duplicate effective date for state " + r.state_id + ", law " + std::string(to_string(r.law_code)));
    dates_.emplace(key, r.effective_date);
    states_.insert(r.state_id);
  }

  std::optional<Date> date(const std::string& state, LawCode law) const {
    auto it = dates_.find({state, law});
    if (it == dates_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<Date> earliest(const std::string& state, const std::vector<LawCode>& laws) const {
    std::optional<Date> best;
    for (auto law : laws) {
      auto d = date(state, law);
      if (d && (!best || std::chrono::sys_days{*d} < std::chrono::sys_days{*best})) best = d;
    }
    return best;
  }

  const std::set<std::string>& states() const { return states_; }
  std::size_t size() const { return dates_.size(); }

 private:
  std::map<std::pair<std::string, LawCode>, Date> dates_;
  std::set<std::string> states_;
};

struct Window {
  Date start;
  Date end;
};

// ---------------------------------------------------------------------------
// Data-construction rules

// Resolves a vendor-masked naloxone count. The county-year is assigned zero
// dispensations when the CDC reports opioid dispensing there, or when the
// county has zero or more than two retail pharmacies. Otherwise the count
// stays masked and the unit is later excluded.
inline CountyYearRecord impute_masked_dispensing(CountyYearRecord record, TriState cdc_opioid_flag,
                                                 std::optional<std::int64_t> pharmacy_count) {
  if (!record.naloxone_count.is_masked()) return record;
  bool fires = cdc_opioid_flag == TriState::True;
  if (pharmacy_count && (*pharmacy_count > 2 || *pharmacy_count == 0)) fires = true;
  if (fires) record.naloxone_count = EventCount::of(0);
  return record;
}

// Events per 100,000 population aged 12+.
inline double compute_rate(std::int64_t event_count, std::int64_t population_12plus) {
  if (population_12plus <= 0) throw DomainError("undefined rate: population_12plus must be positive");
  if (event_count < 0) throw DomainError("event count must be nonnegative");
  return static_cast<double>(event_count) / static_cast<double>(population_12plus) * 100000.0;
}

inline int days_in_year(int year) { return std::chrono::year{year}.is_leap() ? 366 : 365; }

// Fraction of calendar `year` during which a law effective on `effective_date`
// was in force, counting the effective day itself.
inline double proportion_of_year_in_effect(Date effective_date, int year) {
  using namespace std::chrono;
  if (!effective_date.ok()) throw DomainError("invalid effective date");
  const sys_days jan1 = make_date(year, 1, 1);
  const sys_days dec31 = make_date(year, 12, 31);
  const sys_days eff = effective_date;
  if (eff > dec31) return 0.0;
  if (eff <= jan1) return 1.0;
  const auto days = (dec31 - eff).count() + 1;
  return static_cast<double>(days) / static_cast<double>(days_in_year(year));
}

inline constexpr double kDaysPerYear = 365.25;

// Years (365.25-day) from the earliest effective date among `laws` through the
// inclusive window end. With clip_to_window_start the start point is no
// earlier than the window start.
inline double exposure_years(const LawDates& dates, const std::string& state, const std::vector<LawCode>& laws,
                             const Window& window, bool clip_to_window_start = true) {
  using namespace std::chrono;
  if (laws.empty()) throw DomainError("exposure_years: law set is empty");
  const sys_days start = window.start;
  const sys_days end = window.end;
  if (end < start) throw DomainError("exposure_years: window end before start");
  auto earliest = dates.earliest(state, laws);
  if (!earliest) return 0.0;
  sys_days from = *earliest;
  if (from > end) return 0.0;
  if (clip_to_window_start && from < start) from = start;
  return static_cast<double>((end - from).count() + 1) / kDaysPerYear;
}

// ---------------------------------------------------------------------------
// Analysis tables

struct PanelTable {
  std::vector<std::string> unit_id;
  std::vector<std::string> cluster_id;
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd W;  // rows = units
  std::vector<double> A;
  std::vector<double> Y;
  Stratum stratum = Stratum::Unspecified;
  double exposure_max = 0.0;

  std::size_t size() const { return A.size(); }

  std::size_t n_clusters() const { return std::set<std::string>(cluster_id.begin(), cluster_id.end()).size(); }

  void recompute_exposure_max() { exposure_max = A.empty() ? 0.0 : *std::max_element(A.begin(), A.end()); }

  void validate() const {
    const auto n = A.size();
    if (unit_id.size() != n || cluster_id.size() != n || Y.size() != n || static_cast<std::size_t>(W.rows()) != n)
      throw DataError("panel: column lengths differ");
    if (static_cast<std::size_t>(W.cols()) != covariate_names.size()) throw DataError("panel: covariate index mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(A[i]) || !std::isfinite(Y[i])) throw DataError("panel: missing exposure or outcome in row " + std::to_string(i));
      if (A[i] < 0.0 || A[i] > exposure_max) throw DataError("panel: exposure outside [0, exposure_max] in row " + std::to_string(i));
    }
    if (!W.allFinite()) throw DataError("panel: missing covariate values");
  }

  std::optional<std::size_t> covariate_index(std::string_view name) const {
    for (std::size_t j = 0; j < covariate_names.size(); ++j)
      if (covariate_names[j] == name) return j;
    return std::nullopt;
  }
};

struct LongitudinalPanel {
  std::vector<std::string> unit_id;
  std::vector<std::string> cluster_id;
  std::vector<std::string> baseline_names;
  Eigen::MatrixXd W;
  Eigen::MatrixXi A;  // units x T, binary
  // Time-varying covariates. L[t] holds the block measured before A_{t+1};
  // L[0] is always empty (no covariates precede A_1 beyond W).
  std::vector<std::vector<std::string>> time_varying_names;
  std::vector<Eigen::MatrixXd> L;
  std::vector<double> Y;
  Stratum stratum = Stratum::Unspecified;

  std::size_t size() const { return Y.size(); }
  int horizon() const { return static_cast<int>(A.cols()); }

  void validate() const {
    const auto n = Y.size();
    const int T = horizon();
    if (T < 1) throw DataError("longitudinal panel: horizon must be at least 1");
    if (unit_id.size() != n || cluster_id.size() != n || static_cast<std::size_t>(W.rows()) != n ||
        static_cast<std::size_t>(A.rows()) != n)
      throw DataError("longitudinal panel: column lengths differ");
    if (static_cast<int>(L.size()) != T || static_cast<int>(time_varying_names.size()) != T)
      throw DataError("longitudinal panel: one covariate block per time point required");
    if (L[0].cols() != 0) throw DataError("longitudinal panel: no time-varying block precedes A_1");
    for (int t = 0; t < T; ++t) {
      if (static_cast<std::size_t>(L[t].rows()) != n || static_cast<std::size_t>(L[t].cols()) != time_varying_names[t].size())
        throw DataError("longitudinal panel: covariate block " + std::to_string(t + 1) + " has wrong shape");
    }
    if (stratum == Stratum::Early && T != 7) throw DataError("longitudinal panel: EARLY stratum has 7 annual steps");
    if (stratum == Stratum::Late && T != 6) throw DataError("longitudinal panel: LATE stratum has 6 annual steps");
    for (std::size_t i = 0; i < n; ++i) {
      for (int t = 0; t < T; ++t) {
        const int a = A(static_cast<Eigen::Index>(i), t);
        if (a != 0 && a != 1) throw DataError("longitudinal panel: exposure must be binary");
        if (t > 0 && a < A(static_cast<Eigen::Index>(i), t - 1))
          throw DataError("longitudinal panel: non-monotone exposure for unit " + unit_id[i] + " (implies repeal)");
      }
    }
  }
};

// Appends, for every covariate and the exposure, the mean over the other
// units of the same cluster. A singleton cluster's summary is its own value.
inline PanelTable augment_with_loo_state_summaries(const PanelTable& panel) {
  const auto n = panel.size();
  const auto p = static_cast<Eigen::Index>(panel.covariate_names.size());
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[panel.cluster_id[i]].push_back(i);

  Eigen::MatrixXd base(static_cast<Eigen::Index>(n), p + 1);
  if (p > 0) base.leftCols(p) = panel.W;
  for (std::size_t i = 0; i < n; ++i) base(static_cast<Eigen::Index>(i), p) = panel.A[i];

  Eigen::MatrixXd loo(static_cast<Eigen::Index>(n), p + 1);
  for (const auto& [cluster, rows] : members) {
    Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(p + 1);
    for (auto i : rows) total += base.row(static_cast<Eigen::Index>(i));
    const double k = static_cast<double>(rows.size());
    for (auto i : rows) {
      const auto r = static_cast<Eigen::Index>(i);
      if (rows.size() == 1) loo.row(r) = base.row(r);
      else loo.row(r) = (total - base.row(r)) / (k - 1.0);
    }
  }

  PanelTable out = panel;
  out.W.resize(static_cast<Eigen::Index>(n), 2 * p + 1);
  if (p > 0) out.W.leftCols(p) = panel.W;
  out.W.rightCols(p + 1) = loo;
  for (const auto& name : panel.covariate_names) out.covariate_names.push_back("loo_" + name);
  out.covariate_names.push_back("loo_A");
  return out;
}

// ---------------------------------------------------------------------------
// Raw-table ingestion

enum class OutcomeKind { Naloxone, Overdose };

inline std::string_view to_string(OutcomeKind k) { return k == OutcomeKind::Naloxone ? "naloxone" : "overdose"; }

inline OutcomeKind parse_outcome_kind(std::string_view s) {
  if (s == "naloxone") return OutcomeKind::Naloxone;
  if (s == "overdose") return OutcomeKind::Overdose;
  throw InputError("unknown outcome '" + std::string(s) + "' (expected naloxone or overdose)");
}

inline const std::vector<std::string>& county_year_required_columns() {
  static const std::vector<std::string> cols = {"county_id",      "state_id",       "year",
                                                "pop12plus",      "naloxone_count", "overdose_count",
                                                "pharmacy_count", "opioid_dispensing_flag"};
  return cols;
}

inline bool is_missing_token(const std::string& s) { return s.empty() || s == "NA" || s == "UNKNOWN"; }

inline std::vector<CountyYearRecord> parse_county_year(const csv::Table& t, std::string_view file = "county_year.csv") {
  std::vector<std::size_t> idx;
  for (const auto& c : county_year_required_columns()) idx.push_back(t.require(c, file));
  std::vector<std::size_t> covariate_cols;
  for (std::size_t j = 0; j < t.header.size(); ++j)
    if (std::find(idx.begin(), idx.end(), j) == idx.end()) covariate_cols.push_back(j);

  auto count_field = [&](const std::string& s, const char* what) -> EventCount {
    if (s == "MASKED") return EventCount::masked();
    auto v = csv::parse_int(s, what);
    if (v < 0) throw InputError(std::string(what) + " must be nonnegative");
    return EventCount::of(v);
  };

  std::vector<CountyYearRecord> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    CountyYearRecord r;
    r.county_id = row[idx[0]];
    r.state_id = row[idx[1]];
    r.year = static_cast<int>(csv::parse_int(row[idx[2]], "year"));
    r.population_12plus = csv::parse_int(row[idx[3]], "pop12plus");
    if (r.population_12plus < 0) throw InputError("pop12plus must be nonnegative");
    r.naloxone_count = count_field(row[idx[4]], "naloxone_count");
    r.overdose_count = count_field(row[idx[5]], "overdose_count");
    if (!is_missing_token(row[idx[6]])) {
      auto v = csv::parse_int(row[idx[6]], "pharmacy_count");
      if (v < 0) throw InputError("pharmacy_count must be nonnegative");
      r.pharmacy_count = v;
    }
    const auto& flag = row[idx[7]];
    if (flag == "1" || flag == "true") r.opioid_dispensing_present = TriState::True;
    else if (flag == "0" || flag == "false") r.opioid_dispensing_present = TriState::False;
    else if (is_missing_token(flag)) r.opioid_dispensing_present = TriState::Unknown;
    else throw InputError("opioid_dispensing_flag: unrecognized value '" + flag + "'");
    for (auto j : covariate_cols) {
      const auto& cell = row[j];
      r.covariates[t.header[j]] = is_missing_token(cell) ? std::nan("") : csv::parse_double(cell, t.header[j]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<LawDateRecord> parse_law_dates(const csv::Table& t, std::string_view file = "law_dates.csv") {
  const auto s = t.require("state_id", file);
  const auto l = t.require("law_code", file);
  const auto d = t.require("effective_date", file);
  std::vector<LawDateRecord> out;
  for (const auto& row : t.rows) out.push_back({row[s], parse_law_code(row[l]), parse_date(row[d])});
  return out;
}

struct Attrition {
  std::size_t n_input = 0;
  std::size_t n_masked_resolved = 0;
  std::size_t n_excluded = 0;
  double fraction_excluded = 0.0;
};

// Options shared by the point and longitudinal builders.
struct PanelBuildOptions {
  Stratum stratum = Stratum::Late;
  OutcomeKind outcome = OutcomeKind::Naloxone;
  int baseline_year = 2013;
  int outcome_year = 2018;
  Window window{make_date(2013, 3, 19), make_date(2017, 12, 31)};
  std::vector<LawCode> exposure_laws = nal_gsl_bundle();
  bool clip_to_window_start = true;
  std::vector<std::string> covariates;  // empty: every covariate column
  bool policy_covariates = true;        // PMCL, MML, PDMP (0-2) as proportion-of-year
  bool loo_summaries = true;
};

struct PanelBuild {
  PanelTable panel;
  Attrition attrition;
};

namespace detail {

using CountyIndex = std::map<std::string, std::map<int, CountyYearRecord>>;

inline CountyIndex index_records(const std::vector<CountyYearRecord>& records) {
  CountyIndex idx;
  for (const auto& r : records) {
    auto& years = idx[r.county_id];
    if (years.count(r.year)) throw DataError("duplicate record for county " + r.county_id + ", year " + std::to_string(r.year));
    years.emplace(r.year, r);
  }
  return idx;
}

// Outcome rate for one county-year after masking rules; nullopt if unusable.
inline std::optional<double> resolved_rate(const CountyYearRecord& rec, OutcomeKind outcome, std::size_t& resolved) {
  if (rec.population_12plus <= 0) return std::nullopt;
  EventCount count = rec.overdose_count;
  if (outcome == OutcomeKind::Naloxone) {
    count = rec.naloxone_count;
    if (count.is_masked()) {
      auto imputed = impute_masked_dispensing(rec, rec.opioid_dispensing_present, rec.pharmacy_count);
      if (imputed.naloxone_count.is_masked()) return std::nullopt;
      ++resolved;
      count = imputed.naloxone_count;
    }
  }
  if (count.is_masked()) return std::nullopt;
  return compute_rate(*count.value, rec.population_12plus);
}

inline std::vector<std::string> covariate_columns(const CountyIndex& idx, const std::vector<std::string>& requested) {
  if (!requested.empty()) return requested;
  std::set<std::string> names;
  for (const auto& [county, years] : idx)
    for (const auto& [year, rec] : years)
      for (const auto& [name, v] : rec.covariates) names.insert(name);
  return {names.begin(), names.end()};
}

inline std::array<double, 3> policy_covariate_values(const LawDates& laws, const std::string& state, int year) {
  auto prop = [&](LawCode c) {
    auto d = laws.date(state, c);
    return d ? proportion_of_year_in_effect(*d, year) : 0.0;
  };
  return {prop(LawCode::PMCL), prop(LawCode::MML), prop(LawCode::PDMP_OPERATIONAL) + prop(LawCode::PDMP_MUSTQUERY)};
}

inline const std::array<const char*, 3>& policy_covariate_names() {
  static const std::array<const char*, 3> names = {"PMCL", "MML", "PDMP"};
  return names;
}

}  // namespace detail

// Builds the point-treatment panel: baseline covariates and outcome rate at
// baseline_year, exposure years over the window, outcome rate at outcome_year.
inline PanelBuild build_panel(const std::vector<CountyYearRecord>& records, const LawDates& laws,
                              const PanelBuildOptions& opt) {
  auto idx = detail::index_records(records);
  const auto covs = detail::covariate_columns(idx, opt.covariates);

  PanelBuild out;
  auto& panel = out.panel;
  panel.stratum = opt.stratum;
  panel.covariate_names = covs;
  panel.covariate_names.push_back("baseline_rate");
  if (opt.policy_covariates)
    for (auto name : detail::policy_covariate_names()) panel.covariate_names.emplace_back(name);

  std::vector<std::vector<double>> rows;
  out.attrition.n_input = idx.size();
  for (const auto& [county, years] : idx) {
    auto b = years.find(opt.baseline_year);
    auto o = years.find(opt.outcome_year);
    if (b == years.end() || o == years.end()) {
      ++out.attrition.n_excluded;
      continue;
    }
    std::size_t resolved = 0;
    auto base_rate = detail::resolved_rate(b->second, opt.outcome, resolved);
    auto y_rate = detail::resolved_rate(o->second, opt.outcome, resolved);
    std::vector<double> w;
    bool complete = base_rate && y_rate;
    for (const auto& c : covs) {
      auto it = b->second.covariates.find(c);
      if (it == b->second.covariates.end() || !std::isfinite(it->second)) complete = false;
      else w.push_back(it->second);
    }
    out.attrition.n_masked_resolved += resolved;
    if (!complete) {
      ++out.attrition.n_excluded;
      continue;
    }
    const auto& state = b->second.state_id;
    w.push_back(*base_rate);
    if (opt.policy_covariates)
      for (double v : detail::policy_covariate_values(laws, state, opt.baseline_year)) w.push_back(v);
    panel.unit_id.push_back(county);
    panel.cluster_id.push_back(state);
    panel.A.push_back(exposure_years(laws, state, opt.exposure_laws, opt.window, opt.clip_to_window_start));
    panel.Y.push_back(*y_rate);
    rows.push_back(std::move(w));
  }
  if (out.attrition.n_input > 0)
    out.attrition.fraction_excluded =
        static_cast<double>(out.attrition.n_excluded) / static_cast<double>(out.attrition.n_input);

  panel.W.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(panel.covariate_names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      panel.W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  panel.recompute_exposure_max();
  if (opt.loo_summaries) panel = augment_with_loo_state_summaries(panel);
  panel.validate();
  return out;
}

struct LongitudinalBuildOptions {
  Stratum stratum = Stratum::Late;
  OutcomeKind outcome = OutcomeKind::Naloxone;
  int first_year = 2013;
  int last_year = 2018;
  std::vector<LawCode> exposure_laws = nal_gsl_bundle();
  std::vector<std::string> covariates;
  bool policy_covariates = true;
};

struct LongitudinalBuild {
  LongitudinalPanel panel;
  Attrition attrition;
};

// A_t = 1 when the bundled law is in effect at any point of year t.
// W: covariates and outcome rate at first_year. L_t (t >= 2): policy
// covariates in year t, plus the outcome rate of year t-1 for t >= 3.
// Y: outcome rate at last_year.
inline LongitudinalBuild build_longitudinal_panel(const std::vector<CountyYearRecord>& records, const LawDates& laws,
                                                  const LongitudinalBuildOptions& opt) {
  if (opt.last_year < opt.first_year) throw DomainError("longitudinal window: last_year before first_year");
  const int T = opt.last_year - opt.first_year + 1;
  auto idx = detail::index_records(records);
  const auto covs = detail::covariate_columns(idx, opt.covariates);

  LongitudinalBuild out;
  auto& lp = out.panel;
  lp.stratum = opt.stratum;
  lp.baseline_names = covs;
  lp.baseline_names.push_back("baseline_rate");
  if (opt.policy_covariates)
    for (auto name : detail::policy_covariate_names()) lp.baseline_names.emplace_back(name);
  lp.time_varying_names.assign(static_cast<std::size_t>(T), {});
  for (int t = 1; t < T; ++t) {
    auto& names = lp.time_varying_names[static_cast<std::size_t>(t)];
    if (opt.policy_covariates)
      for (auto name : detail::policy_covariate_names()) names.emplace_back(name);
    if (t >= 2) names.emplace_back("outcome_lag");
  }

  struct UnitRow {
    std::vector<double> w;
    std::vector<int> a;
    std::vector<std::vector<double>> l;
    double y;
  };
  std::vector<UnitRow> units;
  out.attrition.n_input = idx.size();
  for (const auto& [county, years] : idx) {
    std::size_t resolved = 0;
    std::vector<double> rates;
    bool complete = true;
    std::string state;
    for (int yr = opt.first_year; yr <= opt.last_year && complete; ++yr) {
      auto it = years.find(yr);
      if (it == years.end()) {
        complete = false;
        break;
      }
      state = it->second.state_id;
      auto r = detail::resolved_rate(it->second, opt.outcome, resolved);
      if (!r) complete = false;
      else rates.push_back(*r);
    }
    UnitRow u;
    if (complete) {
      const auto& base = years.at(opt.first_year);
      for (const auto& c : covs) {
        auto it = base.covariates.find(c);
        if (it == base.covariates.end() || !std::isfinite(it->second)) complete = false;
        else u.w.push_back(it->second);
      }
    }
    out.attrition.n_masked_resolved += resolved;
    if (!complete) {
      ++out.attrition.n_excluded;
      continue;
    }
    u.w.push_back(rates[0]);
    if (opt.policy_covariates)
      for (double v : detail::policy_covariate_values(laws, state, opt.first_year)) u.w.push_back(v);
    auto earliest = laws.earliest(state, opt.exposure_laws);
    u.l.assign(static_cast<std::size_t>(T), {});
    for (int t = 0; t < T; ++t) {
      const int yr = opt.first_year + t;
      u.a.push_back(earliest && proportion_of_year_in_effect(*earliest, yr) > 0.0 ? 1 : 0);
      if (t >= 1) {
        if (opt.policy_covariates)
          for (double v : detail::policy_covariate_values(laws, state, yr)) u.l[static_cast<std::size_t>(t)].push_back(v);
        if (t >= 2) u.l[static_cast<std::size_t>(t)].push_back(rates[static_cast<std::size_t>(t - 1)]);
      }
    }
    u.y = rates.back();
    lp.unit_id.push_back(county);
    lp.cluster_id.push_back(state);
    units.push_back(std::move(u));
  }
  if (out.attrition.n_input > 0)
    out.attrition.fraction_excluded =
        static_cast<double>(out.attrition.n_excluded) / static_cast<double>(out.attrition.n_input);

  const auto n = static_cast<Eigen::Index>(units.size());
  lp.W.resize(n, static_cast<Eigen::Index>(lp.baseline_names.size()));
  lp.A.resize(n, T);
  lp.L.assign(static_cast<std::size_t>(T), Eigen::MatrixXd());
  for (int t = 0; t < T; ++t)
    lp.L[static_cast<std::size_t>(t)].resize(n, static_cast<Eigen::Index>(lp.time_varying_names[static_cast<std::size_t>(t)].size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& u = units[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < u.w.size(); ++j) lp.W(i, static_cast<Eigen::Index>(j)) = u.w[j];
    for (int t = 0; t < T; ++t) {
      lp.A(i, t) = u.a[static_cast<std::size_t>(t)];
      const auto& l = u.l[static_cast<std::size_t>(t)];
      for (std::size_t j = 0; j < l.size(); ++j) lp.L[static_cast<std::size_t>(t)](i, static_cast<Eigen::Index>(j)) = l[j];
    }
    lp.Y.push_back(u.y);
  }
  lp.validate();
  return out;
}

// ---------------------------------------------------------------------------
// panel.csv / longitudinal.csv

inline constexpr const char* kPanelSchema = "schema=mtp.panel/1";
inline constexpr const char* kLongitudinalSchema = "schema=mtp.longitudinal/1";

inline csv::Table panel_to_table(const PanelTable& p, const std::vector<double>* shifted = nullptr) {
  csv::Table t;
  t.metadata.push_back(std::string(kPanelSchema) + " stratum=" + std::string(to_string(p.stratum)));
  t.header = {"unit_id", "cluster_id", "A", "Y"};
  if (shifted) t.header.push_back("A_shifted");
  for (const auto& n : p.covariate_names) t.header.push_back(n);
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::vector<std::string> row = {p.unit_id[i], p.cluster_id[i], csv::format_double(p.A[i]), csv::format_double(p.Y[i])};
    if (shifted) row.push_back(csv::format_double((*shifted)[i]));
    for (Eigen::Index j = 0; j < p.W.cols(); ++j) row.push_back(csv::format_double(p.W(static_cast<Eigen::Index>(i), j)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Stratum stratum_from_metadata(const csv::Table& t) {
  for (const auto& m : t.metadata) {
    auto pos = m.find("stratum=");
    if (pos == std::string::npos) continue;
    auto end = m.find(' ', pos);
    return parse_stratum(m.substr(pos + 8, end == std::string::npos ? std::string::npos : end - pos - 8));
  }
  return Stratum::Unspecified;
}

inline PanelTable panel_from_table(const csv::Table& t, std::string_view file = "panel.csv") {
  PanelTable p;
  const auto ju = t.require("unit_id", file);
  const auto jc = t.require("cluster_id", file);
  const auto ja = t.require("A", file);
  const auto jy = t.require("Y", file);
  std::vector<std::size_t> wcols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j == ju || j == jc || j == ja || j == jy || t.header[j] == "A_shifted") continue;
    wcols.push_back(j);
    p.covariate_names.push_back(t.header[j]);
  }
  p.stratum = stratum_from_metadata(t);
  p.W.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(wcols.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    p.unit_id.push_back(r[ju]);
    p.cluster_id.push_back(r[jc]);
    p.A.push_back(csv::parse_double(r[ja], "A"));
    p.Y.push_back(csv::parse_double(r[jy], "Y"));
    for (std::size_t k = 0; k < wcols.size(); ++k)
      p.W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = csv::parse_double(r[wcols[k]], t.header[wcols[k]]);
  }
  p.recompute_exposure_max();
  p.validate();
  return p;
}

// Columns: unit_id, cluster_id, W.<name>..., then per t: L.<t>.<name>..., A.<t>; finally Y.
inline csv::Table longitudinal_to_table(const LongitudinalPanel& lp) {
  csv::Table t;
  t.metadata.push_back(std::string(kLongitudinalSchema) + " stratum=" + std::string(to_string(lp.stratum)) +
                       " horizon=" + std::to_string(lp.horizon()));
  t.header = {"unit_id", "cluster_id"};
  for (const auto& n : lp.baseline_names) t.header.push_back("W." + n);
  for (int s = 0; s < lp.horizon(); ++s) {
    for (const auto& n : lp.time_varying_names[static_cast<std::size_t>(s)]) t.header.push_back("L." + std::to_string(s + 1) + "." + n);
    t.header.push_back("A." + std::to_string(s + 1));
  }
  t.header.push_back("Y");
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::vector<std::string> row = {lp.unit_id[i], lp.cluster_id[i]};
    for (Eigen::Index j = 0; j < lp.W.cols(); ++j) row.push_back(csv::format_double(lp.W(r, j)));
    for (int s = 0; s < lp.horizon(); ++s) {
      const auto& Ls = lp.L[static_cast<std::size_t>(s)];
      for (Eigen::Index j = 0; j < Ls.cols(); ++j) row.push_back(csv::format_double(Ls(r, j)));
      row.push_back(std::to_string(lp.A(r, s)));
    }
    row.push_back(csv::format_double(lp.Y[i]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline LongitudinalPanel longitudinal_from_table(const csv::Table& t, std::string_view file = "longitudinal.csv") {
  LongitudinalPanel lp;
  const auto ju = t.require("unit_id", file);
  const auto jc = t.require("cluster_id", file);
  const auto jy = t.require("Y", file);
  std::vector<std::size_t> wcols;
  std::vector<std::pair<int, std::size_t>> acols;
  std::vector<std::tuple<int, std::string, std::size_t>> lcols;
  int T = 0;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    const auto& h = t.header[j];
    if (h.rfind("W.", 0) == 0) {
      wcols.push_back(j);
      lp.baseline_names.push_back(h.substr(2));
    } else if (h.rfind("A.", 0) == 0) {
      int s = static_cast<int>(csv::parse_int(h.substr(2), "exposure column index"));
      acols.emplace_back(s, j);
      T = std::max(T, s);
    } else if (h.rfind("L.", 0) == 0) {
      auto dot = h.find('.', 2);
      if (dot == std::string::npos) throw InputError(std::string(file) + ": malformed column '" + h + "'");
      int s = static_cast<int>(csv::parse_int(h.substr(2, dot - 2), "covariate time index"));
      lcols.emplace_back(s, h.substr(dot + 1), j);
    } else if (j != ju && j != jc && j != jy) {
      throw InputError(std::string(file) + ": unrecognized column '" + h + "'");
    }
  }
  if (T == 0 || static_cast<int>(acols.size()) != T) throw InputError(std::string(file) + ": exposure columns A.1..A.T required");
  std::sort(acols.begin(), acols.end());
  for (int s = 0; s < T; ++s)
    if (acols[static_cast<std::size_t>(s)].first != s + 1) throw InputError(std::string(file) + ": exposure columns must be A.1..A.T");
  lp.stratum = stratum_from_metadata(t);
  lp.time_varying_names.assign(static_cast<std::size_t>(T), {});
  std::vector<std::vector<std::size_t>> lidx(static_cast<std::size_t>(T));
  for (const auto& [s, name, j] : lcols) {
    if (s < 2 || s > T) throw InputError(std::string(file) + ": covariate block index out of range in '" + t.header[j] + "'");
    lp.time_varying_names[static_cast<std::size_t>(s - 1)].push_back(name);
    lidx[static_cast<std::size_t>(s - 1)].push_back(j);
  }
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  lp.W.resize(n, static_cast<Eigen::Index>(wcols.size()));
  lp.A.resize(n, T);
  lp.L.assign(static_cast<std::size_t>(T), Eigen::MatrixXd());
  for (int s = 0; s < T; ++s) lp.L[static_cast<std::size_t>(s)].resize(n, static_cast<Eigen::Index>(lidx[static_cast<std::size_t>(s)].size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    lp.unit_id.push_back(r[ju]);
    lp.cluster_id.push_back(r[jc]);
    for (std::size_t k = 0; k < wcols.size(); ++k) lp.W(i, static_cast<Eigen::Index>(k)) = csv::parse_double(r[wcols[k]], t.header[wcols[k]]);
    for (int s = 0; s < T; ++s) {
      lp.A(i, s) = static_cast<int>(csv::parse_int(r[acols[static_cast<std::size_t>(s)].second], "exposure"));
      const auto& cols = lidx[static_cast<std::size_t>(s)];
      for (std::size_t k = 0; k < cols.size(); ++k)
        lp.L[static_cast<std::size_t>(s)](i, static_cast<Eigen::Index>(k)) = csv::parse_double(r[cols[k]], t.header[cols[k]]);
    }
    lp.Y.push_back(csv::parse_double(r[jy], "Y"));
  }
  lp.validate();
  return lp;
}

}  // namespace mtp
