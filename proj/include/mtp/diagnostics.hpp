#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mtp/csv.hpp"
#include "mtp/errors.hpp"
#include "mtp/panel_data.hpp"

namespace mtp {

enum class CorrelationType { Pearson, Spearman };

// State-year rows of law indicators coded as proportion of the year in effect.
struct StateYearLaws {
  std::vector<std::string> state;
  std::vector<int> year;
  std::vector<std::string> law_codes;
  Eigen::MatrixXd values;
};

inline StateYearLaws state_year_law_table(const LawDates& laws, const std::vector<std::string>& states, int first_year, int last_year,
                                          const std::vector<LawCode>& codes) {
  if (last_year < first_year) throw DomainError("state-year table: last_year before first_year");
  StateYearLaws t;
  for (auto c : codes) t.law_codes.emplace_back(to_string(c));
  const auto rows = static_cast<Eigen::Index>(states.size()) * (last_year - first_year + 1);
  t.values.resize(rows, static_cast<Eigen::Index>(codes.size()));
  Eigen::Index r = 0;
  for (const auto& s : states) {
    for (int y = first_year; y <= last_year; ++y, ++r) {
      t.state.push_back(s);
      t.year.push_back(y);
      for (std::size_t j = 0; j < codes.size(); ++j) {
        auto d = laws.date(s, codes[j]);
        t.values(r, static_cast<Eigen::Index>(j)) = d ? proportion_of_year_in_effect(*d, y) : 0.0;
      }
    }
  }
  return t;
}

// Absolute correlations; entries involving a constant column are NaN (UNDEFINED).
struct CooccurrenceMatrix {
  std::vector<std::string> law_codes;
  Eigen::MatrixXd values;
  std::vector<std::string> undefined;  // constant columns
  std::string stratum = "UNSPECIFIED";
  int first_year = 0;
  int last_year = 0;

  bool defined(std::size_t i, std::size_t j) const { return std::isfinite(values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))); }
};

namespace detail {

// Average ranks (ties share the mean rank).
inline Eigen::VectorXd ranks(const Eigen::VectorXd& x) {
  const auto n = x.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x(a) < x(b); });
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && x(idx[static_cast<std::size_t>(j + 1)]) == x(idx[static_cast<std::size_t>(i)])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) r(idx[static_cast<std::size_t>(k)]) = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace detail

inline CooccurrenceMatrix cooccurrence_matrix(const Eigen::MatrixXd& X, const std::vector<std::string>& law_codes,
                                              CorrelationType type = CorrelationType::Pearson) {
  if (X.rows() < 2) throw DomainError("cooccurrence_matrix: at least two state-years required");
  if (static_cast<std::size_t>(X.cols()) != law_codes.size()) throw DomainError("cooccurrence_matrix: law code count differs from columns");
  const auto p = X.cols();
  Eigen::MatrixXd Z(X.rows(), p);
  std::vector<bool> constant(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::VectorXd col = type == CorrelationType::Spearman ? detail::ranks(X.col(j)) : Eigen::VectorXd(X.col(j));
    col.array() -= col.mean();
    const double norm = col.norm();
    constant[static_cast<std::size_t>(j)] = (X.col(j).array() == X(0, j)).all() || norm == 0.0;
    Z.col(j) = constant[static_cast<std::size_t>(j)] ? col : Eigen::VectorXd(col / norm);
  }
  CooccurrenceMatrix m;
  m.law_codes = law_codes;
  m.values.resize(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (constant[static_cast<std::size_t>(i)]) m.undefined.push_back(law_codes[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < p; ++j) {
      if (constant[static_cast<std::size_t>(i)] || constant[static_cast<std::size_t>(j)]) {
        m.values(i, j) = std::numeric_limits<double>::quiet_NaN();
      } else if (i == j) {
        m.values(i, j) = 1.0;
      } else {
        m.values(i, j) = std::min(1.0, std::abs(Z.col(i).dot(Z.col(j))));
      }
    }
  }
  return m;
}

inline CooccurrenceMatrix cooccurrence_matrix(const StateYearLaws& t, CorrelationType type = CorrelationType::Pearson) {
  auto m = cooccurrence_matrix(t.values, t.law_codes, type);
  if (!t.year.empty()) {
    m.first_year = *std::min_element(t.year.begin(), t.year.end());
    m.last_year = *std::max_element(t.year.begin(), t.year.end());
  }
  return m;
}

// Per-year matrices (the pooled matrix is the default).
inline std::map<int, CooccurrenceMatrix> cooccurrence_by_year(const StateYearLaws& t, CorrelationType type = CorrelationType::Pearson) {
  std::map<int, std::vector<Eigen::Index>> rows;
  for (std::size_t r = 0; r < t.year.size(); ++r) rows[t.year[r]].push_back(static_cast<Eigen::Index>(r));
  std::map<int, CooccurrenceMatrix> out;
  for (const auto& [year, idx] : rows) {
    if (idx.size() < 2) continue;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(idx.size()), t.values.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) X.row(static_cast<Eigen::Index>(k)) = t.values.row(idx[k]);
    auto m = cooccurrence_matrix(X, t.law_codes, type);
    m.first_year = m.last_year = year;
    out.emplace(year, std::move(m));
  }
  return out;
}

struct VarianceExplained {
  double r_squared = 0.0;
  bool collinear = false;
  Eigen::Index rank = 0;
};

// R^2 of the least-squares regression (with intercept) of y on X, via a
// complete orthogonal decomposition so collinear designs still resolve.
inline VarianceExplained variance_explained(std::span<const double> y, const Eigen::MatrixXd& X) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (X.rows() != n) throw DomainError("variance_explained: row count differs from exposure length");
  if (n <= X.cols() + 1) throw DomainError("variance_explained: need more rows than covariates + 1");
  Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  const double ybar = yv.mean();
  Eigen::VectorXd yc = yv.array() - ybar;
  const double sst = yc.squaredNorm();
  if (sst == 0.0) throw DomainError("variance_explained: exposure has zero variance");
  Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
  VarianceExplained out;
  if (X.cols() == 0) return out;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Xc);
  out.rank = cod.rank();
  out.collinear = out.rank < X.cols();
  Eigen::VectorXd beta = cod.solve(yc);
  const double ssr = (yc - Xc * beta).squaredNorm();
  out.r_squared = std::clamp(1.0 - ssr / sst, 0.0, 1.0);
  return out;
}

struct BundleMerge {
  std::string law_a;
  std::string law_b;
  double abs_corr = 0.0;
};

struct Bundle {
  std::vector<std::string> members;
  std::vector<BundleMerge> merges;  // edges that joined the bundle
};

// Single-linkage grouping on defined correlations strictly above threshold.
inline std::vector<Bundle> bundle_recommendation(const CooccurrenceMatrix& m, double threshold = 0.7) {
  const auto p = m.law_codes.size();
  std::vector<std::size_t> parent(p);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<BundleMerge> merges;
  std::vector<std::size_t> merge_root_member;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) {
      if (!m.defined(i, j)) continue;
      const double c = m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (c > threshold) {
        auto a = find(i), b = find(j);
        if (a != b) {
          parent[std::max(a, b)] = std::min(a, b);
          merges.push_back({m.law_codes[i], m.law_codes[j], c});
          merge_root_member.push_back(i);
        }
      }
    }
  std::map<std::size_t, std::size_t> slot;
  std::vector<Bundle> out;
  for (std::size_t i = 0; i < p; ++i) {
    auto r = find(i);
    auto it = slot.find(r);
    if (it == slot.end()) {
      it = slot.emplace(r, out.size()).first;
      out.emplace_back();
    }
    out[it->second].members.push_back(m.law_codes[i]);
  }
  for (std::size_t k = 0; k < merges.size(); ++k) out[slot[find(merge_root_member[k])]].merges.push_back(merges[k]);
  return out;
}

// Long-format heatmap data: law_a, law_b, abs_corr ("UNDEFINED" for constant laws).
inline csv::Table heatmap_table(const CooccurrenceMatrix& m) {
  csv::Table t;
  t.metadata.push_back("stratum=" + m.stratum + " years=" + std::to_string(m.first_year) + "-" + std::to_string(m.last_year));
  t.header = {"law_a", "law_b", "abs_corr"};
  for (std::size_t i = 0; i < m.law_codes.size(); ++i)
    for (std::size_t j = 0; j < m.law_codes.size(); ++j)
      t.rows.push_back({m.law_codes[i], m.law_codes[j],
                        m.defined(i, j) ? csv::format_double(m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))
                                        : std::string("UNDEFINED")});
  return t;
}

}  // namespace mtp
