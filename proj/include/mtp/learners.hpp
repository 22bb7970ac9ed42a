#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtp/errors.hpp"
#include "mtp/parallel.hpp"
#include "mtp/random.hpp"

namespace mtp {

// Named feature columns; rows are observations.
struct FeatureMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  FeatureMatrix take_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out{names, Eigen::MatrixXd(static_cast<Eigen::Index>(idx.size()), values.cols())};
    for (std::size_t k = 0; k < idx.size(); ++k) out.values.row(static_cast<Eigen::Index>(k)) = values.row(static_cast<Eigen::Index>(idx[k]));
    return out;
  }
};

template <typename T>
std::vector<T> take(std::span<const T> v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

enum class LearnerKind { InterceptOnly, GlmLinear, GlmLogistic, GbtRegress, GbtClassify, Ensemble };

inline std::string_view to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::InterceptOnly: return "INTERCEPT_ONLY";
    case LearnerKind::GlmLinear: return "GLM_LINEAR";
    case LearnerKind::GlmLogistic: return "GLM_LOGISTIC";
    case LearnerKind::GbtRegress: return "GBT_REGRESS";
    case LearnerKind::GbtClassify: return "GBT_CLASSIFY";
    case LearnerKind::Ensemble: return "ENSEMBLE";
  }
  return "?";
}

inline LearnerKind parse_learner_kind(std::string_view s) {
  for (auto k : {LearnerKind::InterceptOnly, LearnerKind::GlmLinear, LearnerKind::GlmLogistic, LearnerKind::GbtRegress,
                 LearnerKind::GbtClassify})
    if (to_string(k) == s) return k;
  throw InputError("unknown learner kind '" + std::string(s) + "'");
}

inline bool is_classifier(LearnerKind k) { return k == LearnerKind::GlmLogistic || k == LearnerKind::GbtClassify; }

inline constexpr double kDefaultProbabilityClip = 0.005;

struct LearnerSpec {
  LearnerKind kind = LearnerKind::InterceptOnly;
  std::map<std::string, double> hyperparameters;

  double param(const std::string& name, double fallback) const {
    auto it = hyperparameters.find(name);
    return it == hyperparameters.end() ? fallback : it->second;
  }

  // Documented ranges:
  //   trees [1, 10000], depth [1, 12], learning_rate (0, 1], l2 >= 0,
  //   min_leaf >= 1, p_min (0, 0.5).
  void validate() const {
    static const std::map<LearnerKind, std::vector<std::string>> allowed = {
        {LearnerKind::InterceptOnly, {}},
        {LearnerKind::GlmLinear, {"l2"}},
        {LearnerKind::GlmLogistic, {"l2"}},
        {LearnerKind::GbtRegress, {"trees", "depth", "learning_rate", "l2", "min_leaf"}},
        {LearnerKind::GbtClassify, {"trees", "depth", "learning_rate", "l2", "min_leaf", "p_min"}},
    };
    auto it = allowed.find(kind);
    if (it == allowed.end()) throw InputError("learner kind cannot be used as a library member");
    for (const auto& [name, value] : hyperparameters) {
      if (std::find(it->second.begin(), it->second.end(), name) == it->second.end())
        throw InputError("hyperparameter '" + name + "' not valid for " + std::string(to_string(kind)));
      auto bad = [&](bool cond) {
        if (cond) throw InputError("hyperparameter '" + name + "' out of range: " + std::to_string(value));
      };
      if (!std::isfinite(value)) bad(true);
      if (name == "trees") bad(value < 1 || value > 10000 || value != std::floor(value));
      if (name == "depth") bad(value < 1 || value > 12 || value != std::floor(value));
      if (name == "learning_rate") bad(value <= 0 || value > 1);
      if (name == "l2") bad(value < 0);
      if (name == "min_leaf") bad(value < 1 || value != std::floor(value));
      if (name == "p_min") bad(value <= 0 || value >= 0.5);
    }
  }
};

enum class StackLoss { SquaredError, LogLoss };
enum class StackWeighting { ConvexStack, DiscreteSelect };

struct EnsembleSpec {
  std::vector<LearnerSpec> library;
  int v_folds = 5;
  StackLoss loss = StackLoss::SquaredError;
  StackWeighting weighting = StackWeighting::ConvexStack;
  double p_min = kDefaultProbabilityClip;

  void validate() const {
    if (library.empty()) throw InputError("ensemble library must be nonempty");
    if (v_folds < 2) throw InputError("ensemble requires v_folds >= 2");
    if (!(p_min > 0.0 && p_min < 0.5)) throw InputError("ensemble p_min must lie in (0, 0.5)");
    for (const auto& l : library) l.validate();
  }

  static EnsembleSpec single(LearnerSpec spec, StackLoss loss = StackLoss::SquaredError) {
    EnsembleSpec e;
    e.library = {std::move(spec)};
    e.loss = loss;
    return e;
  }
};

// Diagnostics carried alongside a fitted learner.
struct LearnerSummary {
  LearnerKind kind = LearnerKind::InterceptOnly;
  bool singular_fallback = false;
  bool constant_target = false;
  std::vector<double> training_loss;  // GBT: loss after each boosting round (index 0 = initial)
  // Ensemble only
  std::vector<LearnerKind> members;
  std::vector<double> cv_losses;
  std::vector<double> weights;
  double ensemble_cv_loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<LearnerSummary> member_summaries;
};

class Model {
 public:
  virtual ~Model() = default;
  virtual std::vector<double> predict(const Eigen::MatrixXd& X) const = 0;
};

class FittedLearner {
 public:
  FittedLearner() = default;
  FittedLearner(LearnerSpec spec, std::vector<std::string> names, std::shared_ptr<const Model> model, LearnerSummary summary)
      : spec_(std::move(spec)), names_(std::move(names)), model_(std::move(model)), summary_(std::move(summary)) {}

  std::vector<double> predict(const FeatureMatrix& X) const {
    if (X.names != names_) throw DomainError("predict: feature index differs from the training feature index");
    return model_->predict(X.values);
  }

  const LearnerSpec& spec() const { return spec_; }
  const std::vector<std::string>& feature_names() const { return names_; }
  const LearnerSummary& summary() const { return summary_; }
  bool is_classifier() const { return classifier_; }
  void set_classifier(bool c) { classifier_ = c; }

 private:
  LearnerSpec spec_;
  std::vector<std::string> names_;
  std::shared_ptr<const Model> model_;
  LearnerSummary summary_;
  bool classifier_ = false;
};

namespace detail {

inline double expit(double eta) {
  eta = std::clamp(eta, -30.0, 30.0);
  return 1.0 / (1.0 + std::exp(-eta));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline std::vector<double> resolve_weights(std::span<const double> w, std::size_t n) {
  if (w.empty()) return std::vector<double>(n, 1.0);
  if (w.size() != n) throw DomainError("fit: weight vector length differs from row count");
  for (double x : w)
    if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("fit: weights must be finite and nonnegative");
  return {w.begin(), w.end()};
}

inline double weighted_mean(std::span<const double> y, std::span<const double> w) {
  double s = 0.0, sw = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += w[i] * y[i];
    sw += w[i];
  }
  if (!(sw > 0.0)) throw DomainError("fit: total weight is zero");
  return s / sw;
}

inline bool is_constant(std::span<const double> y) {
  return std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
}

class ConstantModel final : public Model {
 public:
  explicit ConstantModel(double c) : c_(c) {}
  std::vector<double> predict(const Eigen::MatrixXd& X) const override { return std::vector<double>(static_cast<std::size_t>(X.rows()), c_); }

 private:
  double c_;
};

class LinearModel final : public Model {
 public:
  LinearModel(double intercept, Eigen::VectorXd beta, bool logistic)
      : intercept_(intercept), beta_(std::move(beta)), logistic_(logistic) {}
  std::vector<double> predict(const Eigen::MatrixXd& X) const override {
    if (X.cols() != beta_.size()) throw DomainError("predict: column count differs from training");
    Eigen::VectorXd eta = (X * beta_).array() + intercept_;
    std::vector<double> out(static_cast<std::size_t>(eta.size()));
    for (Eigen::Index i = 0; i < eta.size(); ++i) out[static_cast<std::size_t>(i)] = logistic_ ? expit(eta(i)) : eta(i);
    return out;
  }
  double intercept() const { return intercept_; }
  const Eigen::VectorXd& coefficients() const { return beta_; }

 private:
  double intercept_;
  Eigen::VectorXd beta_;
  bool logistic_;
};

// Weighted column standardization; constant columns are marked inactive.
struct Standardizer {
  Eigen::VectorXd mean, scale;
  std::vector<Eigen::Index> active;

  Standardizer(const Eigen::MatrixXd& X, const std::vector<double>& w) {
    const auto p = X.cols();
    mean = Eigen::VectorXd::Zero(p);
    scale = Eigen::VectorXd::Ones(p);
    double sw = std::accumulate(w.begin(), w.end(), 0.0);
    for (Eigen::Index j = 0; j < p; ++j) {
      double m = 0.0;
      for (Eigen::Index i = 0; i < X.rows(); ++i) m += w[static_cast<std::size_t>(i)] * X(i, j);
      m /= sw;
      double v = 0.0;
      for (Eigen::Index i = 0; i < X.rows(); ++i) v += w[static_cast<std::size_t>(i)] * (X(i, j) - m) * (X(i, j) - m);
      v /= sw;
      mean(j) = m;
      const double sd = std::sqrt(v);
      if (sd > 1e-12 * std::max(1.0, std::abs(m))) {
        scale(j) = sd;
        active.push_back(j);
      }
    }
  }

  Eigen::MatrixXd design(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd Z(X.rows(), static_cast<Eigen::Index>(active.size()) + 1);
    Z.col(0).setOnes();
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto j = active[k];
      Z.col(static_cast<Eigen::Index>(k) + 1) = (X.col(j).array() - mean(j)) / scale(j);
    }
    return Z;
  }

  // Maps standardized coefficients (intercept first) back to the raw scale.
  std::pair<double, Eigen::VectorXd> unscale(const Eigen::VectorXd& b, Eigen::Index p) const {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    double intercept = b(0);
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto j = active[k];
      beta(j) = b(static_cast<Eigen::Index>(k) + 1) / scale(j);
      intercept -= beta(j) * mean(j);
    }
    return {intercept, beta};
  }
};

inline Eigen::MatrixXd penalty_matrix(Eigen::Index q, double lambda) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index j = 1; j < q; ++j) P(j, j) = lambda;
  return P;
}

inline FittedLearner fit_glm_linear(const LearnerSpec& spec, const FeatureMatrix& X, std::span<const double> y,
                                    const std::vector<double>& w) {
  LearnerSummary summary;
  summary.kind = spec.kind;
  if (is_constant(y)) {
    summary.constant_target = true;
    return FittedLearner(spec, X.names, std::make_shared<ConstantModel>(y[0]), summary);
  }
  Standardizer st(X.values, w);
  Eigen::MatrixXd Z = st.design(X.values);
  const auto n = Z.rows();
  const auto q = Z.cols();
  Eigen::VectorXd sw(n), yv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sw(i) = std::sqrt(w[static_cast<std::size_t>(i)]);
    yv(i) = y[static_cast<std::size_t>(i)];
  }
  double lambda = spec.param("l2", 0.0);
  auto solve = [&](double lam) {
    Eigen::MatrixXd A(n + q - 1, q);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + q - 1);
    A.topRows(n) = sw.asDiagonal() * Z;
    b.head(n) = sw.cwiseProduct(yv);
    A.bottomRows(q - 1).setZero();
    for (Eigen::Index j = 1; j < q; ++j) A(n + j - 1, j) = std::sqrt(lam);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    return std::make_pair(qr.rank(), Eigen::VectorXd(qr.solve(b)));
  };
  auto [rank, b] = solve(lambda);
  if (rank < q) {
    const double sumw = std::accumulate(w.begin(), w.end(), 0.0);
    lambda = std::max(lambda, 1e-8 * sumw);
    b = solve(lambda).second;
    summary.singular_fallback = true;
  }
  auto [intercept, beta] = st.unscale(b, X.cols());
  return FittedLearner(spec, X.names, std::make_shared<LinearModel>(intercept, beta, false), summary);
}

inline FittedLearner fit_glm_logistic(const LearnerSpec& spec, const FeatureMatrix& X, std::span<const double> y,
                                      const std::vector<double>& w) {
  LearnerSummary summary;
  summary.kind = spec.kind;
  for (double v : y)
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("logistic fit: targets must lie in [0, 1]");
  const double ybar = weighted_mean(y, w);
  if (is_constant(y) || ybar <= 0.0 || ybar >= 1.0) {
    summary.constant_target = true;
    auto m = std::make_shared<LinearModel>(logit(std::clamp(ybar, 1e-12, 1.0 - 1e-12)), Eigen::VectorXd::Zero(X.cols()), true);
    return FittedLearner(spec, X.names, m, summary);
  }
  Standardizer st(X.values, w);
  Eigen::MatrixXd Z = st.design(X.values);
  const auto n = Z.rows();
  const auto q = Z.cols();
  double lambda = spec.param("l2", 0.0);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  beta(0) = logit(ybar);

  auto deviance = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd eta = Z * b;
    double dev = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = std::clamp(expit(eta(i)), 1e-15, 1.0 - 1e-15);
      const double yi = y[static_cast<std::size_t>(i)];
      dev -= 2.0 * w[static_cast<std::size_t>(i)] * (yi * std::log(p) + (1.0 - yi) * std::log(1.0 - p));
    }
    return dev + lambda * b.tail(q - 1).squaredNorm();
  };

  double dev = deviance(beta);
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd eta = Z * beta;
    Eigen::VectorXd wt(n), grad_resid(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = expit(eta(i));
      const double v = std::max(p * (1.0 - p), 1e-10);
      wt(i) = w[static_cast<std::size_t>(i)] * v;
      grad_resid(i) = w[static_cast<std::size_t>(i)] * (y[static_cast<std::size_t>(i)] - p);
    }
    Eigen::MatrixXd H = Z.transpose() * wt.asDiagonal() * Z + penalty_matrix(q, lambda);
    Eigen::VectorXd g = Z.transpose() * grad_resid;
    g.tail(q - 1) -= lambda * beta.tail(q - 1);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
      if (summary.singular_fallback) break;
      lambda = std::max(lambda, 1e-8 * std::accumulate(w.begin(), w.end(), 0.0));
      summary.singular_fallback = true;
      dev = deviance(beta);
      continue;
    }
    Eigen::VectorXd step = ldlt.solve(g);
    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double cand_dev = deviance(candidate);
    for (int h = 0; h < 30 && !(cand_dev <= dev); ++h) {
      scale *= 0.5;
      candidate = beta + scale * step;
      cand_dev = deviance(candidate);
    }
    if (!(cand_dev <= dev)) break;
    const double change = dev - cand_dev;
    beta = candidate;
    dev = cand_dev;
    if (change < 1e-12 * (std::abs(dev) + 0.1) || step.lpNorm<Eigen::Infinity>() * scale < 1e-12) break;
  }
  auto [intercept, coef] = st.unscale(beta, X.cols());
  return FittedLearner(spec, X.names, std::make_shared<LinearModel>(intercept, coef, true), summary);
}

// ---------------------------------------------------------------------------
// Gradient boosted regression trees (exact greedy, level-wise growth)

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict_row(const Eigen::MatrixXd& X, Eigen::Index i) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
      const auto& nd = nodes[static_cast<std::size_t>(k)];
      k = X(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(k)].value;
  }
};

class BoostedModel final : public Model {
 public:
  BoostedModel(double base, double rate, std::vector<Tree> trees, bool classify, double p_min)
      : base_(base), rate_(rate), trees_(std::move(trees)), classify_(classify), p_min_(p_min) {}

  std::vector<double> raw(const Eigen::MatrixXd& X) const {
    std::vector<double> f(static_cast<std::size_t>(X.rows()), base_);
    for (const auto& t : trees_)
      for (Eigen::Index i = 0; i < X.rows(); ++i) f[static_cast<std::size_t>(i)] += rate_ * t.predict_row(X, i);
    return f;
  }

  std::vector<double> predict(const Eigen::MatrixXd& X) const override {
    auto f = raw(X);
    if (classify_)
      for (auto& v : f) v = std::clamp(expit(v), p_min_, 1.0 - p_min_);
    return f;
  }

 private:
  double base_;
  double rate_;
  std::vector<Tree> trees_;
  bool classify_;
  double p_min_;
};

struct TreeParams {
  int depth = 3;
  double l2 = 0.0;
  int min_leaf = 5;
};

// Fits one tree to gradient statistics (g = first derivative, h = second
// derivative, both already multiplied by observation weights). Leaf value is
// -G / (H + l2); split gain uses the usual second-order score.
inline Tree grow_tree(const Eigen::MatrixXd& X, const std::vector<std::vector<std::size_t>>& sorted,
                      const std::vector<double>& g, const std::vector<double>& h, const TreeParams& prm) {
  const std::size_t n = g.size();
  const auto p = static_cast<std::size_t>(X.cols());
  Tree tree;
  tree.nodes.emplace_back();
  std::vector<int> node_of(n, 0);
  struct Stat {
    double G = 0.0, H = 0.0;
    std::size_t count = 0;
  };
  std::vector<Stat> stats(1);
  for (std::size_t i = 0; i < n; ++i) {
    stats[0].G += g[i];
    stats[0].H += h[i];
    ++stats[0].count;
  }
  auto leaf_value = [&](const Stat& s) { return s.H + prm.l2 > 0.0 ? -s.G / (s.H + prm.l2) : 0.0; };
  auto score = [&](double G, double H) { return H + prm.l2 > 0.0 ? G * G / (H + prm.l2) : 0.0; };

  std::vector<int> frontier = {0};
  for (int level = 0; level < prm.depth && !frontier.empty(); ++level) {
    const std::size_t m = tree.nodes.size();
    std::vector<double> best_gain(m, 1e-12);
    std::vector<int> best_feature(m, -1);
    std::vector<double> best_threshold(m, 0.0);
    std::vector<char> active(m, 0);
    for (int k : frontier)
      if (stats[static_cast<std::size_t>(k)].count >= 2 * static_cast<std::size_t>(prm.min_leaf)) active[static_cast<std::size_t>(k)] = 1;

    std::vector<Stat> left(m);
    std::vector<double> last(m);
    for (std::size_t j = 0; j < p; ++j) {
      std::fill(left.begin(), left.end(), Stat{});
      for (std::size_t i : sorted[j]) {
        const auto k = static_cast<std::size_t>(node_of[i]);
        if (!active[k]) continue;
        const double v = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        auto& L = left[k];
        const auto& S = stats[k];
        if (L.count >= static_cast<std::size_t>(prm.min_leaf) && S.count - L.count >= static_cast<std::size_t>(prm.min_leaf) &&
            v > last[k]) {
          const double gain = score(L.G, L.H) + score(S.G - L.G, S.H - L.H) - score(S.G, S.H);
          if (gain > best_gain[k]) {
            best_gain[k] = gain;
            best_feature[k] = static_cast<int>(j);
            best_threshold[k] = 0.5 * (last[k] + v);
            if (!(best_threshold[k] < v)) best_threshold[k] = last[k];
          }
        }
        L.G += g[i];
        L.H += h[i];
        ++L.count;
        last[k] = v;
      }
    }

    std::vector<int> next;
    for (int k : frontier) {
      const auto ks = static_cast<std::size_t>(k);
      if (best_feature[ks] < 0) continue;
      const int l = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      stats.emplace_back();
      stats.emplace_back();
      tree.nodes[ks].feature = best_feature[ks];
      tree.nodes[ks].threshold = best_threshold[ks];
      tree.nodes[ks].left = l;
      tree.nodes[ks].right = l + 1;
      next.push_back(l);
      next.push_back(l + 1);
    }
    if (next.empty()) break;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& nd = tree.nodes[static_cast<std::size_t>(node_of[i])];
      if (nd.feature < 0) continue;
      const int child = X(static_cast<Eigen::Index>(i), nd.feature) <= nd.threshold ? nd.left : nd.right;
      node_of[i] = child;
      auto& s = stats[static_cast<std::size_t>(child)];
      s.G += g[i];
      s.H += h[i];
      ++s.count;
    }
    frontier = std::move(next);
  }
  for (std::size_t k = 0; k < tree.nodes.size(); ++k)
    if (tree.nodes[k].feature < 0) tree.nodes[k].value = leaf_value(stats[k]);
  return tree;
}

inline FittedLearner fit_gbt(const LearnerSpec& spec, const FeatureMatrix& X, std::span<const double> y,
                             const std::vector<double>& w) {
  const bool classify = spec.kind == LearnerKind::GbtClassify;
  LearnerSummary summary;
  summary.kind = spec.kind;
  const int trees = static_cast<int>(spec.param("trees", 200));
  const double rate = spec.param("learning_rate", 0.1);
  const double p_min = spec.param("p_min", kDefaultProbabilityClip);
  TreeParams prm{static_cast<int>(spec.param("depth", 3)), spec.param("l2", classify ? 1.0 : 0.0),
                 static_cast<int>(spec.param("min_leaf", 5))};
  const std::size_t n = y.size();
  if (classify)
    for (double v : y)
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("GBT classifier: targets must lie in [0, 1]");

  const double ybar = weighted_mean(y, w);
  double base = ybar;
  if (classify) base = logit(std::clamp(ybar, 1e-6, 1.0 - 1e-6));
  if (is_constant(y)) {
    summary.constant_target = true;
    return FittedLearner(spec, X.names, std::make_shared<BoostedModel>(base, rate, std::vector<Tree>{}, classify, p_min), summary);
  }

  std::vector<std::vector<std::size_t>> sorted(static_cast<std::size_t>(X.cols()));
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    auto& s = sorted[j];
    s.resize(n);
    std::iota(s.begin(), s.end(), std::size_t{0});
    std::stable_sort(s.begin(), s.end(), [&](std::size_t a, std::size_t b) {
      return X.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j)) <
             X.values(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j));
    });
  }

  const double sumw = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> f(n, base), g(n), h(n);
  auto loss = [&]() {
    double l = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (classify) {
        const double p = std::clamp(expit(f[i]), 1e-15, 1.0 - 1e-15);
        l -= w[i] * (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
      } else {
        l += w[i] * (y[i] - f[i]) * (y[i] - f[i]);
      }
    }
    return l / sumw;
  };
  summary.training_loss.push_back(loss());
  std::vector<Tree> forest;
  forest.reserve(static_cast<std::size_t>(trees));
  for (int b = 0; b < trees; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      if (classify) {
        const double p = expit(f[i]);
        g[i] = w[i] * (p - y[i]);
        h[i] = w[i] * std::max(p * (1.0 - p), 1e-12);
      } else {
        g[i] = w[i] * (f[i] - y[i]);
        h[i] = w[i];
      }
    }
    Tree t = grow_tree(X.values, sorted, g, h, prm);
    for (std::size_t i = 0; i < n; ++i) f[i] += rate * t.predict_row(X.values, static_cast<Eigen::Index>(i));
    forest.push_back(std::move(t));
    summary.training_loss.push_back(loss());
  }
  return FittedLearner(spec, X.names, std::make_shared<BoostedModel>(base, rate, std::move(forest), classify, p_min), summary);
}

// Euclidean projection onto the probability simplex.
inline Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const auto k = v.size();
  std::vector<double> u(v.data(), v.data() + k);
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    css += u[static_cast<std::size_t>(j)];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
  }
  Eigen::VectorXd out = (v.array() - theta).cwiseMax(0.0);
  out /= out.sum();
  return out;
}

inline double pointwise_loss(StackLoss loss, double y, double pred, double p_min) {
  if (loss == StackLoss::SquaredError) return (y - pred) * (y - pred);
  const double p = std::clamp(pred, p_min, 1.0 - p_min);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

// Minimizes the stacking loss over convex weights by projected gradient with
// backtracking, starting from the best single member.
inline Eigen::VectorXd solve_convex_stack(const Eigen::MatrixXd& P, std::span<const double> y, const std::vector<double>& w,
                                          StackLoss loss, double p_min, std::size_t start) {
  const auto k = P.cols();
  const auto n = P.rows();
  const double sumw = std::accumulate(w.begin(), w.end(), 0.0);
  auto objective = [&](const Eigen::VectorXd& a) {
    Eigen::VectorXd pred = P * a;
    double l = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) l += w[static_cast<std::size_t>(i)] * pointwise_loss(loss, y[static_cast<std::size_t>(i)], pred(i), p_min);
    return l / sumw;
  };
  auto gradient = [&](const Eigen::VectorXd& a) {
    Eigen::VectorXd pred = P * a;
    Eigen::VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double yi = y[static_cast<std::size_t>(i)];
      const double wi = w[static_cast<std::size_t>(i)] / sumw;
      if (loss == StackLoss::SquaredError) {
        d(i) = -2.0 * wi * (yi - pred(i));
      } else {
        const double p = std::clamp(pred(i), p_min, 1.0 - p_min);
        d(i) = wi * (p - yi) / (p * (1.0 - p));
      }
    }
    return Eigen::VectorXd(P.transpose() * d);
  };
  Eigen::VectorXd a = Eigen::VectorXd::Zero(k);
  a(static_cast<Eigen::Index>(start)) = 1.0;
  if (k == 1) return a;
  double f = objective(a);
  double step = 1.0;
  for (int it = 0; it < 1000; ++it) {
    Eigen::VectorXd gr = gradient(a);
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      Eigen::VectorXd cand = project_simplex(a - step * gr);
      const double fc = objective(cand);
      if (fc <= f - 1e-4 * gr.dot(a - cand) && fc < f) {
        const double delta = (cand - a).lpNorm<Eigen::Infinity>();
        a = cand;
        f = fc;
        moved = delta > 1e-10;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return a;
}

class EnsembleModel final : public Model {
 public:
  EnsembleModel(std::vector<FittedLearner> members, std::vector<double> weights, bool classify, double p_min)
      : members_(std::move(members)), weights_(std::move(weights)), classify_(classify), p_min_(p_min) {}

  std::vector<double> predict(const Eigen::MatrixXd& X) const override {
    std::vector<double> out(static_cast<std::size_t>(X.rows()), 0.0);
    for (std::size_t k = 0; k < members_.size(); ++k) {
      if (weights_[k] == 0.0) continue;
      FeatureMatrix fm{members_[k].feature_names(), X};
      auto p = members_[k].predict(fm);
      for (std::size_t i = 0; i < out.size(); ++i) {
        double v = p[i];
        if (classify_) v = std::clamp(v, p_min_, 1.0 - p_min_);
        out[i] += weights_[k] * v;
      }
    }
    return out;
  }

 private:
  std::vector<FittedLearner> members_;
  std::vector<double> weights_;
  bool classify_;
  double p_min_;
};

}  // namespace detail

// Fits a single library member. Deterministic; the seed is accepted for
// interface uniformity (exact greedy boosting draws no randomness).
inline FittedLearner fit(const LearnerSpec& spec, const FeatureMatrix& X, std::span<const double> y,
                         std::span<const double> weights = {}, std::uint64_t /*seed*/ = 0) {
  spec.validate();
  const auto n = static_cast<std::size_t>(X.rows());
  if (y.size() != n) throw DomainError("fit: row count differs from target length");
  if (n < 2) throw DomainError("fit: at least two rows required");
  if (static_cast<std::size_t>(X.cols()) != X.names.size()) throw DomainError("fit: feature names do not match columns");
  auto w = detail::resolve_weights(weights, n);
  FittedLearner out;
  switch (spec.kind) {
    case LearnerKind::InterceptOnly: {
      LearnerSummary s;
      s.kind = spec.kind;
      out = FittedLearner(spec, X.names, std::make_shared<detail::ConstantModel>(detail::weighted_mean(y, w)), s);
      break;
    }
    case LearnerKind::GlmLinear: out = detail::fit_glm_linear(spec, X, y, w); break;
    case LearnerKind::GlmLogistic: out = detail::fit_glm_logistic(spec, X, y, w); break;
    case LearnerKind::GbtRegress:
    case LearnerKind::GbtClassify: out = detail::fit_gbt(spec, X, y, w); break;
    case LearnerKind::Ensemble: throw DomainError("fit: use fit_ensemble for ensembles");
  }
  out.set_classifier(is_classifier(spec.kind));
  return out;
}

// Cross-validated stacking ensemble (super learner).
inline FittedLearner fit_ensemble(const EnsembleSpec& spec, const FeatureMatrix& X, std::span<const double> y,
                                  std::span<const double> weights = {}, std::uint64_t seed = 0) {
  spec.validate();
  const auto n = static_cast<std::size_t>(X.rows());
  if (y.size() != n) throw DomainError("fit_ensemble: row count differs from target length");
  if (n < static_cast<std::size_t>(spec.v_folds)) throw DomainError("fit_ensemble: fewer rows than folds");
  auto w = detail::resolve_weights(weights, n);
  const auto K = spec.library.size();
  const bool classify = spec.loss == StackLoss::LogLoss;

  auto folds = random_folds(n, spec.v_folds, derive_seed(seed, 0xC0FFEE));
  std::vector<std::vector<std::size_t>> train(static_cast<std::size_t>(spec.v_folds)), test(static_cast<std::size_t>(spec.v_folds));
  for (std::size_t i = 0; i < n; ++i)
    for (int v = 0; v < spec.v_folds; ++v) (folds[i] == v ? test : train)[static_cast<std::size_t>(v)].push_back(i);

  Eigen::MatrixXd oof(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K));
  const std::size_t jobs = K * static_cast<std::size_t>(spec.v_folds);
  parallel_for(jobs, [&](std::size_t job) {
    const auto k = job / static_cast<std::size_t>(spec.v_folds);
    const auto v = job % static_cast<std::size_t>(spec.v_folds);
    const auto& tr = train[v];
    const auto& te = test[v];
    auto Xtr = X.take_rows(tr);
    auto ytr = take<double>(y, tr);
    auto wtr = take<double>(std::span<const double>(w), tr);
    auto model = fit(spec.library[k], Xtr, ytr, wtr, derive_seed(seed, k + 1, v + 1));
    auto pred = model.predict(X.take_rows(te));
    for (std::size_t r = 0; r < te.size(); ++r) {
      double p = pred[r];
      if (classify) p = std::clamp(p, spec.p_min, 1.0 - spec.p_min);
      oof(static_cast<Eigen::Index>(te[r]), static_cast<Eigen::Index>(k)) = p;
    }
  });

  LearnerSummary summary;
  summary.kind = LearnerKind::Ensemble;
  const double sumw = std::accumulate(w.begin(), w.end(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double l = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      l += w[i] * detail::pointwise_loss(spec.loss, y[i], oof(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)), spec.p_min);
    summary.cv_losses.push_back(l / sumw);
    summary.members.push_back(spec.library[k].kind);
  }
  const auto best = static_cast<std::size_t>(std::min_element(summary.cv_losses.begin(), summary.cv_losses.end()) - summary.cv_losses.begin());
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
  if (spec.weighting == StackWeighting::DiscreteSelect) alpha(static_cast<Eigen::Index>(best)) = 1.0;
  else alpha = detail::solve_convex_stack(oof, y, w, spec.loss, spec.p_min, best);
  summary.weights.assign(alpha.data(), alpha.data() + alpha.size());
  {
    Eigen::VectorXd pred = oof * alpha;
    double l = 0.0;
    for (std::size_t i = 0; i < n; ++i) l += w[i] * detail::pointwise_loss(spec.loss, y[i], pred(static_cast<Eigen::Index>(i)), spec.p_min);
    summary.ensemble_cv_loss = l / sumw;
  }

  std::vector<FittedLearner> members(K);
  parallel_for(K, [&](std::size_t k) {
    if (summary.weights[k] > 0.0) members[k] = fit(spec.library[k], X, y, w, derive_seed(seed, k + 1));
  });
  for (std::size_t k = 0; k < K; ++k) {
    LearnerSummary unused;
    unused.kind = spec.library[k].kind;
    summary.member_summaries.push_back(summary.weights[k] > 0.0 ? members[k].summary() : unused);
  }

  LearnerSpec tag;
  tag.kind = LearnerKind::Ensemble;
  FittedLearner out(tag, X.names, std::make_shared<detail::EnsembleModel>(std::move(members), summary.weights, classify, spec.p_min),
                    summary);
  out.set_classifier(classify);
  return out;
}

struct ImportanceScore {
  std::string feature;
  double score = 0.0;  // mean loss increase over repeats
  double se = 0.0;
  double baseline_loss = 0.0;
};

// Mean increase in loss when one feature column is randomly permuted.
inline ImportanceScore permutation_importance(const FittedLearner& fitted, const FeatureMatrix& X, std::span<const double> y,
                                              const std::string& feature, int repeats, std::uint64_t seed) {
  auto it = std::find(X.names.begin(), X.names.end(), feature);
  if (it == X.names.end()) throw DomainError("permutation_importance: unknown feature '" + feature + "'");
  if (repeats < 1) throw DomainError("permutation_importance: repeats must be positive");
  const auto j = static_cast<Eigen::Index>(it - X.names.begin());
  const auto loss = fitted.is_classifier() ? StackLoss::LogLoss : StackLoss::SquaredError;
  auto mean_loss = [&](const std::vector<double>& pred) {
    double l = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) l += detail::pointwise_loss(loss, y[i], pred[i], 1e-12);
    return l / static_cast<double>(y.size());
  };
  ImportanceScore out;
  out.feature = feature;
  out.baseline_loss = mean_loss(fitted.predict(X));
  std::vector<double> diffs;
  FeatureMatrix shuffled = X;
  for (int r = 0; r < repeats; ++r) {
    auto perm = random_permutation(static_cast<std::size_t>(X.rows()), derive_seed(seed, static_cast<std::uint64_t>(r)));
    for (Eigen::Index i = 0; i < X.rows(); ++i) shuffled.values(i, j) = X.values(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]), j);
    diffs.push_back(mean_loss(fitted.predict(shuffled)) - out.baseline_loss);
  }
  const double m = std::accumulate(diffs.begin(), diffs.end(), 0.0) / repeats;
  double v = 0.0;
  for (double d : diffs) v += (d - m) * (d - m);
  out.score = m;
  out.se = repeats > 1 ? std::sqrt(v / (repeats - 1) / repeats) : 0.0;
  return out;
}

}  // namespace mtp
