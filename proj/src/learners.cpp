#include "sepsis/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sepsis/errors.hpp"
#include "sepsis/rng.hpp"
#include "tree_grow.hpp"

namespace sepsis {

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::logistic_regression: return "LR";
    case ModelKind::linear_svc: return "SVC";
    case ModelKind::random_forest: return "RF";
    case ModelKind::gradient_boosting: return "GB";
    default: return "HistGB";
  }
}

ModelKind model_kind_from_string(std::string_view s) {
  if (s == "LR" || s == "LogisticRegression") return ModelKind::logistic_regression;
  if (s == "SVC" || s == "LinearSVC") return ModelKind::linear_svc;
  if (s == "RF" || s == "RandomForest") return ModelKind::random_forest;
  if (s == "GB" || s == "GradientBoosting") return ModelKind::gradient_boosting;
  if (s == "HistGB" || s == "HistGradientBoosting") return ModelKind::hist_gradient_boosting;
  throw ConfigError("unknown model kind: '" + std::string(s) + "'");
}

bool is_tree_kind(ModelKind k) {
  return k == ModelKind::random_forest || k == ModelKind::gradient_boosting ||
         k == ModelKind::hist_gradient_boosting;
}

double default_threshold(ModelKind k) { return k == ModelKind::linear_svc ? 0.0 : 0.5; }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

PreprocessRecipe PreprocessRecipe::fit(Scaling scaling, const CohortMatrix& train) {
  PreprocessRecipe r;
  r.scaling = scaling;
  if (scaling == Scaling::none) return r;
  r.stats.resize(train.n_cols);
  const auto n = static_cast<double>(train.n_rows);
  for (std::size_t j = 0; j < train.n_cols; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < train.n_rows; ++i) sum += train.at(i, j);
    const double mean = sum / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < train.n_rows; ++i) {
      const double d = train.at(i, j) - mean;
      ss += d * d;
    }
    const double var = ss / n;
    r.stats[j] = {mean, var > 0.0 ? std::sqrt(var) : 0.0};
  }
  return r;
}

void PreprocessRecipe::transform_row(std::span<const double> in, std::span<double> out) const {
  if (scaling == Scaling::none) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  for (std::size_t j = 0; j < in.size(); ++j) {
    const auto& s = stats[j];
    out[j] = s.sd > 0.0 ? (in[j] - s.mean) / s.sd : 0.0;
  }
}

CohortMatrix PreprocessRecipe::transform(const CohortMatrix& m) const {
  CohortMatrix out = m;
  if (scaling == Scaling::none) return out;
  if (stats.size() != m.n_cols) {
    throw ValidationError("recipe was fitted on a different feature count");
  }
  for (std::size_t i = 0; i < m.n_rows; ++i) {
    std::span<double> row{out.data.data() + i * out.n_cols, out.n_cols};
    transform_row(m.row(i), row);
  }
  return out;
}

HyperParams HyperParams::defaults_for(ModelKind kind) {
  HyperParams hp;
  switch (kind) {
    case ModelKind::logistic_regression:
    case ModelKind::linear_svc:
      break;
    case ModelKind::random_forest:
      hp.max_depth = 0;
      break;
    case ModelKind::gradient_boosting:
      hp.max_depth = 3;
      break;
    case ModelKind::hist_gradient_boosting:
      hp.max_depth = 0;
      hp.max_leaves = 31;
      hp.min_leaf = 20;
      break;
  }
  return hp;
}

void HyperParams::validate(ModelKind kind) const {
  if (l2_strength <= 0.0) throw ConfigError("l2_strength must be positive");
  if (max_iters <= 0) throw ConfigError("max_iters must be positive");
  if (tol <= 0.0) throw ConfigError("tol must be positive");
  if (n_trees <= 0) throw ConfigError("n_trees must be positive");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (max_depth < 0) throw ConfigError("max_depth must be >= 0 (0 = unlimited)");
  if (min_leaf <= 0) throw ConfigError("min_leaf must be positive");
  if (feature_subsample < 0) throw ConfigError("feature_subsample must be >= 0");
  if (max_leaves < 0) throw ConfigError("max_leaves must be >= 0 (0 = unlimited)");
  if (kind == ModelKind::hist_gradient_boosting && (n_bins < 2 || n_bins > 255)) {
    throw ConfigError("n_bins must lie in [2, 255]");
  }
}

double logistic_objective(std::span<const double> X, std::size_t n, std::size_t d,
                          std::span<const int> y, std::span<const double> w, double b,
                          double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += X[i * d + j] * w[j];
    // log(1 + e^z) - y z, computed stably on both tails
    if (z > 0.0) {
      loss += (1.0 - y[i]) * z + std::log1p(std::exp(-z));
    } else {
      loss += -y[i] * z + std::log1p(std::exp(z));
    }
  }
  double reg = 0.0;
  for (double wj : w) reg += wj * wj;
  const auto dn = static_cast<double>(n);
  return loss / dn + 0.5 * l2 * reg / dn;
}

void logistic_gradient(std::span<const double> X, std::size_t n, std::size_t d,
                       std::span<const int> y, std::span<const double> w, double b, double l2,
                       std::span<double> grad_w, double& grad_b) {
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  grad_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += X[i * d + j] * w[j];
    const double residual = sigmoid(z) - y[i];
    for (std::size_t j = 0; j < d; ++j) grad_w[j] += residual * X[i * d + j];
    grad_b += residual;
  }
  const auto dn = static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) grad_w[j] = grad_w[j] / dn + l2 * w[j] / dn;
  grad_b /= dn;
}

double hinge_objective(std::span<const double> X, std::size_t n, std::size_t d,
                       std::span<const int> y, std::span<const double> w, double b, double l2) {
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += X[i * d + j] * w[j];
    const double ys = y[i] ? 1.0 : -1.0;
    loss += std::max(0.0, 1.0 - ys * z);
  }
  double reg = 0.0;
  for (double wj : w) reg += wj * wj;
  const auto dn = static_cast<double>(n);
  return loss / dn + 0.5 * l2 * reg / dn;
}

namespace {

void hinge_subgradient(std::span<const double> X, std::size_t n, std::size_t d,
                       std::span<const int> y, std::span<const double> w, double b, double l2,
                       std::span<double> grad_w, double& grad_b) {
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  grad_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += X[i * d + j] * w[j];
    const double ys = y[i] ? 1.0 : -1.0;
    if (ys * z < 1.0) {
      for (std::size_t j = 0; j < d; ++j) grad_w[j] -= ys * X[i * d + j];
      grad_b -= ys;
    }
  }
  const auto dn = static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) grad_w[j] = grad_w[j] / dn + l2 * w[j] / dn;
  grad_b /= dn;
}

// Full-batch descent with a backtracking step; steps that fail to decrease
// the objective are rejected, so the recorded objective sequence is
// nonincreasing by construction. Shared by the LR and SVC trainers.
template <typename ObjectiveFn, typename GradientFn>
bool descend(std::vector<double>& w, double& b, int max_iters, double tol,
             ObjectiveFn objective, GradientFn gradient) {
  const std::size_t d = w.size();
  std::vector<double> grad_w(d);
  std::vector<double> trial_w(d);
  double grad_b = 0.0;
  double step = 1.0;
  double current = objective(w, b);

  for (int iter = 0; iter < max_iters; ++iter) {
    gradient(w, b, grad_w, grad_b);
    double grad_inf = std::abs(grad_b);
    double grad_sq = grad_b * grad_b;
    for (double gj : grad_w) {
      grad_inf = std::max(grad_inf, std::abs(gj));
      grad_sq += gj * gj;
    }
    if (grad_inf <= tol) return true;

    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      for (std::size_t j = 0; j < d; ++j) trial_w[j] = w[j] - step * grad_w[j];
      const double trial_b = b - step * grad_b;
      const double trial = objective(trial_w, trial_b);
      if (trial <= current - 1e-4 * step * grad_sq) {
        w = trial_w;
        b = trial_b;
        current = trial;
        step *= 2.0;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // step underflowed; no descent direction left at this scale
      return grad_inf <= tol * 10.0;
    }
  }
  return false;
}

void check_finite(const CohortMatrix& m) {
  for (double v : m.data) {
    if (!std::isfinite(v)) throw ValidationError("fit: non-finite feature value");
  }
}

TrainedModel fit_linear(ModelKind kind, const CohortMatrix& train, const HyperParams& hp,
                        std::uint64_t seed) {
  TrainedModel model;
  model.kind = kind;
  model.hp = hp;
  model.feature_names = train.feature_names;
  model.train_seed = seed;
  model.recipe = PreprocessRecipe::fit(Scaling::z_normalize, train);

  const CohortMatrix X = model.recipe.transform(train);
  const std::size_t n = X.n_rows;
  const std::size_t d = X.n_cols;
  model.weights.assign(d, 0.0);

  if (kind == ModelKind::logistic_regression) {
    model.converged = descend(
        model.weights, model.intercept, hp.max_iters, hp.tol,
        [&](const std::vector<double>& w, double b) {
          return logistic_objective(X.data, n, d, X.labels, w, b, hp.l2_strength);
        },
        [&](const std::vector<double>& w, double b, std::span<double> gw, double& gb) {
          logistic_gradient(X.data, n, d, X.labels, w, b, hp.l2_strength, gw, gb);
        });
  } else {
    model.converged = descend(
        model.weights, model.intercept, hp.max_iters, hp.tol,
        [&](const std::vector<double>& w, double b) {
          return hinge_objective(X.data, n, d, X.labels, w, b, hp.l2_strength);
        },
        [&](const std::vector<double>& w, double b, std::span<double> gw, double& gb) {
          hinge_subgradient(X.data, n, d, X.labels, w, b, hp.l2_strength, gw, gb);
        });
  }
  return model;
}

TrainedModel fit_random_forest(const CohortMatrix& train, const HyperParams& hp,
                               std::uint64_t seed) {
  TrainedModel model;
  model.kind = ModelKind::random_forest;
  model.hp = hp;
  model.feature_names = train.feature_names;
  model.train_seed = seed;
  model.recipe.scaling = Scaling::none;

  const auto X = detail::to_columns(train.data, train.n_rows, train.n_cols);
  detail::GiniParams params;
  params.max_depth = hp.max_depth;
  params.min_leaf = hp.min_leaf;
  params.max_leaves = hp.max_leaves;
  params.feature_subsample =
      hp.feature_subsample > 0
          ? hp.feature_subsample
          : std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(train.n_cols)))));

  Rng master(hash_tag(seed, "rf"));
  model.trees.reserve(hp.n_trees);
  const double tree_weight = 1.0 / static_cast<double>(hp.n_trees);
  for (int t = 0; t < hp.n_trees; ++t) {
    Rng rng = master.fork(static_cast<std::uint64_t>(t));
    std::vector<std::size_t> rows(train.n_rows);
    if (hp.bootstrap) {
      for (auto& r : rows) r = static_cast<std::size_t>(rng.uniform_int(train.n_rows));
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    Tree tree = detail::grow_gini_tree(X, train.labels, std::move(rows), params, rng);
    for (std::size_t i = 0; i < tree.n_nodes(); ++i) {
      if (tree.is_leaf(static_cast<int>(i))) tree.value[i] *= tree_weight;
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

TrainedModel fit_boosted(ModelKind kind, const CohortMatrix& train, const HyperParams& hp,
                         std::uint64_t seed) {
  TrainedModel model;
  model.kind = kind;
  model.hp = hp;
  model.feature_names = train.feature_names;
  model.train_seed = seed;
  model.recipe.scaling = Scaling::none;

  const std::size_t n = train.n_rows;
  const auto X = detail::to_columns(train.data, n, train.n_cols);
  detail::BinnedMatrix binned;
  const bool hist = kind == ModelKind::hist_gradient_boosting;
  if (hist) binned = detail::bin_matrix(X, hp.n_bins);

  detail::GrowParams params;
  params.max_depth = hp.max_depth;
  params.min_leaf = hp.min_leaf;
  params.max_leaves = hp.max_leaves;

  double mean_y = 0.0;
  for (int y : train.labels) mean_y += y;
  mean_y /= static_cast<double>(n);
  const double p0 = std::clamp(mean_y, 1e-12, 1.0 - 1e-12);
  model.base_score = std::log(p0 / (1.0 - p0));

  std::vector<double> margin(n, model.base_score);
  std::vector<double> g(n), h(n);
  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0);

  model.trees.reserve(hp.n_trees);
  for (int t = 0; t < hp.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      g[i] = p - train.labels[i];
      h[i] = p * (1.0 - p);
    }
    Tree tree = hist ? detail::grow_grad_tree_hist(binned, g, h, all_rows, params)
                     : detail::grow_grad_tree_exact(X, g, h, all_rows, params);
    for (std::size_t i = 0; i < tree.n_nodes(); ++i) {
      if (tree.is_leaf(static_cast<int>(i))) tree.value[i] *= hp.learning_rate;
    }
    for (std::size_t i = 0; i < n; ++i) margin[i] += tree.predict(train.row(i));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace

TrainedModel fit(ModelKind kind, const CohortMatrix& train, const HyperParams& hp,
                 std::uint64_t seed) {
  hp.validate(kind);
  if (train.n_rows == 0) throw ValidationError("fit: empty training matrix");
  if (train.class_count(0) == 0 || train.class_count(1) == 0) {
    throw ValidationError("fit: training data must contain both classes");
  }
  check_finite(train);

  switch (kind) {
    case ModelKind::logistic_regression:
    case ModelKind::linear_svc:
      return fit_linear(kind, train, hp, seed);
    case ModelKind::random_forest:
      return fit_random_forest(train, hp, seed);
    default:
      return fit_boosted(kind, train, hp, seed);
  }
}

double predict_raw(const TrainedModel& model, std::span<const double> row) {
  if (row.size() != model.n_features()) {
    throw ValidationError("predict: row has " + std::to_string(row.size()) +
                          " features, model expects " + std::to_string(model.n_features()));
  }
  if (model.is_tree_model()) {
    double sum = model.kind == ModelKind::random_forest ? 0.0 : model.base_score;
    for (const auto& tree : model.trees) sum += tree.predict(row);
    return sum;
  }
  std::vector<double> transformed(row.size());
  model.recipe.transform_row(row, transformed);
  double z = model.intercept;
  for (std::size_t j = 0; j < transformed.size(); ++j) z += model.weights[j] * transformed[j];
  return z;
}

double predict_score(const TrainedModel& model, std::span<const double> row) {
  const double raw = predict_raw(model, row);
  switch (model.kind) {
    case ModelKind::linear_svc:
    case ModelKind::random_forest:
      return raw;
    default:
      return sigmoid(raw);
  }
}

std::vector<double> predict_score(const TrainedModel& model, const CohortMatrix& rows) {
  if (rows.n_cols != model.n_features()) {
    throw ValidationError("predict: matrix has " + std::to_string(rows.n_cols) +
                          " features, model expects " + std::to_string(model.n_features()));
  }
  std::vector<double> scores(rows.n_rows);
  for (std::size_t i = 0; i < rows.n_rows; ++i) scores[i] = predict_score(model, rows.row(i));
  return scores;
}

std::vector<int> predict_label(const TrainedModel& model, const CohortMatrix& rows,
                               std::optional<double> threshold) {
  const double thr = threshold.value_or(default_threshold(model.kind));
  const auto scores = predict_score(model, rows);
  std::vector<int> labels(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) labels[i] = scores[i] >= thr ? 1 : 0;
  return labels;
}

std::vector<double> histogram_bin_column(std::span<const double> values, int n_bins) {
  if (n_bins < 2) throw ValidationError("histogram_bin: n_bins must be >= 2");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct;
  for (double v : sorted) {
    if (distinct.empty() || v > distinct.back()) distinct.push_back(v);
  }
  std::vector<double> edges;
  if (distinct.size() <= 1) return edges;

  if (distinct.size() <= static_cast<std::size_t>(n_bins)) {
    // one bin per distinct value
    edges.reserve(distinct.size() - 1);
    for (std::size_t i = 1; i < distinct.size(); ++i) {
      edges.push_back(0.5 * (distinct[i - 1] + distinct[i]));
    }
  } else {
    // quantile edges, midpoint interpolation
    const auto n = sorted.size();
    for (int k = 1; k < n_bins; ++k) {
      const double pos = static_cast<double>(k) / n_bins * static_cast<double>(n - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = static_cast<std::size_t>(std::ceil(pos));
      edges.push_back(0.5 * (sorted[lo] + sorted[hi]));
    }
  }
  // keep strictly increasing
  std::vector<double> unique_edges;
  for (double e : edges) {
    if (unique_edges.empty() || e > unique_edges.back()) unique_edges.push_back(e);
  }
  return unique_edges;
}

std::vector<std::vector<double>> histogram_bin(const CohortMatrix& train, int n_bins) {
  std::vector<std::vector<double>> out(train.n_cols);
  std::vector<double> column(train.n_rows);
  for (std::size_t j = 0; j < train.n_cols; ++j) {
    for (std::size_t i = 0; i < train.n_rows; ++i) column[i] = train.at(i, j);
    out[j] = histogram_bin_column(column, n_bins);
  }
  return out;
}

}  // namespace sepsis
