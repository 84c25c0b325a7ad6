#include "sepsis/explain.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "sepsis/csv.hpp"
#include "sepsis/errors.hpp"
#include "sepsis/rng.hpp"

namespace sepsis {

std::string_view to_string(AttributionMethod m) {
  switch (m) {
    case AttributionMethod::tree_shap: return "tree_shap";
    case AttributionMethod::coef_magnitude: return "coef_magnitude";
    case AttributionMethod::permutation: return "permutation";
    default: return "gini_importance";
  }
}

namespace {

// Decision-path bookkeeping for the per-tree Shapley recursion. Each element
// tracks one unique feature on the path: the fraction of cover-weighted
// subtrees flowing through when the feature is out of the coalition
// (zero_fraction), whether the instance's own branch survives when it is in
// (one_fraction), and the permutation-weight polynomial (pweight).
struct PathElem {
  int feature_index = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(PathElem* path, unsigned depth, double zero_fraction, double one_fraction,
                 int feature_index) {
  path[depth] = {feature_index, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / static_cast<double>(depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(PathElem* path, unsigned depth, unsigned index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;

  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (depth + 1) / static_cast<double>((i + 1) * one_fraction);
      next_one_portion =
          tmp - path[i].pweight * zero_fraction * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[i].pweight =
          path[i].pweight * (depth + 1) / (zero_fraction * static_cast<double>(depth - i));
    }
  }
  for (unsigned i = index; i < depth; ++i) {
    path[i].feature_index = path[i + 1].feature_index;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

double unwound_path_sum(const PathElem* path, unsigned depth, unsigned index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  double total = 0.0;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp =
          next_one_portion * (depth + 1) / static_cast<double>((i + 1) * one_fraction);
      total += tmp;
      next_one_portion =
          path[i].pweight - tmp * zero_fraction * (depth - i) / static_cast<double>(depth + 1);
    } else if (zero_fraction != 0.0) {
      total += path[i].pweight / zero_fraction * (depth + 1) / static_cast<double>(depth - i);
    }
  }
  return total;
}

void shap_recurse(const Tree& t, std::span<const double> x, double* phi, int node,
                  unsigned unique_depth, PathElem* parent_unique_path,
                  double parent_zero_fraction, double parent_one_fraction,
                  int parent_feature_index) {
  PathElem* unique_path = parent_unique_path + unique_depth + 1;
  std::copy(parent_unique_path, parent_unique_path + unique_depth + 1, unique_path);
  extend_path(unique_path, unique_depth, parent_zero_fraction, parent_one_fraction,
              parent_feature_index);

  if (t.is_leaf(node)) {
    for (unsigned i = 1; i <= unique_depth; ++i) {
      const double w = unwound_path_sum(unique_path, unique_depth, i);
      const PathElem& el = unique_path[i];
      phi[el.feature_index] += w * (el.one_fraction - el.zero_fraction) * t.value[node];
    }
    return;
  }

  const int split = t.feature[node];
  const int hot = x[static_cast<std::size_t>(split)] <= t.threshold[node] ? t.left[node]
                                                                          : t.right[node];
  const int cold = hot == t.left[node] ? t.right[node] : t.left[node];
  const double node_cover = t.cover[node];
  if (node_cover <= 0.0) return;
  const double hot_zero_fraction = t.cover[hot] / node_cover;
  const double cold_zero_fraction = t.cover[cold] / node_cover;
  double incoming_zero_fraction = 1.0;
  double incoming_one_fraction = 1.0;

  // a feature met twice on the path folds into a single element
  unsigned path_index = 0;
  for (; path_index <= unique_depth; ++path_index) {
    if (unique_path[path_index].feature_index == split) break;
  }
  if (path_index != unique_depth + 1) {
    incoming_zero_fraction = unique_path[path_index].zero_fraction;
    incoming_one_fraction = unique_path[path_index].one_fraction;
    unwind_path(unique_path, unique_depth, path_index);
    unique_depth -= 1;
  }

  shap_recurse(t, x, phi, hot, unique_depth + 1, unique_path,
               hot_zero_fraction * incoming_zero_fraction, incoming_one_fraction, split);
  shap_recurse(t, x, phi, cold, unique_depth + 1, unique_path,
               cold_zero_fraction * incoming_zero_fraction, 0.0, split);
}

void shap_one_row(const TrainedModel& model, std::span<const double> row, double* phi,
                  std::vector<PathElem>& scratch) {
  for (const auto& tree : model.trees) {
    const int maxd = tree.max_depth() + 2;
    const std::size_t need = static_cast<std::size_t>((maxd + 1) * (maxd + 2)) / 2 + 4;
    if (scratch.size() < need) scratch.resize(need);
    shap_recurse(tree, row, phi, 0, 0, scratch.data(), 1.0, 1.0, -1);
  }
}

double model_base_value(const TrainedModel& model) {
  double base = model.kind == ModelKind::random_forest ? 0.0 : model.base_score;
  for (const auto& tree : model.trees) base += tree.expected_value();
  return base;
}

AttributionSet make_global(AttributionMethod method, const TrainedModel& model,
                           std::vector<double> values) {
  AttributionSet attr;
  attr.method = method;
  attr.feature_names = model.feature_names;
  attr.n_rows = 1;
  attr.n_cols = model.n_features();
  attr.values = std::move(values);
  return attr;
}

}  // namespace

AttributionSet tree_shap(const TrainedModel& model, const CohortMatrix& rows, int n_threads) {
  if (!model.is_tree_model()) {
    throw ValidationError("tree_shap requires a tree-ensemble model, got " +
                          std::string(to_string(model.kind)));
  }
  if (rows.n_cols != model.n_features()) {
    throw ValidationError("tree_shap: feature count mismatch");
  }

  AttributionSet attr;
  attr.method = AttributionMethod::tree_shap;
  attr.feature_names = model.feature_names;
  attr.row_ids = rows.row_ids;
  attr.n_rows = rows.n_rows;
  attr.n_cols = rows.n_cols;
  attr.values.assign(rows.n_rows * rows.n_cols, 0.0);
  attr.base_value = model_base_value(model);

  const int workers = std::max(1, n_threads);
  if (workers == 1 || rows.n_rows < 2) {
    std::vector<PathElem> scratch;
    for (std::size_t i = 0; i < rows.n_rows; ++i) {
      shap_one_row(model, rows.row(i), attr.values.data() + i * rows.n_cols, scratch);
    }
    return attr;
  }

  std::vector<std::thread> threads;
  std::atomic<std::size_t> next{0};
  for (int t = 0; t < workers; ++t) {
    threads.emplace_back([&] {
      std::vector<PathElem> scratch;
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= rows.n_rows) break;
        shap_one_row(model, rows.row(i), attr.values.data() + i * rows.n_cols, scratch);
      }
    });
  }
  for (auto& th : threads) th.join();
  return attr;
}

AttributionSet coef_importance(const TrainedModel& model) {
  if (model.kind != ModelKind::logistic_regression) {
    throw ValidationError("coef_importance requires a logistic regression model");
  }
  if (model.recipe.scaling != Scaling::z_normalize) {
    throw ValidationError("coef_importance requires a z-normalized recipe");
  }
  std::vector<double> values(model.weights.size());
  for (std::size_t j = 0; j < model.weights.size(); ++j) values[j] = std::abs(model.weights[j]);
  return make_global(AttributionMethod::coef_magnitude, model, std::move(values));
}

AttributionSet permutation_importance(const TrainedModel& model, const CohortMatrix& test,
                                      int n_repeats, std::uint64_t seed) {
  if (test.n_rows == 0) throw ValidationError("permutation_importance: empty test matrix");
  if (n_repeats <= 0) throw ValidationError("permutation_importance: n_repeats must be positive");
  const auto baseline_scores = predict_score(model, test);
  const double baseline = roc_auc(test.labels, baseline_scores);

  std::vector<double> values(test.n_cols, 0.0);
  CohortMatrix scratch = test;
  std::vector<std::size_t> perm(test.n_rows);
  for (std::size_t j = 0; j < test.n_cols; ++j) {
    double drop_sum = 0.0;
    for (int rep = 0; rep < n_repeats; ++rep) {
      Rng rng(hash_combine(hash_tag(seed, "permutation"), hash_combine(j, rep)));
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      for (std::size_t i = 0; i < test.n_rows; ++i) {
        scratch.at(i, j) = test.at(perm[i], j);
      }
      const auto scores = predict_score(model, scratch);
      drop_sum += baseline - roc_auc(test.labels, scores);
    }
    for (std::size_t i = 0; i < test.n_rows; ++i) scratch.at(i, j) = test.at(i, j);
    values[j] = drop_sum / n_repeats;
  }
  return make_global(AttributionMethod::permutation, model, std::move(values));
}

AttributionSet gini_importance(const TrainedModel& model) {
  if (!model.is_tree_model()) {
    throw ValidationError("gini_importance requires a tree-ensemble model");
  }
  std::vector<double> values(model.n_features(), 0.0);
  for (const auto& tree : model.trees) {
    for (std::size_t n = 0; n < tree.n_nodes(); ++n) {
      if (tree.feature[n] >= 0) values[static_cast<std::size_t>(tree.feature[n])] += tree.gain[n];
    }
  }
  const double total = std::accumulate(values.begin(), values.end(), 0.0);
  if (total > 0.0) {
    for (auto& v : values) v /= total;
  }
  return make_global(AttributionMethod::gini_importance, model, std::move(values));
}

std::vector<ShapSummaryRow> shap_summary(const AttributionSet& attributions,
                                         const CohortMatrix& rows, std::size_t top_k) {
  if (!attributions.instance_level()) {
    throw ValidationError("shap_summary needs instance-level attributions");
  }
  if (rows.n_rows != attributions.n_rows || rows.n_cols != attributions.n_cols) {
    throw ValidationError("shap_summary: attribution/matrix shape mismatch");
  }
  const std::size_t n = attributions.n_rows;
  const std::size_t d = attributions.n_cols;

  std::vector<ShapSummaryRow> summary(d);
  for (std::size_t j = 0; j < d; ++j) {
    double mean_abs = 0.0;
    double mx = 0.0, mp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean_abs += std::abs(attributions.at(i, j));
      mx += rows.at(i, j);
      mp += attributions.at(i, j);
    }
    mean_abs /= static_cast<double>(n);
    mx /= static_cast<double>(n);
    mp /= static_cast<double>(n);
    double sxx = 0.0, spp = 0.0, sxp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = rows.at(i, j) - mx;
      const double dp = attributions.at(i, j) - mp;
      sxx += dx * dx;
      spp += dp * dp;
      sxp += dx * dp;
    }
    const double denom = std::sqrt(sxx * spp);
    summary[j] = {attributions.feature_names[j], mean_abs, denom > 0.0 ? sxp / denom : 0.0};
  }
  std::sort(summary.begin(), summary.end(), [](const ShapSummaryRow& a, const ShapSummaryRow& b) {
    if (a.mean_abs_phi != b.mean_abs_phi) return a.mean_abs_phi > b.mean_abs_phi;
    return a.feature < b.feature;
  });
  if (summary.size() > top_k) summary.resize(top_k);
  return summary;
}

std::vector<RankedImportance> ranked_importance(const AttributionSet& attributions) {
  std::vector<RankedImportance> out;
  const std::size_t d = attributions.n_cols;
  out.reserve(d);
  for (std::size_t j = 0; j < d; ++j) {
    double score = 0.0;
    if (attributions.instance_level()) {
      for (std::size_t i = 0; i < attributions.n_rows; ++i) {
        score += std::abs(attributions.at(i, j));
      }
      score /= static_cast<double>(attributions.n_rows);
    } else {
      score = attributions.at(0, j);
    }
    out.push_back({attributions.feature_names[j], score});
  }
  std::sort(out.begin(), out.end(), [](const RankedImportance& a, const RankedImportance& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.feature < b.feature;
  });
  return out;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_attribution_csv(const AttributionSet& attr, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  if (attr.instance_level()) {
    rows.reserve(attr.n_rows * attr.n_cols);
    for (std::size_t i = 0; i < attr.n_rows; ++i) {
      for (std::size_t j = 0; j < attr.n_cols; ++j) {
        rows.push_back({attr.row_ids[i], attr.feature_names[j], fmt_double(attr.at(i, j))});
      }
    }
  } else {
    for (std::size_t j = 0; j < attr.n_cols; ++j) {
      rows.push_back({"GLOBAL", attr.feature_names[j], fmt_double(attr.at(0, j))});
    }
  }
  write_csv(path, {"row_id", "feature", "phi"}, rows);
}

void write_shap_summary_csv(const std::vector<ShapSummaryRow>& summary,
                            const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(summary.size());
  for (const auto& s : summary) {
    rows.push_back({s.feature, fmt_double(s.mean_abs_phi), fmt_double(s.sign_correlation)});
  }
  write_csv(path, {"feature", "mean_abs_phi", "sign_correlation"}, rows);
}

void write_importance_csv(const std::vector<RankedImportance>& ranking,
                          const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(ranking.size());
  for (const auto& r : ranking) {
    rows.push_back({r.feature, fmt_double(r.score)});
  }
  write_csv(path, {"feature", "importance"}, rows);
}

}  // namespace sepsis
