#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sepsis/learners.hpp"
#include "sepsis/metrics.hpp"

namespace sepsis {

enum class AttributionMethod : std::uint8_t {
  tree_shap,
  coef_magnitude,
  permutation,
  gini_importance,
};

std::string_view to_string(AttributionMethod m);

// Per-instance signed attributions (tree_shap, n_rows x n_features) or a
// global importance vector (1 x n_features, base_value 0).
struct AttributionSet {
  AttributionMethod method = AttributionMethod::tree_shap;
  double base_value = 0.0;
  std::vector<std::string> feature_names;
  std::vector<std::string> row_ids;  // instance-level methods only
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> values;  // row-major

  bool instance_level() const { return method == AttributionMethod::tree_shap; }
  double at(std::size_t i, std::size_t j) const { return values[i * n_cols + j]; }
};

// Exact path-dependent Shapley values over the ensemble's trees, using the
// training covers recorded at fit time as the conditional background.
// Attributions live in the space where the ensemble sums: log-odds for
// boosted models, probability for RF; base_value + sum(phi) reproduces
// predict_raw for every row. Rows may be attributed in parallel.
AttributionSet tree_shap(const TrainedModel& model, const CohortMatrix& rows, int n_threads = 1);

// |standardized coefficient| per feature; requires an LR model.
AttributionSet coef_importance(const TrainedModel& model);

// Mean AUC drop over seeded column permutations.
AttributionSet permutation_importance(const TrainedModel& model, const CohortMatrix& test,
                                      int n_repeats, std::uint64_t seed);

// Recorded split gains summed per feature, normalized to sum to 1.
AttributionSet gini_importance(const TrainedModel& model);

struct ShapSummaryRow {
  std::string feature;
  double mean_abs_phi = 0.0;
  double sign_correlation = 0.0;  // Pearson(feature value, phi)
};

// Features ranked by mean |phi| descending (ties alphabetical). `rows` must
// be the matrix the attributions were computed on.
std::vector<ShapSummaryRow> shap_summary(const AttributionSet& attributions,
                                         const CohortMatrix& rows, std::size_t top_k);

struct RankedImportance {
  std::string feature;
  double score = 0.0;
};

// Global-method ranking (descending, ties alphabetical).
std::vector<RankedImportance> ranked_importance(const AttributionSet& attributions);

void write_attribution_csv(const AttributionSet& attr, const std::filesystem::path& path);
void write_shap_summary_csv(const std::vector<ShapSummaryRow>& summary,
                            const std::filesystem::path& path);
void write_importance_csv(const std::vector<RankedImportance>& ranking,
                          const std::filesystem::path& path);

}  // namespace sepsis
