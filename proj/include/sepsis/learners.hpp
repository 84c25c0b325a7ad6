#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sepsis/cohort.hpp"
#include "sepsis/tree.hpp"

namespace sepsis {

enum class ModelKind : std::uint8_t {
  logistic_regression,
  linear_svc,
  random_forest,
  gradient_boosting,
  hist_gradient_boosting,
};

inline constexpr std::array<ModelKind, 5> kAllModelKinds = {
    ModelKind::logistic_regression, ModelKind::linear_svc, ModelKind::random_forest,
    ModelKind::gradient_boosting, ModelKind::hist_gradient_boosting};

std::string_view to_string(ModelKind k);  // "LR", "SVC", "RF", "GB", "HistGB"
ModelKind model_kind_from_string(std::string_view s);
bool is_tree_kind(ModelKind k);

enum class Scaling : std::uint8_t { none, z_normalize };

struct FeatureStats {
  double mean = 0.0;
  double sd = 0.0;
};

// Train-set scaling statistics, captured once at fit time and replayed on
// every later transform. Constant features carry sd 0 and map to 0.
struct PreprocessRecipe {
  Scaling scaling = Scaling::none;
  std::vector<FeatureStats> stats;

  static PreprocessRecipe fit(Scaling scaling, const CohortMatrix& train);
  void transform_row(std::span<const double> in, std::span<double> out) const;
  CohortMatrix transform(const CohortMatrix& m) const;
};

struct HyperParams {
  // linear models
  double l2_strength = 1.0;
  int max_iters = 1000;
  double tol = 1e-6;
  // ensembles
  int n_trees = 100;
  double learning_rate = 0.1;
  int max_depth = 3;        // 0 = unlimited
  int min_leaf = 1;
  int feature_subsample = 0;  // per-split feature count for RF; 0 = sqrt(d)
  bool bootstrap = true;      // RF only
  int n_bins = 255;           // HistGB only
  int max_leaves = 0;         // 0 = unlimited

  static HyperParams defaults_for(ModelKind kind);
  void validate(ModelKind kind) const;
};

struct TrainedModel {
  ModelKind kind = ModelKind::logistic_regression;
  PreprocessRecipe recipe;
  HyperParams hp;
  std::vector<std::string> feature_names;
  std::uint64_t train_seed = 0;
  bool converged = true;

  // linear parameter block
  std::vector<double> weights;
  double intercept = 0.0;

  // ensemble parameter block; raw output = base_score + sum of tree payouts
  std::vector<Tree> trees;
  double base_score = 0.0;

  bool is_tree_model() const { return is_tree_kind(kind); }
  std::size_t n_features() const { return feature_names.size(); }
};

// Score threshold separating the classes: 0.5 for probability outputs,
// 0 for the SVC margin. Ties go to the positive class.
double default_threshold(ModelKind k);

TrainedModel fit(ModelKind kind, const CohortMatrix& train, const HyperParams& hp,
                 std::uint64_t seed);

// Higher score = higher predicted probability of class 1. LR returns sigmoid
// probabilities, SVC the signed margin, ensembles probability estimates.
std::vector<double> predict_score(const TrainedModel& model, const CohortMatrix& rows);
double predict_score(const TrainedModel& model, std::span<const double> row);

// The pre-link output tree_shap explains: margin for linear/boosted models,
// summed leaf fraction (probability) for RF.
double predict_raw(const TrainedModel& model, std::span<const double> row);

std::vector<int> predict_label(const TrainedModel& model, const CohortMatrix& rows,
                               std::optional<double> threshold = std::nullopt);

// Versioned binary container, magic "SEPM". Round-trips bit-exactly.
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

// Quantile bin edges for histogram-based split search. A feature with at
// most n_bins distinct values gets one bin per distinct value.
std::vector<double> histogram_bin_column(std::span<const double> values, int n_bins);
std::vector<std::vector<double>> histogram_bin(const CohortMatrix& train, int n_bins);

// L2-regularized mean log-loss and its analytic gradient, the objective
// minimized by the LR trainer. X is row-major n x d, y in {0,1}.
double logistic_objective(std::span<const double> X, std::size_t n, std::size_t d,
                          std::span<const int> y, std::span<const double> w, double b, double l2);
void logistic_gradient(std::span<const double> X, std::size_t n, std::size_t d,
                       std::span<const int> y, std::span<const double> w, double b, double l2,
                       std::span<double> grad_w, double& grad_b);

// L2-regularized mean hinge loss (SVC trainer objective).
double hinge_objective(std::span<const double> X, std::size_t n, std::size_t d,
                       std::span<const int> y, std::span<const double> w, double b, double l2);

double sigmoid(double z);

}  // namespace sepsis
