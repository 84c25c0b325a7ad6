#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sepsis/cohort.hpp"
#include "sepsis/explain.hpp"
#include "sepsis/metrics.hpp"
#include "sepsis/synth.hpp"

namespace sepsis {

struct ExperimentConfig {
  // data source: either the three csv paths or an inline synthetic cohort
  std::filesystem::path hosp_path;
  std::filesystem::path labs_path;
  std::filesystem::path diag_path;
  std::optional<SynthConfig> synth;

  std::vector<int> subset_sizes = {10, 20, 30, 40, 50};
  std::vector<Variant> variants = {Variant::base, Variant::extended};
  std::vector<Task> tasks = {Task::deceased_vs_discharged, Task::deceased_vs_recovered,
                             Task::recovered_vs_ameliorated};
  std::vector<ModelKind> models = {ModelKind::logistic_regression, ModelKind::linear_svc,
                                   ModelKind::random_forest, ModelKind::gradient_boosting,
                                   ModelKind::hist_gradient_boosting};
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  bool undersample = true;
  bool dump_matrices = false;  // write the per-combo design matrices for audit
  double test_fraction = 0.2;
  int jobs = 0;  // worker threads; 0 = hardware concurrency
  int shap_sample = 50;
  int permutation_repeats = 10;
  Average average = Average::weighted;
  std::vector<std::pair<ModelKind, HyperParams>> hyper_overrides;

  HyperParams hyperparams_for(ModelKind kind) const;
  void validate() const;
};

struct CellKey {
  Task task = Task::deceased_vs_discharged;
  Variant variant = Variant::base;
  int subset = 10;
  ModelKind model = ModelKind::logistic_regression;

  std::string slug() const;  // "<task>_<diag|nodiag>_<subset>_<model>"
};

// Derived per-cell seed; adding grid cells never perturbs existing ones.
std::uint64_t cell_seed(std::uint64_t master, const CellKey& key);

struct CellResult {
  CellKey key;
  bool ok = false;
  std::string error;
  EvalReport report;
  std::string model_path;
  std::string attribution_path;
  // kept in memory so emit_report can draw beeswarm plots for best models
  std::shared_ptr<AttributionSet> attributions;
  std::shared_ptr<CohortMatrix> attributed_rows;
};

struct GridResult {
  std::vector<CellResult> cells;

  std::size_t n_ok() const;
  std::size_t n_failed() const;
};

GridResult run_grid(const ExperimentConfig& config);

// Writes results.csv, skipped.csv, best_models.csv, one AUC-vs-subset SVG
// per task and one SHAP/importance summary SVG per best model.
void emit_report(const GridResult& results, const std::filesystem::path& output_dir);

// Rehydrates a GridResult from a previously written results.csv (+ optional
// skipped.csv) so reports can be re-emitted without re-running the grid.
GridResult load_grid_results(const std::filesystem::path& results_csv,
                             const std::filesystem::path& skipped_csv = {});

}  // namespace sepsis
