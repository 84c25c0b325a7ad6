#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sepsis/comorbidity.hpp"
#include "sepsis/domain.hpp"

namespace sepsis {

struct LabRegistryEntry {
  std::string test_name;
  std::size_t patient_count = 0;
  double patient_fraction = 0.0;
};

// Lab tests ranked by how many hospitalizations carry at least one result,
// descending; ties broken by name ascending.
struct LabRegistry {
  std::vector<LabRegistryEntry> ranked_tests;

  std::size_t size() const { return ranked_tests.size(); }
};

enum class Task : std::uint8_t {
  deceased_vs_discharged,
  deceased_vs_recovered,
  recovered_vs_ameliorated,
};

enum class Variant : std::uint8_t { base, extended };

std::string_view to_string(Task t);
std::string_view to_string(Variant v);           // "base" / "extended"
std::string_view variant_csv_label(Variant v);   // "nodiag" / "diag", the results-table vocabulary
Task task_from_string(std::string_view s);
Variant variant_from_string(std::string_view s);  // accepts both vocabularies

struct TaskSpec {
  Task task = Task::deceased_vs_discharged;
  Variant variant = Variant::base;
  int subset_size = 10;  // one of {10, 20, 30, 40, 50}

  void validate() const;
};

// Dense design matrix: row-major features, binary labels, stable row ids.
struct CohortMatrix {
  std::vector<std::string> feature_names;
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> data;  // n_rows * n_cols
  std::vector<int> labels;
  std::vector<std::string> row_ids;

  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * n_cols, n_cols};
  }
  double at(std::size_t i, std::size_t j) const { return data[i * n_cols + j]; }
  double& at(std::size_t i, std::size_t j) { return data[i * n_cols + j]; }
  std::size_t class_count(int label) const;
  CohortMatrix select_rows(std::span<const std::size_t> idx) const;
  void sort_by_row_id();

  void write_csv(const std::filesystem::path& path) const;  // header + label + row_id
  static CohortMatrix read_csv(const std::filesystem::path& path);
};

inline constexpr const char* kComorbidityFeaturePrefix = "cmb_";

LabRegistry rank_lab_tests(std::span<const Hospitalization> records);

// Fraction of records holding >= 1 result for every one of the top-n tests.
double coverage(std::span<const Hospitalization> records, const LabRegistry& registry, int n);

// Assembles the task matrix: full-coverage rows with a task-relevant outcome;
// features are [age, sex, origin_env] ++ per-test means ++ (extended only)
// comorbidity flags. Throws ValidationError("degenerate cohort...") when a
// class ends up with fewer than 2 rows.
CohortMatrix build_matrix(std::span<const Hospitalization> records, const LabRegistry& registry,
                          const TaskSpec& spec,
                          const CategoryTable& table = CategoryTable::standard());

// Equalizes class counts by discarding random majority rows; minority rows
// all survive. Output re-sorted by row_id.
CohortMatrix undersample(const CohortMatrix& matrix, std::uint64_t seed);

struct SplitResult {
  CohortMatrix train;
  CohortMatrix test;
};

// Per-class test counts = round(class_count * test_fraction).
SplitResult stratified_split(const CohortMatrix& matrix, double test_fraction,
                             std::uint64_t seed);

}  // namespace sepsis
