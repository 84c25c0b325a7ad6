#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sepsis/comorbidity.hpp"
#include "sepsis/domain.hpp"

namespace sepsis {

struct LabSpec {
  std::string name;
  double presence_fraction = 0.0;
  double lo = 0.0;  // plausible value range; plumbing, not clinical truth
  double hi = 1.0;
};

// Log-odds contribution of a feature to the death outcome. `feature` is
// "age", a comorbidity flag ("cmb_<Category>") or a lab test name.
struct SignalTerm {
  std::string feature;
  double effect = 0.0;
};

// Shape parameters for the generated cohort. Defaults target the published
// descriptive statistics: age centred near 77, balanced sexes, right-skewed
// stays, lab presence fractions from the frequency table.
struct SynthConfig {
  std::size_t n_records = 12286;
  double age_mean = 77.0;
  double age_sd = 12.0;
  double sex_balance = 0.5;  // fraction female
  double stay_log_mean = 2.2;
  double stay_log_sd = 0.7;
  std::vector<LabSpec> lab_frequencies;  // empty -> default_lab_table()
  // order: deceased, recovered, improved, worsened
  std::array<double, 4> outcome_mix = {0.52, 0.12, 0.28, 0.08};
  std::vector<SignalTerm> signal_spec;
  bool panel_grouping = false;  // sample hemogram tests jointly
  std::uint64_t seed = 0;

  void validate() const;
};

// The 50 registry tests with their published presence fractions.
const std::vector<LabSpec>& default_lab_table();

std::vector<Hospitalization> generate(const SynthConfig& config);

// Redraws outcomes so records carrying the category have their death odds
// multiplied, keeping the marginal outcome mix fixed. Errors when no record
// carries the category.
std::vector<Hospitalization> inject_comorbidity_signal(std::vector<Hospitalization> records,
                                                       ComorbidityCategory category,
                                                       double odds_multiplier,
                                                       std::uint64_t seed);

struct CohortPaths {
  std::filesystem::path hospitalizations;
  std::filesystem::path labs;
  std::filesystem::path diagnoses;
};

// Emits the three ingestion CSVs into `dir`.
CohortPaths write_cohort_csvs(std::span<const Hospitalization> records,
                              const std::filesystem::path& dir);

}  // namespace sepsis
