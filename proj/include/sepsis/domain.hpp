#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sepsis/dates.hpp"

namespace sepsis {

enum class Sex : std::uint8_t { female, male };
enum class OriginEnv : std::uint8_t { urban, rural, unknown };
enum class OutcomeLabel : std::uint8_t { deceased, recovered, improved, worsened };

std::string_view to_string(Sex s);
std::string_view to_string(OriginEnv e);
std::string_view to_string(OutcomeLabel o);
Sex sex_from_string(std::string_view s);
OriginEnv origin_env_from_string(std::string_view s);  // empty -> unknown
OutcomeLabel outcome_from_string(std::string_view s);

struct LabResult {
  std::string test_name;
  double value = 0.0;
  DateTime timestamp;
};

struct Icd10Code {
  enum class Rank : std::uint8_t { primary, secondary };
  std::string code;
  Rank rank = Rank::secondary;
};

// Leading uppercase letter, digits, optional ".digits" suffix.
bool icd10_pattern_ok(std::string_view code);

// One hospital admission with everything attached to it.
struct Hospitalization {
  std::string record_id;
  int patient_age = 0;
  Sex sex = Sex::female;
  OriginEnv origin_env = OriginEnv::unknown;
  Date admit_date;
  Date discharge_date;
  OutcomeLabel outcome = OutcomeLabel::improved;
  std::vector<Icd10Code> diagnoses;
  std::vector<LabResult> labs;

  std::int64_t stay_days() const { return discharge_date - admit_date; }
};

struct OrphanRow {
  std::string record_id;
  std::size_t line = 0;
};

struct IngestReport {
  std::vector<OrphanRow> orphan_labs;
  std::vector<OrphanRow> orphan_diagnoses;
  std::size_t lab_rows_attached = 0;
  std::size_t diag_rows_attached = 0;
};

struct IngestResult {
  std::vector<Hospitalization> records;  // sorted by record_id
  IngestReport report;
};

// Joins the three input files on record_id. Malformed rows raise IngestError
// with file:line; lab/diagnosis rows referencing an unknown record_id are
// collected as orphans instead.
IngestResult ingest_cohort(const std::filesystem::path& hosp_file,
                           const std::filesystem::path& labs_file,
                           const std::filesystem::path& diag_file);

struct ExclusionReport {
  std::size_t under_18 = 0;
  std::size_t single_day_stay = 0;
  std::size_t total() const { return under_18 + single_day_stay; }
};

struct FilterResult {
  std::vector<Hospitalization> kept;
  ExclusionReport excluded;
};

// Keeps records with age >= 18 and a stay of at least one full day.
// A record failing both criteria is counted once, under under_18.
FilterResult apply_inclusion_filters(std::vector<Hospitalization> records);

}  // namespace sepsis
