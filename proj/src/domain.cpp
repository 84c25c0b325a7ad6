#include "sepsis/domain.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <unordered_map>

#include "sepsis/csv.hpp"
#include "sepsis/errors.hpp"

namespace sepsis {

std::string_view to_string(Sex s) { return s == Sex::female ? "female" : "male"; }

std::string_view to_string(OriginEnv e) {
  switch (e) {
    case OriginEnv::urban: return "urban";
    case OriginEnv::rural: return "rural";
    default: return "unknown";
  }
}

std::string_view to_string(OutcomeLabel o) {
  switch (o) {
    case OutcomeLabel::deceased: return "deceased";
    case OutcomeLabel::recovered: return "recovered";
    case OutcomeLabel::improved: return "improved";
    default: return "worsened";
  }
}

Sex sex_from_string(std::string_view s) {
  if (s == "female") return Sex::female;
  if (s == "male") return Sex::male;
  throw ValidationError("unknown sex value: '" + std::string(s) + "'");
}

OriginEnv origin_env_from_string(std::string_view s) {
  if (s == "urban") return OriginEnv::urban;
  if (s == "rural") return OriginEnv::rural;
  if (s == "unknown" || s.empty()) return OriginEnv::unknown;
  throw ValidationError("unknown origin_env value: '" + std::string(s) + "'");
}

OutcomeLabel outcome_from_string(std::string_view s) {
  if (s == "deceased") return OutcomeLabel::deceased;
  if (s == "recovered") return OutcomeLabel::recovered;
  if (s == "improved") return OutcomeLabel::improved;
  if (s == "worsened") return OutcomeLabel::worsened;
  throw ValidationError("unknown outcome value: '" + std::string(s) + "'");
}

bool icd10_pattern_ok(std::string_view code) {
  if (code.size() < 2) return false;
  if (code[0] < 'A' || code[0] > 'Z') return false;
  std::size_t i = 1;
  std::size_t digits = 0;
  while (i < code.size() && code[i] >= '0' && code[i] <= '9') {
    ++i;
    ++digits;
  }
  if (digits == 0) return false;
  if (i == code.size()) return true;
  if (code[i] != '.') return false;
  ++i;
  if (i == code.size()) return false;
  for (; i < code.size(); ++i) {
    if (code[i] < '0' || code[i] > '9') return false;
  }
  return true;
}

namespace {

[[noreturn]] void row_error(const std::string& file, std::size_t line, const std::string& what) {
  throw IngestError(file + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& s, const std::string& file, std::size_t line,
                    const std::string& field) {
  double v = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    row_error(file, line, "field '" + field + "' is not a finite number: '" + s + "'");
  }
  return v;
}

int parse_age(const std::string& s, const std::string& file, std::size_t line) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) {
    row_error(file, line, "field 'age' is not a non-negative integer: '" + s + "'");
  }
  return v;
}

}  // namespace

IngestResult ingest_cohort(const std::filesystem::path& hosp_file,
                           const std::filesystem::path& labs_file,
                           const std::filesystem::path& diag_file) {
  const std::string hosp_label = hosp_file.filename().string();
  const std::string labs_label = labs_file.filename().string();
  const std::string diag_label = diag_file.filename().string();

  const CsvTable hosp = read_csv(hosp_file);
  const CsvTable labs = read_csv(labs_file);
  const CsvTable diag = read_csv(diag_file);

  const std::size_t h_id = hosp.column("record_id", hosp_label);
  const std::size_t h_age = hosp.column("age", hosp_label);
  const std::size_t h_sex = hosp.column("sex", hosp_label);
  const std::size_t h_env = hosp.column("origin_env", hosp_label);
  const std::size_t h_admit = hosp.column("admit_date", hosp_label);
  const std::size_t h_disch = hosp.column("discharge_date", hosp_label);
  const std::size_t h_outcome = hosp.column("outcome", hosp_label);

  IngestResult result;
  result.records.reserve(hosp.rows.size());
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(hosp.rows.size());

  for (const auto& row : hosp.rows) {
    if (row.fields.size() != hosp.header.size()) {
      row_error(hosp_label, row.line, "expected " + std::to_string(hosp.header.size()) +
                                          " fields, got " + std::to_string(row.fields.size()));
    }
    Hospitalization rec;
    rec.record_id = row.fields[h_id];
    if (rec.record_id.empty()) row_error(hosp_label, row.line, "empty record_id");
    rec.patient_age = parse_age(row.fields[h_age], hosp_label, row.line);
    try {
      rec.sex = sex_from_string(row.fields[h_sex]);
      rec.origin_env = origin_env_from_string(row.fields[h_env]);
      rec.admit_date = Date::parse(row.fields[h_admit]);
      rec.discharge_date = Date::parse(row.fields[h_disch]);
      rec.outcome = outcome_from_string(row.fields[h_outcome]);
    } catch (const ValidationError& e) {
      row_error(hosp_label, row.line, e.what());
    }
    if (rec.discharge_date.serial() < rec.admit_date.serial()) {
      row_error(hosp_label, row.line, "discharge_date precedes admit_date");
    }
    if (index.count(rec.record_id)) {
      row_error(hosp_label, row.line, "duplicate record_id '" + rec.record_id + "'");
    }
    index.emplace(rec.record_id, result.records.size());
    result.records.push_back(std::move(rec));
  }

  const std::size_t l_id = labs.column("record_id", labs_label);
  const std::size_t l_test = labs.column("test_name", labs_label);
  const std::size_t l_value = labs.column("value", labs_label);
  const std::size_t l_ts = labs.column("timestamp", labs_label);

  for (const auto& row : labs.rows) {
    if (row.fields.size() != labs.header.size()) {
      row_error(labs_label, row.line, "expected " + std::to_string(labs.header.size()) +
                                          " fields, got " + std::to_string(row.fields.size()));
    }
    const std::string& id = row.fields[l_id];
    const auto it = index.find(id);
    if (it == index.end()) {
      result.report.orphan_labs.push_back({id, row.line});
      continue;
    }
    LabResult lab;
    lab.test_name = row.fields[l_test];
    if (lab.test_name.empty()) row_error(labs_label, row.line, "empty test_name");
    lab.value = parse_double(row.fields[l_value], labs_label, row.line, "value");
    try {
      lab.timestamp = DateTime::parse(row.fields[l_ts]);
    } catch (const ValidationError& e) {
      row_error(labs_label, row.line, e.what());
    }
    Hospitalization& rec = result.records[it->second];
    const std::int64_t day = lab.timestamp.date.serial();
    if (day < rec.admit_date.serial() || day > rec.discharge_date.serial()) {
      row_error(labs_label, row.line,
                "timestamp outside hospitalization window of record '" + id + "'");
    }
    rec.labs.push_back(std::move(lab));
    ++result.report.lab_rows_attached;
  }

  const std::size_t d_id = diag.column("record_id", diag_label);
  const std::size_t d_code = diag.column("icd10_code", diag_label);
  const std::size_t d_rank = diag.column("rank", diag_label);

  for (const auto& row : diag.rows) {
    if (row.fields.size() != diag.header.size()) {
      row_error(diag_label, row.line, "expected " + std::to_string(diag.header.size()) +
                                          " fields, got " + std::to_string(row.fields.size()));
    }
    const std::string& id = row.fields[d_id];
    const auto it = index.find(id);
    if (it == index.end()) {
      result.report.orphan_diagnoses.push_back({id, row.line});
      continue;
    }
    Icd10Code code;
    code.code = row.fields[d_code];
    if (!icd10_pattern_ok(code.code)) {
      row_error(diag_label, row.line, "malformed ICD-10 code: '" + code.code + "'");
    }
    const std::string& rank = row.fields[d_rank];
    if (rank == "primary") {
      code.rank = Icd10Code::Rank::primary;
    } else if (rank == "secondary") {
      code.rank = Icd10Code::Rank::secondary;
    } else {
      row_error(diag_label, row.line, "unknown rank value: '" + rank + "'");
    }
    result.records[it->second].diagnoses.push_back(std::move(code));
    ++result.report.diag_rows_attached;
  }

  std::sort(result.records.begin(), result.records.end(),
            [](const Hospitalization& a, const Hospitalization& b) {
              return a.record_id < b.record_id;
            });
  return result;
}

FilterResult apply_inclusion_filters(std::vector<Hospitalization> records) {
  FilterResult out;
  out.kept.reserve(records.size());
  for (auto& rec : records) {
    if (rec.patient_age < 18) {
      ++out.excluded.under_18;
    } else if (rec.stay_days() < 1) {
      ++out.excluded.single_day_stay;
    } else {
      out.kept.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace sepsis
