#include "sepsis/comorbidity.hpp"

#include "sepsis/csv.hpp"
#include "sepsis/errors.hpp"

namespace sepsis {

namespace {

constexpr std::array<std::string_view, kComorbidityCategoryCount> kCategoryNames = {
    "InfectiousDiseases", "Cancer",        "Endocrine",    "MentalHealth", "NervousSystem",
    "EyeEar",             "Cardiovascular", "Respiratory", "Digestive",    "Skin",
    "Musculoskeletal",    "RenalUrinary",  "Pregnancy",    "SymptomsSigns", "OtherMisc"};

}  // namespace

std::string_view to_string(ComorbidityCategory c) {
  return kCategoryNames[static_cast<std::size_t>(c)];
}

std::optional<ComorbidityCategory> comorbidity_category_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == s) return static_cast<ComorbidityCategory>(i);
  }
  return std::nullopt;
}

CategoryTable::CategoryTable() {
  by_letter_.fill(ComorbidityCategory::OtherMisc);
  auto set = [&](std::string_view letters, ComorbidityCategory c) {
    for (char l : letters) by_letter_[l - 'A'] = c;
  };
  set("AB", ComorbidityCategory::InfectiousDiseases);
  set("CD", ComorbidityCategory::Cancer);
  set("E", ComorbidityCategory::Endocrine);
  set("F", ComorbidityCategory::MentalHealth);
  set("G", ComorbidityCategory::NervousSystem);
  set("H", ComorbidityCategory::EyeEar);
  set("I", ComorbidityCategory::Cardiovascular);
  set("J", ComorbidityCategory::Respiratory);
  set("K", ComorbidityCategory::Digestive);
  set("L", ComorbidityCategory::Skin);
  set("M", ComorbidityCategory::Musculoskeletal);
  set("N", ComorbidityCategory::RenalUrinary);
  set("O", ComorbidityCategory::Pregnancy);
  set("R", ComorbidityCategory::SymptomsSigns);
}

const CategoryTable& CategoryTable::standard() {
  static const CategoryTable table;
  return table;
}

CategoryTable CategoryTable::from_csv(const std::filesystem::path& path) {
  const std::string label = path.filename().string();
  const CsvTable csv = read_csv(path);
  const std::size_t c_letter = csv.column("letter", label);
  const std::size_t c_cat = csv.column("category", label);
  CategoryTable table;
  for (const auto& row : csv.rows) {
    if (row.fields.size() != csv.header.size()) {
      throw IngestError(label + ":" + std::to_string(row.line) + ": malformed row");
    }
    const std::string& letter = row.fields[c_letter];
    if (letter.size() != 1 || letter[0] < 'A' || letter[0] > 'Z') {
      throw IngestError(label + ":" + std::to_string(row.line) + ": letter must be A-Z, got '" +
                        letter + "'");
    }
    const auto cat = comorbidity_category_from_string(row.fields[c_cat]);
    if (!cat) {
      throw IngestError(label + ":" + std::to_string(row.line) + ": unknown category '" +
                        row.fields[c_cat] + "'");
    }
    table.by_letter_[letter[0] - 'A'] = *cat;
  }
  return table;
}

ComorbidityCategory CategoryTable::category_for(char letter) const {
  if (letter < 'A' || letter > 'Z') {
    throw ValidationError(std::string("category lookup needs an uppercase letter, got '") +
                          letter + "'");
  }
  return by_letter_[letter - 'A'];
}

std::size_t ComorbidityVector::count() const {
  std::size_t n = 0;
  for (bool f : flags) n += f;
  return n;
}

ComorbidityCategory categorize(const Icd10Code& code, const CategoryTable& table) {
  if (!icd10_pattern_ok(code.code)) {
    throw ValidationError("malformed ICD-10 code: '" + code.code + "'");
  }
  return table.category_for(code.code[0]);
}

ComorbidityVector encode_comorbidities(std::span<const Icd10Code> diagnoses,
                                       const CategoryTable& table) {
  ComorbidityVector v;
  for (const auto& code : diagnoses) {
    v.flags[static_cast<std::size_t>(categorize(code, table))] = true;
  }
  return v;
}

}  // namespace sepsis
