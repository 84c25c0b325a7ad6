#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>

#include "sepsis/domain.hpp"

namespace sepsis {

// High-level disease groups keyed by the leading letter of an ICD-10 code.
// OtherMisc is the closed fallback for letters without a dedicated group.
enum class ComorbidityCategory : std::uint8_t {
  InfectiousDiseases,
  Cancer,
  Endocrine,
  MentalHealth,
  NervousSystem,
  EyeEar,
  Cardiovascular,
  Respiratory,
  Digestive,
  Skin,
  Musculoskeletal,
  RenalUrinary,
  Pregnancy,
  SymptomsSigns,
  OtherMisc,
};

inline constexpr std::size_t kComorbidityCategoryCount = 15;

std::string_view to_string(ComorbidityCategory c);
std::optional<ComorbidityCategory> comorbidity_category_from_string(std::string_view s);

// Letter -> category lookup. The standard table covers all 26 letters:
// A,B infectious; C,D cancer; E endocrine; F mental health; G nervous;
// H eye/ear; I cardiovascular; J respiratory; K digestive; L skin;
// M musculoskeletal; N renal/urinary; O pregnancy; R symptoms/signs;
// everything else (P, Q, S, T-Z) falls into OtherMisc.
class CategoryTable {
 public:
  static const CategoryTable& standard();

  // Override file with header "letter,category"; rows replace the standard
  // mapping letter by letter.
  static CategoryTable from_csv(const std::filesystem::path& path);

  ComorbidityCategory category_for(char letter) const;

 private:
  CategoryTable();
  std::array<ComorbidityCategory, 26> by_letter_;
};

struct ComorbidityVector {
  std::array<bool, kComorbidityCategoryCount> flags{};

  bool operator[](ComorbidityCategory c) const { return flags[static_cast<std::size_t>(c)]; }
  std::size_t count() const;
  friend bool operator==(const ComorbidityVector&, const ComorbidityVector&) = default;
};

// Category of a single code, decided by its first character.
// Throws ValidationError when the code violates the ICD-10 pattern.
ComorbidityCategory categorize(const Icd10Code& code,
                               const CategoryTable& table = CategoryTable::standard());

// Presence flags over a diagnosis list; multiplicity is discarded.
ComorbidityVector encode_comorbidities(std::span<const Icd10Code> diagnoses,
                                       const CategoryTable& table = CategoryTable::standard());

}  // namespace sepsis
