#include "sepsis/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string_view>

#include "sepsis/csv.hpp"
#include "sepsis/errors.hpp"
#include "sepsis/learners.hpp"
#include "sepsis/rng.hpp"

namespace sepsis {

namespace {

// Published frequency table plus plausible value ranges. The ranges are
// generator plumbing only; nothing downstream treats them as clinical truth.
const std::vector<LabSpec> kDefaultLabs = {
    {"Urea", 0.9933, 10, 300},
    {"Sodium (Na+)", 0.9932, 110, 170},
    {"Potassium (K+)", 0.9930, 2.0, 7.5},
    {"Glucose", 0.9928, 40, 500},
    {"AST (Aspartate Aminotransferase)", 0.9915, 5, 800},
    {"ALT (Alanine Aminotransferase)", 0.9914, 5, 800},
    {"PT INR (International Normalized Ratio)", 0.9680, 0.8, 8},
    {"Total Bilirubin", 0.9503, 0.1, 25},
    {"PT (Prothrombin Time, sec)", 0.9500, 9, 60},
    {"APTT (Activated Partial Thromboplastin Time, sec)", 0.9496, 18, 120},
    {"PT (%) (Prothrombin Time, %)", 0.9483, 10, 130},
    {"Direct Bilirubin", 0.9131, 0.0, 15},
    {"CKMB (Creatine Kinase-MB)", 0.9034, 5, 300},
    {"Amylase", 0.8924, 20, 1200},
    {"Chloride (Cl-)", 0.8833, 80, 130},
    {"Hemogram MCV (Mean Corpuscular Volume)", 0.8787, 60, 120},
    {"Hemogram WBC (White Blood Cells)", 0.8787, 0.5, 50},
    {"Hemogram RBC (Red Blood Cells)", 0.8787, 1.5, 7},
    {"Hemogram MCH (Mean Corpuscular Hemoglobin)", 0.8787, 18, 40},
    {"Hemogram MPV (Mean Platelet Volume)", 0.8756, 6, 14},
    {"Hemogram HGB (Hemoglobin)", 0.8753, 3, 20},
    {"Hemogram PLT (Platelets)", 0.8753, 10, 900},
    {"Hemogram HCT (Hematocrit)", 0.8753, 10, 60},
    {"Hemogram RDW (Red Cell Distribution Width)", 0.8538, 11, 30},
    {"Hemogram MCHC (Mean Corpusc. Hemoglobin Conc.)", 0.8383, 25, 40},
    {"Hemogram Eosinophils (%)", 0.8053, 0, 15},
    {"Hemogram Eosinophils (#)", 0.7930, 0, 2},
    {"Creatinine", 0.7635, 0.3, 15},
    {"CKI (Creatine Kinase Index)", 0.7599, 20, 5000},
    {"Hemogram RDW-SD (Red Cell Distribution Width - SD)", 0.7250, 30, 80},
    {"Lipase", 0.7026, 5, 600},
    {"Hemogram PDW (Platelet Distribution Width)", 0.6744, 8, 25},
    {"Hemogram PCT (Procalcitonin)", 0.6622, 0.05, 1.5},
    {"Indirect Bilirubin", 0.6600, 0.0, 10},
    {"Fibrinogen", 0.6530, 100, 900},
    {"Hemogram Lymphocytes (%)", 0.6097, 1, 60},
    {"Hemogram Monocytes (%)", 0.6097, 0, 25},
    {"Hemogram Basophils (#)", 0.6015, 0, 0.5},
    {"Hemogram Monocytes (#)", 0.6015, 0, 3},
    {"Hemogram Neutrophils (#)", 0.6015, 0.5, 40},
    {"Hemogram Basophils (%)", 0.6015, 0, 3},
    {"Hemogram Neutrophils (%)", 0.6015, 30, 98},
    {"Hemogram Lymphocytes (#)", 0.6015, 0.1, 10},
    {"Hemogram NRBC (%) (Nucleated RBC %)", 0.5762, 0, 5},
    {"Hemogram NRBC (#) (Nucleated RBC #)", 0.5751, 0, 1},
    {"Fibrinogen C", 0.4920, 100, 900},
    {"GGT (Gamma-Glutamyl Transferase)", 0.4881, 5, 1200},
    {"Calcium (Ca)", 0.4834, 6, 12},
    {"Total Protein (TP)", 0.4576, 4, 10},
    {"CRP (C-Reactive Protein)", 0.4356, 0.1, 400},
};

struct DiagnosisPool {
  ComorbidityCategory category;
  double prevalence;
  std::vector<std::string_view> codes;
};

// Secondary-diagnosis prevalences; plumbing constants shaped after an
// elderly sepsis cohort so the comorbidity flags have usable variation.
const std::vector<DiagnosisPool> kDiagnosisPools = {
    {ComorbidityCategory::Cardiovascular, 0.55, {"I21", "I50", "I10", "I48"}},
    {ComorbidityCategory::Respiratory, 0.35, {"J18.0", "J44", "J96"}},
    {ComorbidityCategory::RenalUrinary, 0.30, {"N18", "N10", "N17"}},
    {ComorbidityCategory::Endocrine, 0.28, {"E11", "E86"}},
    {ComorbidityCategory::Digestive, 0.22, {"K74", "K35", "K92"}},
    {ComorbidityCategory::SymptomsSigns, 0.18, {"R50", "R55", "R57"}},
    {ComorbidityCategory::Cancer, 0.15, {"C18.9", "D45", "C34"}},
    {ComorbidityCategory::NervousSystem, 0.14, {"G40", "G20"}},
    {ComorbidityCategory::OtherMisc, 0.12, {"T81", "Z51"}},
    {ComorbidityCategory::Musculoskeletal, 0.10, {"M17", "M79.7"}},
    {ComorbidityCategory::MentalHealth, 0.08, {"F32", "F20"}},
    {ComorbidityCategory::Skin, 0.06, {"L03"}},
    {ComorbidityCategory::EyeEar, 0.03, {"H66"}},
    {ComorbidityCategory::Pregnancy, 0.005, {"O14"}},
};

constexpr int kMinAge = 18;
constexpr int kMaxAge = 110;

std::string make_record_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "H%07zu", i + 1);
  return buf;
}

int truncated_normal_age(Rng& rng, double mean, double sd) {
  for (int tries = 0; tries < 200; ++tries) {
    const double draw = rng.normal(mean, sd);
    if (draw >= kMinAge && draw <= kMaxAge) return static_cast<int>(std::lround(draw));
  }
  return static_cast<int>(std::lround(std::clamp(mean, double(kMinAge), double(kMaxAge))));
}

// Per-record log-odds offsets from the signal spec; features are matched by
// name against age, comorbidity flags, and lab means (scaled to roughly
// unit range so effect sizes compose).
std::vector<double> signal_offsets(const SynthConfig& config,
                                   std::span<const Hospitalization> records) {
  std::vector<double> offsets(records.size(), 0.0);
  if (config.signal_spec.empty()) return offsets;

  const auto& labs = config.lab_frequencies.empty() ? default_lab_table() : config.lab_frequencies;
  for (const auto& term : config.signal_spec) {
    if (!std::isfinite(term.effect)) throw ConfigError("signal effect must be finite");
    if (term.feature == "age") {
      for (std::size_t i = 0; i < records.size(); ++i) {
        offsets[i] += term.effect * (records[i].patient_age - config.age_mean) / config.age_sd;
      }
      continue;
    }
    if (term.feature.rfind(kComorbidityFeaturePrefix, 0) == 0) {
      const auto cat = comorbidity_category_from_string(
          term.feature.substr(std::string_view(kComorbidityFeaturePrefix).size()));
      if (!cat) throw ConfigError("unknown comorbidity flag in signal: '" + term.feature + "'");
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto flags = encode_comorbidities(records[i].diagnoses);
        offsets[i] += term.effect * (flags[*cat] ? 1.0 : 0.0);
      }
      continue;
    }
    const auto spec = std::find_if(labs.begin(), labs.end(),
                                   [&](const LabSpec& s) { return s.name == term.feature; });
    if (spec == labs.end()) {
      throw ConfigError("unknown signal feature: '" + term.feature + "'");
    }
    const double mid = 0.5 * (spec->lo + spec->hi);
    const double half = std::max(0.5 * (spec->hi - spec->lo), 1e-12);
    for (std::size_t i = 0; i < records.size(); ++i) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& lab : records[i].labs) {
        if (lab.test_name == term.feature) {
          sum += lab.value;
          ++count;
        }
      }
      if (count > 0) offsets[i] += term.effect * (sum / count - mid) / half;
    }
  }
  return offsets;
}

// Intercept such that mean sigmoid(alpha + offset_i) hits the target death
// fraction; monotone in alpha, so plain bisection.
double solve_intercept(std::span<const double> offsets, double target) {
  auto mean_prob = [&](double alpha) {
    double sum = 0.0;
    for (double o : offsets) sum += sigmoid(alpha + o);
    return sum / static_cast<double>(offsets.size());
  };
  double lo = -40.0, hi = 40.0;
  if (mean_prob(lo) > target || mean_prob(hi) < target) {
    throw ConfigError("outcome_mix death fraction " + std::to_string(target) +
                      " is unreachable under the configured signal");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_prob(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

OutcomeLabel draw_survivor_outcome(Rng& rng, const std::array<double, 3>& conditional) {
  const double u = rng.uniform();
  if (u < conditional[0]) return OutcomeLabel::recovered;
  if (u < conditional[0] + conditional[1]) return OutcomeLabel::improved;
  return OutcomeLabel::worsened;
}

std::string fmt_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const std::vector<LabSpec>& default_lab_table() { return kDefaultLabs; }

void SynthConfig::validate() const {
  if (n_records == 0) throw ConfigError("n_records must be positive");
  if (age_sd <= 0.0 || stay_log_sd <= 0.0) throw ConfigError("dispersions must be positive");
  if (sex_balance < 0.0 || sex_balance > 1.0) throw ConfigError("sex_balance must lie in [0,1]");
  double mix_sum = 0.0;
  for (double p : outcome_mix) {
    if (p < 0.0 || p > 1.0) throw ConfigError("outcome_mix entries must lie in [0,1]");
    mix_sum += p;
  }
  if (std::abs(mix_sum - 1.0) > 1e-9) throw ConfigError("outcome_mix must sum to 1");
  if (!signal_spec.empty() && (outcome_mix[0] <= 0.0 || outcome_mix[0] >= 1.0)) {
    throw ConfigError("a nonempty signal_spec needs a death fraction strictly inside (0,1)");
  }
  for (const auto& spec : lab_frequencies) {
    if (spec.presence_fraction < 0.0 || spec.presence_fraction > 1.0) {
      throw ConfigError("presence_fraction out of [0,1] for test '" + spec.name + "'");
    }
    if (spec.name.empty()) throw ConfigError("lab test name must be nonempty");
    if (!(spec.lo < spec.hi)) throw ConfigError("lab range must satisfy lo < hi");
  }
}

std::vector<Hospitalization> generate(const SynthConfig& config) {
  config.validate();
  const auto& labs = config.lab_frequencies.empty() ? default_lab_table() : config.lab_frequencies;

  const std::int64_t first_admit = Date{2007, 1, 1}.serial();
  const std::int64_t last_discharge = Date{2024, 12, 31}.serial();

  const Rng master(hash_tag(config.seed, "synth-cohort"));
  std::vector<Hospitalization> records(config.n_records);

  for (std::size_t i = 0; i < config.n_records; ++i) {
    Rng rng = master.fork(i);
    Hospitalization& rec = records[i];
    rec.record_id = make_record_id(i);
    rec.patient_age = truncated_normal_age(rng, config.age_mean, config.age_sd);
    rec.sex = rng.bernoulli(config.sex_balance) ? Sex::female : Sex::male;
    const double env = rng.uniform();
    rec.origin_env = env < 0.55 ? OriginEnv::urban : (env < 0.95 ? OriginEnv::rural : OriginEnv::unknown);

    const double stay_draw = std::exp(rng.normal(config.stay_log_mean, config.stay_log_sd));
    const std::int64_t stay = std::max<std::int64_t>(2, std::llround(stay_draw));
    const std::int64_t admit_span = last_discharge - first_admit - stay;
    const std::int64_t admit =
        first_admit + static_cast<std::int64_t>(rng.uniform_int(
                          static_cast<std::uint64_t>(std::max<std::int64_t>(admit_span, 1))));
    rec.admit_date = Date::from_serial(admit);
    rec.discharge_date = Date::from_serial(admit + stay);

    // lab presence; panel grouping makes the hemogram block co-occur
    const double panel_u = rng.uniform();
    for (const auto& spec : labs) {
      const bool hemogram = spec.name.rfind("Hemogram", 0) == 0;
      bool present;
      if (config.panel_grouping && hemogram) {
        present = panel_u < spec.presence_fraction;
      } else {
        present = rng.bernoulli(spec.presence_fraction);
      }
      if (!present) continue;
      const auto n_values = 1 + rng.uniform_int(5);
      for (std::uint64_t k = 0; k < n_values; ++k) {
        LabResult lab;
        lab.test_name = spec.name;
        lab.value = rng.uniform(spec.lo, spec.hi);
        const auto day_offset = rng.uniform_int(static_cast<std::uint64_t>(stay) + 1);
        lab.timestamp.date = Date::from_serial(admit + static_cast<std::int64_t>(day_offset));
        lab.timestamp.seconds_of_day = static_cast<int>(rng.uniform_int(86400));
        rec.labs.push_back(std::move(lab));
      }
    }

    rec.diagnoses.push_back({"A41.9", Icd10Code::Rank::primary});
    for (const auto& pool : kDiagnosisPools) {
      if (!rng.bernoulli(pool.prevalence)) continue;
      const auto pick = rng.uniform_int(pool.codes.size());
      rec.diagnoses.push_back({std::string(pool.codes[pick]), Icd10Code::Rank::secondary});
    }
  }

  // outcomes: logistic death model over the signal, survivors from the
  // conditional mix
  const auto offsets = signal_offsets(config, records);
  const double p_death = config.outcome_mix[0];
  double alpha = 0.0;
  bool degenerate_death = p_death <= 0.0 || p_death >= 1.0;
  if (!degenerate_death) {
    alpha = solve_intercept(offsets, p_death);
  }
  const double survivor_mass = config.outcome_mix[1] + config.outcome_mix[2] + config.outcome_mix[3];
  std::array<double, 3> conditional = {1.0, 0.0, 0.0};
  if (survivor_mass > 0.0) {
    conditional = {config.outcome_mix[1] / survivor_mass, config.outcome_mix[2] / survivor_mass,
                   config.outcome_mix[3] / survivor_mass};
  }

  const Rng outcome_master(hash_tag(config.seed, "synth-outcomes"));
  for (std::size_t i = 0; i < records.size(); ++i) {
    Rng rng = outcome_master.fork(i);
    const double p = degenerate_death ? p_death : sigmoid(alpha + offsets[i]);
    if (rng.bernoulli(p)) {
      records[i].outcome = OutcomeLabel::deceased;
    } else {
      records[i].outcome = draw_survivor_outcome(rng, conditional);
    }
  }
  return records;
}

std::vector<Hospitalization> inject_comorbidity_signal(std::vector<Hospitalization> records,
                                                       ComorbidityCategory category,
                                                       double odds_multiplier,
                                                       std::uint64_t seed) {
  if (odds_multiplier <= 0.0) throw ConfigError("odds_multiplier must be positive");
  if (records.empty()) throw ValidationError("inject_comorbidity_signal: empty cohort");

  std::vector<bool> carrier(records.size());
  std::size_t n_carriers = 0;
  std::size_t n_dead = 0;
  std::array<std::size_t, 3> survivor_counts{};
  for (std::size_t i = 0; i < records.size(); ++i) {
    carrier[i] = encode_comorbidities(records[i].diagnoses)[category];
    n_carriers += carrier[i];
    switch (records[i].outcome) {
      case OutcomeLabel::deceased: ++n_dead; break;
      case OutcomeLabel::recovered: ++survivor_counts[0]; break;
      case OutcomeLabel::improved: ++survivor_counts[1]; break;
      case OutcomeLabel::worsened: ++survivor_counts[2]; break;
    }
  }
  if (n_carriers == 0) {
    throw ValidationError(std::string("no record carries category ") +
                          std::string(to_string(category)));
  }

  const double p_marginal = static_cast<double>(n_dead) / static_cast<double>(records.size());
  if (p_marginal <= 0.0 || p_marginal >= 1.0) {
    throw ValidationError("cannot rebalance a cohort without outcome variation");
  }
  const double f = static_cast<double>(n_carriers) / static_cast<double>(records.size());

  // death probability for non-carriers such that the marginal is preserved
  auto carrier_prob = [&](double p0) {
    const double odds = odds_multiplier * p0 / (1.0 - p0);
    return odds / (1.0 + odds);
  };
  double lo = 1e-12, hi = 1.0 - 1e-12;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double marginal = f * carrier_prob(mid) + (1.0 - f) * mid;
    (marginal < p_marginal ? lo : hi) = mid;
  }
  const double p0 = 0.5 * (lo + hi);
  const double p1 = carrier_prob(p0);

  const double survivor_total =
      static_cast<double>(survivor_counts[0] + survivor_counts[1] + survivor_counts[2]);
  std::array<double, 3> conditional = {1.0, 0.0, 0.0};
  if (survivor_total > 0.0) {
    conditional = {survivor_counts[0] / survivor_total, survivor_counts[1] / survivor_total,
                   survivor_counts[2] / survivor_total};
  }

  const Rng master(hash_tag(seed, "inject-signal"));
  for (std::size_t i = 0; i < records.size(); ++i) {
    Rng rng = master.fork(i);
    if (rng.bernoulli(carrier[i] ? p1 : p0)) {
      records[i].outcome = OutcomeLabel::deceased;
    } else {
      records[i].outcome = draw_survivor_outcome(rng, conditional);
    }
  }
  return records;
}

CohortPaths write_cohort_csvs(std::span<const Hospitalization> records,
                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CohortPaths paths{dir / "hospitalizations.csv", dir / "labs.csv", dir / "diagnoses.csv"};

  std::vector<std::vector<std::string>> hosp_rows;
  std::vector<std::vector<std::string>> lab_rows;
  std::vector<std::vector<std::string>> diag_rows;
  hosp_rows.reserve(records.size());
  for (const auto& rec : records) {
    hosp_rows.push_back({rec.record_id, std::to_string(rec.patient_age),
                         std::string(to_string(rec.sex)), std::string(to_string(rec.origin_env)),
                         rec.admit_date.to_string(), rec.discharge_date.to_string(),
                         std::string(to_string(rec.outcome))});
    for (const auto& lab : rec.labs) {
      lab_rows.push_back(
          {rec.record_id, lab.test_name, fmt_value(lab.value), lab.timestamp.to_string()});
    }
    for (const auto& diag : rec.diagnoses) {
      diag_rows.push_back({rec.record_id, diag.code,
                           diag.rank == Icd10Code::Rank::primary ? "primary" : "secondary"});
    }
  }
  write_csv(paths.hospitalizations,
            {"record_id", "age", "sex", "origin_env", "admit_date", "discharge_date", "outcome"},
            hosp_rows);
  write_csv(paths.labs, {"record_id", "test_name", "value", "timestamp"}, lab_rows);
  write_csv(paths.diagnoses, {"record_id", "icd10_code", "rank"}, diag_rows);
  return paths;
}

}  // namespace sepsis
