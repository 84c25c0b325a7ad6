#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "oracles.hpp"
#include "sepsis/cohort.hpp"
#include "sepsis/errors.hpp"
#include "sepsis/rng.hpp"

using namespace sepsis;

namespace {

Hospitalization record_with_labs(const std::string& id, OutcomeLabel outcome,
                                 const std::map<std::string, std::vector<double>>& labs,
                                 int age = 70) {
  Hospitalization r;
  r.record_id = id;
  r.patient_age = age;
  r.sex = Sex::female;
  r.origin_env = OriginEnv::urban;
  r.admit_date = Date::parse("2020-01-01");
  r.discharge_date = Date::parse("2020-01-08");
  r.outcome = outcome;
  for (const auto& [name, values] : labs) {
    for (double v : values) {
      r.labs.push_back({name, v, DateTime::parse("2020-01-02")});
    }
  }
  return r;
}

// small cohort where every record carries tests T0..T{k-1} for k = id index
std::vector<Hospitalization> nested_cohort(std::size_t n, std::size_t n_tests) {
  std::vector<Hospitalization> records;
  sepsis::Rng rng(99);
  for (std::size_t i = 0; i < n; ++i) {
    std::map<std::string, std::vector<double>> labs;
    const std::size_t carried = 1 + rng.uniform_int(n_tests);
    for (std::size_t t = 0; t < carried; ++t) {
      labs["T" + std::to_string(t)] = {rng.uniform(0, 10)};
    }
    char id[16];
    std::snprintf(id, sizeof id, "n%04zu", i);
    records.push_back(record_with_labs(id, rng.bernoulli(0.5) ? OutcomeLabel::deceased
                                                              : OutcomeLabel::recovered,
                                       labs));
  }
  return records;
}

}  // namespace

TEST_CASE("rank_lab_tests counts records, not rows") {
  std::vector<Hospitalization> records;
  records.push_back(record_with_labs("a", OutcomeLabel::deceased, {{"X", {1, 2, 3}}}));
  records.push_back(record_with_labs("b", OutcomeLabel::recovered, {{"Y", {5}}}));
  const auto reg = rank_lab_tests(records);
  REQUIRE(reg.size() == 2);
  // X and Y both appear in exactly 1 of 2 records: tie broken alphabetically
  CHECK(reg.ranked_tests[0].test_name == "X");
  CHECK(reg.ranked_tests[0].patient_count == 1);
  CHECK(reg.ranked_tests[0].patient_fraction == doctest::Approx(0.5));
  CHECK(reg.ranked_tests[1].test_name == "Y");
}

TEST_CASE("rank_lab_tests orders by frequency descending") {
  std::vector<Hospitalization> records;
  records.push_back(record_with_labs("a", OutcomeLabel::deceased, {{"P", {1}}, {"Q", {1}}}));
  records.push_back(record_with_labs("b", OutcomeLabel::deceased, {{"Q", {1}}}));
  const auto reg = rank_lab_tests(records);
  CHECK(reg.ranked_tests[0].test_name == "Q");
  CHECK(reg.ranked_tests[1].test_name == "P");
  CHECK_THROWS_AS(rank_lab_tests(std::vector<Hospitalization>{}), ValidationError);
}

TEST_CASE("coverage") {
  std::vector<Hospitalization> records;
  records.push_back(record_with_labs("a", OutcomeLabel::deceased, {{"X", {1}}, {"Y", {2}}}));
  records.push_back(record_with_labs("b", OutcomeLabel::deceased, {{"X", {1}}}));
  const auto reg = rank_lab_tests(records);

  CHECK(coverage(records, reg, 1) == doctest::Approx(1.0));
  CHECK(coverage(records, reg, 2) == doctest::Approx(0.5));
  CHECK_THROWS_AS(coverage(records, reg, 3), ValidationError);
}

TEST_CASE("coverage is nonincreasing in n (brute-force recount)") {
  const auto records = nested_cohort(400, 8);
  const auto reg = rank_lab_tests(records);
  double prev = 1.1;
  for (std::size_t n = 1; n <= reg.size(); ++n) {
    const double c = coverage(records, reg, static_cast<int>(n));
    CHECK(c <= prev + 1e-12);
    // independent recount
    std::set<std::string> tests;
    for (std::size_t i = 0; i < n; ++i) tests.insert(reg.ranked_tests[i].test_name);
    std::size_t covered = 0;
    for (const auto& r : records) {
      std::set<std::string> have;
      for (const auto& lab : r.labs) have.insert(lab.test_name);
      bool all = true;
      for (const auto& t : tests) all = all && have.count(t);
      covered += all;
    }
    CHECK(c == doctest::Approx(static_cast<double>(covered) / records.size()));
    prev = c;
  }
}

namespace {

std::vector<Hospitalization> ten_test_cohort(std::size_t n, bool with_diag = false) {
  std::vector<Hospitalization> records;
  sepsis::Rng rng(7);
  const OutcomeLabel outcomes[4] = {OutcomeLabel::deceased, OutcomeLabel::recovered,
                                    OutcomeLabel::improved, OutcomeLabel::worsened};
  for (std::size_t i = 0; i < n; ++i) {
    std::map<std::string, std::vector<double>> labs;
    for (int t = 0; t < 10; ++t) {
      labs["T" + std::to_string(t)] = {rng.uniform(0, 10), rng.uniform(0, 10)};
    }
    char id[16];
    std::snprintf(id, sizeof id, "t%04zu", i);
    auto rec = record_with_labs(id, outcomes[rng.uniform_int(4)], labs,
                                40 + static_cast<int>(rng.uniform_int(50)));
    if (with_diag && rng.bernoulli(0.5)) {
      rec.diagnoses.push_back({"J18.0", Icd10Code::Rank::secondary});
    }
    records.push_back(rec);
  }
  return records;
}

}  // namespace

TEST_CASE("build_matrix validates the subset size") {
  std::vector<Hospitalization> records;
  records.push_back(record_with_labs("a", OutcomeLabel::deceased, {{"Urea", {10, 20, 30}}}));
  records.push_back(record_with_labs("b", OutcomeLabel::recovered, {{"Urea", {4}}}));
  records.push_back(record_with_labs("c", OutcomeLabel::deceased, {{"Urea", {8}}}));
  records.push_back(record_with_labs("d", OutcomeLabel::recovered, {{"Urea", {6}}}));
  const auto reg = rank_lab_tests(records);

  // legal subset size but larger than this registry
  CHECK_THROWS_AS(build_matrix(records, reg, {Task::deceased_vs_discharged, Variant::base, 10}),
                  ValidationError);
  // size outside the declared set
  CHECK_THROWS_AS(build_matrix(records, reg, {Task::deceased_vs_recovered, Variant::base, 15}),
                  ConfigError);
}

TEST_CASE("build_matrix features, labels and filtering") {
  auto records = ten_test_cohort(200, true);
  const auto reg = rank_lab_tests(records);

  SUBCASE("mean aggregation") {
    // overwrite one record's labs with known values
    records[0].labs.clear();
    for (double v : {10.0, 20.0, 30.0}) {
      records[0].labs.push_back({"T0", v, DateTime::parse("2020-01-02")});
    }
    for (int t = 1; t < 10; ++t) {
      records[0].labs.push_back({"T" + std::to_string(t), 1.0, DateTime::parse("2020-01-02")});
    }
    const auto m = build_matrix(records, reg, {Task::deceased_vs_discharged, Variant::base, 10});
    // locate the overwritten record and the T0 column
    std::size_t row = 0;
    while (m.row_ids[row] != records[0].record_id) ++row;
    std::size_t col = 0;
    while (m.feature_names[col] != "T0") ++col;
    CHECK(m.at(row, col) == doctest::Approx(20.0));
  }

  SUBCASE("base variant feature layout") {
    const auto m = build_matrix(records, reg, {Task::deceased_vs_discharged, Variant::base, 10});
    CHECK(m.n_cols == 13);
    CHECK(m.feature_names[0] == "age");
    CHECK(m.feature_names[1] == "sex");
    CHECK(m.feature_names[2] == "origin_env");
    CHECK(m.n_rows == 200);  // full coverage cohort
  }

  SUBCASE("extended variant adds 15 comorbidity flags") {
    const auto m = build_matrix(records, reg, {Task::deceased_vs_discharged, Variant::extended, 10});
    CHECK(m.n_cols == 3 + 10 + 15);
    CHECK(m.feature_names.back() == "cmb_OtherMisc");
    bool found_respiratory = false;
    for (const auto& n : m.feature_names) found_respiratory |= (n == "cmb_Respiratory");
    CHECK(found_respiratory);
  }

  SUBCASE("task label policies") {
    const auto all = build_matrix(records, reg, {Task::deceased_vs_discharged, Variant::base, 10});
    CHECK(all.n_rows == 200);

    const auto dvr = build_matrix(records, reg, {Task::deceased_vs_recovered, Variant::base, 10});
    std::size_t expected = 0;
    for (const auto& r : records) {
      expected += (r.outcome == OutcomeLabel::deceased || r.outcome == OutcomeLabel::recovered);
    }
    CHECK(dvr.n_rows == expected);  // worsened/improved dropped

    const auto rva = build_matrix(records, reg, {Task::recovered_vs_ameliorated, Variant::base, 10});
    for (std::size_t i = 0; i < rva.n_rows; ++i) {
      CHECK((rva.labels[i] == 0 || rva.labels[i] == 1));
    }
  }

  SUBCASE("no NaN and unique row ids") {
    const auto m = build_matrix(records, reg, {Task::deceased_vs_discharged, Variant::extended, 10});
    for (double v : m.data) CHECK(std::isfinite(v));
    std::set<std::string> ids(m.row_ids.begin(), m.row_ids.end());
    CHECK(ids.size() == m.n_rows);
  }

  SUBCASE("degenerate cohort errors") {
    std::vector<Hospitalization> few;
    few.push_back(record_with_labs("a", OutcomeLabel::deceased, {{"T0", {1}}}));
    few.push_back(record_with_labs("b", OutcomeLabel::deceased, {{"T0", {1}}}));
    few.push_back(record_with_labs("c", OutcomeLabel::recovered, {{"T0", {1}}}));
    auto reg2 = rank_lab_tests(few);
    // pad registry so subset_size 10 is legal: add tests carried by nobody
    while (reg2.ranked_tests.size() < 10) {
      reg2.ranked_tests.push_back({"pad" + std::to_string(reg2.ranked_tests.size()), 0, 0.0});
    }
    CHECK_THROWS_WITH_AS(build_matrix(few, reg2, {Task::deceased_vs_recovered, Variant::base, 10}),
                         doctest::Contains("degenerate cohort"), ValidationError);
  }
}

TEST_CASE("undersample balances classes") {
  sepsis::Rng rng(3);
  auto m = oracle::random_matrix(rng, 140, 4);
  // force 100/40 imbalance
  for (std::size_t i = 0; i < m.n_rows; ++i) m.labels[i] = i < 100 ? 1 : 0;

  const auto balanced = undersample(m, 11);
  CHECK(balanced.class_count(0) == 40);
  CHECK(balanced.class_count(1) == 40);

  // all minority rows survive, no duplicates
  std::set<std::string> ids(balanced.row_ids.begin(), balanced.row_ids.end());
  CHECK(ids.size() == balanced.n_rows);
  for (std::size_t i = 0; i < m.n_rows; ++i) {
    if (m.labels[i] == 0) CHECK(ids.count(m.row_ids[i]) == 1);
  }

  SUBCASE("determinism") {
    const auto again = undersample(m, 11);
    CHECK(again.row_ids == balanced.row_ids);
    CHECK(again.data == balanced.data);
    const auto other = undersample(m, 12);
    CHECK(other.row_ids != balanced.row_ids);
  }
  SUBCASE("balanced input is a no-op up to order") {
    const auto re = undersample(balanced, 99);
    auto a = balanced.row_ids;
    auto b = re.row_ids;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  SUBCASE("single-class input errors") {
    for (auto& l : m.labels) l = 1;
    CHECK_THROWS_AS(undersample(m, 1), ValidationError);
  }
}

TEST_CASE("stratified split proportions") {
  sepsis::Rng rng(4);

  SUBCASE("exact proportion 10+10 at 0.2") {
    auto m = oracle::random_matrix(rng, 20, 3);
    for (std::size_t i = 0; i < 20; ++i) m.labels[i] = i < 10;
    const auto split = stratified_split(m, 0.2, 5);
    CHECK(split.test.class_count(0) == 2);
    CHECK(split.test.class_count(1) == 2);
    CHECK(split.train.n_rows == 16);
  }

  SUBCASE("round(1.8) = 2 for 9+9") {
    auto m = oracle::random_matrix(rng, 18, 3);
    for (std::size_t i = 0; i < 18; ++i) m.labels[i] = i < 9;
    const auto split = stratified_split(m, 0.2, 5);
    CHECK(split.test.class_count(0) == 2);
    CHECK(split.test.class_count(1) == 2);
  }

  SUBCASE("train and test partition the rows") {
    auto m = oracle::random_matrix(rng, 50, 3);
    m.labels[0] = 1;
    m.labels[1] = 0;  // both classes guaranteed
    const auto split = stratified_split(m, 0.2, 17);
    std::set<std::string> seen;
    for (const auto& id : split.train.row_ids) seen.insert(id);
    for (const auto& id : split.test.row_ids) seen.insert(id);
    CHECK(seen.size() == m.n_rows);
    CHECK(split.train.n_rows + split.test.n_rows == m.n_rows);
  }

  SUBCASE("determinism and seed sensitivity") {
    auto m = oracle::random_matrix(rng, 60, 3);
    m.labels[0] = 1;
    m.labels[1] = 0;
    const auto s1 = stratified_split(m, 0.2, 5);
    const auto s2 = stratified_split(m, 0.2, 5);
    const auto s3 = stratified_split(m, 0.2, 6);
    CHECK(s1.test.row_ids == s2.test.row_ids);
    CHECK(s1.test.row_ids != s3.test.row_ids);
  }

  SUBCASE("class with fewer than 2 samples errors") {
    auto m = oracle::random_matrix(rng, 10, 3);
    for (auto& l : m.labels) l = 0;
    m.labels[0] = 1;
    CHECK_THROWS_AS(stratified_split(m, 0.2, 1), ValidationError);
  }

  SUBCASE("per-class deviation <= 1 sample over random matrices") {
    for (int trial = 0; trial < 50; ++trial) {
      auto m = oracle::random_matrix(rng, 10 + rng.uniform_int(200), 2, 0.3);
      if (m.class_count(0) < 2 || m.class_count(1) < 2) continue;
      const double frac = 0.1 + 0.3 * rng.uniform();
      const auto split = stratified_split(m, frac, trial);
      for (int cls : {0, 1}) {
        const double exact = static_cast<double>(m.class_count(cls)) * frac;
        CHECK(std::abs(static_cast<double>(split.test.class_count(cls)) - exact) <= 1.0);
      }
    }
  }
}

TEST_CASE("matrix csv round trip") {
  sepsis::Rng rng(8);
  auto m = oracle::random_matrix(rng, 25, 4);
  m.feature_names[2] = "APTT (Activated Partial Thromboplastin Time, sec)";  // comma in name
  const auto path = std::filesystem::temp_directory_path() / "cohort_matrix_test.csv";
  m.write_csv(path);
  const auto back = CohortMatrix::read_csv(path);
  CHECK(back.feature_names == m.feature_names);
  CHECK(back.labels == m.labels);
  CHECK(back.row_ids == m.row_ids);
  REQUIRE(back.data.size() == m.data.size());
  for (std::size_t i = 0; i < m.data.size(); ++i) CHECK(back.data[i] == m.data[i]);
  std::filesystem::remove(path);
}

TEST_CASE("full matrix pipeline is deterministic") {
  const auto records = ten_test_cohort(150, true);
  const auto reg = rank_lab_tests(records);
  const TaskSpec spec{Task::deceased_vs_discharged, Variant::extended, 10};
  const auto m1 = undersample(build_matrix(records, reg, spec), 42);
  const auto m2 = undersample(build_matrix(records, reg, spec), 42);
  CHECK(m1.data == m2.data);
  CHECK(m1.row_ids == m2.row_ids);
  CHECK(m1.labels == m2.labels);
}
