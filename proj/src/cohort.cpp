#include "sepsis/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <unordered_map>

#include "sepsis/csv.hpp"
#include "sepsis/errors.hpp"
#include "sepsis/rng.hpp"

namespace sepsis {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::deceased_vs_discharged: return "deceased_vs_discharged";
    case Task::deceased_vs_recovered: return "deceased_vs_recovered";
    default: return "recovered_vs_ameliorated";
  }
}

std::string_view to_string(Variant v) { return v == Variant::base ? "base" : "extended"; }

std::string_view variant_csv_label(Variant v) { return v == Variant::base ? "nodiag" : "diag"; }

Task task_from_string(std::string_view s) {
  if (s == "deceased_vs_discharged") return Task::deceased_vs_discharged;
  if (s == "deceased_vs_recovered") return Task::deceased_vs_recovered;
  if (s == "recovered_vs_ameliorated") return Task::recovered_vs_ameliorated;
  throw ConfigError("unknown task: '" + std::string(s) + "'");
}

Variant variant_from_string(std::string_view s) {
  if (s == "base" || s == "nodiag") return Variant::base;
  if (s == "extended" || s == "diag") return Variant::extended;
  throw ConfigError("unknown variant: '" + std::string(s) + "'");
}

void TaskSpec::validate() const {
  if (subset_size != 10 && subset_size != 20 && subset_size != 30 && subset_size != 40 &&
      subset_size != 50) {
    throw ConfigError("subset_size must be one of {10,20,30,40,50}, got " +
                      std::to_string(subset_size));
  }
}

std::size_t CohortMatrix::class_count(int label) const {
  std::size_t n = 0;
  for (int l : labels) n += (l == label);
  return n;
}

CohortMatrix CohortMatrix::select_rows(std::span<const std::size_t> idx) const {
  CohortMatrix out;
  out.feature_names = feature_names;
  out.n_cols = n_cols;
  out.n_rows = idx.size();
  out.data.reserve(idx.size() * n_cols);
  out.labels.reserve(idx.size());
  out.row_ids.reserve(idx.size());
  for (std::size_t i : idx) {
    const auto r = row(i);
    out.data.insert(out.data.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
    out.row_ids.push_back(row_ids[i]);
  }
  return out;
}

void CohortMatrix::sort_by_row_id() {
  std::vector<std::size_t> order(n_rows);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return row_ids[a] < row_ids[b]; });
  *this = select_rows(order);
}

void CohortMatrix::write_csv(const std::filesystem::path& path) const {
  std::vector<std::string> header = feature_names;
  header.push_back("label");
  header.push_back("row_id");
  std::vector<std::vector<std::string>> rows;
  rows.reserve(n_rows);
  char buf[32];
  for (std::size_t i = 0; i < n_rows; ++i) {
    std::vector<std::string> fields;
    fields.reserve(n_cols + 2);
    for (std::size_t j = 0; j < n_cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", at(i, j));
      fields.emplace_back(buf);
    }
    fields.push_back(std::to_string(labels[i]));
    fields.push_back(row_ids[i]);
    rows.push_back(std::move(fields));
  }
  sepsis::write_csv(path, header, rows);
}

CohortMatrix CohortMatrix::read_csv(const std::filesystem::path& path) {
  const CsvTable csv = sepsis::read_csv(path);
  const std::string label = path.filename().string();
  if (csv.header.size() < 3 || csv.header[csv.header.size() - 2] != "label" ||
      csv.header.back() != "row_id") {
    throw IngestError(label + ": expected trailing 'label' and 'row_id' columns");
  }
  CohortMatrix m;
  m.n_cols = csv.header.size() - 2;
  m.feature_names.assign(csv.header.begin(), csv.header.end() - 2);
  m.n_rows = csv.rows.size();
  m.data.reserve(m.n_rows * m.n_cols);
  for (const auto& row : csv.rows) {
    if (row.fields.size() != csv.header.size()) {
      throw IngestError(label + ":" + std::to_string(row.line) + ": malformed row");
    }
    for (std::size_t j = 0; j < m.n_cols; ++j) {
      double v = 0.0;
      const std::string& s = row.fields[j];
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw IngestError(label + ":" + std::to_string(row.line) + ": bad numeric field '" + s +
                          "'");
      }
      m.data.push_back(v);
    }
    const std::string& lab = row.fields[m.n_cols];
    if (lab != "0" && lab != "1") {
      throw IngestError(label + ":" + std::to_string(row.line) + ": label must be 0 or 1");
    }
    m.labels.push_back(lab == "1" ? 1 : 0);
    m.row_ids.push_back(row.fields[m.n_cols + 1]);
  }
  return m;
}

LabRegistry rank_lab_tests(std::span<const Hospitalization> records) {
  if (records.empty()) throw ValidationError("rank_lab_tests needs a nonempty cohort");
  std::unordered_map<std::string, std::size_t> counts;
  std::unordered_map<std::string, const Hospitalization*> last_seen;
  for (const auto& rec : records) {
    for (const auto& lab : rec.labs) {
      auto [it, inserted] = last_seen.try_emplace(lab.test_name, &rec);
      if (inserted || it->second != &rec) {
        it->second = &rec;
        ++counts[lab.test_name];
      }
    }
  }
  LabRegistry reg;
  reg.ranked_tests.reserve(counts.size());
  for (const auto& [name, count] : counts) {
    reg.ranked_tests.push_back(
        {name, count, static_cast<double>(count) / static_cast<double>(records.size())});
  }
  std::sort(reg.ranked_tests.begin(), reg.ranked_tests.end(),
            [](const LabRegistryEntry& a, const LabRegistryEntry& b) {
              if (a.patient_count != b.patient_count) return a.patient_count > b.patient_count;
              return a.test_name < b.test_name;
            });
  return reg;
}

namespace {

// Per-record mean lab values for the top-n tests; nullopt when any test is
// missing (full-coverage requirement).
std::optional<std::vector<double>> top_n_means(const Hospitalization& rec,
                                               const std::vector<std::string>& tests) {
  std::vector<double> sums(tests.size(), 0.0);
  std::vector<std::size_t> counts(tests.size(), 0);
  std::unordered_map<std::string_view, std::size_t> slot;
  slot.reserve(tests.size());
  for (std::size_t i = 0; i < tests.size(); ++i) slot.emplace(tests[i], i);
  for (const auto& lab : rec.labs) {
    const auto it = slot.find(lab.test_name);
    if (it == slot.end()) continue;
    sums[it->second] += lab.value;
    ++counts[it->second];
  }
  std::vector<double> means(tests.size());
  for (std::size_t i = 0; i < tests.size(); ++i) {
    if (counts[i] == 0) return std::nullopt;
    means[i] = sums[i] / static_cast<double>(counts[i]);
  }
  return means;
}

// Label for the task, or nullopt when the record is out of scope.
std::optional<int> task_label(Task task, OutcomeLabel outcome) {
  switch (task) {
    case Task::deceased_vs_discharged:
      return outcome == OutcomeLabel::deceased ? 1 : 0;
    case Task::deceased_vs_recovered:
      if (outcome == OutcomeLabel::deceased) return 1;
      if (outcome == OutcomeLabel::recovered) return 0;
      return std::nullopt;
    default:
      if (outcome == OutcomeLabel::recovered) return 1;
      if (outcome == OutcomeLabel::improved) return 0;
      return std::nullopt;
  }
}

}  // namespace

double coverage(std::span<const Hospitalization> records, const LabRegistry& registry, int n) {
  if (n < 0 || static_cast<std::size_t>(n) > registry.size()) {
    throw ValidationError("coverage: subset size " + std::to_string(n) +
                          " exceeds registry size " + std::to_string(registry.size()));
  }
  if (records.empty()) return 0.0;
  std::vector<std::string> tests;
  tests.reserve(n);
  for (int i = 0; i < n; ++i) tests.push_back(registry.ranked_tests[i].test_name);
  std::size_t covered = 0;
  for (const auto& rec : records) {
    if (top_n_means(rec, tests)) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(records.size());
}

CohortMatrix build_matrix(std::span<const Hospitalization> records, const LabRegistry& registry,
                          const TaskSpec& spec, const CategoryTable& table) {
  spec.validate();
  if (static_cast<std::size_t>(spec.subset_size) > registry.size()) {
    throw ValidationError("build_matrix: subset size " + std::to_string(spec.subset_size) +
                          " exceeds registry size " + std::to_string(registry.size()));
  }
  std::vector<std::string> tests;
  tests.reserve(spec.subset_size);
  for (int i = 0; i < spec.subset_size; ++i) tests.push_back(registry.ranked_tests[i].test_name);

  CohortMatrix m;
  m.feature_names = {"age", "sex", "origin_env"};
  for (const auto& t : tests) m.feature_names.push_back(t);
  if (spec.variant == Variant::extended) {
    for (std::size_t c = 0; c < kComorbidityCategoryCount; ++c) {
      m.feature_names.push_back(std::string(kComorbidityFeaturePrefix) +
                                std::string(to_string(static_cast<ComorbidityCategory>(c))));
    }
  }
  m.n_cols = m.feature_names.size();

  for (const auto& rec : records) {
    const auto label = task_label(spec.task, rec.outcome);
    if (!label) continue;
    const auto means = top_n_means(rec, tests);
    if (!means) continue;
    m.data.push_back(static_cast<double>(rec.patient_age));
    m.data.push_back(rec.sex == Sex::female ? 0.0 : 1.0);
    m.data.push_back(static_cast<double>(rec.origin_env));
    m.data.insert(m.data.end(), means->begin(), means->end());
    if (spec.variant == Variant::extended) {
      const ComorbidityVector v = encode_comorbidities(rec.diagnoses, table);
      for (bool f : v.flags) m.data.push_back(f ? 1.0 : 0.0);
    }
    m.labels.push_back(*label);
    m.row_ids.push_back(rec.record_id);
    ++m.n_rows;
  }

  if (m.class_count(0) < 2 || m.class_count(1) < 2) {
    throw ValidationError("degenerate cohort: task " + std::string(to_string(spec.task)) +
                          " subset " + std::to_string(spec.subset_size) + " has class counts " +
                          std::to_string(m.class_count(0)) + "/" + std::to_string(m.class_count(1)));
  }
  return m;
}

CohortMatrix undersample(const CohortMatrix& matrix, std::uint64_t seed) {
  const std::size_t n0 = matrix.class_count(0);
  const std::size_t n1 = matrix.class_count(1);
  if (n0 == 0 || n1 == 0) throw ValidationError("undersample: both classes must be present");
  const int majority = n0 >= n1 ? 0 : 1;
  const std::size_t target = std::min(n0, n1);

  std::vector<std::size_t> majority_idx;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < matrix.n_rows; ++i) {
    if (matrix.labels[i] == majority) majority_idx.push_back(i);
    else keep.push_back(i);
  }
  Rng rng(hash_tag(seed, "undersample"));
  rng.shuffle(majority_idx);
  keep.insert(keep.end(), majority_idx.begin(), majority_idx.begin() + target);

  CohortMatrix out = matrix.select_rows(keep);
  out.sort_by_row_id();
  return out;
}

SplitResult stratified_split(const CohortMatrix& matrix, double test_fraction,
                             std::uint64_t seed) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw ValidationError("stratified_split: test_fraction must lie in (0,1)");
  }
  for (int cls : {0, 1}) {
    if (matrix.class_count(cls) < 2) {
      throw ValidationError("stratified_split: class " + std::to_string(cls) +
                            " has fewer than 2 samples");
    }
  }
  Rng rng(hash_tag(seed, "stratified_split"));
  std::vector<std::size_t> test_idx, train_idx;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < matrix.n_rows; ++i) {
      if (matrix.labels[i] == cls) idx.push_back(i);
    }
    const auto n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(idx.size()) * test_fraction));
    rng.shuffle(idx);
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + n_test);
    train_idx.insert(train_idx.end(), idx.begin() + n_test, idx.end());
  }
  SplitResult out;
  out.test = matrix.select_rows(test_idx);
  out.train = matrix.select_rows(train_idx);
  out.test.sort_by_row_id();
  out.train.sort_by_row_id();
  return out;
}

}  // namespace sepsis
