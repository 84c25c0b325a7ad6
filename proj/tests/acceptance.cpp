// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Criteria 6 and 10 drive the CLI binary end to end; pass
// its path as argv[1] (a scratch directory may follow as argv[2]).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <set>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "sepsis/cohort.hpp"
#include "sepsis/csv.hpp"
#include "sepsis/explain.hpp"
#include "sepsis/learners.hpp"
#include "sepsis/metrics.hpp"
#include "sepsis/rng.hpp"
#include "sepsis/runner.hpp"
#include "sepsis/synth.hpp"

using namespace sepsis;

namespace {

std::string g_cli_path;
std::filesystem::path g_work_dir;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& what) {
  if (!condition) throw Failure(what);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = g_cli_path + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

// ---------------------------------------------------------------- criterion 1
// TreeSHAP vs brute-force Shapley enumeration on random ensembles.
void criterion_treeshap_oracle() {
  Rng rng(20260101);
  double max_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + static_cast<int>(rng.uniform_int(7));  // up to 8 features
    const int n_trees = 1 + static_cast<int>(rng.uniform_int(3));
    std::vector<Tree> trees;
    for (int t = 0; t < n_trees; ++t) {
      trees.push_back(oracle::random_tree(rng, d, 3));
    }
    TrainedModel model;
    model.kind = ModelKind::gradient_boosting;
    model.trees = trees;
    for (int j = 0; j < d; ++j) model.feature_names.push_back("f" + std::to_string(j));

    for (int inst = 0; inst < 4; ++inst) {
      CohortMatrix row;
      row.n_rows = 1;
      row.n_cols = d;
      row.feature_names = model.feature_names;
      row.labels = {0};
      row.row_ids = {"i"};
      for (int j = 0; j < d; ++j) row.data.push_back(rng.uniform(-1.5, 1.5));

      const auto attr = tree_shap(model, row);
      const auto expected = oracle::brute_force_shap(model.trees, row.row(0));
      for (int j = 0; j < d; ++j) {
        max_err = std::max(max_err, std::abs(attr.at(0, j) - expected[j]));
      }
    }
  }
  require(max_err <= 1e-9, "max |treeshap - brute force| = " + std::to_string(max_err));
}

// ---------------------------------------------------------------- criterion 2
// SHAP efficiency for every tree model of the default grid run (criterion 10
// must have run first; it leaves its model files in g_work_dir/grid).
void criterion_shap_efficiency() {
  const auto grid_dir = g_work_dir / "grid";
  Rng rng(20260202);
  std::size_t models_checked = 0;
  double max_err = 0.0;

  std::vector<std::filesystem::path> model_files;
  for (const auto& entry : std::filesystem::directory_iterator(grid_dir)) {
    if (entry.path().extension() == ".sepm") model_files.push_back(entry.path());
  }
  std::sort(model_files.begin(), model_files.end());
  require(!model_files.empty(), "no model files from the grid run");

  for (const auto& file : model_files) {
    const auto model = load_model(file);
    if (!model.is_tree_model()) continue;
    ++models_checked;

    CohortMatrix rows;
    rows.n_rows = 100;
    rows.n_cols = model.n_features();
    rows.feature_names = model.feature_names;
    rows.labels.assign(100, 0);
    for (int i = 0; i < 100; ++i) rows.row_ids.push_back("i" + std::to_string(i));
    rows.data.resize(rows.n_rows * rows.n_cols);
    for (auto& v : rows.data) v = rng.uniform(-10.0, 400.0);

    const auto attr = tree_shap(model, rows, 2);
    for (std::size_t i = 0; i < rows.n_rows; ++i) {
      double total = attr.base_value;
      for (std::size_t j = 0; j < rows.n_cols; ++j) total += attr.at(i, j);
      max_err = std::max(max_err, std::abs(total - predict_raw(model, rows.row(i))));
    }
  }
  require(models_checked > 0, "no tree models found in the grid output");
  require(max_err <= 1e-6, "max |base + sum(phi) - raw| = " + std::to_string(max_err) + " over " +
                               std::to_string(models_checked) + " models");
  std::cout << "    (" << models_checked << " tree models, max deviation " << max_err << ")\n";
}

// ---------------------------------------------------------------- criterion 3
void criterion_auc_oracle() {
  Rng rng(20260303);
  double max_err = 0.0;
  int evaluated = 0;
  while (evaluated < 1000) {
    const std::size_t n = 2 + rng.uniform_int(499);
    std::vector<int> y(n);
    std::vector<double> s(n);
    const int tie_levels = 1 + static_cast<int>(rng.uniform_int(12));  // heavy-tie regimes
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.35) ? 1 : 0;
      has_pos |= y[i] == 1;
      has_neg |= y[i] == 0;
      s[i] = std::floor(rng.uniform() * tie_levels) / tie_levels;
    }
    if (!has_pos || !has_neg) continue;
    ++evaluated;
    max_err = std::max(max_err, std::abs(roc_auc(y, s) - oracle::pairwise_auc(y, s)));
  }
  require(max_err <= 1e-12, "max |midrank - pairwise| = " + std::to_string(max_err));
}

// ---------------------------------------------------------------- criterion 4
void criterion_lr_gradient() {
  Rng rng(20260404);
  double max_rel = 0.0;
  for (int dataset = 0; dataset < 5; ++dataset) {
    const std::size_t n = 30 + rng.uniform_int(60);
    const std::size_t d = 2 + rng.uniform_int(5);
    auto m = oracle::random_matrix(rng, n, d);
    std::vector<std::vector<double>> X(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) X[i][j] = m.at(i, j);
    }
    const double l2 = 0.1 + rng.uniform() * 2.0;

    for (int point = 0; point < 20; ++point) {
      std::vector<double> w(d);
      for (auto& wj : w) wj = rng.uniform(-2, 2);
      const double b = rng.uniform(-1, 1);
      std::vector<double> grad(d);
      double grad_b = 0.0;
      logistic_gradient(m.data, n, d, m.labels, w, b, l2, grad, grad_b);

      for (std::size_t j = 0; j < d; ++j) {
        const double eps = 1e-5 * std::max(1.0, std::abs(w[j]));
        auto wp = w, wm = w;
        wp[j] += eps;
        wm[j] -= eps;
        const double numeric = (oracle::lr_objective(X, m.labels, wp, b, l2) -
                                oracle::lr_objective(X, m.labels, wm, b, l2)) /
                               (2 * eps);
        const double rel = std::abs(grad[j] - numeric) /
                           std::max({std::abs(grad[j]), std::abs(numeric), 1e-6});
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  require(max_rel <= 1e-5, "max relative gradient error = " + std::to_string(max_rel));
}

// ---------------------------------------------------------------- criterion 5
void criterion_boosting() {
  Rng rng(20260505);

  // staged training log-loss nonincreasing on 10 random datasets
  for (int dataset = 0; dataset < 10; ++dataset) {
    auto m = oracle::random_matrix(rng, 80 + rng.uniform_int(120), 3 + rng.uniform_int(4), 0.45);
    if (m.class_count(0) < 2 || m.class_count(1) < 2) {
      m.labels[0] = 0;
      m.labels[1] = 1;
    }
    for (ModelKind kind : {ModelKind::gradient_boosting, ModelKind::hist_gradient_boosting}) {
      auto hp = HyperParams::defaults_for(kind);
      hp.n_trees = 30;
      const auto model = fit(kind, m, hp, dataset);

      std::vector<double> margins(m.n_rows, model.base_score);
      double prev = std::numeric_limits<double>::infinity();
      for (std::size_t stage = 0; stage <= model.trees.size(); ++stage) {
        if (stage > 0) {
          for (std::size_t i = 0; i < m.n_rows; ++i) {
            margins[i] += model.trees[stage - 1].predict(m.row(i));
          }
        }
        double loss = 0.0;
        for (std::size_t i = 0; i < m.n_rows; ++i) {
          const double p = sigmoid(margins[i]);
          loss -= m.labels[i] ? std::log(std::max(p, 1e-15))
                              : std::log(std::max(1.0 - p, 1e-15));
        }
        loss /= static_cast<double>(m.n_rows);
        require(loss <= prev + 1e-12,
                std::string(to_string(kind)) + " loss increased at stage " +
                    std::to_string(stage) + " on dataset " + std::to_string(dataset));
        prev = loss;
      }
    }
  }

  // HistGB with enough bins reproduces the exact-GB split structure
  auto decision_path = [](const Tree& t, std::span<const double> row) {
    std::vector<std::pair<int, bool>> path;
    int n = 0;
    while (!t.is_leaf(n)) {
      const bool left = row[t.feature[n]] <= t.threshold[n];
      path.emplace_back(t.feature[n], left);
      n = left ? t.left[n] : t.right[n];
    }
    return path;
  };
  for (int dataset = 0; dataset < 5; ++dataset) {
    auto m = oracle::random_matrix(rng, 100 + rng.uniform_int(100), 4, 0.45);  // <= 200 rows
    if (m.class_count(0) < 2 || m.class_count(1) < 2) {
      m.labels[0] = 0;
      m.labels[1] = 1;
    }
    auto hp = HyperParams::defaults_for(ModelKind::gradient_boosting);
    hp.n_trees = 10;
    auto hp_hist = hp;
    hp_hist.n_bins = 255;
    const auto gb = fit(ModelKind::gradient_boosting, m, hp, 11);
    const auto hist = fit(ModelKind::hist_gradient_boosting, m, hp_hist, 11);
    require(gb.trees.size() == hist.trees.size(), "tree count mismatch");
    for (std::size_t t = 0; t < gb.trees.size(); ++t) {
      for (std::size_t i = 0; i < m.n_rows; ++i) {
        require(decision_path(gb.trees[t], m.row(i)) == decision_path(hist.trees[t], m.row(i)),
                "split structure diverged at tree " + std::to_string(t) + ", dataset " +
                    std::to_string(dataset));
      }
    }
  }
}

// ---------------------------------------------------------------- criterion 6
void criterion_pipeline_determinism() {
  const auto dir = g_work_dir / "determinism";
  std::filesystem::create_directories(dir);
  require(run_cli("synth --out " + (dir / "cohort").string() + " --n 3000 --seed 11") == 0,
          "synth failed");
  const std::string data_flags = " --hosp " + (dir / "cohort/hospitalizations.csv").string() +
                                 " --labs " + (dir / "cohort/labs.csv").string() + " --diag " +
                                 (dir / "cohort/diagnoses.csv").string();
  const std::string grid_flags = " --subsets 10,20 --jobs 2 --shap-sample 20";
  require(run_cli("run --seed 42" + data_flags + grid_flags + " --out " + (dir / "a").string()) == 0,
          "first run failed");
  require(run_cli("run --seed 42" + data_flags + grid_flags + " --out " + (dir / "b").string()) == 0,
          "second run failed");

  require(slurp(dir / "a/results.csv") == slurp(dir / "b/results.csv"),
          "results.csv differs between identical runs");
  std::size_t models_compared = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir / "a")) {
    if (entry.path().extension() != ".sepm") continue;
    ++models_compared;
    require(slurp(entry.path()) == slurp(dir / "b" / entry.path().filename()),
            "model file differs: " + entry.path().filename().string());
  }
  require(models_compared > 0, "no model files produced");
  std::cout << "    (results.csv and " << models_compared << " model files byte-identical)\n";
}

// ---------------------------------------------------------------- criterion 7
void criterion_split_balance() {
  Rng rng(20260707);
  int evaluated = 0;
  while (evaluated < 200) {
    auto m = oracle::random_matrix(rng, 12 + rng.uniform_int(300), 3, 0.2 + 0.6 * rng.uniform());
    if (m.class_count(0) < 2 || m.class_count(1) < 2) continue;
    ++evaluated;

    const double frac = 0.1 + 0.3 * rng.uniform();
    const auto split = stratified_split(m, frac, evaluated);
    for (int cls : {0, 1}) {
      const double exact = static_cast<double>(m.class_count(cls)) * frac;
      const double got = static_cast<double>(split.test.class_count(cls));
      require(std::abs(got - exact) <= 1.0, "split deviation > 1 sample");
    }

    const auto balanced = undersample(m, evaluated);
    require(balanced.class_count(0) == balanced.class_count(1), "undersample not balanced");
    const std::size_t minority = std::min(m.class_count(0), m.class_count(1));
    require(balanced.class_count(0) == minority, "undersample lost rows");
    const int minority_label = m.class_count(0) <= m.class_count(1) ? 0 : 1;
    std::set<std::string> kept(balanced.row_ids.begin(), balanced.row_ids.end());
    require(kept.size() == balanced.n_rows, "undersample duplicated rows");
    for (std::size_t i = 0; i < m.n_rows; ++i) {
      if (m.labels[i] == minority_label) {
        require(kept.count(m.row_ids[i]) == 1, "minority row dropped");
      }
    }
  }
}

// ---------------------------------------------------------------- criterion 8
void criterion_coverage_monotonicity() {
  SynthConfig cfg;
  cfg.n_records = 12286;
  cfg.seed = 20260808;
  const auto records = generate(cfg);
  const auto registry = rank_lab_tests(records);
  double prev = 2.0;
  std::string chain;
  for (int n : {10, 20, 30, 40, 50}) {
    const double c = coverage(records, registry, n);
    chain += (chain.empty() ? "" : " > ") + std::to_string(c);
    require(c < prev, "coverage not strictly decreasing at subset " + std::to_string(n));
    prev = c;
  }
  std::cout << "    (coverage " << chain << ")\n";
}

// ---------------------------------------------------------------- criterion 9
void criterion_signal_recovery() {
  int auc_wins = 0;
  int shap_wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SynthConfig cfg;
    cfg.n_records = 2500;
    cfg.seed = seed;
    auto records = generate(cfg);
    records = inject_comorbidity_signal(std::move(records), ComorbidityCategory::Respiratory, 4.0,
                                        seed

    );
    const auto registry = rank_lab_tests(records);

    double auc[2] = {0.0, 0.0};
    AttributionSet attr;
    CohortMatrix attributed_rows;
    for (Variant variant : {Variant::base, Variant::extended}) {
      const auto matrix =
          build_matrix(records, registry, {Task::deceased_vs_discharged, variant, 10});
      const auto balanced = undersample(matrix, hash_combine(seed, 1));
      const auto split = stratified_split(balanced, 0.2, hash_combine(seed, 2));
      const auto model = fit(ModelKind::hist_gradient_boosting, split.train,
                             HyperParams::defaults_for(ModelKind::hist_gradient_boosting),
                             hash_combine(seed, 3));
      const auto report = evaluate(model, split.test);
      auc[variant == Variant::extended] = report.auc;
      if (variant == Variant::extended) {
        attributed_rows = split.test;
        attr = tree_shap(model, split.test, 2);
      }
    }
    if (auc[1] - auc[0] >= 0.03) ++auc_wins;

    const auto summary = shap_summary(attr, attributed_rows, 5);
    for (const auto& row : summary) {
      if (row.feature == "cmb_Respiratory") {
        ++shap_wins;
        break;
      }
    }
  }
  std::cout << "    (auc gap held in " << auc_wins << "/10 seeds, Respiratory in top-5 in "
            << shap_wins << "/10)\n";
  require(auc_wins >= 9, "extended-minus-base AUC gap >= 0.03 held only " +
                             std::to_string(auc_wins) + "/10 seeds");
  require(shap_wins >= 9, "Respiratory flag reached the top-5 in only " +
                              std::to_string(shap_wins) + "/10 seeds");
}

// --------------------------------------------------------------- criterion 10
void criterion_grid_runtime() {
  const auto dir = g_work_dir / "grid";
  std::filesystem::create_directories(dir);
  const auto cohort = g_work_dir / "grid_cohort";
  require(run_cli("synth --out " + cohort.string() + " --n 12286 --seed 77") == 0, "synth failed");

  const auto start = std::chrono::steady_clock::now();
  const int rc = run_cli("run --seed 4242 --hosp " + (cohort / "hospitalizations.csv").string() +
                         " --labs " + (cohort / "labs.csv").string() + " --diag " +
                         (cohort / "diagnoses.csv").string() + " --out " + dir.string() +
                         " --jobs 2");
  const auto elapsed =
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - start);
  require(rc == 0, "grid run failed with exit code " + std::to_string(rc));
  require(elapsed.count() < 15 * 60,
          "grid took " + std::to_string(elapsed.count()) + "s (budget 900s)");

  const auto results = read_csv(dir / "results.csv");
  const auto skipped = read_csv(dir / "skipped.csv");
  require(results.rows.size() + skipped.rows.size() == 150,
          "result rows + skipped rows != 150 grid cells");
  require(std::filesystem::exists(dir / "best_models.csv"), "best_models.csv missing");
  for (const char* task :
       {"deceased_vs_discharged", "deceased_vs_recovered", "recovered_vs_ameliorated"}) {
    require(std::filesystem::exists(dir / ("auc_" + std::string(task) + ".svg")),
            "missing AUC plot for " + std::string(task));
  }
  std::size_t shap_svgs = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("shap_", 0) == 0 && entry.path().extension() == ".svg") ++shap_svgs;
    if (entry.path().extension() == ".svg") {
      std::string err;
      require(oracle::xml_well_formed(slurp(entry.path()), &err),
              name + " is not well-formed: " + err);
    }
  }
  require(shap_svgs > 0, "no SHAP summary SVGs emitted");
  std::cout << "    (" << elapsed.count() << "s wall, " << results.rows.size() << " cells ok, "
            << skipped.rows.size() << " skipped, " << shap_svgs << " SHAP SVGs)\n";
}

// --------------------------------------------------------------- criterion 11
void criterion_metric_identity() {
  // in-process: exact identity on every evaluated report of a small grid
  ExperimentConfig cfg;
  SynthConfig synth;
  synth.n_records = 800;
  synth.seed = 3;
  cfg.synth = synth;
  cfg.subset_sizes = {10};
  cfg.seed = 9;
  cfg.output_dir = g_work_dir / "identity";
  cfg.shap_sample = 10;
  cfg.permutation_repeats = 2;
  cfg.jobs = 2;
  const auto grid = run_grid(cfg);
  std::size_t checked = 0;
  for (const auto& cell : grid.cells) {
    if (!cell.ok) continue;
    ++checked;
    require(std::abs(cell.report.recall_weighted - cell.report.accuracy) <= 1e-12,
            "recall_weighted != accuracy in cell " + cell.key.slug());
  }
  require(checked > 0, "no cells evaluated");

  // and across the emitted results of the big grid run
  const auto results = read_csv(g_work_dir / "grid" / "results.csv");
  const auto c_acc = results.column("accuracy", "results.csv");
  const auto c_rec = results.column("recall", "results.csv");
  for (const auto& row : results.rows) {
    const double acc = std::atof(row.fields[c_acc].c_str());
    const double rec = std::atof(row.fields[c_rec].c_str());
    require(std::abs(acc - rec) <= 1e-6, "emitted recall differs from accuracy");
  }
}

struct Criterion {
  int number;
  std::string name;
  std::function<void()> run;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-sepsisml-cli> [work-dir]\n";
    return 2;
  }
  g_cli_path = argv[1];
  g_work_dir = argc > 2 ? std::filesystem::path(argv[2])
                        : std::filesystem::temp_directory_path() / "sepsis_acceptance";
  std::filesystem::remove_all(g_work_dir);
  std::filesystem::create_directories(g_work_dir);

  const std::vector<Criterion> criteria = {
      {1, "TreeSHAP oracle equivalence (50 random ensembles, 1e-9)", criterion_treeshap_oracle},
      {2, "SHAP efficiency on every grid tree model (1e-6)", criterion_shap_efficiency},
      {3, "AUC oracle equivalence (1000 sets, 1e-12)", criterion_auc_oracle},
      {4, "LR gradient vs central differences (rel 1e-5)", criterion_lr_gradient},
      {5, "Boosting monotonicity and hist/exact structure match", criterion_boosting},
      {6, "Pipeline determinism (byte-identical reruns)", criterion_pipeline_determinism},
      {7, "Split/balance contracts (200 random matrices)", criterion_split_balance},
      {8, "Coverage monotonicity on a 12,286-record cohort", criterion_coverage_monotonicity},
      {9, "Signal recovery (AUC gap and top-5 SHAP, 9/10 seeds)", criterion_signal_recovery},
      {10, "Desk-scale 150-cell grid under 15 minutes", criterion_grid_runtime},
      {11, "recall_weighted equals accuracy on every report", criterion_metric_identity},
  };

  // criterion 10 runs before 2 and 11, which inspect its outputs
  const std::vector<int> order = {1, 3, 4, 5, 6, 7, 8, 9, 10, 2, 11};

  int failures = 0;
  std::vector<std::string> lines(criteria.size() + 1);
  for (int idx : order) {
    const auto& c = criteria[static_cast<std::size_t>(idx - 1)];
    const auto start = std::chrono::steady_clock::now();
    std::string verdict = "PASS";
    std::string detail;
    try {
      c.run();
    } catch (const std::exception& e) {
      verdict = "FAIL";
      detail = std::string(" - ") + e.what();
      ++failures;
    }
    const auto secs = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - start)
                          .count() /
                      1000.0;
    char line[512];
    std::snprintf(line, sizeof line, "[criterion %2d] %s - %s (%.1fs)%s", c.number,
                  verdict.c_str(), c.name.c_str(), secs, detail.c_str());
    std::cout << line << "\n" << std::flush;
    lines[static_cast<std::size_t>(c.number)] = line;
  }

  std::cout << "\n=== acceptance summary ===\n";
  for (std::size_t i = 1; i < lines.size(); ++i) std::cout << lines[i] << "\n";
  std::cout << (failures == 0 ? "ALL CRITERIA PASSED\n"
                              : std::to_string(failures) + " CRITERIA FAILED\n");
  return failures == 0 ? 0 : 1;
}
