#include "sepsis/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "sepsis/csv.hpp"
#include "sepsis/errors.hpp"
#include "sepsis/rng.hpp"
#include "sepsis/svg.hpp"

namespace sepsis {

HyperParams ExperimentConfig::hyperparams_for(ModelKind kind) const {
  for (const auto& [k, hp] : hyper_overrides) {
    if (k == kind) return hp;
  }
  return HyperParams::defaults_for(kind);
}

void ExperimentConfig::validate() const {
  if (subset_sizes.empty() || variants.empty() || tasks.empty() || models.empty()) {
    throw ConfigError("grid dimensions must be nonempty");
  }
  for (int n : subset_sizes) {
    TaskSpec probe{Task::deceased_vs_discharged, Variant::base, n};
    probe.validate();
  }
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw ConfigError("test_fraction must lie in (0,1)");
  }
  if (shap_sample <= 0) throw ConfigError("shap_sample must be positive");
  if (permutation_repeats <= 0) throw ConfigError("permutation_repeats must be positive");
  if (jobs < 0) throw ConfigError("jobs must be >= 0");
  const bool has_files = !hosp_path.empty() || !labs_path.empty() || !diag_path.empty();
  if (has_files && (hosp_path.empty() || labs_path.empty() || diag_path.empty())) {
    throw ConfigError("all three of hosp/labs/diag paths are required together");
  }
  if (!has_files && !synth) {
    throw ConfigError("either data file paths or a synth cohort must be configured");
  }
  if (has_files && synth) {
    throw ConfigError("data file paths and a synth cohort are mutually exclusive");
  }
  if (synth) synth->validate();
  for (const auto& [kind, hp] : hyper_overrides) hp.validate(kind);
}

std::string CellKey::slug() const {
  return std::string(to_string(task)) + "_" + std::string(variant_csv_label(variant)) + "_" +
         std::to_string(subset) + "_" + std::string(to_string(model));
}

std::uint64_t cell_seed(std::uint64_t master, const CellKey& key) {
  std::uint64_t s = hash_tag(master, "grid-cell");
  s = hash_combine(s, static_cast<std::uint64_t>(key.subset));
  s = hash_combine(s, static_cast<std::uint64_t>(key.variant));
  s = hash_combine(s, static_cast<std::uint64_t>(key.task));
  s = hash_combine(s, static_cast<std::uint64_t>(key.model));
  return s;
}

std::size_t GridResult::n_ok() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.ok;
  return n;
}

std::size_t GridResult::n_failed() const { return cells.size() - n_ok(); }

namespace {

std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// One grid cell: undersample -> split -> fit -> evaluate -> persist ->
// attribute. Throws on failure; the caller records the cell as skipped.
CellResult run_cell(const CellKey& key, const CohortMatrix& matrix,
                    const ExperimentConfig& config) {
  CellResult cell;
  cell.key = key;
  const std::uint64_t seed = cell_seed(config.seed, key);

  CohortMatrix balanced = config.undersample ? undersample(matrix, hash_tag(seed, "balance"))
                                             : matrix;
  const SplitResult split = stratified_split(balanced, config.test_fraction,
                                             hash_tag(seed, "split"));

  const HyperParams hp = config.hyperparams_for(key.model);
  const TrainedModel model = fit(key.model, split.train, hp, hash_tag(seed, "fit"));
  cell.report = evaluate(model, split.test, config.average);

  const auto model_file = config.output_dir / ("model_" + key.slug() + ".sepm");
  save_model(model, model_file);
  cell.model_path = model_file.string();

  if (is_tree_kind(key.model)) {
    // SHAP on a seeded subsample of the test rows
    std::vector<std::size_t> idx(split.test.n_rows);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(hash_tag(seed, "shap-sample"));
    rng.shuffle(idx);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(config.shap_sample)));
    std::sort(idx.begin(), idx.end());
    auto rows = std::make_shared<CohortMatrix>(split.test.select_rows(idx));
    auto attr = std::make_shared<AttributionSet>(tree_shap(model, *rows));

    write_attribution_csv(*attr, config.output_dir / ("attr_" + key.slug() + ".csv"));
    const auto summary = shap_summary(*attr, *rows, attr->n_cols);
    const auto summary_file = config.output_dir / ("attrsum_" + key.slug() + ".csv");
    write_shap_summary_csv(summary, summary_file);
    cell.attribution_path = summary_file.string();
    cell.attributions = std::move(attr);
    cell.attributed_rows = std::move(rows);
  } else {
    AttributionSet attr =
        key.model == ModelKind::logistic_regression
            ? coef_importance(model)
            : permutation_importance(model, split.test, config.permutation_repeats,
                                     hash_tag(seed, "permutation"));
    const auto imp_file = config.output_dir / ("imp_" + key.slug() + ".csv");
    write_importance_csv(ranked_importance(attr), imp_file);
    cell.attribution_path = imp_file.string();
  }
  cell.ok = true;
  return cell;
}

struct ComboTask {
  Task task;
  Variant variant;
  int subset;
};

std::vector<Hospitalization> load_records(const ExperimentConfig& config) {
  std::vector<Hospitalization> records;
  if (config.synth) {
    records = generate(*config.synth);
  } else {
    records = ingest_cohort(config.hosp_path, config.labs_path, config.diag_path).records;
  }
  return apply_inclusion_filters(std::move(records)).kept;
}

}  // namespace

GridResult run_grid(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);

  const std::vector<Hospitalization> records = load_records(config);
  if (records.empty()) throw ValidationError("no records left after inclusion filters");
  const LabRegistry registry = rank_lab_tests(records);

  std::vector<ComboTask> combos;
  for (Task t : config.tasks) {
    for (Variant v : config.variants) {
      for (int s : config.subset_sizes) combos.push_back({t, v, s});
    }
  }

  GridResult grid;
  grid.cells.resize(combos.size() * config.models.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t c = next.fetch_add(1);
      if (c >= combos.size()) break;
      const ComboTask& combo = combos[c];

      CohortMatrix matrix;
      std::string combo_error;
      try {
        matrix = build_matrix(records, registry, {combo.task, combo.variant, combo.subset});
        if (config.dump_matrices) {
          matrix.write_csv(config.output_dir /
                           ("matrix_" + std::string(to_string(combo.task)) + "_" +
                            std::string(variant_csv_label(combo.variant)) + "_" +
                            std::to_string(combo.subset) + ".csv"));
        }
      } catch (const std::exception& e) {
        combo_error = e.what();
      }

      for (std::size_t m = 0; m < config.models.size(); ++m) {
        const CellKey key{combo.task, combo.variant, combo.subset, config.models[m]};
        CellResult& slot = grid.cells[c * config.models.size() + m];
        if (!combo_error.empty()) {
          slot.key = key;
          slot.ok = false;
          slot.error = combo_error;
          continue;
        }
        try {
          slot = run_cell(key, matrix, config);
        } catch (const std::exception& e) {
          slot.key = key;
          slot.ok = false;
          slot.error = e.what();
        }
      }
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned n_workers = config.jobs > 0 ? static_cast<unsigned>(config.jobs) : hw;
  if (n_workers <= 1 || combos.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (unsigned i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return grid;
}

namespace {

// stable ordering for emitted tables
bool cell_order(const CellResult& a, const CellResult& b) {
  const auto ka = std::tuple(static_cast<int>(a.key.task), a.key.subset,
                             static_cast<int>(a.key.variant), static_cast<int>(a.key.model));
  const auto kb = std::tuple(static_cast<int>(b.key.task), b.key.subset,
                             static_cast<int>(b.key.variant), static_cast<int>(b.key.model));
  return ka < kb;
}

void write_auc_chart(const std::filesystem::path& path, Task task,
                     const std::vector<const CellResult*>& cells) {
  const double width = 760, height = 420;
  const double x0 = 70, x1 = 580, y0 = 40, y1 = 370;
  SvgDocument svg(width, height);

  std::vector<int> subsets;
  double auc_min = 1.0, auc_max = 0.0;
  for (const auto* c : cells) {
    subsets.push_back(c->key.subset);
    auc_min = std::min(auc_min, c->report.auc);
    auc_max = std::max(auc_max, c->report.auc);
  }
  std::sort(subsets.begin(), subsets.end());
  subsets.erase(std::unique(subsets.begin(), subsets.end()), subsets.end());
  if (subsets.empty()) {
    svg.text(width / 2, height / 2, "no completed cells", 14, "middle");
    svg.save(path);
    return;
  }
  auc_min = std::floor((auc_min - 0.02) * 20.0) / 20.0;
  auc_max = std::ceil((auc_max + 0.02) * 20.0) / 20.0;
  auc_min = std::clamp(auc_min, 0.0, 0.95);
  auc_max = std::clamp(auc_max, auc_min + 0.05, 1.0);

  auto sx = [&](int subset) {
    const auto pos = std::find(subsets.begin(), subsets.end(), subset) - subsets.begin();
    if (subsets.size() == 1) return (x0 + x1) / 2;
    return x0 + (x1 - x0) * static_cast<double>(pos) / static_cast<double>(subsets.size() - 1);
  };
  auto sy = [&](double auc) {
    return y1 - (y1 - y0) * (auc - auc_min) / (auc_max - auc_min);
  };

  svg.text(width / 2, 22, "AUC by subset size - " + std::string(to_string(task)), 14, "middle");
  svg.line(x0, y1, x1, y1, "#222222");
  svg.line(x0, y0, x0, y1, "#222222");
  for (int s : subsets) {
    svg.line(sx(s), y1, sx(s), y1 + 5, "#222222");
    svg.text(sx(s), y1 + 20, "top-" + std::to_string(s), 11, "middle");
  }
  for (double a = auc_min; a <= auc_max + 1e-9; a += 0.05) {
    svg.line(x0 - 5, sy(a), x0, sy(a), "#222222");
    svg.line(x0, sy(a), x1, sy(a), "#eeeeee");
    char lab[16];
    std::snprintf(lab, sizeof lab, "%.2f", a);
    svg.text(x0 - 10, sy(a) + 4, lab, 11, "end");
  }

  std::size_t series_idx = 0;
  for (Variant v : {Variant::extended, Variant::base}) {
    for (ModelKind m : kAllModelKinds) {
      std::vector<std::pair<double, double>> points;
      for (int s : subsets) {
        for (const auto* c : cells) {
          if (c->key.variant == v && c->key.model == m && c->key.subset == s) {
            points.emplace_back(sx(s), sy(c->report.auc));
          }
        }
      }
      const std::string color = series_color(series_idx % 5);
      const double width_px = v == Variant::extended ? 2.2 : 1.2;
      if (!points.empty()) {
        svg.polyline(points, color, width_px);
        for (const auto& [px, py] : points) svg.circle(px, py, 2.5, color);
      }
      const double ly = 60.0 + static_cast<double>(series_idx) * 20.0;
      svg.line(600, ly, 624, ly, color, width_px);
      svg.text(630, ly + 4,
               std::string(to_string(m)) + " (" + std::string(variant_csv_label(v)) + ")", 11);
      ++series_idx;
    }
  }
  svg.save(path);
}

void write_beeswarm(const std::filesystem::path& path, const CellKey& key,
                    const AttributionSet& attr, const CohortMatrix& rows, std::size_t top_k) {
  const auto summary = shap_summary(attr, rows, top_k);
  const double row_h = 34;
  const double width = 740, height = 80 + row_h * static_cast<double>(summary.size());
  const double x0 = 230, x1 = 700;
  SvgDocument svg(width, height);
  svg.text(width / 2, 24, "SHAP summary - " + key.slug(), 13, "middle");

  double phi_max = 1e-12;
  for (double v : attr.values) phi_max = std::max(phi_max, std::abs(v));
  auto sx = [&](double phi) { return (x0 + x1) / 2 + (x1 - x0) / 2 * phi / phi_max; };

  svg.line((x0 + x1) / 2, 46, (x0 + x1) / 2, height - 30, "#bbbbbb");
  svg.text((x0 + x1) / 2, height - 12, "phi (impact on model output)", 11, "middle");

  // column index by feature name
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < attr.feature_names.size(); ++j) col[attr.feature_names[j]] = j;

  for (std::size_t r = 0; r < summary.size(); ++r) {
    const auto& s = summary[r];
    const std::size_t j = col.at(s.feature);
    const double cy = 66 + row_h * static_cast<double>(r);
    svg.text(x0 - 12, cy + 4, s.feature, 11, "end");

    double vmin = rows.at(0, j), vmax = rows.at(0, j);
    for (std::size_t i = 0; i < rows.n_rows; ++i) {
      vmin = std::min(vmin, rows.at(i, j));
      vmax = std::max(vmax, rows.at(i, j));
    }
    for (std::size_t i = 0; i < rows.n_rows; ++i) {
      const double phi = attr.at(i, j);
      const double t = vmax > vmin ? (rows.at(i, j) - vmin) / (vmax - vmin) : 0.5;
      // deterministic vertical jitter
      const double jitter =
          (static_cast<double>((i * 2654435761u) % 1000) / 1000.0 - 0.5) * row_h * 0.6;
      svg.circle(sx(phi), cy + jitter, 2.2, diverging_color(t));
    }
  }
  svg.save(path);
}

void write_importance_bars(const std::filesystem::path& path, const CellKey& key,
                           const std::vector<RankedImportance>& ranking, std::size_t top_k) {
  const std::size_t n = std::min(top_k, ranking.size());
  const double row_h = 26;
  const double width = 700, height = 70 + row_h * static_cast<double>(n);
  const double x0 = 230, x1 = 660;
  SvgDocument svg(width, height);
  svg.text(width / 2, 24, "Feature importance - " + key.slug(), 13, "middle");
  double max_score = 1e-12;
  for (std::size_t i = 0; i < n; ++i) max_score = std::max(max_score, std::abs(ranking[i].score));
  for (std::size_t i = 0; i < n; ++i) {
    const double cy = 50 + row_h * static_cast<double>(i);
    svg.text(x0 - 12, cy + 13, ranking[i].feature, 11, "end");
    const double len = (x1 - x0) * std::abs(ranking[i].score) / max_score;
    svg.rect(x0, cy, std::max(len, 1.0), row_h - 8, series_color(0));
  }
  svg.save(path);
}

std::vector<ShapSummaryRow> load_summary_csv(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  std::vector<ShapSummaryRow> rows;
  for (const auto& row : csv.rows) {
    if (row.fields.size() < 3) continue;
    rows.push_back({row.fields[0], std::atof(row.fields[1].c_str()),
                    std::atof(row.fields[2].c_str())});
  }
  return rows;
}

std::vector<RankedImportance> load_importance_csv(const std::filesystem::path& path) {
  const CsvTable csv = read_csv(path);
  std::vector<RankedImportance> rows;
  for (const auto& row : csv.rows) {
    if (row.fields.size() < 2) continue;
    rows.push_back({row.fields[0], std::atof(row.fields[1].c_str())});
  }
  return rows;
}

}  // namespace

void emit_report(const GridResult& results, const std::filesystem::path& output_dir) {
  if (results.cells.empty()) throw ValidationError("emit_report: empty grid result");
  std::filesystem::create_directories(output_dir);

  std::vector<const CellResult*> ok_cells;
  std::vector<const CellResult*> failed_cells;
  for (const auto& c : results.cells) {
    (c.ok ? ok_cells : failed_cells).push_back(&c);
  }
  auto ptr_order = [](const CellResult* a, const CellResult* b) { return cell_order(*a, *b); };
  std::sort(ok_cells.begin(), ok_cells.end(), ptr_order);
  std::sort(failed_cells.begin(), failed_cells.end(), ptr_order);

  std::vector<std::vector<std::string>> rows;
  for (const auto* c : ok_cells) {
    rows.push_back({std::string(to_string(c->key.task)), std::to_string(c->key.subset),
                    std::string(variant_csv_label(c->key.variant)),
                    std::string(to_string(c->key.model)), fmt_metric(c->report.accuracy),
                    fmt_metric(c->report.precision_weighted), fmt_metric(c->report.recall_weighted),
                    fmt_metric(c->report.f1_weighted), fmt_metric(c->report.auc)});
  }
  write_csv(output_dir / "results.csv",
            {"task", "subset", "variant", "model", "accuracy", "precision", "recall", "f1", "auc"},
            rows);

  rows.clear();
  for (const auto* c : failed_cells) {
    rows.push_back({std::string(to_string(c->key.task)), std::to_string(c->key.subset),
                    std::string(variant_csv_label(c->key.variant)),
                    std::string(to_string(c->key.model)), c->error});
  }
  write_csv(output_dir / "skipped.csv", {"task", "subset", "variant", "model", "reason"}, rows);

  // best model per task x variant, argmax AUC, ties to the lower-index model
  std::map<std::pair<int, int>, const CellResult*> best;
  for (const auto* c : ok_cells) {
    const auto key = std::make_pair(static_cast<int>(c->key.task), static_cast<int>(c->key.variant));
    const auto it = best.find(key);
    if (it == best.end()) {
      best[key] = c;
      continue;
    }
    const CellResult* cur = it->second;
    if (c->report.auc > cur->report.auc ||
        (c->report.auc == cur->report.auc &&
         static_cast<int>(c->key.model) < static_cast<int>(cur->key.model))) {
      best[key] = c;
    }
  }
  rows.clear();
  for (const auto& [key, c] : best) {
    rows.push_back({std::string(to_string(c->key.task)),
                    std::string(variant_csv_label(c->key.variant)), std::to_string(c->key.subset),
                    std::string(to_string(c->key.model)), fmt_metric(c->report.accuracy),
                    fmt_metric(c->report.precision_weighted), fmt_metric(c->report.recall_weighted),
                    fmt_metric(c->report.f1_weighted), fmt_metric(c->report.auc)});
  }
  write_csv(output_dir / "best_models.csv",
            {"case_study", "variant", "subset", "model", "accuracy", "precision", "recall", "f1",
             "auc"},
            rows);

  std::set<Task> tasks_present;
  for (const auto& c : results.cells) tasks_present.insert(c.key.task);
  for (Task t : tasks_present) {
    std::vector<const CellResult*> task_cells;
    for (const auto* c : ok_cells) {
      if (c->key.task == t) task_cells.push_back(c);
    }
    write_auc_chart(output_dir / ("auc_" + std::string(to_string(t)) + ".svg"), t, task_cells);
  }

  constexpr std::size_t kTopK = 12;
  for (const auto& [key, c] : best) {
    const auto svg_path = output_dir / ("shap_" + std::string(to_string(c->key.task)) + "_" +
                                        std::string(variant_csv_label(c->key.variant)) + ".svg");
    if (c->attributions && c->attributed_rows) {
      write_beeswarm(svg_path, c->key, *c->attributions, *c->attributed_rows, kTopK);
      continue;
    }
    // rehydrated results: rebuild a ranking from the persisted summary files
    if (!c->attribution_path.empty() && std::filesystem::exists(c->attribution_path)) {
      const std::filesystem::path p = c->attribution_path;
      std::vector<RankedImportance> ranking;
      if (p.filename().string().rfind("attrsum_", 0) == 0) {
        for (const auto& s : load_summary_csv(p)) ranking.push_back({s.feature, s.mean_abs_phi});
      } else {
        ranking = load_importance_csv(p);
      }
      if (!ranking.empty()) write_importance_bars(svg_path, c->key, ranking, kTopK);
    }
  }
}

GridResult load_grid_results(const std::filesystem::path& results_csv,
                             const std::filesystem::path& skipped_csv) {
  GridResult grid;
  const CsvTable csv = read_csv(results_csv);
  const std::string label = results_csv.filename().string();
  const auto c_task = csv.column("task", label);
  const auto c_subset = csv.column("subset", label);
  const auto c_variant = csv.column("variant", label);
  const auto c_model = csv.column("model", label);
  const auto c_acc = csv.column("accuracy", label);
  const auto c_prec = csv.column("precision", label);
  const auto c_rec = csv.column("recall", label);
  const auto c_f1 = csv.column("f1", label);
  const auto c_auc = csv.column("auc", label);

  const auto dir = results_csv.parent_path();
  for (const auto& row : csv.rows) {
    CellResult cell;
    cell.key.task = task_from_string(row.fields[c_task]);
    cell.key.subset = std::atoi(row.fields[c_subset].c_str());
    cell.key.variant = variant_from_string(row.fields[c_variant]);
    cell.key.model = model_kind_from_string(row.fields[c_model]);
    cell.report.accuracy = std::atof(row.fields[c_acc].c_str());
    cell.report.precision_weighted = std::atof(row.fields[c_prec].c_str());
    cell.report.recall_weighted = std::atof(row.fields[c_rec].c_str());
    cell.report.f1_weighted = std::atof(row.fields[c_f1].c_str());
    cell.report.auc = std::atof(row.fields[c_auc].c_str());
    cell.ok = true;
    for (const char* prefix : {"attrsum_", "imp_"}) {
      const auto p = dir / (prefix + cell.key.slug() + ".csv");
      if (std::filesystem::exists(p)) {
        cell.attribution_path = p.string();
        break;
      }
    }
    const auto model_file = dir / ("model_" + cell.key.slug() + ".sepm");
    if (std::filesystem::exists(model_file)) cell.model_path = model_file.string();
    grid.cells.push_back(std::move(cell));
  }

  if (!skipped_csv.empty() && std::filesystem::exists(skipped_csv)) {
    const CsvTable sk = read_csv(skipped_csv);
    const std::string sk_label = skipped_csv.filename().string();
    const auto s_task = sk.column("task", sk_label);
    const auto s_subset = sk.column("subset", sk_label);
    const auto s_variant = sk.column("variant", sk_label);
    const auto s_model = sk.column("model", sk_label);
    const auto s_reason = sk.column("reason", sk_label);
    for (const auto& row : sk.rows) {
      CellResult cell;
      cell.key.task = task_from_string(row.fields[s_task]);
      cell.key.subset = std::atoi(row.fields[s_subset].c_str());
      cell.key.variant = variant_from_string(row.fields[s_variant]);
      cell.key.model = model_kind_from_string(row.fields[s_model]);
      cell.ok = false;
      cell.error = row.fields[s_reason];
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

}  // namespace sepsis
