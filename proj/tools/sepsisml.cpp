// sepsisml: synthetic-cohort generation, lab ranking, the experiment grid,
// model explanation and report re-emission, over the sepsis outcome
// prediction library.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sepsis/cohort.hpp"
#include "sepsis/csv.hpp"
#include "sepsis/domain.hpp"
#include "sepsis/errors.hpp"
#include "sepsis/explain.hpp"
#include "sepsis/rng.hpp"
#include "sepsis/runner.hpp"
#include "sepsis/synth.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAllCellsFailed = 3;

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw sepsis::IoError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw sepsis::ConfigError("config parse error in '" + path.string() + "': " + e.what());
  }
  return j;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void apply_synth_json(const json& j, sepsis::SynthConfig& cfg) {
  if (j.contains("n_records")) cfg.n_records = j["n_records"].get<std::size_t>();
  if (j.contains("age_mean")) cfg.age_mean = j["age_mean"].get<double>();
  if (j.contains("age_sd")) cfg.age_sd = j["age_sd"].get<double>();
  if (j.contains("sex_balance")) cfg.sex_balance = j["sex_balance"].get<double>();
  if (j.contains("stay_log_mean")) cfg.stay_log_mean = j["stay_log_mean"].get<double>();
  if (j.contains("stay_log_sd")) cfg.stay_log_sd = j["stay_log_sd"].get<double>();
  if (j.contains("panel_grouping")) cfg.panel_grouping = j["panel_grouping"].get<bool>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("outcome_mix")) {
    const auto& m = j["outcome_mix"];
    if (m.is_array() && m.size() == 4) {
      for (int i = 0; i < 4; ++i) cfg.outcome_mix[i] = m[i].get<double>();
    } else if (m.is_object()) {
      cfg.outcome_mix = {m.value("deceased", cfg.outcome_mix[0]),
                         m.value("recovered", cfg.outcome_mix[1]),
                         m.value("improved", cfg.outcome_mix[2]),
                         m.value("worsened", cfg.outcome_mix[3])};
    } else {
      throw sepsis::ConfigError("outcome_mix must be a 4-array or an object");
    }
  }
  if (j.contains("signal")) {
    cfg.signal_spec.clear();
    for (const auto& term : j["signal"]) {
      cfg.signal_spec.push_back(
          {term.at("feature").get<std::string>(), term.at("effect").get<double>()});
    }
  }
  if (j.contains("lab_frequencies")) {
    cfg.lab_frequencies.clear();
    for (const auto& lab : j["lab_frequencies"]) {
      cfg.lab_frequencies.push_back({lab.at("name").get<std::string>(),
                                     lab.at("fraction").get<double>(),
                                     lab.value("lo", 0.0), lab.value("hi", 1.0)});
    }
  }
}

sepsis::HyperParams hyperparams_from_json(const json& j, sepsis::ModelKind kind) {
  sepsis::HyperParams hp = sepsis::HyperParams::defaults_for(kind);
  if (j.contains("l2_strength")) hp.l2_strength = j["l2_strength"].get<double>();
  if (j.contains("max_iters")) hp.max_iters = j["max_iters"].get<int>();
  if (j.contains("tol")) hp.tol = j["tol"].get<double>();
  if (j.contains("n_trees")) hp.n_trees = j["n_trees"].get<int>();
  if (j.contains("learning_rate")) hp.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("max_depth")) hp.max_depth = j["max_depth"].get<int>();
  if (j.contains("min_leaf")) hp.min_leaf = j["min_leaf"].get<int>();
  if (j.contains("feature_subsample")) hp.feature_subsample = j["feature_subsample"].get<int>();
  if (j.contains("bootstrap")) hp.bootstrap = j["bootstrap"].get<bool>();
  if (j.contains("n_bins")) hp.n_bins = j["n_bins"].get<int>();
  if (j.contains("max_leaves")) hp.max_leaves = j["max_leaves"].get<int>();
  return hp;
}

// The config file, when given, overrides flag values field by field.
void apply_experiment_json(const json& j, sepsis::ExperimentConfig& cfg) {
  if (j.contains("data")) {
    const auto& d = j["data"];
    if (d.contains("hosp")) cfg.hosp_path = d["hosp"].get<std::string>();
    if (d.contains("labs")) cfg.labs_path = d["labs"].get<std::string>();
    if (d.contains("diag")) cfg.diag_path = d["diag"].get<std::string>();
  }
  if (j.contains("synth")) {
    if (!cfg.synth) cfg.synth = sepsis::SynthConfig{};
    apply_synth_json(j["synth"], *cfg.synth);
  }
  if (j.contains("subset_sizes")) cfg.subset_sizes = j["subset_sizes"].get<std::vector<int>>();
  if (j.contains("variants")) {
    cfg.variants.clear();
    for (const auto& v : j["variants"]) {
      cfg.variants.push_back(sepsis::variant_from_string(v.get<std::string>()));
    }
  }
  if (j.contains("tasks")) {
    cfg.tasks.clear();
    for (const auto& t : j["tasks"]) {
      cfg.tasks.push_back(sepsis::task_from_string(t.get<std::string>()));
    }
  }
  if (j.contains("models")) {
    cfg.models.clear();
    for (const auto& m : j["models"]) {
      cfg.models.push_back(sepsis::model_kind_from_string(m.get<std::string>()));
    }
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("undersample")) cfg.undersample = j["undersample"].get<bool>();
  if (j.contains("dump_matrices")) cfg.dump_matrices = j["dump_matrices"].get<bool>();
  if (j.contains("test_fraction")) cfg.test_fraction = j["test_fraction"].get<double>();
  if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
  if (j.contains("shap_sample")) cfg.shap_sample = j["shap_sample"].get<int>();
  if (j.contains("permutation_repeats")) {
    cfg.permutation_repeats = j["permutation_repeats"].get<int>();
  }
  if (j.contains("average")) {
    const auto avg = j["average"].get<std::string>();
    if (avg == "weighted") cfg.average = sepsis::Average::weighted;
    else if (avg == "macro") cfg.average = sepsis::Average::macro;
    else throw sepsis::ConfigError("average must be 'weighted' or 'macro'");
  }
  if (j.contains("hyperparams")) {
    for (const auto& [name, block] : j["hyperparams"].items()) {
      const auto kind = sepsis::model_kind_from_string(name);
      cfg.hyper_overrides.emplace_back(kind, hyperparams_from_json(block, kind));
    }
  }
}

int cmd_synth(const std::string& out_dir, sepsis::SynthConfig cfg, const std::string& config_file,
              const std::string& inject_category, double inject_multiplier,
              std::uint64_t inject_seed) {
  if (!config_file.empty()) apply_synth_json(load_json(config_file), cfg);
  auto records = sepsis::generate(cfg);
  if (!inject_category.empty()) {
    const auto cat = sepsis::comorbidity_category_from_string(inject_category);
    if (!cat) throw sepsis::ConfigError("unknown comorbidity category: '" + inject_category + "'");
    records = sepsis::inject_comorbidity_signal(std::move(records), *cat, inject_multiplier,
                                                inject_seed);
  }
  const auto paths = sepsis::write_cohort_csvs(records, out_dir);
  std::cout << "wrote " << records.size() << " records to " << paths.hospitalizations.string()
            << ", " << paths.labs.string() << ", " << paths.diagnoses.string() << "\n";
  return kExitOk;
}

int cmd_rank(const std::string& hosp, const std::string& labs, const std::string& diag,
             const std::string& out_dir) {
  const auto ingest = sepsis::ingest_cohort(hosp, labs, diag);
  const auto filtered = sepsis::apply_inclusion_filters(ingest.records);
  if (filtered.kept.empty()) throw sepsis::ValidationError("no records pass the inclusion filters");
  const auto registry = sepsis::rank_lab_tests(filtered.kept);

  std::filesystem::create_directories(out_dir);
  std::vector<std::vector<std::string>> rows;
  char buf[32];
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const auto& e = registry.ranked_tests[i];
    std::snprintf(buf, sizeof buf, "%.6f", e.patient_fraction);
    rows.push_back({std::to_string(i + 1), e.test_name, std::to_string(e.patient_count), buf});
  }
  sepsis::write_csv(std::filesystem::path(out_dir) / "lab_registry.csv",
                    {"rank", "test_name", "patient_count", "patient_fraction"}, rows);

  rows.clear();
  for (int n : {10, 20, 30, 40, 50}) {
    if (static_cast<std::size_t>(n) > registry.size()) break;
    std::snprintf(buf, sizeof buf, "%.6f", sepsis::coverage(filtered.kept, registry, n));
    rows.push_back({std::to_string(n), buf});
  }
  sepsis::write_csv(std::filesystem::path(out_dir) / "coverage.csv", {"subset_size", "coverage"},
                    rows);
  std::cout << "ranked " << registry.size() << " tests over " << filtered.kept.size()
            << " records (" << ingest.report.orphan_labs.size() << " orphan lab rows, "
            << filtered.excluded.total() << " excluded records)\n";
  return kExitOk;
}

int cmd_run(sepsis::ExperimentConfig cfg, const std::string& config_file) {
  if (!config_file.empty()) apply_experiment_json(load_json(config_file), cfg);
  const auto grid = sepsis::run_grid(cfg);
  sepsis::emit_report(grid, cfg.output_dir);
  std::cout << "grid: " << grid.n_ok() << " cells completed, " << grid.n_failed()
            << " skipped; report in " << cfg.output_dir.string() << "\n";
  if (grid.n_ok() == 0) return kExitAllCellsFailed;
  return kExitOk;
}

int cmd_explain(const std::string& model_file, const std::string& data_file,
                const std::string& out_dir, std::string method, std::size_t top_k,
                std::uint64_t seed, int repeats) {
  const auto model = sepsis::load_model(model_file);
  const auto matrix = sepsis::CohortMatrix::read_csv(data_file);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  if (method == "auto") {
    if (model.is_tree_model()) method = "tree_shap";
    else if (model.kind == sepsis::ModelKind::logistic_regression) method = "coef";
    else method = "permutation";
  }

  if (method == "tree_shap") {
    const auto attr = sepsis::tree_shap(model, matrix);
    sepsis::write_attribution_csv(attr, dir / "attributions.csv");
    const auto summary = sepsis::shap_summary(attr, matrix, top_k);
    sepsis::write_shap_summary_csv(summary, dir / "shap_summary.csv");
    std::cout << "top features by mean |phi|:\n";
    for (const auto& row : summary) {
      std::printf("  %-55s %10.6f  (corr %+.2f)\n", row.feature.c_str(), row.mean_abs_phi,
                  row.sign_correlation);
    }
    return kExitOk;
  }

  sepsis::AttributionSet attr;
  if (method == "coef") {
    attr = sepsis::coef_importance(model);
  } else if (method == "permutation") {
    attr = sepsis::permutation_importance(model, matrix, repeats, seed);
  } else if (method == "gini") {
    attr = sepsis::gini_importance(model);
  } else {
    throw sepsis::ConfigError("unknown method '" + method +
                              "' (want auto|tree_shap|coef|permutation|gini)");
  }
  const auto ranking = sepsis::ranked_importance(attr);
  sepsis::write_importance_csv(ranking, dir / "importance.csv");
  std::cout << "top features by importance:\n";
  for (std::size_t i = 0; i < std::min(top_k, ranking.size()); ++i) {
    std::printf("  %-55s %10.6f\n", ranking[i].feature.c_str(), ranking[i].score);
  }
  return kExitOk;
}

int cmd_report(const std::string& results_file, const std::string& skipped_file,
               const std::string& out_dir) {
  const auto grid = sepsis::load_grid_results(results_file, skipped_file);
  sepsis::emit_report(grid, out_dir);
  std::cout << "re-emitted report for " << grid.cells.size() << " cells into " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sepsis outcome prediction pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort (three ingestion CSVs)");
  std::string synth_out = "cohort";
  sepsis::SynthConfig synth_cfg;
  std::string synth_config_file;
  std::string inject_category;
  double inject_multiplier = 1.0;
  std::uint64_t inject_seed = 0;
  std::vector<double> outcome_mix_flag;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--n", synth_cfg.n_records, "number of hospitalizations");
  synth->add_option("--seed", synth_cfg.seed, "generator seed");
  synth->add_option("--age-mean", synth_cfg.age_mean, "mean age");
  synth->add_option("--age-sd", synth_cfg.age_sd, "age standard deviation");
  synth->add_option("--sex-balance", synth_cfg.sex_balance, "fraction female");
  synth->add_option("--stay-log-mean", synth_cfg.stay_log_mean, "log-days stay location");
  synth->add_option("--stay-log-sd", synth_cfg.stay_log_sd, "log-days stay scale");
  synth->add_option("--outcome-mix", outcome_mix_flag,
                    "deceased recovered improved worsened probabilities")
      ->expected(4);
  synth->add_flag("--panel-grouping", synth_cfg.panel_grouping,
                  "sample hemogram tests jointly per record");
  synth->add_option("--config", synth_config_file, "JSON config (overrides flags)");
  synth->add_option("--inject-category", inject_category,
                    "comorbidity category to tie to mortality");
  synth->add_option("--inject-multiplier", inject_multiplier, "death odds multiplier");
  synth->add_option("--inject-seed", inject_seed, "seed for the outcome reassignment");

  // rank
  auto* rank = app.add_subcommand("rank", "lab frequency registry and coverage table");
  std::string rank_hosp, rank_labs, rank_diag, rank_out = "rank";
  rank->add_option("--hosp", rank_hosp, "hospitalizations.csv")->required();
  rank->add_option("--labs", rank_labs, "labs.csv")->required();
  rank->add_option("--diag", rank_diag, "diagnoses.csv")->required();
  rank->add_option("--out", rank_out, "output directory");

  // run
  auto* run = app.add_subcommand("run", "run the experiment grid");
  sepsis::ExperimentConfig run_cfg;
  std::string run_config_file;
  std::string subsets_flag, variants_flag, tasks_flag, models_flag;
  std::string hosp_flag, labs_flag, diag_flag, out_flag = "out";
  std::uint64_t synth_n = 0;
  bool no_undersample = false;
  bool macro_avg = false;
  run->add_option("--seed", run_cfg.seed, "master seed")->required();
  run->add_option("--hosp", hosp_flag, "hospitalizations.csv");
  run->add_option("--labs", labs_flag, "labs.csv");
  run->add_option("--diag", diag_flag, "diagnoses.csv");
  run->add_option("--synth-n", synth_n, "generate a synthetic cohort of this size instead");
  run->add_option("--out", out_flag, "output directory");
  run->add_option("--subsets", subsets_flag, "comma list of subset sizes (default 10..50)");
  run->add_option("--variants", variants_flag, "comma list: base,extended (or nodiag,diag)");
  run->add_option("--tasks", tasks_flag, "comma list of task names");
  run->add_option("--models", models_flag, "comma list: LR,SVC,RF,GB,HistGB");
  run->add_flag("--no-undersample", no_undersample, "skip majority-class undersampling");
  run->add_flag("--dump-matrices", run_cfg.dump_matrices,
                "write each combo's design matrix CSV for audit/explain");
  run->add_option("--test-fraction", run_cfg.test_fraction, "held-out fraction (default 0.2)");
  run->add_option("--jobs", run_cfg.jobs, "worker threads (0 = hardware)");
  run->add_option("--shap-sample", run_cfg.shap_sample, "test rows attributed per tree model");
  run->add_option("--permutation-repeats", run_cfg.permutation_repeats,
                  "permutation importance repeats");
  run->add_flag("--macro-avg", macro_avg, "macro-averaged precision/recall/F1");
  run->add_option("--config", run_config_file, "JSON config (overrides flags)");

  // explain
  auto* explain = app.add_subcommand("explain", "attribute a saved model on a matrix CSV");
  std::string ex_model, ex_data, ex_out = "explain_out", ex_method = "auto";
  std::size_t ex_top_k = 20;
  std::uint64_t ex_seed = 0;
  int ex_repeats = 10;
  explain->add_option("--model", ex_model, "model file (.sepm)")->required();
  explain->add_option("--data", ex_data, "cohort matrix CSV")->required();
  explain->add_option("--out", ex_out, "output directory");
  explain->add_option("--method", ex_method, "auto|tree_shap|coef|permutation|gini");
  explain->add_option("--top-k", ex_top_k, "features to print/rank");
  explain->add_option("--seed", ex_seed, "seed (permutation method)");
  explain->add_option("--repeats", ex_repeats, "permutation repeats");

  // report
  auto* report = app.add_subcommand("report", "re-emit tables and plots from results.csv");
  std::string rep_results, rep_skipped, rep_out = "report_out";
  report->add_option("--results", rep_results, "results.csv")->required();
  report->add_option("--skipped", rep_skipped, "skipped.csv (optional)");
  report->add_option("--out", rep_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed()) {
      if (!outcome_mix_flag.empty()) {
        for (int i = 0; i < 4; ++i) synth_cfg.outcome_mix[i] = outcome_mix_flag[i];
      }
      return cmd_synth(synth_out, synth_cfg, synth_config_file, inject_category,
                       inject_multiplier, inject_seed);
    }
    if (rank->parsed()) return cmd_rank(rank_hosp, rank_labs, rank_diag, rank_out);
    if (run->parsed()) {
      run_cfg.hosp_path = hosp_flag;
      run_cfg.labs_path = labs_flag;
      run_cfg.diag_path = diag_flag;
      run_cfg.output_dir = out_flag;
      run_cfg.undersample = !no_undersample;
      run_cfg.average = macro_avg ? sepsis::Average::macro : sepsis::Average::weighted;
      if (synth_n > 0) {
        sepsis::SynthConfig sc;
        sc.n_records = synth_n;
        sc.seed = sepsis::hash_tag(run_cfg.seed, "run-synth");
        run_cfg.synth = sc;
      }
      if (!subsets_flag.empty()) {
        run_cfg.subset_sizes.clear();
        for (const auto& s : split_list(subsets_flag)) run_cfg.subset_sizes.push_back(std::stoi(s));
      }
      if (!variants_flag.empty()) {
        run_cfg.variants.clear();
        for (const auto& s : split_list(variants_flag)) {
          run_cfg.variants.push_back(sepsis::variant_from_string(s));
        }
      }
      if (!tasks_flag.empty()) {
        run_cfg.tasks.clear();
        for (const auto& s : split_list(tasks_flag)) {
          run_cfg.tasks.push_back(sepsis::task_from_string(s));
        }
      }
      if (!models_flag.empty()) {
        run_cfg.models.clear();
        for (const auto& s : split_list(models_flag)) {
          run_cfg.models.push_back(sepsis::model_kind_from_string(s));
        }
      }
      return cmd_run(run_cfg, run_config_file);
    }
    if (explain->parsed()) {
      return cmd_explain(ex_model, ex_data, ex_out, ex_method, ex_top_k, ex_seed, ex_repeats);
    }
    if (report->parsed()) return cmd_report(rep_results, rep_skipped, rep_out);
  } catch (const sepsis::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const sepsis::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
