#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "sepsis/learners.hpp"

namespace sepsis {

// rows = true label, cols = predicted label.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, 2>, 2> cells{};

  std::int64_t at(int truth, int predicted) const { return cells[truth][predicted]; }
  std::int64_t& at(int truth, int predicted) { return cells[truth][predicted]; }
  std::int64_t total() const;
  std::int64_t support(int cls) const { return cells[cls][0] + cells[cls][1]; }
};

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred);

enum class Average : std::uint8_t { weighted, macro };

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Support-weighted by default; the macro mode exists for sensitivity checks.
// Per-class precision with zero predicted positives counts as 0 and bumps
// the zero-division counter.
Prf weighted_prf(const ConfusionMatrix& confusion, Average average = Average::weighted);

std::size_t metrics_zero_division_count();
void reset_metrics_zero_division_count();

// Mann-Whitney AUC via midranks: P(score_pos > score_neg) + 0.5 P(tie).
// Throws ValidationError when only one class is present.
double roc_auc(std::span<const int> y_true, std::span<const double> scores);

struct EvalReport {
  double accuracy = 0.0;
  double precision_weighted = 0.0;
  double recall_weighted = 0.0;
  double f1_weighted = 0.0;
  double auc = 0.0;
  ConfusionMatrix confusion;
  std::size_t n_test = 0;
};

EvalReport evaluate(const TrainedModel& model, const CohortMatrix& test,
                    Average average = Average::weighted);

}  // namespace sepsis
