#include "sepsis/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <vector>

#include "sepsis/errors.hpp"

namespace sepsis {

namespace {
std::atomic<std::size_t> g_zero_division_count{0};
}

std::int64_t ConfusionMatrix::total() const {
  return cells[0][0] + cells[0][1] + cells[1][0] + cells[1][1];
}

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw ValidationError("confusion_matrix: length mismatch (" + std::to_string(y_true.size()) +
                          " vs " + std::to_string(y_pred.size()) + ")");
  }
  ConfusionMatrix m;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    const int p = y_pred[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1)) {
      throw ValidationError("confusion_matrix: labels must be binary");
    }
    ++m.at(t, p);
  }
  return m;
}

std::size_t metrics_zero_division_count() { return g_zero_division_count.load(); }
void reset_metrics_zero_division_count() { g_zero_division_count.store(0); }

Prf weighted_prf(const ConfusionMatrix& confusion, Average average) {
  const auto n = confusion.total();
  if (n == 0) throw ValidationError("weighted_prf: empty confusion matrix");

  Prf out;
  double weight_sum = 0.0;
  for (int cls : {0, 1}) {
    const auto support = confusion.support(cls);
    const auto predicted = confusion.at(0, cls) + confusion.at(1, cls);
    const auto correct = confusion.at(cls, cls);

    double precision = 0.0;
    if (predicted > 0) {
      precision = static_cast<double>(correct) / static_cast<double>(predicted);
    } else if (support > 0) {
      ++g_zero_division_count;
    }
    const double recall =
        support > 0 ? static_cast<double>(correct) / static_cast<double>(support) : 0.0;
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;

    double weight;
    if (average == Average::weighted) {
      weight = static_cast<double>(support) / static_cast<double>(n);
    } else {
      weight = support > 0 ? 0.5 : 0.0;  // macro over present classes
    }
    out.precision += weight * precision;
    out.recall += weight * recall;
    out.f1 += weight * f1;
    weight_sum += weight;
  }
  if (average == Average::macro && weight_sum > 0.0 && weight_sum != 1.0) {
    out.precision /= weight_sum;
    out.recall /= weight_sum;
    out.f1 /= weight_sum;
  }
  return out;
}

double roc_auc(std::span<const int> y_true, std::span<const double> scores) {
  if (y_true.size() != scores.size()) throw ValidationError("roc_auc: length mismatch");
  std::size_t n_pos = 0;
  for (int y : y_true) {
    if (y != 0 && y != 1) throw ValidationError("roc_auc: labels must be binary");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n = y_true.size();
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ValidationError("AUC undefined: both classes must be present");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("roc_auc: scores must be finite");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // midranks: tied scores share the average of their rank range
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (y_true[order[k]] == 1) rank_sum_pos += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

EvalReport evaluate(const TrainedModel& model, const CohortMatrix& test, Average average) {
  if (test.n_rows == 0) throw ValidationError("evaluate: empty test matrix");
  const auto scores = predict_score(model, test);
  const auto labels = predict_label(model, test);

  EvalReport report;
  report.n_test = test.n_rows;
  report.confusion = confusion_matrix(test.labels, labels);
  report.accuracy = static_cast<double>(report.confusion.at(0, 0) + report.confusion.at(1, 1)) /
                    static_cast<double>(report.confusion.total());
  const Prf prf = weighted_prf(report.confusion, average);
  report.precision_weighted = prf.precision;
  report.recall_weighted = prf.recall;
  report.f1_weighted = prf.f1;
  report.auc = roc_auc(test.labels, scores);
  return report;
}

}  // namespace sepsis
