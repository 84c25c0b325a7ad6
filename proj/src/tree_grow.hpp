#pragma once

// Internal tree construction machinery shared by the RF / GB / HistGB
// trainers. Not part of the public surface.

#include <cstdint>
#include <span>
#include <vector>

#include "sepsis/rng.hpp"
#include "sepsis/tree.hpp"

namespace sepsis::detail {

// Column-major copy of the training features for cache-friendly split scans.
struct ColumnMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> data;  // column-major

  double at(std::size_t row, std::size_t col) const { return data[col * n_rows + row]; }
  std::span<const double> column(std::size_t col) const {
    return {data.data() + col * n_rows, n_rows};
  }
};

ColumnMatrix to_columns(std::span<const double> row_major, std::size_t n_rows,
                        std::size_t n_cols);

struct GrowParams {
  int max_depth = 0;   // 0 = unlimited
  int min_leaf = 1;
  int max_leaves = 0;  // 0 = unlimited
};

struct GiniParams : GrowParams {
  int feature_subsample = 0;  // features tried per split; 0 = all
};

// CART classification tree on Gini impurity; leaf value = class-1 fraction.
// `rows` may contain duplicates (bootstrap). gain = unnormalized impurity
// decrease N*g(parent) - N_l*g(l) - N_r*g(r).
Tree grow_gini_tree(const ColumnMatrix& X, std::span<const int> y,
                    std::vector<std::size_t> rows, const GiniParams& params, Rng& rng);

// Regression tree on gradient/hessian sums (log-loss boosting step).
// Leaf value = -G/H (0 when H underflows); gain is the usual
// 0.5*(GL^2/HL + GR^2/HR - G^2/H). Split candidates are midpoints between
// consecutive distinct values.
Tree grow_grad_tree_exact(const ColumnMatrix& X, std::span<const double> g,
                          std::span<const double> h, std::vector<std::size_t> rows,
                          const GrowParams& params);

// Pre-binned feature representation for histogram split search.
struct BinnedMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<std::vector<double>> edges;   // per feature, strictly increasing
  std::vector<std::uint8_t> bins;           // column-major bin index per cell

  std::uint8_t bin(std::size_t row, std::size_t col) const { return bins[col * n_rows + row]; }
};

BinnedMatrix bin_matrix(const ColumnMatrix& X, int n_bins);

// Same objective as grow_grad_tree_exact, but candidates are the bin edges.
// Thresholds are stored in raw feature units.
Tree grow_grad_tree_hist(const BinnedMatrix& B, std::span<const double> g,
                         std::span<const double> h, std::vector<std::size_t> rows,
                         const GrowParams& params);

}  // namespace sepsis::detail
