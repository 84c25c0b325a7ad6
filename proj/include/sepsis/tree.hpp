#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sepsis {

// Binary decision tree stored as parallel node arrays. Routing rule:
// x[feature] <= threshold goes left. Leaves have feature == -1 and both
// children == -1; internal nodes always have two children.
//
// `value` is the leaf payout already scaled for ensemble summation (class
// fraction / n_trees for bagged trees, learning-rate-scaled additive step
// for boosted trees). `cover` is the number of training rows routed through
// the node; `gain` is the split quality recorded at internal nodes.
struct Tree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> value;
  std::vector<double> cover;
  std::vector<double> gain;

  std::size_t n_nodes() const { return feature.size(); }
  bool is_leaf(int n) const { return feature[static_cast<std::size_t>(n)] < 0; }

  int append_leaf(double leaf_value, double leaf_cover);
  // Turns an existing leaf into an internal node; returns {left_id, right_id}.
  std::pair<int, int> split_leaf(int node, int split_feature, double split_threshold,
                                 double split_gain);

  double predict(std::span<const double> row) const;
  int leaf_for(std::span<const double> row) const;
  double expected_value() const;  // cover-weighted mean over leaves
  int max_depth() const;

  // Throws ValidationError when the node arrays do not describe a
  // well-formed binary tree.
  void validate() const;
};

}  // namespace sepsis
