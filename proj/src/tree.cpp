#include "sepsis/tree.hpp"

#include <algorithm>
#include <string>

#include "sepsis/errors.hpp"

namespace sepsis {

int Tree::append_leaf(double leaf_value, double leaf_cover) {
  const int id = static_cast<int>(n_nodes());
  feature.push_back(-1);
  threshold.push_back(0.0);
  left.push_back(-1);
  right.push_back(-1);
  value.push_back(leaf_value);
  cover.push_back(leaf_cover);
  gain.push_back(0.0);
  return id;
}

std::pair<int, int> Tree::split_leaf(int node, int split_feature, double split_threshold,
                                     double split_gain) {
  const int l = append_leaf(0.0, 0.0);
  const int r = append_leaf(0.0, 0.0);
  feature[node] = split_feature;
  threshold[node] = split_threshold;
  left[node] = l;
  right[node] = r;
  value[node] = 0.0;
  gain[node] = split_gain;
  return {l, r};
}

double Tree::predict(std::span<const double> row) const {
  return value[static_cast<std::size_t>(leaf_for(row))];
}

int Tree::leaf_for(std::span<const double> row) const {
  int n = 0;
  while (!is_leaf(n)) {
    n = row[static_cast<std::size_t>(feature[n])] <= threshold[n] ? left[n] : right[n];
  }
  return n;
}

double Tree::expected_value() const {
  // E over the training distribution: recurse with cover weights.
  struct Walker {
    const Tree& t;
    double run(int n) const {
      if (t.is_leaf(n)) return t.value[n];
      const double c = t.cover[n];
      if (c <= 0.0) return 0.0;
      return (t.cover[t.left[n]] * run(t.left[n]) + t.cover[t.right[n]] * run(t.right[n])) / c;
    }
  };
  return Walker{*this}.run(0);
}

int Tree::max_depth() const {
  struct Walker {
    const Tree& t;
    int run(int n) const {
      if (t.is_leaf(n)) return 0;
      return 1 + std::max(run(t.left[n]), run(t.right[n]));
    }
  };
  return Walker{*this}.run(0);
}

void Tree::validate() const {
  const auto n = static_cast<int>(n_nodes());
  if (n == 0) throw ValidationError("tree has no nodes");
  if (threshold.size() != n_nodes() || left.size() != n_nodes() || right.size() != n_nodes() ||
      value.size() != n_nodes() || cover.size() != n_nodes() || gain.size() != n_nodes()) {
    throw ValidationError("tree node arrays have inconsistent lengths");
  }
  std::vector<int> seen(n_nodes(), 0);
  for (int i = 0; i < n; ++i) {
    const bool leaf = feature[i] < 0;
    if (leaf != (left[i] < 0) || leaf != (right[i] < 0)) {
      throw ValidationError("tree node " + std::to_string(i) + " mixes leaf and internal state");
    }
    if (!leaf) {
      for (int child : {left[i], right[i]}) {
        if (child <= 0 || child >= n) {
          throw ValidationError("tree node " + std::to_string(i) + " has child out of range");
        }
        if (seen[child]++) {
          throw ValidationError("tree node " + std::to_string(child) + " has multiple parents");
        }
      }
    }
  }
  for (int i = 1; i < n; ++i) {
    if (!seen[i]) throw ValidationError("tree node " + std::to_string(i) + " is unreachable");
  }
}

}  // namespace sepsis
