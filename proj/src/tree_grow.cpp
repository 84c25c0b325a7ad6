#include "tree_grow.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <queue>

#include "sepsis/errors.hpp"
#include "sepsis/learners.hpp"

namespace sepsis::detail {

ColumnMatrix to_columns(std::span<const double> row_major, std::size_t n_rows,
                        std::size_t n_cols) {
  ColumnMatrix m;
  m.n_rows = n_rows;
  m.n_cols = n_cols;
  m.data.resize(n_rows * n_cols);
  for (std::size_t i = 0; i < n_rows; ++i) {
    for (std::size_t j = 0; j < n_cols; ++j) {
      m.data[j * n_rows + i] = row_major[i * n_cols + j];
    }
  }
  return m;
}

namespace {

constexpr double kEps = 1e-12;
constexpr double kMinGain = 1e-12;

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  int hist_boundary = -1;
};

using RowSet = std::vector<std::size_t>;

struct PendingNode {
  int node = 0;
  int depth = 0;
  std::shared_ptr<RowSet> rows;
  SplitChoice split;
};

struct PendingOrder {
  bool operator()(const PendingNode& a, const PendingNode& b) const {
    if (a.split.gain != b.split.gain) return a.split.gain < b.split.gain;
    return a.node > b.node;
  }
};

// Best-first growth: with a leaf cap this applies the highest-gain splits
// first; without one it ends up applying every profitable split, which is
// the same tree a depth-first grower would build.
template <typename Finder>
Tree grow(Finder& finder, RowSet rows, const GrowParams& params) {
  Tree tree;
  const int root = tree.append_leaf(finder.leaf_value(rows), static_cast<double>(rows.size()));

  std::priority_queue<PendingNode, std::vector<PendingNode>, PendingOrder> queue;
  auto consider = [&](int node, int depth, RowSet&& node_rows) {
    if (params.max_depth > 0 && depth >= params.max_depth) return;
    if (node_rows.size() < 2 * static_cast<std::size_t>(params.min_leaf)) return;
    auto split = finder.best_split(node_rows);
    if (!split) return;
    queue.push({node, depth, std::make_shared<RowSet>(std::move(node_rows)), *split});
  };
  consider(root, 0, std::move(rows));

  std::size_t leaves = 1;
  while (!queue.empty()) {
    if (params.max_leaves > 0 && leaves >= static_cast<std::size_t>(params.max_leaves)) break;
    PendingNode top = queue.top();
    queue.pop();

    RowSet left_rows, right_rows;
    finder.partition(*top.rows, top.split, left_rows, right_rows);
    const auto [l, r] =
        tree.split_leaf(top.node, top.split.feature, top.split.threshold, top.split.gain);
    tree.value[l] = finder.leaf_value(left_rows);
    tree.cover[l] = static_cast<double>(left_rows.size());
    tree.value[r] = finder.leaf_value(right_rows);
    tree.cover[r] = static_cast<double>(right_rows.size());
    ++leaves;

    consider(l, top.depth + 1, std::move(left_rows));
    consider(r, top.depth + 1, std::move(right_rows));
  }
  return tree;
}

class GiniFinder {
 public:
  GiniFinder(const ColumnMatrix& X, std::span<const int> y, const GiniParams& params, Rng& rng)
      : x_(X), y_(y), params_(params), rng_(rng) {}

  double leaf_value(const RowSet& rows) const {
    std::size_t n1 = 0;
    for (std::size_t r : rows) n1 += static_cast<std::size_t>(y_[r]);
    return static_cast<double>(n1) / static_cast<double>(rows.size());
  }

  std::optional<SplitChoice> best_split(const RowSet& rows) {
    const auto n = rows.size();
    std::size_t n1 = 0;
    for (std::size_t r : rows) n1 += static_cast<std::size_t>(y_[r]);
    if (n1 == 0 || n1 == n) return std::nullopt;

    const double parent_score = score(n - n1, n1);
    SplitChoice best;
    best.gain = kMinGain;

    features_.clear();
    const int d = static_cast<int>(x_.n_cols);
    const int k = params_.feature_subsample;
    if (k > 0 && k < d) {
      // partial Fisher-Yates, then sorted so ties break on feature index
      pool_.resize(d);
      for (int j = 0; j < d; ++j) pool_[j] = j;
      for (int i = 0; i < k; ++i) {
        const auto j = i + static_cast<int>(rng_.uniform_int(static_cast<std::uint64_t>(d - i)));
        std::swap(pool_[i], pool_[j]);
      }
      features_.assign(pool_.begin(), pool_.begin() + k);
      std::sort(features_.begin(), features_.end());
    } else {
      for (int j = 0; j < d; ++j) features_.push_back(j);
    }

    for (int j : features_) {
      vals_.clear();
      for (std::size_t r : rows) vals_.push_back({x_.at(r, j), y_[r]});
      std::sort(vals_.begin(), vals_.end());
      std::size_t n1l = 0;
      for (std::size_t i = 1; i < n; ++i) {
        n1l += static_cast<std::size_t>(vals_[i - 1].second);
        if (vals_[i].first <= vals_[i - 1].first) continue;
        const std::size_t nl = i;
        const std::size_t nr = n - i;
        if (nl < static_cast<std::size_t>(params_.min_leaf) ||
            nr < static_cast<std::size_t>(params_.min_leaf)) {
          continue;
        }
        const double gain =
            score(nl - n1l, n1l) + score(nr - (n1 - n1l), n1 - n1l) - parent_score;
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = j;
          best.threshold = midpoint(vals_[i - 1].first, vals_[i].first);
        }
      }
    }
    if (best.feature < 0) return std::nullopt;
    return best;
  }

  void partition(const RowSet& rows, const SplitChoice& split, RowSet& left, RowSet& right) const {
    for (std::size_t r : rows) {
      (x_.at(r, split.feature) <= split.threshold ? left : right).push_back(r);
    }
  }

 private:
  // n*(1 - gini) up to the shared constant: comparing (n0^2+n1^2)/n terms is
  // equivalent to comparing impurity decreases since the n terms cancel.
  static double score(std::size_t n0, std::size_t n1) {
    const double a = static_cast<double>(n0);
    const double b = static_cast<double>(n1);
    return (a * a + b * b) / (a + b);
  }

  static double midpoint(double a, double b) {
    const double m = 0.5 * (a + b);
    return m >= b ? a : m;
  }

  const ColumnMatrix& x_;
  std::span<const int> y_;
  GiniParams params_;
  Rng& rng_;
  std::vector<int> features_;
  std::vector<int> pool_;
  std::vector<std::pair<double, int>> vals_;
};

double grad_leaf_value(std::span<const double> g, std::span<const double> h, const RowSet& rows) {
  double G = 0.0, H = 0.0;
  for (std::size_t r : rows) {
    G += g[r];
    H += h[r];
  }
  return H < kEps ? 0.0 : -G / H;
}

class ExactGradFinder {
 public:
  ExactGradFinder(const ColumnMatrix& X, std::span<const double> g, std::span<const double> h,
                  const GrowParams& params)
      : x_(X), g_(g), h_(h), params_(params) {}

  double leaf_value(const RowSet& rows) const { return grad_leaf_value(g_, h_, rows); }

  std::optional<SplitChoice> best_split(const RowSet& rows) {
    const auto n = rows.size();
    double G = 0.0, H = 0.0;
    for (std::size_t r : rows) {
      G += g_[r];
      H += h_[r];
    }
    const double parent_score = G * G / (H + kEps);

    SplitChoice best;
    best.gain = kMinGain;
    for (int j = 0; j < static_cast<int>(x_.n_cols); ++j) {
      vals_.clear();
      for (std::size_t r : rows) vals_.push_back({x_.at(r, j), r});
      std::sort(vals_.begin(), vals_.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double gl = 0.0, hl = 0.0;
      for (std::size_t i = 1; i < n; ++i) {
        gl += g_[vals_[i - 1].second];
        hl += h_[vals_[i - 1].second];
        if (vals_[i].first <= vals_[i - 1].first) continue;
        const std::size_t nl = i;
        const std::size_t nr = n - i;
        if (nl < static_cast<std::size_t>(params_.min_leaf) ||
            nr < static_cast<std::size_t>(params_.min_leaf)) {
          continue;
        }
        const double gr = G - gl;
        const double hr = H - hl;
        const double gain = 0.5 * (gl * gl / (hl + kEps) + gr * gr / (hr + kEps) - parent_score);
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = j;
          best.threshold = midpoint(vals_[i - 1].first, vals_[i].first);
        }
      }
    }
    if (best.feature < 0) return std::nullopt;
    return best;
  }

  void partition(const RowSet& rows, const SplitChoice& split, RowSet& left, RowSet& right) const {
    for (std::size_t r : rows) {
      (x_.at(r, split.feature) <= split.threshold ? left : right).push_back(r);
    }
  }

 private:
  static double midpoint(double a, double b) {
    const double m = 0.5 * (a + b);
    return m >= b ? a : m;
  }

  const ColumnMatrix& x_;
  std::span<const double> g_;
  std::span<const double> h_;
  GrowParams params_;
  std::vector<std::pair<double, std::size_t>> vals_;
};

class HistGradFinder {
 public:
  HistGradFinder(const BinnedMatrix& B, std::span<const double> g, std::span<const double> h,
                 const GrowParams& params)
      : b_(B), g_(g), h_(h), params_(params) {}

  double leaf_value(const RowSet& rows) const { return grad_leaf_value(g_, h_, rows); }

  std::optional<SplitChoice> best_split(const RowSet& rows) {
    double G = 0.0, H = 0.0;
    for (std::size_t r : rows) {
      G += g_[r];
      H += h_[r];
    }
    const double parent_score = G * G / (H + kEps);

    SplitChoice best;
    best.gain = kMinGain;
    for (int j = 0; j < static_cast<int>(b_.n_cols); ++j) {
      const auto& edges = b_.edges[j];
      if (edges.empty()) continue;
      const std::size_t n_bins = edges.size() + 1;
      gsum_.assign(n_bins, 0.0);
      hsum_.assign(n_bins, 0.0);
      cnt_.assign(n_bins, 0);
      for (std::size_t r : rows) {
        const auto b = b_.bin(r, j);
        gsum_[b] += g_[r];
        hsum_[b] += h_[r];
        ++cnt_[b];
      }
      double gl = 0.0, hl = 0.0;
      std::size_t nl = 0;
      for (std::size_t b = 0; b + 1 < n_bins; ++b) {
        gl += gsum_[b];
        hl += hsum_[b];
        nl += cnt_[b];
        const std::size_t nr = rows.size() - nl;
        if (nl < static_cast<std::size_t>(params_.min_leaf) ||
            nr < static_cast<std::size_t>(params_.min_leaf)) {
          continue;
        }
        const double gr = G - gl;
        const double hr = H - hl;
        const double gain = 0.5 * (gl * gl / (hl + kEps) + gr * gr / (hr + kEps) - parent_score);
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = j;
          best.threshold = edges[b];
          best.hist_boundary = static_cast<int>(b);
        }
      }
    }
    if (best.feature < 0) return std::nullopt;
    return best;
  }

  void partition(const RowSet& rows, const SplitChoice& split, RowSet& left, RowSet& right) const {
    for (std::size_t r : rows) {
      (b_.bin(r, split.feature) <= split.hist_boundary ? left : right).push_back(r);
    }
  }

 private:
  const BinnedMatrix& b_;
  std::span<const double> g_;
  std::span<const double> h_;
  GrowParams params_;
  std::vector<double> gsum_, hsum_;
  std::vector<std::size_t> cnt_;
};

}  // namespace

Tree grow_gini_tree(const ColumnMatrix& X, std::span<const int> y, std::vector<std::size_t> rows,
                    const GiniParams& params, Rng& rng) {
  GiniFinder finder(X, y, params, rng);
  return grow(finder, std::move(rows), params);
}

Tree grow_grad_tree_exact(const ColumnMatrix& X, std::span<const double> g,
                          std::span<const double> h, std::vector<std::size_t> rows,
                          const GrowParams& params) {
  ExactGradFinder finder(X, g, h, params);
  return grow(finder, std::move(rows), params);
}

Tree grow_grad_tree_hist(const BinnedMatrix& B, std::span<const double> g,
                         std::span<const double> h, std::vector<std::size_t> rows,
                         const GrowParams& params) {
  HistGradFinder finder(B, g, h, params);
  return grow(finder, std::move(rows), params);
}

BinnedMatrix bin_matrix(const ColumnMatrix& X, int n_bins) {
  BinnedMatrix out;
  out.n_rows = X.n_rows;
  out.n_cols = X.n_cols;
  out.edges.resize(X.n_cols);
  out.bins.resize(X.n_rows * X.n_cols);
  for (std::size_t j = 0; j < X.n_cols; ++j) {
    const auto col = X.column(j);
    out.edges[j] = histogram_bin_column(col, n_bins);
    const auto& edges = out.edges[j];
    for (std::size_t i = 0; i < X.n_rows; ++i) {
      const auto it = std::lower_bound(edges.begin(), edges.end(), col[i]);
      out.bins[j * X.n_rows + i] = static_cast<std::uint8_t>(it - edges.begin());
    }
  }
  return out;
}

}  // namespace sepsis::detail
