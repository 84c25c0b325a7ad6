#pragma once

// Independent reference implementations the test suites check the library
// against: exponential-enumeration Shapley values with cover-conditioned
// valuation, O(n^2) pairwise AUC, a from-scratch log-loss objective for
// finite differences, plus random tree/dataset generators and a minimal
// XML well-formedness checker for the emitted SVGs.

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "sepsis/cohort.hpp"
#include "sepsis/rng.hpp"
#include "sepsis/tree.hpp"

namespace oracle {

// Conditional expectation of a tree: coalition features follow the
// instance, the rest average children by training cover.
inline double expvalue(const sepsis::Tree& t, std::span<const double> x, std::uint32_t coalition,
                       int node = 0) {
  if (t.is_leaf(node)) return t.value[node];
  const int f = t.feature[node];
  if (coalition & (1u << f)) {
    const int child = x[f] <= t.threshold[node] ? t.left[node] : t.right[node];
    return expvalue(t, x, coalition, child);
  }
  const double cl = t.cover[t.left[node]];
  const double cr = t.cover[t.right[node]];
  return (cl * expvalue(t, x, coalition, t.left[node]) +
          cr * expvalue(t, x, coalition, t.right[node])) /
         (cl + cr);
}

inline double ensemble_expvalue(std::span<const sepsis::Tree> trees, std::span<const double> x,
                                std::uint32_t coalition) {
  double v = 0.0;
  for (const auto& t : trees) v += expvalue(t, x, coalition);
  return v;
}

// Exact Shapley values by enumerating all 2^d coalitions.
inline std::vector<double> brute_force_shap(std::span<const sepsis::Tree> trees,
                                            std::span<const double> x) {
  const int d = static_cast<int>(x.size());
  std::vector<double> factorial(d + 1, 1.0);
  for (int i = 1; i <= d; ++i) factorial[i] = factorial[i - 1] * i;

  std::vector<double> value(1u << d);
  for (std::uint32_t s = 0; s < value.size(); ++s) {
    value[s] = ensemble_expvalue(trees, x, s);
  }
  std::vector<double> phi(d, 0.0);
  for (int j = 0; j < d; ++j) {
    for (std::uint32_t s = 0; s < value.size(); ++s) {
      if (s & (1u << j)) continue;
      const int size = static_cast<int>(std::popcount(s));
      const double weight = factorial[size] * factorial[d - size - 1] / factorial[d];
      phi[j] += weight * (value[s | (1u << j)] - value[s]);
    }
  }
  return phi;
}

// O(n^2) Mann-Whitney AUC.
inline double pairwise_auc(std::span<const int> y, std::span<const double> s) {
  double won = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1) {
      ++n_pos;
      for (std::size_t k = 0; k < y.size(); ++k) {
        if (y[k] == 0) {
          if (s[i] > s[k]) won += 1.0;
          else if (s[i] == s[k]) won += 0.5;
        }
      }
    } else {
      ++n_neg;
    }
  }
  return won / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Independent restatement of the regularized log-loss objective, used to
// finite-difference the trainer's analytic gradient. Works on +-1 margins
// rather than the library's {0,1} formulation.
inline double lr_objective(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                           const std::vector<double>& w, double b, double l2) {
  const std::size_t n = X.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += X[i][j] * w[j];
    const double margin = (y[i] ? 1.0 : -1.0) * z;
    loss += margin > 35.0 ? std::exp(-margin) : std::log(1.0 + std::exp(-margin));
  }
  double reg = 0.0;
  for (double wj : w) reg += wj * wj;
  return loss / static_cast<double>(n) + 0.5 * l2 * reg / static_cast<double>(n);
}

// Random binary tree with consistent covers (parent = left + right) and
// random leaf values; the shape the TreeSHAP oracle comparison runs on.
inline sepsis::Tree random_tree(sepsis::Rng& rng, int n_features, int max_depth,
                                double split_prob = 0.8) {
  sepsis::Tree t;
  const int root = t.append_leaf(0.0, 0.0);

  struct Builder {
    sepsis::Tree& t;
    sepsis::Rng& rng;
    int n_features;
    int max_depth;
    double split_prob;

    double expand(int node, int depth) {  // returns cover
      if (depth < max_depth && (depth == 0 || rng.bernoulli(split_prob))) {
        const int f = static_cast<int>(rng.uniform_int(n_features));
        const double thr = rng.uniform(-1.0, 1.0);
        const auto [l, r] = t.split_leaf(node, f, thr, 0.0);
        const double cover = expand(l, depth + 1) + expand(r, depth + 1);
        t.cover[node] = cover;
        return cover;
      }
      t.value[node] = rng.uniform(-2.0, 2.0);
      t.cover[node] = static_cast<double>(1 + rng.uniform_int(16));
      return t.cover[node];
    }
  };
  Builder{t, rng, n_features, max_depth, split_prob}.expand(root, 0);
  return t;
}

inline sepsis::CohortMatrix random_matrix(sepsis::Rng& rng, std::size_t n, std::size_t d,
                                          double label_balance = 0.5) {
  sepsis::CohortMatrix m;
  m.n_rows = n;
  m.n_cols = d;
  for (std::size_t j = 0; j < d; ++j) m.feature_names.push_back("f" + std::to_string(j));
  m.data.resize(n * d);
  for (auto& v : m.data) v = rng.uniform(-3.0, 3.0);
  m.labels.resize(n);
  m.row_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.labels[i] = rng.bernoulli(label_balance) ? 1 : 0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "R%06zu", i);
    m.row_ids[i] = buf;
  }
  return m;
}

// Enough XML validation to catch malformed SVG output: balanced tags,
// quoted attributes, sane entity references, one root element.
inline bool xml_well_formed(const std::string& text, std::string* error = nullptr) {
  auto fail = [&](const std::string& why) {
    if (error) *error = why;
    return false;
  };
  std::vector<std::string> stack;
  std::size_t i = 0;
  const std::size_t n = text.size();
  int root_elements = 0;

  while (i < n) {
    if (text[i] != '<') {
      if (text[i] == '>') return fail("stray '>'");
      if (text[i] == '&') {
        const auto semi = text.find(';', i);
        if (semi == std::string::npos || semi - i > 6) return fail("bad entity reference");
        const std::string ent = text.substr(i + 1, semi - i - 1);
        if (ent != "amp" && ent != "lt" && ent != "gt" && ent != "quot" && ent != "apos") {
          return fail("unknown entity '" + ent + "'");
        }
        i = semi + 1;
        continue;
      }
      if (stack.empty() && !std::isspace(static_cast<unsigned char>(text[i])) &&
          root_elements > 0) {
        return fail("content outside root element");
      }
      ++i;
      continue;
    }
    // a tag
    if (i + 1 >= n) return fail("truncated tag");
    if (text[i + 1] == '?') {
      const auto end = text.find("?>", i);
      if (end == std::string::npos) return fail("unterminated declaration");
      i = end + 2;
      continue;
    }
    if (text[i + 1] == '!') {
      const auto end = text.find('>', i);
      if (end == std::string::npos) return fail("unterminated comment/doctype");
      i = end + 1;
      continue;
    }
    const auto end = text.find('>', i);
    if (end == std::string::npos) return fail("unterminated tag");
    std::string tag = text.substr(i + 1, end - i - 1);
    const bool closing = !tag.empty() && tag[0] == '/';
    const bool self_closing = !tag.empty() && tag.back() == '/';
    if (closing) {
      const std::string name = tag.substr(1);
      if (stack.empty()) return fail("close without open: " + name);
      if (stack.back() != name) {
        return fail("mismatched close: " + name + " vs " + stack.back());
      }
      stack.pop_back();
    } else {
      if (self_closing) tag.pop_back();
      // attribute quoting: every '=' must be followed by a quoted value
      bool in_quote = false;
      char quote = 0;
      for (std::size_t k = 0; k < tag.size(); ++k) {
        const char c = tag[k];
        if (in_quote) {
          if (c == quote) in_quote = false;
          continue;
        }
        if (c == '"' || c == '\'') {
          in_quote = true;
          quote = c;
        } else if (c == '=') {
          if (k + 1 >= tag.size() || (tag[k + 1] != '"' && tag[k + 1] != '\'')) {
            return fail("unquoted attribute value");
          }
        }
      }
      if (in_quote) return fail("unterminated attribute quote");
      const auto space = tag.find_first_of(" \t\n");
      const std::string name = space == std::string::npos ? tag : tag.substr(0, space);
      if (name.empty()) return fail("empty tag name");
      if (stack.empty()) {
        if (++root_elements > 1) return fail("multiple root elements");
      }
      if (!self_closing) stack.push_back(name);
    }
    i = end + 1;
  }
  if (!stack.empty()) return fail("unclosed element: " + stack.back());
  if (root_elements != 1) return fail("expected exactly one root element");
  return true;
}

}  // namespace oracle
