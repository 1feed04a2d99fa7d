// Copyright 2026 The leakdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "leakdet/iforest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "leakdet/errors.hpp"
#include "leakdet/random.hpp"

namespace leakdet {

double average_path_length(std::int64_t n) {
  if (n <= 1) return 0.0;
  double harmonic = 0.0;
  for (std::int64_t i = 1; i < n; ++i) harmonic += 1.0 / static_cast<double>(i);
  const double m = static_cast<double>(n);
  return 2.0 * harmonic - 2.0 * (m - 1.0) / m;
}

int IsolationTree::depth() const {
  std::vector<int> level(node_count(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < node_count(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (dim[i] >= 0) {
      level[static_cast<std::size_t>(left[i])] = level[i] + 1;
      level[static_cast<std::size_t>(right[i])] = level[i] + 1;
    }
  }
  return deepest;
}

double IsolationTree::path_length(const Vector& x) const {
  std::size_t node = 0;
  int depth = 0;
  while (dim[node] >= 0) {
    node = static_cast<std::size_t>(x(dim[node]) < split[node] ? left[node] : right[node]);
    ++depth;
  }
  return depth + average_path_length(size[node]);
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& data, int max_depth, Rng& rng)
      : data_(data), max_depth_(max_depth), rng_(rng) {}

  IsolationTree build(std::vector<Eigen::Index> rows) {
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  int add_node(int size) {
    tree_.dim.push_back(-1);
    tree_.split.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.size.push_back(size);
    return static_cast<int>(tree_.dim.size()) - 1;
  }

  int grow(std::vector<Eigen::Index>& rows, int depth) {
    const int node = add_node(static_cast<int>(rows.size()));
    if (depth >= max_depth_ || rows.size() <= 1) return node;

    std::vector<int> candidates;
    std::vector<double> lo, hi;
    for (Eigen::Index d = 0; d < data_.cols(); ++d) {
      double mn = data_(rows[0], d), mx = mn;
      for (Eigen::Index r : rows) {
        mn = std::min(mn, data_(r, d));
        mx = std::max(mx, data_(r, d));
      }
      if (mx > mn) {
        candidates.push_back(static_cast<int>(d));
        lo.push_back(mn);
        hi.push_back(mx);
      }
    }
    if (candidates.empty()) return node;

    const auto pick = uniform_index(rng_, candidates.size());
    const int d = candidates[pick];
    double split = uniform(rng_, lo[pick], hi[pick]);
    if (split <= lo[pick]) split = 0.5 * (lo[pick] + hi[pick]);

    std::vector<Eigen::Index> left_rows, right_rows;
    for (Eigen::Index r : rows) (data_(r, d) < split ? left_rows : right_rows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    tree_.dim[static_cast<std::size_t>(node)] = d;
    tree_.split[static_cast<std::size_t>(node)] = split;
    const int l = grow(left_rows, depth + 1);
    const int r = grow(right_rows, depth + 1);
    tree_.left[static_cast<std::size_t>(node)] = l;
    tree_.right[static_cast<std::size_t>(node)] = r;
    return node;
  }

  const Matrix& data_;
  int max_depth_;
  Rng& rng_;
  IsolationTree tree_;
};

}  // namespace

IsolationForest::IsolationForest(std::vector<IsolationTree> trees, int subsample, int dim)
    : trees_(std::move(trees)), subsample_(subsample), dim_(dim) {
  if (trees_.empty() || subsample_ < 1) throw ArgumentError("iforest: empty forest");
  int max_dim = -1;
  for (const auto& t : trees_) {
    const std::size_t n = t.node_count();
    if (n == 0 || t.split.size() != n || t.left.size() != n || t.right.size() != n ||
        t.size.size() != n) {
      throw ArgumentError("iforest: inconsistent tree arrays");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (t.dim[i] >= 0) {
        const auto l = t.left[i], r = t.right[i];
        if (l <= static_cast<int>(i) || r <= static_cast<int>(i) || l >= static_cast<int>(n) ||
            r >= static_cast<int>(n)) {
          throw ArgumentError("iforest: invalid child index");
        }
        max_dim = std::max(max_dim, t.dim[i]);
      }
    }
  }
  if (max_dim >= dim_) throw ArgumentError("iforest: split dimension out of range");
}

IsolationForest IsolationForest::fit(const Matrix& data, const IForestOptions& options,
                                     std::uint64_t seed) {
  if (data.rows() == 0) throw ArgumentError("iforest: empty dataset");
  if (options.trees < 1 || options.subsample < 1) {
    throw ArgumentError("iforest: trees and subsample must be positive");
  }
  const int psi = static_cast<int>(std::min<Eigen::Index>(options.subsample, data.rows()));
  const int max_depth = options.max_depth > 0
                            ? options.max_depth
                            : static_cast<int>(std::ceil(std::log2(std::max(psi, 2))));
  std::vector<IsolationTree> trees;
  trees.reserve(static_cast<std::size_t>(options.trees));
  std::vector<Eigen::Index> all(static_cast<std::size_t>(data.rows()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  for (int t = 0; t < options.trees; ++t) {
    Rng rng(derive_seed(seed, "iforest-tree", static_cast<std::uint64_t>(t)));
    std::vector<Eigen::Index> rows = all;
    // Partial Fisher-Yates: the first psi entries are a uniform sample.
    for (int i = 0; i < psi; ++i) {
      const auto j = static_cast<std::size_t>(i) +
                     uniform_index(rng, rows.size() - static_cast<std::size_t>(i));
      std::swap(rows[static_cast<std::size_t>(i)], rows[j]);
    }
    rows.resize(static_cast<std::size_t>(psi));
    trees.push_back(TreeBuilder(data, max_depth, rng).build(std::move(rows)));
  }
  return IsolationForest(std::move(trees), psi, static_cast<int>(data.cols()));
}

double IsolationForest::mean_path_length(const Vector& x) const {
  if (x.size() != dim_) {
    throw ArgumentError(fmt::format("iforest: expected dimension {}, got {}", dim_, x.size()));
  }
  double total = 0.0;
  for (const auto& t : trees_) total += t.path_length(x);
  return total / static_cast<double>(trees_.size());
}

double IsolationForest::score(const Vector& x) const {
  const double c = average_path_length(subsample_);
  if (c <= 0.0) return 0.5;
  return std::exp2(-mean_path_length(x) / c);
}

}  // namespace leakdet
