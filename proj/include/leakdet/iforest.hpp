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

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace leakdet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct IForestOptions {
  int trees = 120;
  int subsample = 256;
  int max_depth = 0;  // <= 0 means ceil(log2(subsample))
};

// Average unsuccessful-search path length in a binary search tree of n
// points: 2 H(n-1) - 2 (n-1) / n, with c(n) = 0 for n <= 1.
double average_path_length(std::int64_t n);

// Isolation tree stored as flat node arrays. A node with dim < 0 is a leaf.
struct IsolationTree {
  std::vector<int> dim;
  std::vector<double> split;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<int> size;  // training points reaching the node

  std::size_t node_count() const { return dim.size(); }
  int depth() const;
  // Depth of the leaf reached by x plus c(leaf size).
  double path_length(const Vector& x) const;
};

class IsolationForest {
 public:
  IsolationForest() = default;
  IsolationForest(std::vector<IsolationTree> trees, int subsample, int dim);

  // Each tree draws min(subsample, N) points without replacement. Splits use
  // a random dimension among those that are not constant in the node; a node
  // whose points are all identical becomes a leaf.
  static IsolationForest fit(const Matrix& data, const IForestOptions& options,
                             std::uint64_t seed);

  double mean_path_length(const Vector& x) const;
  // 2^(-E[h(x)] / c(subsample)), in (0, 1].
  double score(const Vector& x) const;

  const std::vector<IsolationTree>& trees() const { return trees_; }
  int subsample() const { return subsample_; }
  int dim() const { return dim_; }

 private:
  std::vector<IsolationTree> trees_;
  int subsample_ = 256;
  int dim_ = 0;
};

}  // namespace leakdet
