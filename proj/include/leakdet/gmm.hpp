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

#include "leakdet/random.hpp"

namespace leakdet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct GmmOptions {
  int components = 16;
  int max_iterations = 200;
  double tolerance = 1e-6;  // on the change in mean log-likelihood
  double variance_floor = 1e-6;
};

// k-means++ seeding: returns `k` rows of `data` (one sample per row).
Matrix kmeans_plus_plus(const Matrix& data, int k, Rng& rng);

// Nearest-centre hard assignment, one-hot N x K.
Matrix hard_assignments(const Matrix& data, const Matrix& centres);

// Row-wise log-sum-exp.
Vector log_sum_exp_rows(const Matrix& m);

// Diagonal-covariance Gaussian mixture. Data matrices hold one sample per row.
class Gmm {
 public:
  Gmm() = default;
  Gmm(Vector weights, Matrix means, Matrix variances, double variance_floor = 1e-6);

  // k-means++ seeding followed by an M-step on the hard assignments, then EM.
  static Gmm fit(const Matrix& data, const GmmOptions& options, std::uint64_t seed);
  static Gmm initialise(const Matrix& data, const GmmOptions& options, std::uint64_t seed);

  // One E-step and M-step. Returns the mean log-likelihood of `data` under
  // the parameters held before the update.
  double em_iterate(const Matrix& data);

  // N x K matrix of log w_k + log N(x_n | k).
  Matrix joint_log_likelihood(const Matrix& data) const;
  Vector log_likelihood(const Matrix& data) const;
  double log_likelihood(const Vector& x) const;
  double mean_log_likelihood(const Matrix& data) const;
  Matrix responsibilities(const Matrix& data) const;

  // -log p(x).
  double score(const Vector& x) const;

  // M-step from soft assignments (N x K).
  void maximise(const Matrix& data, const Matrix& resp);

  int components() const { return static_cast<int>(weights_.size()); }
  int dim() const { return static_cast<int>(means_.cols()); }
  const Vector& weights() const { return weights_; }
  const Matrix& means() const { return means_; }  // K x D
  const Matrix& variances() const { return variances_; }  // K x D
  double variance_floor() const { return floor_; }
  int iterations() const { return iterations_; }
  bool converged() const { return converged_; }
  const std::vector<double>& history() const { return history_; }

 private:
  Vector weights_;
  Matrix means_;
  Matrix variances_;
  double floor_ = 1e-6;
  int iterations_ = 0;
  bool converged_ = false;
  std::vector<double> history_;
};

}  // namespace leakdet
