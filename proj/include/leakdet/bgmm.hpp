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

#include "leakdet/gmm.hpp"

namespace leakdet {

struct BgmmOptions {
  int components = 16;
  int max_iterations = 200;
  double tolerance = 1e-6;  // on the change in ELBO per sample
  double variance_floor = 1e-6;  // applied to the plug-in variances
  // Dirichlet concentration per component; <= 0 means 1 / components.
  double weight_concentration = 0.0;
  double mean_precision = 1.0;  // beta_0
  double gamma_shape = 1.0;  // a_0; the rate is a_0 times the data variance
};

// Variational Bayesian mixture with a diagonal Normal-Gamma prior per
// component and dimension, fitted by coordinate ascent. Scoring uses the
// plug-in density at the posterior-expected weights, means and variances.
class Bgmm {
 public:
  struct Prior {
    double alpha0 = 0.0;
    double beta0 = 1.0;
    Vector m0;
    double a0 = 1.0;
    Vector b0;
  };

  Bgmm() = default;
  Bgmm(Prior prior, Vector alpha, Vector beta, Matrix m, Vector a, Matrix b,
       double variance_floor = 1e-6);

  static Bgmm fit(const Matrix& data, const BgmmOptions& options, std::uint64_t seed);
  static Bgmm initialise(const Matrix& data, const BgmmOptions& options, std::uint64_t seed);

  // One coordinate-ascent sweep (responsibilities, then the posterior factors).
  // Returns the ELBO after the sweep.
  double sweep(const Matrix& data);

  // Posterior update from responsibilities (N x K).
  void update_posterior(const Matrix& data, const Matrix& resp);
  Matrix responsibilities(const Matrix& data) const;
  double elbo(const Matrix& data, const Matrix& resp) const;

  // Plug-in mixture.
  Gmm plug_in() const;
  double score(const Vector& x) const;

  int components() const { return static_cast<int>(alpha_.size()); }
  int dim() const { return static_cast<int>(m_.cols()); }
  const Prior& prior() const { return prior_; }
  const Vector& alpha() const { return alpha_; }
  const Vector& beta() const { return beta_; }
  const Matrix& m() const { return m_; }
  const Vector& a() const { return a_; }
  const Matrix& b() const { return b_; }
  double variance_floor() const { return floor_; }
  const std::vector<double>& history() const { return history_; }
  bool converged() const { return converged_; }

 private:
  void refresh_plug_in();

  Prior prior_;
  Vector alpha_, beta_, a_;
  Matrix m_, b_;
  double floor_ = 1e-6;
  Gmm plug_in_;
  std::vector<double> history_;
  bool converged_ = false;
};

}  // namespace leakdet
