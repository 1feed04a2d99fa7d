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

#include "leakdet/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "leakdet/errors.hpp"

namespace leakdet {

namespace {

constexpr int kLloydIterations = 20;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_data(const Matrix& data, int components) {
  if (data.rows() == 0 || data.cols() == 0) throw ArgumentError("mixture: empty dataset");
  if (components < 1) throw ArgumentError("mixture: need at least one component");
  if (data.rows() < components) {
    throw ArgumentError(fmt::format("mixture: {} samples for {} components", data.rows(),
                                    components));
  }
  if (!data.allFinite()) throw ArgumentError("mixture: non-finite training data");
}

}  // namespace

Vector log_sum_exp_rows(const Matrix& m) {
  Vector out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    if (!std::isfinite(mx)) {
      out(i) = mx;
      continue;
    }
    out(i) = mx + std::log((m.row(i).array() - mx).exp().sum());
  }
  return out;
}

Matrix kmeans_plus_plus(const Matrix& data, int k, Rng& rng) {
  const Eigen::Index n = data.rows();
  Matrix centres(k, data.cols());
  centres.row(0) = data.row(static_cast<Eigen::Index>(uniform_index(rng, n)));
  Vector d2 = (data.rowwise() - centres.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, n));
    }
    centres.row(c) = data.row(pick);
    d2 = d2.cwiseMin((data.rowwise() - centres.row(c)).rowwise().squaredNorm());
  }
  return centres;
}

Matrix hard_assignments(const Matrix& data, const Matrix& centres) {
  Matrix resp = Matrix::Zero(data.rows(), centres.rows());
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    Eigen::Index best = 0;
    (centres.rowwise() - data.row(i)).rowwise().squaredNorm().minCoeff(&best);
    resp(i, best) = 1.0;
  }
  return resp;
}

Gmm::Gmm(Vector weights, Matrix means, Matrix variances, double variance_floor)
    : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)),
      floor_(variance_floor) {
  const Eigen::Index k = weights_.size();
  if (k == 0 || means_.rows() != k || variances_.rows() != k ||
      variances_.cols() != means_.cols()) {
    throw ArgumentError("gmm: inconsistent parameter shapes");
  }
  if ((weights_.array() < 0.0).any() || std::abs(weights_.sum() - 1.0) > 1e-9) {
    throw ArgumentError("gmm: weights must be non-negative and sum to 1");
  }
  if ((variances_.array() <= 0.0).any()) throw ArgumentError("gmm: variances must be positive");
}

Gmm Gmm::initialise(const Matrix& data, const GmmOptions& options, std::uint64_t seed) {
  check_data(data, options.components);
  Rng rng(derive_seed(seed, "gmm-init"));
  Matrix centres = kmeans_plus_plus(data, options.components, rng);
  Matrix resp = hard_assignments(data, centres);
  for (int it = 0; it < kLloydIterations; ++it) {
    const Vector counts = resp.colwise().sum().transpose();
    Matrix sums = resp.transpose() * data;
    for (int c = 0; c < options.components; ++c) {
      if (counts(c) > 0.0) centres.row(c) = sums.row(c) / counts(c);
    }
    Matrix next = hard_assignments(data, centres);
    if (next == resp) break;
    resp = std::move(next);
  }
  Gmm g;
  g.floor_ = options.variance_floor;
  g.weights_ = Vector::Constant(options.components, 1.0 / options.components);
  g.means_ = centres;
  g.variances_ = Matrix::Ones(options.components, data.cols());
  g.maximise(data, resp);
  return g;
}

Gmm Gmm::fit(const Matrix& data, const GmmOptions& options, std::uint64_t seed) {
  Gmm g = initialise(data, options, seed);
  for (int it = 0; it < options.max_iterations; ++it) {
    const double ll = g.em_iterate(data);
    if (!std::isfinite(ll)) throw TrainingError("gmm: log-likelihood is not finite");
    if (!g.history_.empty() && std::abs(ll - g.history_.back()) < options.tolerance) {
      g.history_.push_back(ll);
      g.converged_ = true;
      break;
    }
    g.history_.push_back(ll);
  }
  return g;
}

Matrix Gmm::joint_log_likelihood(const Matrix& data) const {
  if (data.cols() != dim()) {
    throw ArgumentError(fmt::format("gmm: expected dimension {}, got {}", dim(), data.cols()));
  }
  const int k = components();
  Vector constant(k);
  const Matrix inv = variances_.cwiseInverse();
  for (int c = 0; c < k; ++c) {
    constant(c) = std::log(weights_(c)) -
                  0.5 * (dim() * kLog2Pi + variances_.row(c).array().log().sum());
  }
  Matrix out(data.rows(), k);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (int c = 0; c < k; ++c) {
      const double maha =
          ((data.row(i) - means_.row(c)).array().square() * inv.row(c).array()).sum();
      out(i, c) = constant(c) - 0.5 * maha;
    }
  }
  return out;
}

Vector Gmm::log_likelihood(const Matrix& data) const {
  return log_sum_exp_rows(joint_log_likelihood(data));
}

double Gmm::log_likelihood(const Vector& x) const {
  return log_likelihood(Matrix(x.transpose()))(0);
}

double Gmm::mean_log_likelihood(const Matrix& data) const { return log_likelihood(data).mean(); }

Matrix Gmm::responsibilities(const Matrix& data) const {
  Matrix joint = joint_log_likelihood(data);
  const Vector norm = log_sum_exp_rows(joint);
  return (joint.colwise() - norm).array().exp();
}

double Gmm::score(const Vector& x) const { return -log_likelihood(x); }

void Gmm::maximise(const Matrix& data, const Matrix& resp) {
  const Eigen::Index n = data.rows();
  const int k = static_cast<int>(resp.cols());
  const Vector counts = resp.colwise().sum().transpose();
  weights_ = counts / static_cast<double>(n);
  means_.resize(k, data.cols());
  variances_.resize(k, data.cols());
  for (int c = 0; c < k; ++c) {
    if (counts(c) <= std::numeric_limits<double>::min()) {
      // An empty component keeps zero weight; give it harmless parameters.
      means_.row(c) = data.colwise().mean();
      variances_.row(c).setOnes();
      continue;
    }
    const Eigen::RowVectorXd mean = resp.col(c).transpose() * data / counts(c);
    means_.row(c) = mean;
    Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(data.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = resp(i, c);
      if (r != 0.0) var += r * (data.row(i) - mean).array().square().matrix();
    }
    variances_.row(c) = (var / counts(c)).cwiseMax(floor_);
  }
}

double Gmm::em_iterate(const Matrix& data) {
  if (data.rows() == 0) throw ArgumentError("gmm: empty dataset");
  Matrix joint = joint_log_likelihood(data);
  const Vector norm = log_sum_exp_rows(joint);
  const Matrix resp = (joint.colwise() - norm).array().exp();
  maximise(data, resp);
  ++iterations_;
  return norm.mean();
}

}  // namespace leakdet
