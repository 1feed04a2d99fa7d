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

#include "leakdet/bgmm.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>
#include <fmt/format.h>

#include "leakdet/errors.hpp"

namespace leakdet {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double digamma(double x) { return boost::math::digamma(x); }

double log_dirichlet_norm(const Vector& alpha) {
  double s = std::lgamma(alpha.sum());
  for (Eigen::Index k = 0; k < alpha.size(); ++k) s -= std::lgamma(alpha(k));
  return s;
}

}  // namespace

Bgmm::Bgmm(Prior prior, Vector alpha, Vector beta, Matrix m, Vector a, Matrix b,
           double variance_floor)
    : prior_(std::move(prior)), alpha_(std::move(alpha)), beta_(std::move(beta)),
      a_(std::move(a)), m_(std::move(m)), b_(std::move(b)), floor_(variance_floor) {
  const Eigen::Index k = alpha_.size();
  if (k == 0 || beta_.size() != k || a_.size() != k || m_.rows() != k || b_.rows() != k ||
      b_.cols() != m_.cols() || prior_.m0.size() != m_.cols() || prior_.b0.size() != m_.cols()) {
    throw ArgumentError("bgmm: inconsistent parameter shapes");
  }
  if ((alpha_.array() <= 0).any() || (beta_.array() <= 0).any() || (a_.array() <= 0).any() ||
      (b_.array() <= 0).any()) {
    throw ArgumentError("bgmm: posterior parameters must be positive");
  }
  refresh_plug_in();
}

Bgmm Bgmm::initialise(const Matrix& data, const BgmmOptions& options, std::uint64_t seed) {
  if (data.rows() < 2) throw ArgumentError("bgmm: need at least two samples");
  // The hard k-means assignments of the maximum-likelihood initialiser.
  GmmOptions g;
  g.components = options.components;
  const Gmm start = Gmm::initialise(data, g, seed);
  const Matrix resp = hard_assignments(data, start.means());

  Bgmm model;
  model.floor_ = options.variance_floor;
  const int k = options.components;
  Prior& p = model.prior_;
  p.alpha0 = options.weight_concentration > 0 ? options.weight_concentration : 1.0 / k;
  p.beta0 = options.mean_precision;
  p.m0 = data.colwise().mean().transpose();
  p.a0 = options.gamma_shape;
  const Vector var =
      ((data.rowwise() - p.m0.transpose()).array().square().colwise().mean()).transpose();
  p.b0 = p.a0 * var.cwiseMax(options.variance_floor);
  model.update_posterior(data, resp);
  return model;
}

Bgmm Bgmm::fit(const Matrix& data, const BgmmOptions& options, std::uint64_t seed) {
  Bgmm model = initialise(data, options, seed);
  const double n = static_cast<double>(data.rows());
  for (int it = 0; it < options.max_iterations; ++it) {
    const double elbo = model.sweep(data);
    if (!std::isfinite(elbo)) throw TrainingError("bgmm: ELBO is not finite");
    const bool done =
        !model.history_.empty() && std::abs(elbo - model.history_.back()) / n < options.tolerance;
    model.history_.push_back(elbo);
    if (done) {
      model.converged_ = true;
      break;
    }
  }
  return model;
}

Matrix Bgmm::responsibilities(const Matrix& data) const {
  if (data.cols() != dim()) {
    throw ArgumentError(fmt::format("bgmm: expected dimension {}, got {}", dim(), data.cols()));
  }
  const int k = components();
  const double dig_sum = digamma(alpha_.sum());
  Matrix log_rho(data.rows(), k);
  for (int c = 0; c < k; ++c) {
    const double e_log_pi = digamma(alpha_(c)) - dig_sum;
    const Eigen::ArrayXd e_log_lambda = digamma(a_(c)) - b_.row(c).array().log();
    const Eigen::ArrayXd e_lambda = a_(c) / b_.row(c).array();
    const double base = e_log_pi + 0.5 * e_log_lambda.sum() - 0.5 * dim() * kLog2Pi -
                        0.5 * dim() / beta_(c);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      const double q = ((data.row(i) - m_.row(c)).array().square() * e_lambda.transpose()).sum();
      log_rho(i, c) = base - 0.5 * q;
    }
  }
  const Vector norm = log_sum_exp_rows(log_rho);
  return (log_rho.colwise() - norm).array().exp();
}

void Bgmm::update_posterior(const Matrix& data, const Matrix& resp) {
  const int k = static_cast<int>(resp.cols());
  const Eigen::Index d = data.cols();
  const Vector nk = resp.colwise().sum().transpose();
  const Prior& p = prior_;
  alpha_ = (nk.array() + p.alpha0).matrix();
  beta_ = (nk.array() + p.beta0).matrix();
  a_ = (p.a0 + 0.5 * nk.array()).matrix();
  m_.resize(k, d);
  b_.resize(k, d);
  for (int c = 0; c < k; ++c) {
    Eigen::RowVectorXd xbar = p.m0.transpose();
    Eigen::RowVectorXd scatter = Eigen::RowVectorXd::Zero(d);  // N_k * S_k
    if (nk(c) > 0.0) {
      xbar = resp.col(c).transpose() * data / nk(c);
      for (Eigen::Index i = 0; i < data.rows(); ++i) {
        const double r = resp(i, c);
        if (r != 0.0) scatter += r * (data.row(i) - xbar).array().square().matrix();
      }
    }
    m_.row(c) = (p.beta0 * p.m0.transpose() + nk(c) * xbar) / beta_(c);
    const double shrink = p.beta0 * nk(c) / (p.beta0 + nk(c));
    b_.row(c) = p.b0.transpose().array() +
                0.5 * (scatter.array() + shrink * (xbar - p.m0.transpose()).array().square());
  }
  refresh_plug_in();
}

double Bgmm::elbo(const Matrix& data, const Matrix& resp) const {
  const int k = components();
  const Prior& p = prior_;
  const Vector nk = resp.colwise().sum().transpose();
  const double dig_sum = digamma(alpha_.sum());

  double total = 0.0;
  double sum_e_log_pi = 0.0;
  for (int c = 0; c < k; ++c) {
    const double e_log_pi = digamma(alpha_(c)) - dig_sum;
    sum_e_log_pi += e_log_pi;
    total += nk(c) * e_log_pi;                    // E ln p(Z | pi)
    total -= (alpha_(c) - 1.0) * e_log_pi;        // - E ln q(pi), less its normaliser

    Eigen::RowVectorXd xbar = Eigen::RowVectorXd::Zero(dim());
    Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(dim());
    if (nk(c) > 0.0) {
      xbar = resp.col(c).transpose() * data / nk(c);
      for (Eigen::Index i = 0; i < data.rows(); ++i) {
        const double r = resp(i, c);
        if (r != 0.0) s += r * (data.row(i) - xbar).array().square().matrix();
      }
      s /= nk(c);
    }
    for (int j = 0; j < dim(); ++j) {
      const double b = b_(c, j);
      const double e_log_lambda = digamma(a_(c)) - std::log(b);
      const double e_lambda = a_(c) / b;
      const double diff = xbar(j) - m_(c, j);
      // E ln p(X | Z, mu, lambda)
      total += 0.5 * nk(c) *
               (e_log_lambda - kLog2Pi - 1.0 / beta_(c) - e_lambda * (s(j) + diff * diff));
      // E ln p(mu, lambda)
      const double dm = m_(c, j) - p.m0(j);
      total += 0.5 * (std::log(p.beta0) + e_log_lambda - kLog2Pi -
                      p.beta0 * (1.0 / beta_(c) + e_lambda * dm * dm));
      total += p.a0 * std::log(p.b0(j)) - std::lgamma(p.a0) + (p.a0 - 1.0) * e_log_lambda -
               p.b0(j) * e_lambda;
      // - E ln q(mu, lambda)
      total -= 0.5 * (std::log(beta_(c)) + e_log_lambda - kLog2Pi - 1.0);
      total -= a_(c) * std::log(b) - std::lgamma(a_(c)) + (a_(c) - 1.0) * e_log_lambda - a_(c);
    }
  }
  // E ln p(pi) and the normaliser of E ln q(pi).
  total += log_dirichlet_norm(Vector::Constant(k, p.alpha0)) + (p.alpha0 - 1.0) * sum_e_log_pi;
  total -= log_dirichlet_norm(alpha_);
  // - E ln q(Z)
  for (Eigen::Index i = 0; i < resp.size(); ++i) {
    const double r = resp.data()[i];
    if (r > 0.0) total -= r * std::log(r);
  }
  return total;
}

double Bgmm::sweep(const Matrix& data) {
  const Matrix resp = responsibilities(data);
  update_posterior(data, resp);
  return elbo(data, resp);
}

void Bgmm::refresh_plug_in() {
  const Vector w = alpha_ / alpha_.sum();
  Matrix var = (b_.array().colwise() / a_.array()).matrix().cwiseMax(floor_);
  plug_in_ = Gmm(w, m_, var, floor_);
}

Gmm Bgmm::plug_in() const { return plug_in_; }

double Bgmm::score(const Vector& x) const { return plug_in_.score(x); }

}  // namespace leakdet
