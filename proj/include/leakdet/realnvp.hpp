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
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "leakdet/nn.hpp"

namespace leakdet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct RealNvpOptions {
  int couplings = 3;
  int hidden = 150;
  int hidden_layers = 2;  // ReLU layers in each scale/translation network
  int epochs = 50;
  int batch_size = 768;
  double lr = 1e-3;
  double weight_decay = 0.0;
};

// Affine coupling y_b = x_b * exp(s(x_a)) + t(x_a), y_a = x_a. Couplings
// alternate between conditioning on the even and the odd dimensions.
// s = scale * tanh(raw) with a learnable per-dimension scale.
class AffineCoupling {
 public:
  AffineCoupling(int dim, int parity, const RealNvpOptions& options, Rng& rng,
                 const std::string& name);

  // Rows are samples. Adds the per-sample log-determinant to `log_det`.
  nn::Tensor apply(const nn::Tensor& x, std::vector<double>& log_det) const;
  nn::Tensor invert(const nn::Tensor& y, std::vector<double>& log_det) const;

  nn::Tensor forward(const nn::Tensor& x, std::vector<double>& log_det);
  // `log_det_grad` is d loss / d log_det, shared by all samples.
  nn::Tensor backward(const nn::Tensor& grad_y, double log_det_grad);

  std::vector<nn::ParamBlock> params();
  void zero_grad();
  double relu_margin(const nn::Tensor& x) const;

  const std::vector<int>& fixed() const { return fixed_; }
  const std::vector<int>& moved() const { return moved_; }

 private:
  struct Cache {
    nn::Tensor xb, tanh_raw, exp_s;
  };
  void squash(const nn::Tensor& raw, nn::Tensor& tanh_raw, nn::Tensor& s) const;

  std::vector<int> fixed_, moved_;
  nn::Sequential s_net_, t_net_;
  std::vector<double> scale_, scale_grad_;
  std::string name_;
  std::optional<Cache> cache_;
};

class RealNvp {
 public:
  struct Flow {
    Matrix z;  // N x D
    Vector log_det;
  };

  // Output layers of every conditioner start at zero, so the flow starts as
  // the identity.
  RealNvp(int dim, const RealNvpOptions& options, std::uint64_t seed);

  static RealNvp fit(const Matrix& data, const RealNvpOptions& options, std::uint64_t seed);

  Flow forward(const Matrix& x) const;
  // log_det is that of the inverse map.
  Flow inverse(const Matrix& z) const;

  Vector log_prob(const Matrix& x) const;
  double score(const Vector& x) const;  // -log p(x)
  double mean_nll(const Matrix& x) const;
  // Smallest |input| of any conditioner ReLU over the rows of x.
  double relu_margin(const Matrix& x) const;

  // Mean negative log-likelihood of the batch; fills parameter gradients.
  double nll_and_gradient(const Matrix& batch);

  std::vector<nn::ParamBlock> params();
  void zero_grad();

  int dim() const { return dim_; }
  const RealNvpOptions& options() const { return options_; }
  const std::vector<double>& history() const { return history_; }

 private:
  int dim_;
  RealNvpOptions options_;
  std::vector<AffineCoupling> couplings_;
  std::vector<double> history_;
};

}  // namespace leakdet
