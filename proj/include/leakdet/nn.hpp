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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "leakdet/random.hpp"

// Minimal layers with hand-written backward passes. Tensors are row-major:
// [N, features] for dense data and [N, C, H, W] for images. All arithmetic is
// double precision.
namespace leakdet::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Storage is over-aligned so that vectorised kernels see the same alignment
// pattern on every run, which keeps results bit-reproducible.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

struct Tensor {
  std::vector<int> shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, double fill = 0.0);
  Tensor(std::vector<int> shape_, Buffer data_);

  std::vector<double> values() const { return {data.begin(), data.end()}; }

  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  int batch() const { return shape.at(0); }
  // Elements per batch item.
  std::size_t stride() const { return data.size() / static_cast<std::size_t>(shape.at(0)); }

  Tensor reshaped(std::vector<int> new_shape) const;
  std::string shape_string() const;
};

// A named parameter block and its gradient accumulator.
struct ParamBlock {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

class Layer {
 public:
  virtual ~Layer() = default;

  // Computes the output without touching any cache; safe to call
  // concurrently on a shared layer.
  virtual Tensor apply(const Tensor& x) const = 0;
  // Computes the output and caches what backward needs.
  virtual Tensor forward(const Tensor& x) = 0;
  // Returns d loss / d input and accumulates parameter gradients. Throws
  // StateError if forward has not been called.
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual std::vector<ParamBlock> params() { return {}; }
  virtual std::string name() const = 0;

  void zero_grad();
};

// y = W x + b. Kaiming-uniform weights scaled by fan-in, zero bias.
class Dense final : public Layer {
 public:
  Dense(int in, int out, Rng& rng, std::string name = "dense");
  Dense(Matrix weights, Vector bias, std::string name = "dense");

  Tensor apply(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<ParamBlock> params() override;
  std::string name() const override { return name_; }

  int in() const { return static_cast<int>(w_.cols()); }
  int out() const { return static_cast<int>(w_.rows()); }
  Matrix& weights() { return w_; }
  Vector& bias() { return b_; }
  const Matrix& weights() const { return w_; }
  const Vector& bias() const { return b_; }
  const Matrix& weight_grad() const { return gw_; }

  void zero_init();

 private:
  Matrix w_, gw_;
  Vector b_, gb_;
  std::optional<Tensor> input_;
  std::string name_;
};

// Stride-1 cross-correlation with zero padding (k-1)/2 so H and W are kept.
class Conv2d final : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, Rng& rng, std::string name = "conv");

  Tensor apply(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<ParamBlock> params() override;
  std::string name() const override { return name_; }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  // out x (in * k * k); column index is (c * k + ky) * k + kx.
  Matrix& weights() { return w_; }
  Vector& bias() { return b_; }

 private:
  void im2col(const double* plane, int h, int w, Matrix& col) const;
  void col2im(const Matrix& col, int h, int w, double* plane) const;

  int in_, out_, k_;
  Matrix w_, gw_;
  Vector b_, gb_;
  std::optional<Tensor> input_;
  std::string name_;
};

class Relu final : public Layer {
 public:
  Tensor apply(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string name() const override { return "relu"; }

 private:
  std::optional<Tensor> input_;
};

class Tanh final : public Layer {
 public:
  Tensor apply(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string name() const override { return "tanh"; }

 private:
  std::optional<Tensor> output_;
};

// Non-overlapping 2x2 max pooling; odd trailing rows/columns are dropped.
class MaxPool2d final : public Layer {
 public:
  Tensor apply(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string name() const override { return "maxpool"; }

 private:
  Tensor pool(const Tensor& x, std::vector<std::size_t>* argmax) const;

  std::vector<int> input_shape_;
  std::vector<std::size_t> argmax_;
};

// Nearest-neighbour x2 upsampling to a fixed output size. An odd target
// repeats the last input row/column once more.
class Upsample2d final : public Layer {
 public:
  Upsample2d(int out_h, int out_w) : out_h_(out_h), out_w_(out_w) {}

  Tensor apply(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string name() const override { return "upsample"; }

 private:
  int out_h_, out_w_;
  std::vector<int> input_shape_;
};

// Shape change only; batch dimension is preserved.
class Reshape final : public Layer {
 public:
  explicit Reshape(std::vector<int> item_shape) : item_shape_(std::move(item_shape)) {}

  Tensor apply(const Tensor& x) const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string name() const override { return "reshape"; }

 private:
  std::vector<int> item_shape_;
  std::vector<int> input_shape_;
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor apply(const Tensor& x) const;
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  std::vector<ParamBlock> params();
  void zero_grad();

  std::size_t size() const { return layers_.size(); }
  Layer& operator[](std::size_t i) { return *layers_[i]; }
  const Layer& operator[](std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Smallest |input| reaching any ReLU of `net` for input x. Finite-difference
// probes stay on one side of every kink when this exceeds the probe size.
double relu_margin(const Sequential& net, const Tensor& x);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 coefficient added to gradients
};

// Bias-corrected Adam. Moment buffers are allocated on the first step and
// must keep the same block layout afterwards.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Throws TrainingError naming the block if a gradient is not finite.
  void step(std::span<const ParamBlock> blocks);

  const AdamOptions& options() const { return options_; }
  std::uint64_t steps() const { return step_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t samples = 100;  // coordinates checked (all if fewer exist)
  std::uint64_t seed = 0;
  // Relative error is |a - n| / max(|a|, |n|, denominator_floor).
  double denominator_floor = 1e-6;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "block[index]"
};

// Compares analytic gradients with central differences. `loss` evaluates the
// scalar loss at the current values; `gradient` must zero and then fill the
// grad spans of `blocks` for the current values.
GradCheckResult grad_check(std::span<const ParamBlock> blocks,
                           const std::function<double()>& loss,
                           const std::function<void()>& gradient,
                           const GradCheckOptions& options = {});

}  // namespace leakdet::nn
