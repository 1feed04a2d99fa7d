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

#include "leakdet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "leakdet/errors.hpp"

namespace leakdet::nn {

namespace {

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ArgumentError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

const Tensor& cached(const std::optional<Tensor>& t, const std::string& layer) {
  if (!t) throw StateError(fmt::format("{}: backward called before forward", layer));
  return *t;
}

void require_rank(const Tensor& x, std::size_t rank, const std::string& layer) {
  if (x.shape.size() != rank) {
    throw ArgumentError(fmt::format("{}: expected a rank-{} tensor, got {}", layer, rank,
                                    x.shape_string()));
  }
}

void require_same_shape(const Tensor& a, const std::vector<int>& shape, const std::string& layer) {
  if (a.shape != shape) {
    throw ArgumentError(fmt::format("{}: gradient shape {} does not match [{}]", layer,
                                    a.shape_string(), fmt::join(shape, ", ")));
  }
}

void kaiming_uniform(std::span<double> w, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : w) v = uniform(rng, -bound, bound);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<int> shape_, double fill)
    : shape(std::move(shape_)), data(product(shape), fill) {}

Tensor::Tensor(std::vector<int> shape_, Buffer data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (product(shape) != data.size()) {
    throw ArgumentError(fmt::format("tensor shape {} does not hold {} values", shape_string(),
                                    data.size()));
  }
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const { return Tensor(std::move(new_shape), data); }

std::string Tensor::shape_string() const { return fmt::format("[{}]", fmt::join(shape, ", ")); }

void Layer::zero_grad() {
  for (auto& p : params()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(int in, int out, Rng& rng, std::string name)
    : w_(out, in), gw_(Matrix::Zero(out, in)), b_(Vector::Zero(out)), gb_(Vector::Zero(out)),
      name_(std::move(name)) {
  if (in < 1 || out < 1) throw ArgumentError(fmt::format("dense {}x{} is empty", out, in));
  kaiming_uniform({w_.data(), static_cast<std::size_t>(w_.size())}, in, rng);
}

Dense::Dense(Matrix weights, Vector bias, std::string name)
    : w_(std::move(weights)), b_(std::move(bias)), name_(std::move(name)) {
  if (b_.size() != w_.rows()) {
    throw ArgumentError(fmt::format("{}: bias has {} entries for {} outputs", name_, b_.size(),
                                    w_.rows()));
  }
  gw_ = Matrix::Zero(w_.rows(), w_.cols());
  gb_ = Vector::Zero(b_.size());
}

void Dense::zero_init() {
  w_.setZero();
  b_.setZero();
}

Tensor Dense::forward(const Tensor& x) {
  Tensor y = apply(x);
  input_ = x;
  return y;
}

Tensor Dense::apply(const Tensor& x) const {
  if (x.shape.empty() || x.stride() != static_cast<std::size_t>(in())) {
    throw ArgumentError(fmt::format("{}: expected [N, {}], got {}", name_, in(), x.shape_string()));
  }
  const int n = x.batch();
  Tensor y({n, out()});
  Eigen::Map<const Matrix> xm(x.data.data(), in(), n);
  Eigen::Map<Matrix> ym(y.data.data(), out(), n);
  ym.noalias() = w_ * xm;
  ym.colwise() += b_;
  return y;
}

Tensor Dense::backward(const Tensor& grad_out) {
  const Tensor& x = cached(input_, name_);
  const int n = x.batch();
  require_same_shape(grad_out, {n, out()}, name_);
  Eigen::Map<const Matrix> xm(x.data.data(), in(), n);
  Eigen::Map<const Matrix> gy(grad_out.data.data(), out(), n);
  gw_.noalias() += gy * xm.transpose();
  gb_ += gy.rowwise().sum();
  Tensor gx(x.shape);
  Eigen::Map<Matrix> gxm(gx.data.data(), in(), n);
  gxm.noalias() = w_.transpose() * gy;
  return gx;
}

std::vector<ParamBlock> Dense::params() {
  return {
      {name_ + ".weight", {w_.data(), static_cast<std::size_t>(w_.size())},
       {gw_.data(), static_cast<std::size_t>(gw_.size())}},
      {name_ + ".bias", {b_.data(), static_cast<std::size_t>(b_.size())},
       {gb_.data(), static_cast<std::size_t>(gb_.size())}},
  };
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, Rng& rng, std::string name)
    : in_(in_channels), out_(out_channels), k_(kernel), name_(std::move(name)) {
  if (in_ < 1 || out_ < 1) throw ArgumentError("conv needs at least one channel");
  if (k_ < 1 || k_ % 2 == 0) {
    throw ArgumentError(fmt::format("{}: kernel size must be odd, got {}", name_, k_));
  }
  const int fan_in = in_ * k_ * k_;
  w_.resize(out_, fan_in);
  kaiming_uniform({w_.data(), static_cast<std::size_t>(w_.size())}, fan_in, rng);
  gw_ = Matrix::Zero(out_, fan_in);
  b_ = Vector::Zero(out_);
  gb_ = Vector::Zero(out_);
}

void Conv2d::im2col(const double* plane, int h, int w, Matrix& col) const {
  const int pad = k_ / 2;
  const int hw = h * w;
  col.resize(hw, in_ * k_ * k_);
  for (int c = 0; c < in_; ++c) {
    const double* src = plane + static_cast<std::ptrdiff_t>(c) * hw;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        double* dst = col.col((c * k_ + ky) * k_ + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          double* row = dst + static_cast<std::ptrdiff_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::ptrdiff_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad;
            row[x] = (sx < 0 || sx >= w) ? 0.0 : srow[sx];
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const Matrix& col, int h, int w, double* plane) const {
  const int pad = k_ / 2;
  const int hw = h * w;
  for (int c = 0; c < in_; ++c) {
    double* dst = plane + static_cast<std::ptrdiff_t>(c) * hw;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const double* src = col.col((c * k_ + ky) * k_ + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          double* drow = dst + static_cast<std::ptrdiff_t>(sy) * w;
          const double* row = src + static_cast<std::ptrdiff_t>(y) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad;
            if (sx >= 0 && sx < w) drow[sx] += row[x];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x) {
  Tensor y = apply(x);
  input_ = x;
  return y;
}

Tensor Conv2d::apply(const Tensor& x) const {
  require_rank(x, 4, name_);
  if (x.dim(1) != in_) {
    throw ArgumentError(fmt::format("{}: expected {} input channels, got {}", name_, in_, x.dim(1)));
  }
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor y({n, out_, h, w});
  const std::size_t in_stride = x.stride(), out_stride = y.stride();
  Matrix col;
  for (int i = 0; i < n; ++i) {
    im2col(x.data.data() + i * in_stride, h, w, col);
    Eigen::Map<Matrix> ym(y.data.data() + i * out_stride, h * w, out_);
    ym.noalias() = col * w_.transpose();
    ym.rowwise() += b_.transpose();
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const Tensor& x = cached(input_, name_);
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  require_same_shape(grad_out, {n, out_, h, w}, name_);
  Tensor gx(x.shape);
  const std::size_t in_stride = x.stride(), out_stride = grad_out.stride();
  Matrix col, gcol;
  for (int i = 0; i < n; ++i) {
    im2col(x.data.data() + i * in_stride, h, w, col);
    Eigen::Map<const Matrix> gy(grad_out.data.data() + i * out_stride, h * w, out_);
    gw_.noalias() += gy.transpose() * col;
    gb_ += gy.colwise().sum().transpose();
    gcol.noalias() = gy * w_;
    col2im(gcol, h, w, gx.data.data() + i * in_stride);
  }
  return gx;
}

std::vector<ParamBlock> Conv2d::params() {
  return {
      {name_ + ".weight", {w_.data(), static_cast<std::size_t>(w_.size())},
       {gw_.data(), static_cast<std::size_t>(gw_.size())}},
      {name_ + ".bias", {b_.data(), static_cast<std::size_t>(b_.size())},
       {gb_.data(), static_cast<std::size_t>(gb_.size())}},
  };
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor Relu::forward(const Tensor& x) {
  input_ = x;
  return apply(x);
}

Tensor Relu::apply(const Tensor& x) const {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return y;
}

Tensor Relu::backward(const Tensor& grad_out) {
  const Tensor& x = cached(input_, "relu");
  require_same_shape(grad_out, x.shape, "relu");
  Tensor gx(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) gx.data[i] = x.data[i] > 0.0 ? grad_out.data[i] : 0.0;
  return gx;
}

Tensor Tanh::forward(const Tensor& x) {
  output_ = apply(x);
  return *output_;
}

Tensor Tanh::apply(const Tensor& x) const {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = std::tanh(x.data[i]);
  return y;
}

Tensor Tanh::backward(const Tensor& grad_out) {
  const Tensor& y = cached(output_, "tanh");
  require_same_shape(grad_out, y.shape, "tanh");
  Tensor gx(y.shape);
  for (std::size_t i = 0; i < y.size(); ++i) {
    gx.data[i] = grad_out.data[i] * (1.0 - y.data[i] * y.data[i]);
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Pooling / resampling

Tensor MaxPool2d::forward(const Tensor& x) {
  Tensor y = pool(x, &argmax_);
  input_shape_ = x.shape;
  return y;
}

Tensor MaxPool2d::apply(const Tensor& x) const { return pool(x, nullptr); }

Tensor MaxPool2d::pool(const Tensor& x, std::vector<std::size_t>* argmax) const {
  require_rank(x, 4, "maxpool");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh < 1 || ow < 1) throw ArgumentError("maxpool: input smaller than 2x2 " + x.shape_string());
  Tensor y({n, c, oh, ow});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * static_cast<std::size_t>(h * w);
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j, ++o) {
        std::size_t best = base + static_cast<std::size_t>(2 * i * w + 2 * j);
        for (const int d : {1, w, w + 1}) {
          const std::size_t idx = base + static_cast<std::size_t>(2 * i * w + 2 * j + d);
          if (x.data[idx] > x.data[best]) best = idx;
        }
        if (argmax) (*argmax)[o] = best;
        y.data[o] = x.data[best];
      }
    }
  }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& grad_out) {
  if (input_shape_.empty()) throw StateError("maxpool: backward called before forward");
  if (grad_out.size() != argmax_.size()) {
    throw ArgumentError("maxpool: gradient shape mismatch " + grad_out.shape_string());
  }
  Tensor gx(input_shape_);
  for (std::size_t o = 0; o < argmax_.size(); ++o) gx.data[argmax_[o]] += grad_out.data[o];
  return gx;
}

Tensor Upsample2d::forward(const Tensor& x) {
  Tensor y = apply(x);
  input_shape_ = x.shape;
  return y;
}

Tensor Upsample2d::apply(const Tensor& x) const {
  require_rank(x, 4, "upsample");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if ((out_h_ != 2 * h && out_h_ != 2 * h + 1) || (out_w_ != 2 * w && out_w_ != 2 * w + 1)) {
    throw ArgumentError(fmt::format("upsample: cannot map {}x{} to {}x{}", h, w, out_h_, out_w_));
  }
  Tensor y({n, c, out_h_, out_w_});
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    const double* src = x.data.data() + static_cast<std::ptrdiff_t>(p) * h * w;
    for (int i = 0; i < out_h_; ++i) {
      const int si = std::min(i / 2, h - 1);
      for (int j = 0; j < out_w_; ++j, ++o) y.data[o] = src[si * w + std::min(j / 2, w - 1)];
    }
  }
  return y;
}

Tensor Upsample2d::backward(const Tensor& grad_out) {
  if (input_shape_.empty()) throw StateError("upsample: backward called before forward");
  const int n = input_shape_[0], c = input_shape_[1], h = input_shape_[2], w = input_shape_[3];
  require_same_shape(grad_out, {n, c, out_h_, out_w_}, "upsample");
  Tensor gx(input_shape_);
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    double* dst = gx.data.data() + static_cast<std::ptrdiff_t>(p) * h * w;
    for (int i = 0; i < out_h_; ++i) {
      const int si = std::min(i / 2, h - 1);
      for (int j = 0; j < out_w_; ++j, ++o) dst[si * w + std::min(j / 2, w - 1)] += grad_out.data[o];
    }
  }
  return gx;
}

Tensor Reshape::forward(const Tensor& x) {
  Tensor y = apply(x);
  input_shape_ = x.shape;
  return y;
}

Tensor Reshape::apply(const Tensor& x) const {
  if (x.stride() != product(item_shape_)) {
    throw ArgumentError(fmt::format("reshape: {} does not fit [N, {}]", x.shape_string(),
                                    fmt::join(item_shape_, ", ")));
  }
  std::vector<int> shape{x.batch()};
  shape.insert(shape.end(), item_shape_.begin(), item_shape_.end());
  return x.reshaped(std::move(shape));
}

Tensor Reshape::backward(const Tensor& grad_out) {
  if (input_shape_.empty()) throw StateError("reshape: backward called before forward");
  return grad_out.reshaped(input_shape_);
}

// ---------------------------------------------------------------------------
// Sequential

Tensor Sequential::apply(const Tensor& x) const {
  Tensor h = x;
  for (const auto& layer : layers_) h = layer->apply(h);
  return h;
}

Tensor Sequential::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& layer : layers_) h = layer->forward(h);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<ParamBlock> Sequential::params() {
  std::vector<ParamBlock> all;
  for (auto& layer : layers_) {
    for (auto& p : layer->params()) all.push_back(std::move(p));
  }
  return all;
}

void Sequential::zero_grad() {
  for (auto& layer : layers_) layer->zero_grad();
}

double relu_margin(const Sequential& net, const Tensor& x) {
  double margin = std::numeric_limits<double>::infinity();
  Tensor h = x;
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (dynamic_cast<const Relu*>(&net[i])) {
      for (double v : h.data) margin = std::min(margin, std::abs(v));
    }
    h = net[i].apply(h);
  }
  return margin;
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(std::span<const ParamBlock> blocks) {
  if (m_.empty()) {
    for (const auto& b : blocks) {
      m_.emplace_back(b.value.size(), 0.0);
      v_.emplace_back(b.value.size(), 0.0);
    }
  }
  if (m_.size() != blocks.size()) {
    throw ArgumentError(fmt::format("adam: {} parameter blocks, optimiser tracks {}",
                                    blocks.size(), m_.size()));
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].value.size() != m_[i].size() || blocks[i].grad.size() != m_[i].size()) {
      throw ArgumentError(fmt::format("adam: block '{}' changed size", blocks[i].name));
    }
    for (double g : blocks[i].grad) {
      if (!std::isfinite(g)) {
        throw TrainingError(fmt::format("non-finite gradient in parameter block '{}'",
                                        blocks[i].name));
      }
    }
  }
  ++step_;
  const auto& o = options_;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto& m = m_[i];
    auto& v = v_[i];
    const auto value = blocks[i].value;
    const auto grad = blocks[i].grad;
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j] + o.weight_decay * value[j];
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g;
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      value[j] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult grad_check(std::span<const ParamBlock> blocks,
                           const std::function<double()>& loss,
                           const std::function<void()>& gradient,
                           const GradCheckOptions& options) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t j = 0; j < blocks[b].value.size(); ++j) coords.emplace_back(b, j);
  }
  Rng rng(options.seed);
  if (coords.size() > options.samples) {
    shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.samples);
  }

  gradient();
  std::vector<double> analytic;
  analytic.reserve(coords.size());
  for (auto [b, j] : coords) analytic.push_back(blocks[b].grad[j]);

  GradCheckResult result;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    auto [b, j] = coords[i];
    double& theta = blocks[b].value[j];
    const double saved = theta;
    theta = saved + options.step;
    const double up = loss();
    theta = saved - options.step;
    const double down = loss();
    theta = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
    const double err = std::abs(a - numeric) / denom;
    if (err > result.max_relative_error || result.worst.empty()) {
      result.max_relative_error = err;
      result.worst = fmt::format("{}[{}]", blocks[b].name, j);
    }
    ++result.checked;
  }
  return result;
}

}  // namespace leakdet::nn
