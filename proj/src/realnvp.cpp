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

#include "leakdet/realnvp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "leakdet/errors.hpp"

namespace leakdet {

using nn::Tensor;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Tensor gather(const Tensor& x, const std::vector<int>& cols) {
  const int n = x.batch();
  const std::size_t d = x.stride();
  Tensor out({n, static_cast<int>(cols.size())});
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out.data[i * cols.size() + j] = x.data[i * d + static_cast<std::size_t>(cols[j])];
    }
  }
  return out;
}

void scatter(const Tensor& part, const std::vector<int>& cols, Tensor& x) {
  const std::size_t d = x.stride();
  for (int i = 0; i < part.batch(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      x.data[i * d + static_cast<std::size_t>(cols[j])] = part.data[i * cols.size() + j];
    }
  }
}

Tensor to_tensor(const Matrix& m) {
  Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.data.data(), m.rows(), m.cols()) = m;
  return t;
}

Matrix to_matrix(const Tensor& t) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.data.data(), t.batch(), static_cast<Eigen::Index>(t.stride()));
}

void require_finite(const Tensor& t, const char* what) {
  for (double v : t.data) {
    if (!std::isfinite(v)) throw NumericError(fmt::format("realnvp: non-finite {}", what));
  }
}

nn::Sequential make_conditioner(int in, int out, const RealNvpOptions& o, Rng& rng,
                                const std::string& name) {
  nn::Sequential net;
  int width = in;
  for (int h = 0; h < o.hidden_layers; ++h) {
    net.add<nn::Dense>(width, o.hidden, rng, fmt::format("{}.fc{}", name, h));
    net.add<nn::Relu>();
    width = o.hidden;
  }
  net.add<nn::Dense>(width, out, rng, fmt::format("{}.fc{}", name, o.hidden_layers)).zero_init();
  return net;
}

}  // namespace

AffineCoupling::AffineCoupling(int dim, int parity, const RealNvpOptions& options, Rng& rng,
                               const std::string& name)
    : name_(name) {
  for (int d = 0; d < dim; ++d) (d % 2 == parity ? fixed_ : moved_).push_back(d);
  if (fixed_.empty() || moved_.empty()) throw ArgumentError("realnvp: need at least 2 dimensions");
  const int na = static_cast<int>(fixed_.size()), nb = static_cast<int>(moved_.size());
  s_net_ = make_conditioner(na, nb, options, rng, name + ".s");
  t_net_ = make_conditioner(na, nb, options, rng, name + ".t");
  scale_.assign(moved_.size(), 1.0);
  scale_grad_.assign(moved_.size(), 0.0);
}

void AffineCoupling::squash(const Tensor& raw, Tensor& tanh_raw, Tensor& s) const {
  tanh_raw = Tensor(raw.shape);
  s = Tensor(raw.shape);
  const std::size_t nb = moved_.size();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    tanh_raw.data[i] = std::tanh(raw.data[i]);
    s.data[i] = scale_[i % nb] * tanh_raw.data[i];
  }
}

Tensor AffineCoupling::apply(const Tensor& x, std::vector<double>& log_det) const {
  const Tensor xa = gather(x, fixed_);
  Tensor xb = gather(x, moved_);
  Tensor tanh_raw, s;
  squash(s_net_.apply(xa), tanh_raw, s);
  const Tensor t = t_net_.apply(xa);
  const std::size_t nb = moved_.size();
  for (std::size_t i = 0; i < xb.size(); ++i) {
    xb.data[i] = xb.data[i] * std::exp(s.data[i]) + t.data[i];
    log_det[i / nb] += s.data[i];
  }
  Tensor y = x;
  scatter(xb, moved_, y);
  return y;
}

Tensor AffineCoupling::invert(const Tensor& y, std::vector<double>& log_det) const {
  const Tensor ya = gather(y, fixed_);
  Tensor yb = gather(y, moved_);
  Tensor tanh_raw, s;
  squash(s_net_.apply(ya), tanh_raw, s);
  const Tensor t = t_net_.apply(ya);
  const std::size_t nb = moved_.size();
  for (std::size_t i = 0; i < yb.size(); ++i) {
    yb.data[i] = (yb.data[i] - t.data[i]) * std::exp(-s.data[i]);
    log_det[i / nb] -= s.data[i];
  }
  Tensor x = y;
  scatter(yb, moved_, x);
  return x;
}

Tensor AffineCoupling::forward(const Tensor& x, std::vector<double>& log_det) {
  const Tensor xa = gather(x, fixed_);
  Cache c;
  c.xb = gather(x, moved_);
  Tensor s;
  squash(s_net_.forward(xa), c.tanh_raw, s);
  const Tensor t = t_net_.forward(xa);
  c.exp_s = Tensor(s.shape);
  Tensor yb(s.shape);
  const std::size_t nb = moved_.size();
  for (std::size_t i = 0; i < yb.size(); ++i) {
    c.exp_s.data[i] = std::exp(s.data[i]);
    yb.data[i] = c.xb.data[i] * c.exp_s.data[i] + t.data[i];
    log_det[i / nb] += s.data[i];
  }
  Tensor y = x;
  scatter(yb, moved_, y);
  cache_ = std::move(c);
  return y;
}

Tensor AffineCoupling::backward(const Tensor& grad_y, double log_det_grad) {
  if (!cache_) throw StateError(name_ + ": backward called before forward");
  const Cache& c = *cache_;
  const Tensor gyb = gather(grad_y, moved_);
  const std::size_t nb = moved_.size();
  Tensor gxb(gyb.shape), graw(gyb.shape);
  for (std::size_t i = 0; i < gyb.size(); ++i) {
    const std::size_t j = i % nb;
    gxb.data[i] = gyb.data[i] * c.exp_s.data[i];
    const double gs = gyb.data[i] * c.xb.data[i] * c.exp_s.data[i] + log_det_grad;
    const double th = c.tanh_raw.data[i];
    scale_grad_[j] += gs * th;
    graw.data[i] = gs * scale_[j] * (1.0 - th * th);
  }
  const Tensor gxa_s = s_net_.backward(graw);
  const Tensor gxa_t = t_net_.backward(gyb);
  Tensor gx = grad_y;
  Tensor gxa = gather(grad_y, fixed_);
  for (std::size_t i = 0; i < gxa.size(); ++i) gxa.data[i] += gxa_s.data[i] + gxa_t.data[i];
  scatter(gxa, fixed_, gx);
  scatter(gxb, moved_, gx);
  return gx;
}

std::vector<nn::ParamBlock> AffineCoupling::params() {
  std::vector<nn::ParamBlock> all = s_net_.params();
  for (auto& p : t_net_.params()) all.push_back(std::move(p));
  all.push_back({name_ + ".scale", {scale_.data(), scale_.size()},
                 {scale_grad_.data(), scale_grad_.size()}});
  return all;
}

double AffineCoupling::relu_margin(const Tensor& x) const {
  const Tensor xa = gather(x, fixed_);
  return std::min(nn::relu_margin(s_net_, xa), nn::relu_margin(t_net_, xa));
}

void AffineCoupling::zero_grad() {
  s_net_.zero_grad();
  t_net_.zero_grad();
  std::fill(scale_grad_.begin(), scale_grad_.end(), 0.0);
}

RealNvp::RealNvp(int dim, const RealNvpOptions& options, std::uint64_t seed)
    : dim_(dim), options_(options) {
  if (dim < 2) throw ArgumentError("realnvp: need at least 2 dimensions");
  if (options.couplings < 1 || options.hidden < 1 || options.hidden_layers < 0) {
    throw ArgumentError("realnvp: invalid architecture");
  }
  Rng rng(derive_seed(seed, "realnvp-init"));
  for (int l = 0; l < options.couplings; ++l) {
    couplings_.emplace_back(dim, l % 2, options, rng, fmt::format("coupling{}", l));
  }
}

RealNvp::Flow RealNvp::forward(const Matrix& x) const {
  if (x.cols() != dim_) {
    throw ArgumentError(fmt::format("realnvp: expected dimension {}, got {}", dim_, x.cols()));
  }
  Tensor h = to_tensor(x);
  std::vector<double> log_det(static_cast<std::size_t>(x.rows()), 0.0);
  for (const auto& c : couplings_) {
    h = c.apply(h, log_det);
    require_finite(h, "forward activation");
  }
  return {to_matrix(h), Eigen::Map<Vector>(log_det.data(), static_cast<Eigen::Index>(log_det.size()))};
}

RealNvp::Flow RealNvp::inverse(const Matrix& z) const {
  if (z.cols() != dim_) {
    throw ArgumentError(fmt::format("realnvp: expected dimension {}, got {}", dim_, z.cols()));
  }
  Tensor h = to_tensor(z);
  std::vector<double> log_det(static_cast<std::size_t>(z.rows()), 0.0);
  for (auto it = couplings_.rbegin(); it != couplings_.rend(); ++it) {
    h = it->invert(h, log_det);
    require_finite(h, "inverse activation");
  }
  return {to_matrix(h), Eigen::Map<Vector>(log_det.data(), static_cast<Eigen::Index>(log_det.size()))};
}

Vector RealNvp::log_prob(const Matrix& x) const {
  const Flow f = forward(x);
  return (-0.5 * f.z.rowwise().squaredNorm().array() - 0.5 * dim_ * kLog2Pi).matrix() + f.log_det;
}

double RealNvp::score(const Vector& x) const { return -log_prob(Matrix(x.transpose()))(0); }

double RealNvp::mean_nll(const Matrix& x) const { return -log_prob(x).mean(); }

double RealNvp::relu_margin(const Matrix& x) const {
  Tensor h = to_tensor(x);
  std::vector<double> log_det(static_cast<std::size_t>(x.rows()), 0.0);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& c : couplings_) {
    margin = std::min(margin, c.relu_margin(h));
    h = c.apply(h, log_det);
  }
  return margin;
}

double RealNvp::nll_and_gradient(const Matrix& batch) {
  if (batch.cols() != dim_ || batch.rows() == 0) throw ArgumentError("realnvp: bad batch shape");
  zero_grad();
  const double n = static_cast<double>(batch.rows());
  Tensor h = to_tensor(batch);
  std::vector<double> log_det(static_cast<std::size_t>(batch.rows()), 0.0);
  for (auto& c : couplings_) h = c.forward(h, log_det);
  double loss = 0.0;
  for (std::size_t i = 0; i < log_det.size(); ++i) {
    double sq = 0.0;
    for (int j = 0; j < dim_; ++j) {
      const double z = h.data[i * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(j)];
      sq += z * z;
    }
    loss += 0.5 * sq + 0.5 * dim_ * kLog2Pi - log_det[i];
  }
  loss /= n;
  if (!std::isfinite(loss)) throw TrainingError("realnvp: loss is not finite");
  Tensor g = h;
  for (double& v : g.data) v /= n;
  for (auto it = couplings_.rbegin(); it != couplings_.rend(); ++it) g = it->backward(g, -1.0 / n);
  return loss;
}

std::vector<nn::ParamBlock> RealNvp::params() {
  std::vector<nn::ParamBlock> all;
  for (auto& c : couplings_) {
    for (auto& p : c.params()) all.push_back(std::move(p));
  }
  return all;
}

void RealNvp::zero_grad() {
  for (auto& c : couplings_) c.zero_grad();
}

RealNvp RealNvp::fit(const Matrix& data, const RealNvpOptions& options, std::uint64_t seed) {
  if (options.batch_size < 1 || options.epochs < 0) throw ArgumentError("realnvp: bad schedule");
  if (data.rows() < options.batch_size) {
    throw ArgumentError(fmt::format("realnvp: {} samples is smaller than one batch of {}",
                                    data.rows(), options.batch_size));
  }
  if (!data.allFinite()) throw ArgumentError("realnvp: non-finite training data");
  RealNvp model(static_cast<int>(data.cols()), options, seed);
  nn::Adam adam({.lr = options.lr, .weight_decay = options.weight_decay});
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.rows()));
  const auto bs = static_cast<std::size_t>(options.batch_size);
  Matrix batch;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(derive_seed(seed, "realnvp-epoch", static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t count = std::min(bs, order.size() - start);
      batch.resize(static_cast<Eigen::Index>(count), data.cols());
      for (std::size_t i = 0; i < count; ++i) {
        batch.row(static_cast<Eigen::Index>(i)) = data.row(order[start + i]);
      }
      const double loss = model.nll_and_gradient(batch);
      total += loss * static_cast<double>(count);
      const auto blocks = model.params();
      adam.step(blocks);
    }
    model.history_.push_back(total / static_cast<double>(order.size()));
  }
  return model;
}

}  // namespace leakdet
