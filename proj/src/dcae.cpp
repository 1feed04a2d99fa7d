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

#include "leakdet/dcae.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "leakdet/errors.hpp"

namespace leakdet {

using nn::Tensor;

Dcae::Dcae(int rows, int cols, const DcaeOptions& options, std::uint64_t seed)
    : rows_(rows), cols_(cols), options_(options) {
  const auto stages = options.channels.size();
  if (stages == 0 || options.bottleneck < 1) throw ArgumentError("dcae: invalid architecture");
  std::vector<int> h{rows}, w{cols};
  for (std::size_t i = 0; i < stages; ++i) {
    h.push_back(h.back() / 2);
    w.push_back(w.back() / 2);
  }
  if (h.back() < 1 || w.back() < 1) {
    throw ArgumentError(fmt::format("dcae: {}x{} input is too small for {} pooling stages", rows,
                                    cols, stages));
  }
  Rng rng(derive_seed(seed, "dcae-init"));
  int in = 1;
  net_.add<nn::Reshape>(std::vector<int>{1, rows, cols});
  for (std::size_t i = 0; i < stages; ++i) {
    net_.add<nn::Conv2d>(in, options.channels[i], options.kernel, rng, fmt::format("enc{}", i));
    net_.add<nn::Relu>();
    net_.add<nn::MaxPool2d>();
    in = options.channels[i];
  }
  const int flat = in * h.back() * w.back();
  net_.add<nn::Reshape>(std::vector<int>{flat});
  net_.add<nn::Dense>(flat, options.bottleneck, rng, "code");
  net_.add<nn::Dense>(options.bottleneck, flat, rng, "expand");
  net_.add<nn::Relu>();
  net_.add<nn::Reshape>(std::vector<int>{in, h.back(), w.back()});
  for (std::size_t i = stages; i-- > 0;) {
    const int out = i == 0 ? 1 : options.channels[i - 1];
    net_.add<nn::Upsample2d>(h[i], w[i]);
    net_.add<nn::Conv2d>(in, out, options.kernel, rng, fmt::format("dec{}", i));
    if (i > 0) net_.add<nn::Relu>();
    in = out;
  }
}

Tensor Dcae::stack(std::span<const MelSpec> data, std::span<const std::size_t> index) {
  if (index.empty()) throw ArgumentError("dcae: empty batch");
  const auto& first = data[index[0]].values;
  const int r = static_cast<int>(first.rows()), c = static_cast<int>(first.cols());
  Tensor t({static_cast<int>(index.size()), 1, r, c});
  const std::size_t item = static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Matrix& m = data[index[i]].values;
    if (m.rows() != r || m.cols() != c) throw ArgumentError("dcae: mixed mel-spectrogram sizes");
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        t.data.data() + i * item, r, c) = m;
  }
  return t;
}

Tensor Dcae::reconstruct(const Tensor& x) const {
  if (x.shape.size() != 4 || x.dim(1) != 1 || x.dim(2) != rows_ || x.dim(3) != cols_) {
    throw ArgumentError(fmt::format("dcae: expected [N, 1, {}, {}], got {}", rows_, cols_,
                                    x.shape_string()));
  }
  return net_.apply(x.reshaped({x.batch(), rows_ * cols_})).reshaped(x.shape);
}

MelSpec Dcae::reconstruct(const MelSpec& m) const {
  const std::size_t zero = 0;
  const MelSpec* ptr = &m;
  const Tensor y = reconstruct(stack({ptr, 1}, {&zero, 1}));
  MelSpec out;
  out.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      y.data.data(), rows_, cols_);
  return out;
}

double Dcae::score(const MelSpec& m) const {
  if (m.values.rows() != rows_ || m.values.cols() != cols_) {
    throw ArgumentError(fmt::format("dcae: expected {}x{} mel-spectrogram, got {}x{}", rows_,
                                    cols_, m.values.rows(), m.values.cols()));
  }
  return (reconstruct(m).values - m.values).squaredNorm() / static_cast<double>(m.values.size());
}

double Dcae::mean_loss(std::span<const MelSpec> data) const {
  double total = 0.0;
  for (const auto& m : data) total += score(m);
  return total / static_cast<double>(data.size());
}

double Dcae::loss_and_gradient(const Tensor& batch) {
  net_.zero_grad();
  const Tensor flat = batch.reshaped({batch.batch(), rows_ * cols_});
  Tensor g = net_.forward(flat);
  const double n = static_cast<double>(g.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = g.data[i] - flat.data[i];
    loss += d * d;
    g.data[i] = 2.0 * d / n;
  }
  loss /= n;
  if (!std::isfinite(loss)) throw TrainingError("dcae: loss is not finite");
  net_.backward(g);
  return loss;
}

Dcae Dcae::fit(std::span<const MelSpec> data, const DcaeOptions& options, std::uint64_t seed) {
  if (options.batch_size < 1 || options.epochs < 0) throw ArgumentError("dcae: bad schedule");
  if (data.size() < static_cast<std::size_t>(options.batch_size)) {
    throw ArgumentError(fmt::format("dcae: {} samples is smaller than one batch of {}",
                                    data.size(), options.batch_size));
  }
  Dcae model(static_cast<int>(data[0].values.rows()), static_cast<int>(data[0].values.cols()),
             options, seed);
  nn::Adam adam({.lr = options.lr, .weight_decay = options.weight_decay});
  model.initial_loss_ = model.mean_loss(data);
  std::vector<std::size_t> order(data.size());
  const auto bs = static_cast<std::size_t>(options.batch_size);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "dcae-epoch", static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t count = std::min(bs, order.size() - start);
      const Tensor batch = stack(data, {order.data() + start, count});
      total += model.loss_and_gradient(batch) * static_cast<double>(count);
      const auto blocks = model.params();
      adam.step(blocks);
    }
    model.history_.push_back(total / static_cast<double>(order.size()));
  }
  model.final_loss_ = model.mean_loss(data);
  return model;
}

}  // namespace leakdet
