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
#include <span>
#include <vector>

#include "leakdet/dsp.hpp"
#include "leakdet/nn.hpp"

namespace leakdet {

struct DcaeOptions {
  std::vector<int> channels{4, 16, 32};
  int kernel = 3;
  int bottleneck = 32;
  int epochs = 100;
  int batch_size = 128;
  double lr = 1e-4;
  double weight_decay = 1e-6;
};

// Convolutional autoencoder over mel-spectrograms. Each encoder stage is
// conv + ReLU + 2x2 max-pool (floor); the flattened map is projected to the
// bottleneck and back. The decoder mirrors the encoder with nearest-neighbour
// upsampling to the exact encoder sizes followed by conv + ReLU; the last
// conv maps to one channel with a linear output.
class Dcae {
 public:
  Dcae(int rows, int cols, const DcaeOptions& options, std::uint64_t seed);

  static Dcae fit(std::span<const MelSpec> data, const DcaeOptions& options, std::uint64_t seed);

  // Input and output are [N, 1, rows, cols].
  nn::Tensor reconstruct(const nn::Tensor& x) const;
  MelSpec reconstruct(const MelSpec& m) const;
  // Mean squared reconstruction error.
  double score(const MelSpec& m) const;
  double mean_loss(std::span<const MelSpec> data) const;

  // Mean squared error over the batch; fills parameter gradients.
  double loss_and_gradient(const nn::Tensor& batch);

  std::vector<nn::ParamBlock> params() { return net_.params(); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const DcaeOptions& options() const { return options_; }
  // Running mean batch loss of each epoch.
  const std::vector<double>& history() const { return history_; }
  // Mean loss over the training set before and after training.
  double initial_loss() const { return initial_loss_; }
  double final_loss() const { return final_loss_; }

  static nn::Tensor stack(std::span<const MelSpec> data, std::span<const std::size_t> index);

 private:
  int rows_, cols_;
  DcaeOptions options_;
  nn::Sequential net_;
  std::vector<double> history_;
  double initial_loss_ = 0.0;
  double final_loss_ = 0.0;
};

}  // namespace leakdet
