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

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "leakdet/errors.hpp"
#include "leakdet/random.hpp"

namespace leakdet::nn {
namespace {

// Values bounded away from zero by at least `gap` so ReLU/maxpool kinks are not
// straddled by finite differences.
Tensor random_input(std::vector<int> shape, std::uint64_t seed, double gap = 1e-3) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (double& v : t.data) {
    double u = uniform(rng, -1.0, 1.0);
    if (std::abs(u) < gap) u = u < 0 ? -gap - 0.01 : gap + 0.01;
    v = u;
  }
  return t;
}

// Weighted sum of outputs, so the upstream gradient is the fixed weight tensor.
struct LinearProbe {
  Tensor weights;
  double operator()(const Tensor& y) const {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weights.data[i] * y.data[i];
    return s;
  }
};

double input_grad_error(Layer& layer, Tensor x, std::uint64_t seed) {
  const Tensor y0 = layer.forward(x);
  const LinearProbe probe{random_input(y0.shape, seed + 1)};
  ParamBlock block{"input", {x.data.data(), x.size()}, {}};
  std::vector<double> grad(x.size());
  block.grad = {grad.data(), grad.size()};
  const auto loss = [&] { return probe(layer.forward(x)); };
  const auto gradient = [&] {
    layer.forward(x);
    const Tensor gx = layer.backward(probe.weights);
    std::copy(gx.data.begin(), gx.data.end(), grad.begin());
  };
  const std::vector<ParamBlock> blocks{block};
  return grad_check(blocks, loss, gradient).max_relative_error;
}

double param_grad_error(Layer& layer, const Tensor& x, std::uint64_t seed) {
  const Tensor y0 = layer.forward(x);
  const LinearProbe probe{random_input(y0.shape, seed + 1)};
  const auto blocks = layer.params();
  const auto loss = [&] { return probe(layer.forward(x)); };
  const auto gradient = [&] {
    layer.zero_grad();
    layer.forward(x);
    layer.backward(probe.weights);
  };
  return grad_check(blocks, loss, gradient).max_relative_error;
}

TEST(Dense, IdentityWeightsPassInputThrough) {
  Dense d(Matrix::Identity(3, 3), Vector::Zero(3));
  const Tensor y = d.forward(Tensor({1, 3}, {1.0, 2.0, 3.0}));
  EXPECT_EQ(y.shape, (std::vector<int>{1, 3}));
  EXPECT_EQ(y.values(), (std::vector<double>{1.0, 2.0, 3.0}));
}

TEST(Dense, ComputesAffineMapPerRow) {
  Matrix w(2, 3);
  w << 1, 2, 3, -1, 0, 1;
  Vector b(2);
  b << 0.5, -0.5;
  Dense d(w, b);
  const Tensor y = d.forward(Tensor({2, 3}, {1, 1, 1, 2, 0, -1}));
  EXPECT_EQ(y.values(), (std::vector<double>{6.5, -0.5, -0.5, -3.5}));
}

TEST(Dense, WeightGradientIsOuterProduct) {
  Rng rng(3);
  Dense d(3, 2, rng);
  const Tensor x({1, 3}, {0.5, -1.0, 2.0});
  d.forward(x);
  d.backward(Tensor({1, 2}, {3.0, -2.0}));
  Matrix expected(2, 3);
  expected << 1.5, -3.0, 6.0, -1.0, 2.0, -4.0;
  EXPECT_LT((d.weight_grad() - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Dense, RejectsWrongWidth) {
  Rng rng(0);
  Dense d(4, 2, rng);
  EXPECT_THROW(d.forward(Tensor({1, 3})), ArgumentError);
}

TEST(Dense, KaimingUniformBound) {
  Rng rng(11);
  Dense d(50, 40, rng);
  const double bound = std::sqrt(6.0 / 50.0);
  EXPECT_LE(d.weights().cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(d.weights().cwiseAbs().maxCoeff(), 0.9 * bound);
  EXPECT_EQ(d.bias().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Relu, ForwardClampsNegatives) {
  Relu r;
  EXPECT_EQ(r.forward(Tensor({1, 3}, {-1.0, 0.0, 2.0})).values(), (std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Relu, BackwardBlocksNegativeInputs) {
  Relu r;
  r.forward(Tensor({1, 4}, {-3.0, -0.1, 0.2, 5.0}));
  const Tensor g = r.backward(Tensor({1, 4}, {1.0, 1.0, 1.0, 1.0}));
  EXPECT_EQ(g.values(), (std::vector<double>{0.0, 0.0, 1.0, 1.0}));
}

TEST(MaxPool2d, PicksLargestOfFour) {
  MaxPool2d p;
  const Tensor y = p.forward(Tensor({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0}));
  EXPECT_EQ(y.shape, (std::vector<int>{1, 1, 1, 1}));
  EXPECT_EQ(y.values(), (std::vector<double>{4.0}));
  const Tensor g = p.backward(Tensor({1, 1, 1, 1}, {7.0}));
  EXPECT_EQ(g.values(), (std::vector<double>{0.0, 0.0, 0.0, 7.0}));
}

TEST(MaxPool2d, FloorsOddSizes) {
  MaxPool2d p;
  const Tensor y = p.forward(random_input({2, 3, 59, 64}, 1).reshaped({2, 3, 64, 59}));
  EXPECT_EQ(y.shape, (std::vector<int>{2, 3, 32, 29}));
}

TEST(Upsample2d, NearestToOddTarget) {
  Upsample2d u(3, 5);
  const Tensor y = u.forward(Tensor({1, 1, 1, 2}, {1.0, 2.0}));
  EXPECT_EQ(y.values(), (std::vector<double>{1, 1, 2, 2, 2, 1, 1, 2, 2, 2, 1, 1, 2, 2, 2}));
  const Tensor g = u.backward(Tensor({1, 1, 3, 5}, 1.0));
  EXPECT_EQ(g.values(), (std::vector<double>{6.0, 9.0}));
}

TEST(Upsample2d, RejectsIncompatibleTarget) {
  Upsample2d u(10, 10);
  EXPECT_THROW(u.forward(Tensor({1, 1, 3, 3})), ArgumentError);
}

TEST(Conv2d, KeepsSpatialSizeAndMatchesDirectSum) {
  Rng rng(5);
  Conv2d c(2, 3, 3, rng);
  const Tensor x = random_input({2, 2, 5, 4}, 9);
  const Tensor y = c.forward(x);
  ASSERT_EQ(y.shape, (std::vector<int>{2, 3, 5, 4}));
  for (int n = 0; n < 2; ++n) {
    for (int o = 0; o < 3; ++o) {
      for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 4; ++j) {
          double s = c.bias()(o);
          for (int ch = 0; ch < 2; ++ch) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const int yy = i + ky - 1, xx = j + kx - 1;
                if (yy < 0 || yy >= 5 || xx < 0 || xx >= 4) continue;
                s += c.weights()(o, (ch * 3 + ky) * 3 + kx) * x.data[((n * 2 + ch) * 5 + yy) * 4 + xx];
              }
            }
          }
          EXPECT_NEAR(y.data[((n * 3 + o) * 5 + i) * 4 + j], s, 1e-12);
        }
      }
    }
  }
}

TEST(Conv2d, RejectsEvenKernel) {
  Rng rng(0);
  EXPECT_THROW(Conv2d(1, 1, 2, rng), ArgumentError);
}

TEST(GradCheck, EveryLayerInputGradient) {
  Rng rng(21);
  Dense dense(6, 4, rng);
  Conv2d conv(2, 3, 3, rng);
  Relu relu;
  Tanh tanh_layer;
  MaxPool2d pool;
  Upsample2d up(5, 7);
  Reshape reshape({2, 3});

  EXPECT_LT(input_grad_error(dense, random_input({3, 6}, 1), 1), 1e-4);
  EXPECT_LT(input_grad_error(conv, random_input({2, 2, 5, 6}, 2), 2), 1e-4);
  EXPECT_LT(input_grad_error(relu, random_input({4, 8}, 3), 3), 1e-4);
  EXPECT_LT(input_grad_error(tanh_layer, random_input({4, 8}, 4), 4), 1e-4);
  EXPECT_LT(input_grad_error(pool, random_input({2, 2, 6, 5}, 5), 5), 1e-4);
  EXPECT_LT(input_grad_error(up, random_input({2, 2, 2, 3}, 6), 6), 1e-4);
  EXPECT_LT(input_grad_error(reshape, random_input({3, 6}, 7), 7), 1e-4);
}

TEST(GradCheck, EveryLayerParameterGradient) {
  Rng rng(22);
  Dense dense(6, 4, rng);
  Conv2d conv(2, 3, 3, rng);
  EXPECT_LT(param_grad_error(dense, random_input({5, 6}, 11), 11), 1e-4);
  EXPECT_LT(param_grad_error(conv, random_input({2, 2, 5, 6}, 12), 12), 1e-4);
}

TEST(GradCheck, QuadraticLossIsNearlyExact) {
  std::vector<double> theta{0.3, -1.2, 2.5, 0.7};
  std::vector<double> grad(theta.size());
  const std::vector<ParamBlock> blocks{{"theta", {theta.data(), theta.size()}, {grad.data(), grad.size()}}};
  const auto loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) s += (i + 1.0) * theta[i] * theta[i] + 2.0 * theta[i];
    return s;
  };
  const auto gradient = [&] {
    for (std::size_t i = 0; i < theta.size(); ++i) grad[i] = 2.0 * (i + 1.0) * theta[i] + 2.0;
  };
  const GradCheckResult r = grad_check(blocks, loss, gradient);
  EXPECT_EQ(r.checked, 4u);
  EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(GradCheck, TwoLayerReluNetwork) {
  Rng rng(31);
  Sequential net;
  net.add<Dense>(5, 12, rng, "fc1");
  net.add<Relu>();
  net.add<Dense>(12, 3, rng, "fc2");
  const Tensor x = random_input({6, 5}, 32);
  const Tensor target = random_input({6, 3}, 33);
  const auto loss = [&] {
    const Tensor y = net.forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * std::pow(y.data[i] - target.data[i], 2);
    return s;
  };
  const auto gradient = [&] {
    net.zero_grad();
    Tensor g = net.forward(x);
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] -= target.data[i];
    net.backward(g);
  };
  const auto blocks = net.params();
  const GradCheckResult r = grad_check(blocks, loss, gradient);
  EXPECT_EQ(r.checked, 100u);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
}

TEST(GradCheck, DetectsWrongGradient) {
  std::vector<double> theta{1.0, 2.0};
  std::vector<double> grad(2);
  const std::vector<ParamBlock> blocks{{"theta", {theta.data(), 2}, {grad.data(), 2}}};
  const auto loss = [&] { return theta[0] * theta[0] + theta[1]; };
  const auto gradient = [&] {
    grad[0] = 2.0 * theta[0];
    grad[1] = 2.0;
  };
  const GradCheckResult r = grad_check(blocks, loss, gradient);
  EXPECT_GT(r.max_relative_error, 0.4);
  EXPECT_EQ(r.worst, "theta[1]");
}

TEST(Layers, BackwardBeforeForwardIsStateError) {
  Rng rng(0);
  Dense dense(2, 2, rng);
  Conv2d conv(1, 1, 3, rng);
  Relu relu;
  Tanh tanh_layer;
  MaxPool2d pool;
  Upsample2d up(2, 2);
  Reshape reshape({2});
  EXPECT_THROW(dense.backward(Tensor({1, 2})), StateError);
  EXPECT_THROW(conv.backward(Tensor({1, 1, 3, 3})), StateError);
  EXPECT_THROW(relu.backward(Tensor({1, 2})), StateError);
  EXPECT_THROW(tanh_layer.backward(Tensor({1, 2})), StateError);
  EXPECT_THROW(pool.backward(Tensor({1, 1, 1, 1})), StateError);
  EXPECT_THROW(up.backward(Tensor({1, 1, 2, 2})), StateError);
  EXPECT_THROW(reshape.backward(Tensor({1, 2})), StateError);
}

TEST(Layers, ApplyMatchesForward) {
  Rng rng(4);
  Sequential net;
  net.add<Conv2d>(1, 3, 3, rng);
  net.add<Tanh>();
  net.add<MaxPool2d>();
  net.add<Upsample2d>(5, 7);
  net.add<Relu>();
  net.add<Reshape>(std::vector<int>{105});
  net.add<Dense>(105, 4, rng);
  const Tensor x = random_input({2, 1, 5, 7}, 8);
  const Tensor a = net.apply(x);
  EXPECT_EQ(a.values(), net.forward(x).values());
}

struct AdamFixture {
  std::vector<double> value{1.0, -2.0, 0.5};
  std::vector<double> grad{0.0, 0.0, 0.0};
  std::vector<ParamBlock> blocks() {
    return {{"p", {value.data(), value.size()}, {grad.data(), grad.size()}}};
  }
};

TEST(Adam, ZeroGradientIsFixedPoint) {
  AdamFixture f;
  Adam adam;
  for (int i = 0; i < 10; ++i) adam.step(f.blocks());
  EXPECT_EQ(f.value, (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamFixture f;
  f.grad = {0.3, -5.0, 1e-2};
  Adam adam(AdamOptions{.lr = 1e-3});
  adam.step(f.blocks());
  EXPECT_NEAR(f.value[0], 1.0 - 1e-3, 1e-9);
  EXPECT_NEAR(f.value[1], -2.0 + 1e-3, 1e-9);
  EXPECT_NEAR(f.value[2], 0.5 - 1e-3, 1e-8);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, ZeroLearningRateIsIdentity) {
  AdamFixture f;
  f.grad = {1.0, 2.0, 3.0};
  Adam adam(AdamOptions{.lr = 0.0});
  for (int i = 0; i < 5; ++i) adam.step(f.blocks());
  EXPECT_EQ(f.value, (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, WeightDecayPullsTowardZero) {
  AdamFixture f;
  Adam adam(AdamOptions{.lr = 1e-2, .weight_decay = 1.0});
  adam.step(f.blocks());
  EXPECT_LT(f.value[0], 1.0);
  EXPECT_GT(f.value[1], -2.0);
}

TEST(Adam, DeterministicTrajectory) {
  AdamFixture a, b;
  Adam oa, ob;
  for (int i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      a.grad[j] = 2.0 * a.value[j] + j;
      b.grad[j] = 2.0 * b.value[j] + j;
    }
    oa.step(a.blocks());
    ob.step(b.blocks());
  }
  EXPECT_EQ(a.value, b.value);
}

TEST(Adam, MinimisesQuadratic) {
  AdamFixture f;
  Adam adam(AdamOptions{.lr = 0.05});
  for (int i = 0; i < 2000; ++i) {
    for (std::size_t j = 0; j < 3; ++j) f.grad[j] = 2.0 * (f.value[j] - 3.0);
    adam.step(f.blocks());
  }
  for (double v : f.value) EXPECT_NEAR(v, 3.0, 1e-3);
}

TEST(Adam, NonFiniteGradientNamesBlock) {
  AdamFixture f;
  f.grad[1] = std::numeric_limits<double>::quiet_NaN();
  Adam adam;
  try {
    adam.step(f.blocks());
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("'p'"), std::string::npos);
  }
  EXPECT_EQ(f.value[0], 1.0);
}

TEST(Sequential, ChainsLayersAndCollectsParams) {
  Rng rng(1);
  Sequential net;
  net.add<Reshape>(std::vector<int>{1, 4, 4});
  net.add<Conv2d>(1, 2, 3, rng, "c1");
  net.add<Relu>();
  net.add<MaxPool2d>();
  net.add<Reshape>(std::vector<int>{8});
  net.add<Dense>(8, 2, rng, "fc");
  const Tensor y = net.forward(random_input({3, 16}, 2));
  EXPECT_EQ(y.shape, (std::vector<int>{3, 2}));
  EXPECT_EQ(net.params().size(), 4u);
  const Tensor g = net.backward(Tensor({3, 2}, 1.0));
  EXPECT_EQ(g.shape, (std::vector<int>{3, 16}));
}

}  // namespace
}  // namespace leakdet::nn
