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

#include "leakdet/dsp.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "leakdet/errors.hpp"
#include "test_util.hpp"

namespace leakdet {
namespace {

using testing::tone;
using testing::white_noise;

TEST(Stft, ZeroInZeroOut) {
  const Matrix m = stft_magnitude(std::vector<double>(4096, 0.0));
  EXPECT_EQ(m.rows(), 1025);
  EXPECT_EQ(m.cols(), 5);
  EXPECT_EQ(m.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Stft, ToneLandsInExpectedBin) {
  const Matrix m = stft_magnitude(tone(1000.0, 2.0));
  for (Eigen::Index f = 0; f < m.cols(); ++f) {
    Eigen::Index arg;
    m.col(f).maxCoeff(&arg);
    EXPECT_EQ(arg, 128);
  }
}

TEST(Stft, FrameCountFormula) {
  EXPECT_EQ(stft_magnitude(std::vector<double>(32000, 0.0)).cols(), 59);
  EXPECT_EQ(frame_count(32000), 59u);
  EXPECT_EQ(frame_count(2048), 1u);
  EXPECT_EQ(frame_count(2047), 0u);
  EXPECT_THROW(stft_magnitude(std::vector<double>(2047, 0.0)), ArgumentError);
}

TEST(MelScale, HtkFormula) {
  EXPECT_EQ(hz_to_mel(0.0), 0.0);
  EXPECT_NEAR(hz_to_mel(700.0), 781.17, 0.01);
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-12);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
}

TEST(MelFilterbank, RowsPeakAtOneWithContiguousSupport) {
  const Matrix fb = mel_filterbank(64, 16000.0, 2048);
  ASSERT_EQ(fb.rows(), 64);
  ASSERT_EQ(fb.cols(), 1025);
  for (Eigen::Index m = 0; m < fb.rows(); ++m) {
    EXPECT_EQ(fb.row(m).maxCoeff(), 1.0) << "filter " << m;
    EXPECT_GE(fb.row(m).minCoeff(), 0.0);
    Eigen::Index first = -1, last = -1;
    for (Eigen::Index b = 0; b < fb.cols(); ++b) {
      if (fb(m, b) > 0.0) {
        if (first < 0) first = b;
        last = b;
      }
    }
    for (Eigen::Index b = first; b <= last; ++b) EXPECT_GT(fb(m, b), 0.0) << m << "," << b;
  }
  EXPECT_THROW(mel_filterbank(64, 0.0, 2048), ArgumentError);
}

TEST(MelFilterbank, PreservesNonNegativity) {
  const Matrix fb = mel_filterbank(64, 16000.0, 2048);
  const Matrix power = stft_magnitude(white_noise(8192, 4)).cwiseAbs2();
  EXPECT_GE((fb * power).minCoeff(), 0.0);
}

TEST(MelSpectrogram, SilentClipIsAllZero) {
  const MelSpec spec = mel_spectrogram(std::vector<double>(32000, 0.0), 16000.0);
  EXPECT_EQ(spec.mel_count(), 64);
  EXPECT_EQ(spec.frame_count(), 59);
  EXPECT_EQ(spec.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(MelSpectrogram, NormalisedToUnitRange) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MelSpec spec = mel_spectrogram(white_noise(32000, seed), 16000.0);
    EXPECT_EQ(spec.values.minCoeff(), 0.0);
    EXPECT_EQ(spec.values.maxCoeff(), 1.0);
  }
}

TEST(MelSpectrogram, LeakHasMoreHighBandEnergyThanAmbient) {
  const Recording leak = synth_leak(2.0, 1);
  const Recording amb = synth_ambient(2.0, 1);
  const MelSpec ml = mel_spectrogram(leak.samples(), leak.rate());
  const MelSpec ma = mel_spectrogram(amb.samples(), amb.rate());
  const int first_high = static_cast<int>(std::ceil(
      hz_to_mel(1000.0) / hz_to_mel(8000.0) * (kMelCount + 1))) - 1;
  const auto high = [&](const MelSpec& s) {
    return s.values.bottomRows(kMelCount - first_high).mean();
  };
  EXPECT_GT(high(ml), high(ma));
}

TEST(SpectralFeatures, PureToneCentroidAndBandwidth) {
  const Vector f = spectral_features(tone(1000.0, 2.0), 16000.0);
  ASSERT_EQ(f.size(), kFeatureDim);
  EXPECT_NEAR(f[feature::kCentroid], 1000.0, 7.8125);
  EXPECT_LT(f[feature::kBandwidth], 50.0);
  EXPECT_LT(f[feature::kFlatness], 0.1);
  EXPECT_NEAR(f[feature::kRms], 0.5 / std::sqrt(2.0), 1e-3);
}

TEST(SpectralFeatures, WhiteNoiseIsFlat) {
  const Vector f = spectral_features(white_noise(32000, 7), 16000.0);
  EXPECT_GT(f[feature::kFlatness], 0.5);
  EXPECT_LE(f[feature::kFlatness], 1.0);
}

TEST(SpectralFeatures, SquareWaveZeroCrossingRate) {
  // 16 Hz, zero mean: 32 sign changes per second.
  std::vector<double> x(32000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = ((i / 500) % 2 == 0) ? 0.5 : -0.5;
  const Vector f = spectral_features(x, 16000.0);
  EXPECT_NEAR(f[feature::kZcr], 2.0 * 16.0 / 16000.0, 1.0 / 32000.0);
}

TEST(SpectralFeatures, SilentClipFallbacks) {
  const Vector f = spectral_features(std::vector<double>(4096, 0.0), 16000.0);
  EXPECT_EQ(f[feature::kCentroid], 0.0);
  EXPECT_EQ(f[feature::kBandwidth], 0.0);
  EXPECT_EQ(f[feature::kRolloff], 0.0);
  EXPECT_EQ(f[feature::kFlatness], 1.0);
  EXPECT_EQ(f[feature::kZcr], 0.0);
  EXPECT_EQ(f[feature::kRms], 0.0);
  for (int c = 0; c < 12; ++c) EXPECT_EQ(f[feature::kChroma + c], 1.0);
  EXPECT_TRUE(f.allFinite());
}

TEST(SpectralFeatures, RangesOnRandomInput) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = white_noise(8192, 50 + trial, uniform(rng, 0.01, 0.9));
    auto t = tone(uniform(rng, 50.0, 7000.0), 8192.0 / 16000.0, 16000.0, 0.3);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5 * x[i] + t[i];
    const Vector f = spectral_features(x, 16000.0);
    EXPECT_TRUE(f.allFinite());
    EXPECT_GE(f[feature::kFlatness], 0.0);
    EXPECT_LE(f[feature::kFlatness], 1.0);
    EXPECT_GE(f[feature::kZcr], 0.0);
    EXPECT_LE(f[feature::kZcr], 1.0);
    EXPECT_GE(f[feature::kRms], 0.0);
  }
}

TEST(SpectralFeatures, AmplitudeScalingInvariance) {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Recording amb = synth_ambient(1.0, 70 + trial);
    std::vector<double> x(amb.samples().begin(), amb.samples().end());
    const double c = uniform(rng, 0.05, 3.0);
    std::vector<double> scaled(x);
    for (double& v : scaled) v *= c;
    const Vector a = spectral_features(x, 16000.0);
    const Vector b = spectral_features(scaled, 16000.0);
    for (int d = 0; d < kFeatureDim; ++d) {
      const double expect = d == feature::kRms ? c * a[d] : a[d];
      EXPECT_NEAR(b[d], expect, 1e-6 * std::max(1.0, std::abs(expect))) << "dim " << d;
    }
  }
}

TEST(Standardizer, HandArithmetic) {
  std::vector<Vector> vs{Vector::Constant(3, 0.0), Vector::Constant(3, 2.0)};
  const Standardizer s = fit_standardizer(vs);
  EXPECT_TRUE(s.mean().isApprox(Vector::Constant(3, 1.0)));
  EXPECT_TRUE(s.std().isApprox(Vector::Constant(3, 1.0)));

  const Standardizer manual(Vector::Constant(2, 1.0), Vector::Constant(2, 2.0));
  EXPECT_TRUE(apply_standardizer(manual, Vector::Constant(2, 5.0)).isApprox(Vector::Constant(2, 2.0)));
  EXPECT_EQ(apply_standardizer(manual, manual.mean()), Vector::Zero(2));

  const Standardizer identity(Vector::Zero(2), Vector::Ones(2));
  const Vector v{{3.5, -2.0}};
  EXPECT_EQ(identity.apply(v), v);
}

TEST(Standardizer, ZeroVarianceFloored) {
  std::vector<Vector> vs(4, Vector::Constant(2, 7.0));
  const Standardizer s = Standardizer::fit(vs);
  EXPECT_EQ(s.std()[0], Standardizer::kStdFloor);
  EXPECT_EQ(s.apply(vs[0]), Vector::Zero(2));
}

TEST(Standardizer, Errors) {
  EXPECT_THROW(Standardizer::fit({}), ArgumentError);
  std::vector<Vector> one{Vector::Zero(2)};
  EXPECT_THROW(Standardizer::fit(one), ArgumentError);
  const Standardizer s(Vector::Zero(2), Vector::Ones(2));
  EXPECT_THROW(s.apply(Vector::Zero(3)), ArgumentError);
}

TEST(Standardizer, SelfApplicationAndInverse) {
  Rng rng(17);
  NormalSampler normal;
  std::vector<Vector> vs;
  for (int i = 0; i < 200; ++i) {
    Vector v(kFeatureDim);
    for (int d = 0; d < kFeatureDim; ++d) v[d] = 3.0 * d + (d + 1) * normal(rng);
    vs.push_back(v);
  }
  const Standardizer s = Standardizer::fit(vs);
  Vector mean = Vector::Zero(kFeatureDim), sq = Vector::Zero(kFeatureDim);
  for (const auto& v : vs) {
    const Vector z = s.apply(v);
    mean += z;
    sq += z.cwiseAbs2();
    EXPECT_LE((s.invert(z) - v).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + v.cwiseAbs().maxCoeff()));
  }
  mean /= 200.0;
  sq /= 200.0;
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(((sq - mean.cwiseAbs2()).cwiseSqrt().array() - 1.0).abs().maxCoeff(), 1e-6);
}

}  // namespace
}  // namespace leakdet
