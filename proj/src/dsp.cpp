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

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include <fmt/format.h>

#include "leakdet/errors.hpp"
#include "leakdet/fft.hpp"

namespace leakdet {

namespace {

constexpr double kRolloffFraction = 0.85;
constexpr double kLogMelGain = 1e4;
constexpr double kContrastQuantile = 0.02;
constexpr double kContrastLowEdgeHz = 200.0;
constexpr int kContrastBands = 7;  // sub-band below 200 Hz + 6 octaves
constexpr double kChromaMinHz = 32.7;  // C1

std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(n));
  }
  return w;
}

void require_frames(std::size_t samples, int n_fft) {
  if (samples < static_cast<std::size_t>(n_fft)) {
    throw ArgumentError(
        fmt::format("clip of {} samples is shorter than the FFT window ({})", samples, n_fft));
  }
}

}  // namespace

std::size_t frame_count(std::size_t samples, int n_fft, int hop) {
  if (samples < static_cast<std::size_t>(n_fft)) return 0;
  return 1 + (samples - static_cast<std::size_t>(n_fft)) / static_cast<std::size_t>(hop);
}

Matrix stft_magnitude(std::span<const double> samples, int n_fft, int hop) {
  if (n_fft < 2 || hop < 1) {
    throw ArgumentError(fmt::format("invalid STFT geometry n_fft={} hop={}", n_fft, hop));
  }
  require_frames(samples.size(), n_fft);
  const std::size_t frames = frame_count(samples.size(), n_fft, hop);
  const RealFft fft(static_cast<std::size_t>(n_fft));
  const auto window = hann(n_fft);
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> spectrum(fft.bins());
  Matrix mag(static_cast<Eigen::Index>(fft.bins()), static_cast<Eigen::Index>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * static_cast<std::size_t>(hop);
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = samples[start + i] * window[i];
    fft.forward(frame, spectrum);
    for (std::size_t b = 0; b < spectrum.size(); ++b) {
      mag(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(f)) =
          std::sqrt(std::norm(spectrum[b]));
    }
  }
  return mag;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(int n_mels, double rate, int n_fft) {
  if (n_mels < 1 || !(rate > 0.0) || n_fft < 2) {
    throw ArgumentError(
        fmt::format("invalid filterbank n_mels={} rate={} n_fft={}", n_mels, rate, n_fft));
  }
  const int bins = n_fft / 2 + 1;
  const double top = hz_to_mel(rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  Matrix fb = Matrix::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double centre = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = b * rate / n_fft;
      const double w = std::min((f - lo) / (centre - lo), (hi - f) / (hi - centre));
      fb(m, b) = std::max(0.0, w);
    }
    const double peak = fb.row(m).maxCoeff();
    if (peak > 0.0) {
      fb.row(m) /= peak;
    } else {
      // Filter narrower than the bin spacing: fall back to the nearest bin.
      const auto b = std::clamp(static_cast<int>(std::lround(centre * n_fft / rate)), 0, bins - 1);
      fb(m, b) = 1.0;
    }
  }
  return fb;
}

MelSpec mel_spectrogram(std::span<const double> samples, double rate) {
  const Matrix mag = stft_magnitude(samples);
  const Matrix fb = mel_filterbank(kMelCount, rate);
  Matrix mel = fb * mag.cwiseAbs2();
  mel = (mel.array() * kLogMelGain).log1p().matrix();
  const double lo = mel.minCoeff();
  const double hi = mel.maxCoeff();
  if (hi > lo) {
    mel = ((mel.array() - lo) / (hi - lo)).matrix();
  } else {
    mel.setZero();
  }
  return MelSpec{std::move(mel)};
}

Vector spectral_features(std::span<const double> samples, double rate) {
  const Matrix mag = stft_magnitude(samples);
  const Eigen::Index bins = mag.rows();
  const Eigen::Index frames = mag.cols();

  std::vector<double> freq(static_cast<std::size_t>(bins));
  for (Eigen::Index b = 0; b < bins; ++b) {
    freq[static_cast<std::size_t>(b)] = static_cast<double>(b) * rate / kFftSize;
  }

  // Pitch class per bin, or -1 below C1.
  std::vector<int> pitch_class(static_cast<std::size_t>(bins), -1);
  for (Eigen::Index b = 1; b < bins; ++b) {
    const double f = freq[static_cast<std::size_t>(b)];
    if (f < kChromaMinHz) continue;
    const long semitone = std::lround(12.0 * std::log2(f / 440.0)) + 9;  // C = 0
    pitch_class[static_cast<std::size_t>(b)] = static_cast<int>(((semitone % 12) + 12) % 12);
  }

  // Contrast band membership: [0, 200), then octaves from 200 Hz.
  std::array<std::vector<Eigen::Index>, kContrastBands> band_bins;
  for (Eigen::Index b = 0; b < bins; ++b) {
    const double f = freq[static_cast<std::size_t>(b)];
    int band = 0;
    if (f >= kContrastLowEdgeHz) {
      band = 1 + static_cast<int>(std::floor(std::log2(f / kContrastLowEdgeHz)));
      band = std::min(band, kContrastBands - 1);
    }
    band_bins[static_cast<std::size_t>(band)].push_back(b);
  }

  Vector acc = Vector::Zero(kFeatureDim);
  std::vector<double> sorted;
  for (Eigen::Index f = 0; f < frames; ++f) {
    const auto s = mag.col(f);
    const Vector power = s.cwiseAbs2();
    const double total = power.sum();
    if (total <= 0.0) {
      acc.segment(feature::kChroma, 12).array() += 1.0;
      acc[feature::kFlatness] += 1.0;
      continue;
    }

    double centroid = 0.0;
    for (Eigen::Index b = 0; b < bins; ++b) {
      centroid += freq[static_cast<std::size_t>(b)] * power[b];
    }
    centroid /= total;
    double spread = 0.0;
    for (Eigen::Index b = 0; b < bins; ++b) {
      const double d = freq[static_cast<std::size_t>(b)] - centroid;
      spread += power[b] * d * d;
    }
    acc[feature::kCentroid] += centroid;
    acc[feature::kBandwidth] += std::sqrt(spread / total);

    const double energy = total;
    double cumulative = 0.0;
    Eigen::Index roll = bins - 1;
    for (Eigen::Index b = 0; b < bins; ++b) {
      cumulative += power[b];
      if (cumulative >= kRolloffFraction * energy) {
        roll = b;
        break;
      }
    }
    acc[feature::kRolloff] += freq[static_cast<std::size_t>(roll)];

    // Floor relative to the frame maximum keeps flatness scale-invariant.
    const double floor = 1e-16 * power.maxCoeff();
    const Eigen::ArrayXd floored = power.array().max(floor);
    const double log_sum = floored.log().sum();
    const double lin_sum = floored.sum();
    const double n = static_cast<double>(bins);
    acc[feature::kFlatness] += std::clamp(std::exp(log_sum / n) / (lin_sum / n), 0.0, 1.0);

    std::array<double, 12> chroma{};
    for (Eigen::Index b = 0; b < bins; ++b) {
      const int pc = pitch_class[static_cast<std::size_t>(b)];
      if (pc >= 0) chroma[static_cast<std::size_t>(pc)] += power[b];
    }
    const double chroma_max = *std::max_element(chroma.begin(), chroma.end());
    for (int c = 0; c < 12; ++c) {
      acc[feature::kChroma + c] +=
          chroma_max > 0.0 ? chroma[static_cast<std::size_t>(c)] / chroma_max : 1.0;
    }

    for (int k = 0; k < kContrastBands; ++k) {
      const auto& members = band_bins[static_cast<std::size_t>(k)];
      if (members.empty()) continue;
      sorted.clear();
      for (Eigen::Index b : members) sorted.push_back(s[b]);
      const auto q = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(kContrastQuantile * sorted.size())));
      // Partition into the q smallest, the middle and the q largest values.
      const auto low_end = sorted.begin() + static_cast<std::ptrdiff_t>(q);
      const auto high_begin = sorted.end() - static_cast<std::ptrdiff_t>(q);
      std::nth_element(sorted.begin(), low_end - 1, sorted.end());
      if (high_begin > low_end) std::nth_element(low_end, high_begin, sorted.end());
      double valley = 0.0, peak = 0.0;
      for (auto it = sorted.begin(); it != low_end; ++it) valley += *it;
      for (auto it = std::max(high_begin, sorted.begin()); it != sorted.end(); ++it) peak += *it;
      valley /= static_cast<double>(q);
      peak /= static_cast<double>(q);
      if (peak > 0.0) {
        valley = std::max(valley, 1e-12 * peak);
        acc[feature::kContrast + k] += 10.0 * std::log10(peak / valley);
      }
    }
  }
  acc /= static_cast<double>(frames);

  std::size_t crossings = 0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if ((samples[i] >= 0.0) != (samples[i - 1] >= 0.0)) ++crossings;
  }
  acc[feature::kZcr] =
      static_cast<double>(crossings) / static_cast<double>(samples.size() - 1);
  acc[feature::kRms] = rms(samples);
  return acc;
}

Standardizer::Standardizer(Vector mean, Vector std) : mean_(std::move(mean)), std_(std::move(std)) {
  if (mean_.size() != std_.size()) {
    throw ArgumentError(fmt::format("standardizer mean has {} dims but std has {}",
                                    mean_.size(), std_.size()));
  }
  if ((std_.array() <= 0.0).any()) throw ArgumentError("standardizer std must be positive");
}

Standardizer Standardizer::fit(std::span<const Vector> vectors) {
  if (vectors.size() < 2) {
    throw ArgumentError(
        fmt::format("standardizer needs at least 2 vectors, got {}", vectors.size()));
  }
  const Eigen::Index dim = vectors.front().size();
  Vector mean = Vector::Zero(dim);
  for (const auto& v : vectors) {
    if (v.size() != dim) {
      throw ArgumentError(fmt::format("vector of {} dims in a {}-dim set", v.size(), dim));
    }
    mean += v;
  }
  mean /= static_cast<double>(vectors.size());
  Vector var = Vector::Zero(dim);
  for (const auto& v : vectors) var += (v - mean).cwiseAbs2();
  var /= static_cast<double>(vectors.size());
  Vector std = var.cwiseSqrt().cwiseMax(kStdFloor);
  return Standardizer(std::move(mean), std::move(std));
}

Vector Standardizer::apply(const Vector& v) const {
  if (v.size() != mean_.size()) {
    throw ArgumentError(
        fmt::format("standardizer expects {} dims, got {}", mean_.size(), v.size()));
  }
  return ((v - mean_).array() / std_.array()).matrix();
}

Vector Standardizer::invert(const Vector& z) const {
  if (z.size() != mean_.size()) {
    throw ArgumentError(
        fmt::format("standardizer expects {} dims, got {}", mean_.size(), z.size()));
  }
  return (z.array() * std_.array()).matrix() + mean_;
}

}  // namespace leakdet
