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
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "leakdet/audio.hpp"

namespace leakdet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kFftSize = 2048;
inline constexpr int kHopLength = 512;
inline constexpr int kMelCount = 64;
inline constexpr int kFeatureDim = 25;

// Layout of the 25-dimensional spectral descriptor.
namespace feature {
inline constexpr int kChroma = 0;  // 12 pitch classes, C first
inline constexpr int kCentroid = 12;
inline constexpr int kBandwidth = 13;
inline constexpr int kContrast = 14;  // 7 bands
inline constexpr int kRolloff = 21;
inline constexpr int kFlatness = 22;
inline constexpr int kZcr = 23;
inline constexpr int kRms = 24;
}  // namespace feature

// 1 + floor((samples - n_fft) / hop), or 0 when samples < n_fft.
std::size_t frame_count(std::size_t samples, int n_fft = kFftSize, int hop = kHopLength);

// Hann-windowed magnitude spectrogram, (n_fft/2 + 1) x F. Frames lie fully
// inside the input; no centring or padding.
Matrix stft_magnitude(std::span<const double> samples, int n_fft = kFftSize,
                      int hop = kHopLength);
inline Matrix stft_magnitude(const Clip& clip, int n_fft = kFftSize, int hop = kHopLength) {
  return stft_magnitude(clip.samples, n_fft, hop);
}

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters equally spaced on the mel scale over [0, rate/2], each
// row scaled so its maximum is exactly 1. Shape n_mels x (n_fft/2 + 1).
Matrix mel_filterbank(int n_mels, double rate, int n_fft = kFftSize);

// 64 x F log-mel spectrogram, min-max normalised to [0, 1] (all zeros when
// constant).
struct MelSpec {
  Matrix values;

  int mel_count() const { return static_cast<int>(values.rows()); }
  int frame_count() const { return static_cast<int>(values.cols()); }
};

MelSpec mel_spectrogram(std::span<const double> samples, double rate);
inline MelSpec mel_spectrogram(const Clip& clip) {
  return mel_spectrogram(clip.samples, clip.rate);
}

// Frame-averaged chroma, centroid, bandwidth, contrast, rolloff and flatness
// (centroid, bandwidth and rolloff weight bins by power),
// plus clip-level zero-crossing rate and RMS. See `feature` for the layout.
Vector spectral_features(std::span<const double> samples, double rate);
inline Vector spectral_features(const Clip& clip) {
  return spectral_features(clip.samples, clip.rate);
}

// Per-dimension z-scoring. std is the population standard deviation floored
// at kStdFloor.
class Standardizer {
 public:
  static constexpr double kStdFloor = 1e-9;

  Standardizer() = default;
  Standardizer(Vector mean, Vector std);

  static Standardizer fit(std::span<const Vector> vectors);

  Vector apply(const Vector& v) const;
  Vector invert(const Vector& z) const;

  const Vector& mean() const { return mean_; }
  const Vector& std() const { return std_; }
  Eigen::Index dim() const { return mean_.size(); }

 private:
  Vector mean_;
  Vector std_;
};

inline Vector apply_standardizer(const Standardizer& s, const Vector& v) { return s.apply(v); }
inline Standardizer fit_standardizer(std::span<const Vector> vectors) {
  return Standardizer::fit(vectors);
}

}  // namespace leakdet
