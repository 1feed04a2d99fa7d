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
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace leakdet {

inline constexpr double kCanonicalRate = 16000.0;

// Mono PCM audio. Amplitudes are finite and within [-1, 1]; rate > 0.
// Immutable once constructed.
class Recording {
 public:
  Recording() = default;
  Recording(std::vector<double> samples, double rate);

  std::span<const double> samples() const { return samples_; }
  double rate() const { return rate_; }
  std::size_t size() const { return samples_.size(); }
  double duration() const { return static_cast<double>(samples_.size()) / rate_; }

  bool operator==(const Recording&) const = default;

 private:
  std::vector<double> samples_;
  double rate_ = kCanonicalRate;
};

// A t-second window of a Recording.
struct Clip {
  std::vector<double> samples;
  double rate = kCanonicalRate;
  double origin_offset = 0.0;  // seconds into the parent recording
};

struct MixSpec {
  double snr_db = 24.0;  // signal-to-noise ratio; "noise" is the leak
  std::uint64_t seed = 0;
};

struct MixResult {
  Recording output;
  double gain = 0.0;             // factor applied to the noise
  double achieved_snr_db = 0.0;  // measured before clipping
  std::size_t noise_offset = 0;  // first noise sample used
  std::size_t clipped = 0;       // samples clamped to [-1, 1]
};

// 16-bit PCM mono RIFF/WAVE. Throws FormatError for unsupported headers and
// IoError for missing or truncated files.
Recording read_wav(const std::filesystem::path& path);
void write_wav(const Recording& recording, const std::filesystem::path& path);

// Splits into floor(duration / t) consecutive non-overlapping clips; the
// trailing remainder is dropped.
std::vector<Clip> segment(const Recording& recording, double t_seconds);

// Copies `length_seconds` starting at `offset_seconds`.
Clip extract_clip(const Recording& recording, double offset_seconds,
                  double length_seconds);

// Cascade of second-order sections, each {b0, b1, b2, a1, a2} with a0 = 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

class SosFilter {
 public:
  explicit SosFilter(std::vector<Biquad> sections) : sections_(std::move(sections)) {}

  // Digital Butterworth band-pass via bilinear transform with pre-warping.
  // `order` is the order of the low-pass prototype; the result has `order`
  // sections and unit gain at the geometric centre frequency.
  static SosFilter butterworth_bandpass(int order, double lo_hz, double hi_hz,
                                        double rate);

  const std::vector<Biquad>& sections() const { return sections_; }

  // Single causal pass from zero state.
  std::vector<double> filter(std::span<const double> x) const;

  // Zero-phase forward-backward filtering with odd extension at both ends and
  // step-response initial conditions. Output length equals input length.
  std::vector<double> filtfilt(std::span<const double> x, std::size_t padlen) const;

  // Complex response magnitude at `hz`.
  double magnitude(double hz, double rate) const;

 private:
  std::vector<Biquad> sections_;
};

inline constexpr int kBandpassOrder = 5;
inline constexpr double kBandLowHz = 300.0;
inline constexpr double kBandHighHz = 3000.0;

// Zero-phase 5th-order Butterworth band-pass. Requires 0 < lo < hi < rate/2.
std::vector<double> bandpass(std::span<const double> samples, double rate,
                             double lo_hz = kBandLowHz, double hi_hz = kBandHighHz);
Recording bandpass(const Recording& recording, double lo_hz = kBandLowHz,
                   double hi_hz = kBandHighHz);

double rms(std::span<const double> samples);

// Pink background (RMS 0.05) plus Poisson-arriving broadband transients.
Recording synth_ambient(double duration_seconds, std::uint64_t seed,
                        double rate = kCanonicalRate);

// Stationary 1-3 kHz band noise with 0.5 Hz, 10% amplitude modulation; RMS 0.05.
Recording synth_leak(double duration_seconds, std::uint64_t seed,
                     double rate = kCanonicalRate);

// signal + g * noise with g = (rms(signal) / rms(noise)) * 10^(-snr/20).
// The noise window of signal length starts at a seed-chosen offset when the
// noise is longer. Out-of-range output samples are clamped with a warning.
MixResult mix_at_snr_detailed(const Recording& signal, const Recording& noise,
                              const MixSpec& spec);
Recording mix_at_snr(const Recording& signal, const Recording& noise,
                     const MixSpec& spec);

}  // namespace leakdet
