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

#include "leakdet/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include <fmt/format.h>

#include "leakdet/errors.hpp"
#include "leakdet/log.hpp"
#include "leakdet/random.hpp"

namespace leakdet {

namespace {

constexpr double kPcmScale = 32768.0;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

bool is_integral(double x) { return std::abs(x - std::round(x)) < 1e-9; }

std::size_t checked_sample_count(double seconds, double rate, const char* what) {
  const double n = seconds * rate;
  if (!is_integral(n)) {
    throw ArgumentError(fmt::format("{} * rate = {} is not an integer sample count", what, n));
  }
  return static_cast<std::size_t>(std::llround(n));
}

}  // namespace

Recording::Recording(std::vector<double> samples, double rate)
    : samples_(std::move(samples)), rate_(rate) {
  if (!(rate_ > 0.0) || !std::isfinite(rate_)) {
    throw ArgumentError(fmt::format("sample rate must be positive, got {}", rate_));
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const double v = samples_[i];
    if (!std::isfinite(v) || v < -1.0 || v > 1.0) {
      throw ArgumentError(fmt::format("sample {} = {} outside [-1, 1]", i, v));
    }
  }
}

// ---------------------------------------------------------------------------
// WAV

Recording read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();

  if (size < 12) throw IoError(fmt::format("'{}': truncated RIFF header", path.string()));
  if (std::memcmp(data, "RIFF", 4) != 0) {
    throw FormatError(fmt::format("'{}': ChunkID is not RIFF", path.string()));
  }
  if (std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw FormatError(fmt::format("'{}': Format is not WAVE", path.string()));
  }

  bool have_fmt = false;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const unsigned char* chunk = data + pos;
    const std::uint32_t chunk_size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + 16 > size) {
        throw IoError(fmt::format("'{}': truncated fmt chunk", path.string()));
      }
      const std::uint16_t audio_format = read_u16(data + body);
      const std::uint16_t channels = read_u16(data + body + 2);
      rate = read_u32(data + body + 4);
      const std::uint16_t bits = read_u16(data + body + 14);
      if (audio_format != 1) {
        throw FormatError(fmt::format("'{}': unsupported AudioFormat={} (expected 1, PCM)",
                                      path.string(), audio_format));
      }
      if (channels != 1) {
        throw FormatError(fmt::format("'{}': unsupported NumChannels={} (expected 1)",
                                      path.string(), channels));
      }
      if (bits != 16) {
        throw FormatError(fmt::format("'{}': unsupported BitsPerSample={} (expected 16)",
                                      path.string(), bits));
      }
      if (rate == 0) {
        throw FormatError(fmt::format("'{}': SampleRate=0", path.string()));
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) {
        throw FormatError(fmt::format("'{}': data chunk before fmt chunk", path.string()));
      }
      if (body + chunk_size > size) {
        throw IoError(fmt::format("'{}': truncated data chunk ({} of {} bytes)", path.string(),
                                  size - body, chunk_size));
      }
      if (chunk_size % 2 != 0) {
        throw FormatError(fmt::format("'{}': data chunk size {} is not a multiple of 2",
                                      path.string(), chunk_size));
      }
      std::vector<double> samples(chunk_size / 2);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(data + body + 2 * i));
        samples[i] = static_cast<double>(raw) / kPcmScale;
      }
      return Recording(std::move(samples), static_cast<double>(rate));
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  if (!have_fmt) throw IoError(fmt::format("'{}': missing fmt chunk", path.string()));
  throw IoError(fmt::format("'{}': missing data chunk", path.string()));
}

void write_wav(const Recording& recording, const std::filesystem::path& path) {
  if (!is_integral(recording.rate())) {
    throw ArgumentError(fmt::format("WAV needs an integral sample rate, got {}", recording.rate()));
  }
  const auto rate = static_cast<std::uint32_t>(std::llround(recording.rate()));
  const auto data_bytes = static_cast<std::uint32_t>(recording.size() * 2);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, 1);          // PCM
  put_u16(out, 1);          // mono
  put_u32(out, rate);
  put_u32(out, rate * 2);   // byte rate
  put_u16(out, 2);          // block align
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double v : recording.samples()) {
    const double q = std::clamp(std::round(v * kPcmScale), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError(fmt::format("cannot write '{}'", path.string()));
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

// ---------------------------------------------------------------------------
// Segmentation

std::vector<Clip> segment(const Recording& recording, double t_seconds) {
  if (!(t_seconds > 0.0)) {
    throw ArgumentError(fmt::format("clip length must be positive, got {}", t_seconds));
  }
  const std::size_t len = checked_sample_count(t_seconds, recording.rate(), "t");
  if (recording.size() < len) {
    throw ArgumentError(fmt::format("recording of {} s is shorter than t = {} s",
                                    recording.duration(), t_seconds));
  }
  const auto samples = recording.samples();
  const std::size_t count = samples.size() / len;
  std::vector<Clip> clips;
  clips.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto first = samples.begin() + static_cast<std::ptrdiff_t>(k * len);
    clips.push_back(Clip{std::vector<double>(first, first + static_cast<std::ptrdiff_t>(len)),
                         recording.rate(), static_cast<double>(k * len) / recording.rate()});
  }
  return clips;
}

Clip extract_clip(const Recording& recording, double offset_seconds, double length_seconds) {
  if (!(length_seconds > 0.0)) {
    throw ArgumentError(fmt::format("clip length must be positive, got {}", length_seconds));
  }
  if (offset_seconds < 0.0) {
    throw ArgumentError(fmt::format("negative clip offset {}", offset_seconds));
  }
  const std::size_t len = checked_sample_count(length_seconds, recording.rate(), "t");
  const auto start = static_cast<std::size_t>(std::llround(offset_seconds * recording.rate()));
  if (start + len > recording.size()) {
    throw ArgumentError(fmt::format("clip [{}, {}) s exceeds recording of {} s", offset_seconds,
                                    offset_seconds + length_seconds, recording.duration()));
  }
  const auto first = recording.samples().begin() + static_cast<std::ptrdiff_t>(start);
  return Clip{std::vector<double>(first, first + static_cast<std::ptrdiff_t>(len)),
              recording.rate(), offset_seconds};
}

// ---------------------------------------------------------------------------
// Filtering

SosFilter SosFilter::butterworth_bandpass(int order, double lo_hz, double hi_hz, double rate) {
  using cd = std::complex<double>;
  if (order < 1) throw ArgumentError("filter order must be >= 1");
  if (!(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < rate / 2.0)) {
    throw ArgumentError(fmt::format(
        "band-pass needs 0 < lo < hi < rate/2, got lo={} hi={} rate={}", lo_hz, hi_hz, rate));
  }
  const double fs2 = 2.0 * rate;
  const double w_lo = fs2 * std::tan(std::numbers::pi * lo_hz / rate);
  const double w_hi = fs2 * std::tan(std::numbers::pi * hi_hz / rate);
  const double w0 = std::sqrt(w_lo * w_hi);
  const double bw = w_hi - w_lo;

  // Prototype poles on the unit circle, mapped low-pass -> band-pass, then
  // through the bilinear transform.
  std::vector<cd> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    const cd p = std::polar(1.0, theta) * (bw / 2.0);
    const cd root = std::sqrt(p * p - w0 * w0);
    for (const cd s : {p + root, p - root}) poles.push_back((fs2 + s) / (fs2 - s));
  }

  // Pair conjugates; leftover real poles pair with each other.
  std::vector<cd> complex_upper;
  std::vector<double> real_poles;
  for (const cd& z : poles) {
    if (std::abs(z.imag()) < 1e-12) {
      real_poles.push_back(z.real());
    } else if (z.imag() > 0.0) {
      complex_upper.push_back(z);
    }
  }
  std::sort(real_poles.begin(), real_poles.end());
  std::vector<Biquad> sections;
  for (const cd& z : complex_upper) {
    sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  }
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    const double r1 = real_poles[i], r2 = real_poles[i + 1];
    sections.push_back({1.0, 0.0, -1.0, -(r1 + r2), r1 * r2});
  }
  if (static_cast<int>(sections.size()) != order) {
    throw NumericError("band-pass design produced an unexpected pole layout");
  }

  SosFilter filter(std::move(sections));
  const double centre = 2.0 * std::atan(w0 / fs2) * rate / (2.0 * std::numbers::pi);
  const double g = filter.magnitude(centre, rate);
  auto& first = filter.sections_.front();
  first.b0 /= g;
  first.b1 /= g;
  first.b2 /= g;
  return filter;
}

double SosFilter::magnitude(double hz, double rate) const {
  using cd = std::complex<double>;
  const cd z1 = std::polar(1.0, -2.0 * std::numbers::pi * hz / rate);
  const cd z2 = z1 * z1;
  cd h = 1.0;
  for (const auto& s : sections_) {
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  }
  return std::abs(h);
}

namespace {

// Transposed direct form II over the cascade; `state` holds two values per
// section and is updated in place.
void run_cascade(const std::vector<Biquad>& sections, std::vector<double>& x,
                 std::vector<double>& state) {
  for (std::size_t s = 0; s < sections.size(); ++s) {
    const Biquad& q = sections[s];
    double z1 = state[2 * s], z2 = state[2 * s + 1];
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      v = out;
    }
    state[2 * s] = z1;
    state[2 * s + 1] = z2;
  }
}

// Steady-state section states for a unit step at the cascade input.
std::vector<double> step_state(const std::vector<Biquad>& sections) {
  std::vector<double> zi(2 * sections.size());
  double level = 1.0;
  for (std::size_t s = 0; s < sections.size(); ++s) {
    const Biquad& q = sections[s];
    const double out = level * (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double z2 = q.b2 * level - q.a2 * out;
    const double z1 = q.b1 * level - q.a1 * out + z2;
    zi[2 * s] = z1;
    zi[2 * s + 1] = z2;
    level = out;
  }
  return zi;
}

}  // namespace

std::vector<double> SosFilter::filter(std::span<const double> x) const {
  std::vector<double> y(x.begin(), x.end());
  std::vector<double> state(2 * sections_.size(), 0.0);
  run_cascade(sections_, y, state);
  return y;
}

std::vector<double> SosFilter::filtfilt(std::span<const double> x, std::size_t padlen) const {
  const std::size_t n = x.size();
  if (n == 0) return {};
  padlen = std::min(padlen, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const std::vector<double> zi = step_state(sections_);
  auto scaled = [&](double level) {
    std::vector<double> s(zi);
    for (double& v : s) v *= level;
    return s;
  };

  auto state = scaled(ext.front());
  run_cascade(sections_, ext, state);
  std::reverse(ext.begin(), ext.end());
  state = scaled(ext.front());
  run_cascade(sections_, ext, state);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(padlen),
                             ext.begin() + static_cast<std::ptrdiff_t>(padlen + n));
}

std::vector<double> bandpass(std::span<const double> samples, double rate, double lo_hz,
                             double hi_hz) {
  const auto filter = SosFilter::butterworth_bandpass(kBandpassOrder, lo_hz, hi_hz, rate);
  // Long enough for the lowest-frequency section to settle inside the pad.
  const auto padlen = static_cast<std::size_t>(std::ceil(6.0 * rate / lo_hz));
  return filter.filtfilt(samples, padlen);
}

Recording bandpass(const Recording& recording, double lo_hz, double hi_hz) {
  auto y = bandpass(recording.samples(), recording.rate(), lo_hz, hi_hz);
  std::size_t clipped = 0;
  for (double& v : y) {
    if (v > 1.0 || v < -1.0) {
      v = std::clamp(v, -1.0, 1.0);
      ++clipped;
    }
  }
  if (clipped > 0) warn(fmt::format("bandpass: clamped {} samples to [-1, 1]", clipped));
  return Recording(std::move(y), recording.rate());
}

double rms(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  long double acc = 0.0L;
  for (double v : samples) acc += static_cast<long double>(v) * v;
  return static_cast<double>(std::sqrt(acc / static_cast<long double>(samples.size())));
}

// ---------------------------------------------------------------------------
// Synthesis

namespace {

constexpr double kSynthRms = 0.05;

std::size_t synth_length(double duration_seconds, double rate) {
  if (!(duration_seconds > 0.0) || !std::isfinite(duration_seconds)) {
    throw ArgumentError(fmt::format("duration must be positive, got {}", duration_seconds));
  }
  if (!(rate > 0.0)) throw ArgumentError(fmt::format("rate must be positive, got {}", rate));
  return static_cast<std::size_t>(std::llround(duration_seconds * rate));
}

void scale_to_rms(std::vector<double>& x, double target) {
  const double r = rms(x);
  if (r == 0.0) return;
  const double g = target / r;
  for (double& v : x) v *= g;
}

// Paul Kellet's refined pink filter: 1/f within +-0.05 dB over roughly
// rate/4800 .. rate/2.
class PinkFilter {
 public:
  double operator()(double white) {
    b_[0] = 0.99886 * b_[0] + white * 0.0555179;
    b_[1] = 0.99332 * b_[1] + white * 0.0750759;
    b_[2] = 0.96900 * b_[2] + white * 0.1538520;
    b_[3] = 0.86650 * b_[3] + white * 0.3104856;
    b_[4] = 0.55000 * b_[4] + white * 0.5329522;
    b_[5] = -0.7616 * b_[5] - white * 0.0168980;
    const double out = b_[0] + b_[1] + b_[2] + b_[3] + b_[4] + b_[5] + b_[6] + white * 0.5362;
    b_[6] = white * 0.115926;
    return out;
  }

 private:
  std::array<double, 7> b_{};
};

}  // namespace

Recording synth_ambient(double duration_seconds, std::uint64_t seed, double rate) {
  const std::size_t n = synth_length(duration_seconds, rate);
  Rng rng(derive_seed(seed, "ambient/pink"));
  NormalSampler normal;
  PinkFilter pink;
  // Warm up past the slowest pole (time constant ~880 samples).
  for (int i = 0; i < 8192; ++i) pink(normal(rng));
  std::vector<double> x(n);
  for (double& v : x) v = pink(normal(rng));
  scale_to_rms(x, kSynthRms);

  // Transients: Poisson arrivals at 2/min, 0.1-0.3 s, Hann envelope,
  // uniform broadband carrier, peak <= 0.8.
  Rng events(derive_seed(seed, "ambient/transients"));
  constexpr double kRatePerSecond = 2.0 / 60.0;
  double t = -std::log(1.0 - uniform01(events)) / kRatePerSecond;
  while (t < duration_seconds) {
    const double length = uniform(events, 0.1, 0.3);
    const double peak = uniform(events, 0.2, 0.8);
    const auto start = static_cast<std::size_t>(t * rate);
    const auto count = static_cast<std::size_t>(length * rate);
    for (std::size_t k = 0; k < count && start + k < n; ++k) {
      const double env =
          0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                static_cast<double>(count)));
      x[start + k] += peak * env * (2.0 * uniform01(events) - 1.0);
    }
    t += -std::log(1.0 - uniform01(events)) / kRatePerSecond;
  }
  for (double& v : x) v = std::clamp(v, -1.0, 1.0);
  return Recording(std::move(x), rate);
}

Recording synth_leak(double duration_seconds, std::uint64_t seed, double rate) {
  const std::size_t n = synth_length(duration_seconds, rate);
  Rng rng(derive_seed(seed, "leak/noise"));
  NormalSampler normal;
  std::vector<double> white(n);
  for (double& v : white) v = normal(rng);
  auto x = bandpass(white, rate, 1000.0, 3000.0);

  const double phase = 2.0 * std::numbers::pi * uniform01(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double time = static_cast<double>(i) / rate;
    x[i] *= 1.0 + 0.1 * std::sin(2.0 * std::numbers::pi * 0.5 * time + phase);
  }
  scale_to_rms(x, kSynthRms);
  for (double& v : x) v = std::clamp(v, -1.0, 1.0);
  return Recording(std::move(x), rate);
}

// ---------------------------------------------------------------------------
// Mixing

MixResult mix_at_snr_detailed(const Recording& signal, const Recording& noise,
                              const MixSpec& spec) {
  if (!std::isfinite(spec.snr_db)) throw ArgumentError("snr_db must be finite");
  if (signal.rate() != noise.rate()) {
    throw ArgumentError(fmt::format("rate mismatch: signal {} Hz, noise {} Hz", signal.rate(),
                                    noise.rate()));
  }
  const std::size_t n = signal.size();
  if (noise.size() < n) {
    throw ArgumentError(fmt::format("noise ({} samples) shorter than signal ({} samples)",
                                    noise.size(), n));
  }
  std::size_t offset = 0;
  if (noise.size() > n) {
    Rng rng(derive_seed(spec.seed, "mix/offset"));
    offset = static_cast<std::size_t>(uniform_index(rng, noise.size() - n + 1));
  }
  const auto s = signal.samples();
  const auto w = noise.samples().subspan(offset, n);
  const double rs = rms(s);
  const double rn = rms(w);
  if (rs == 0.0 || rn == 0.0) {
    throw DegenerateInputError(
        fmt::format("cannot mix at an SNR with silent input (rms signal={}, noise={})", rs, rn));
  }
  const double g = (rs / rn) * std::pow(10.0, -spec.snr_db / 20.0);

  std::vector<double> out(n);
  std::vector<double> added(n);
  for (std::size_t i = 0; i < n; ++i) {
    added[i] = g * w[i];
    out[i] = s[i] + added[i];
  }
  const double ra = rms(added);
  MixResult result;
  result.gain = g;
  result.noise_offset = offset;
  result.achieved_snr_db = 10.0 * std::log10((rs * rs) / (ra * ra));
  for (double& v : out) {
    if (v > 1.0 || v < -1.0) {
      v = std::clamp(v, -1.0, 1.0);
      ++result.clipped;
    }
  }
  if (result.clipped > 0) {
    warn(fmt::format("mix_at_snr: clamped {} of {} samples to [-1, 1]", result.clipped, n));
  }
  result.output = Recording(std::move(out), signal.rate());
  return result;
}

Recording mix_at_snr(const Recording& signal, const Recording& noise, const MixSpec& spec) {
  return mix_at_snr_detailed(signal, noise, spec).output;
}

}  // namespace leakdet
