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

#include "leakdet/fft.hpp"

#include <map>
#include <mutex>

#include <fftw3.h>
#include <fmt/format.h>

#include "leakdet/errors.hpp"

namespace leakdet {
namespace {

std::mutex& planner_mutex() {
  static std::mutex mu;
  return mu;
}

fftw_plan plan_for(std::size_t n) {
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard lock(planner_mutex());
  if (auto it = plans.find(n); it != plans.end()) return it->second;
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out,
                                        FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(in);
  fftw_free(out);
  if (plan == nullptr) throw NumericError(fmt::format("FFTW could not plan size {}", n));
  plans.emplace(n, plan);
  return plan;
}

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n), plan_(nullptr) {
  if (n < 2) throw ArgumentError(fmt::format("FFT size must be >= 2, got {}", n));
  plan_ = plan_for(n);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) const {
  if (in.size() != n_ || out.size() != bins()) {
    throw ArgumentError(fmt::format("FFT of size {} got {} inputs / {} outputs", n_, in.size(),
                                    out.size()));
  }
  // Out-of-place r2c preserves its input.
  fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_), const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

}  // namespace leakdet
