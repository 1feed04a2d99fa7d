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

#include "leakdet/detector.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "leakdet/errors.hpp"
#include "leakdet/parallel.hpp"

namespace leakdet {

std::string_view to_string(Aggregation phi) {
  switch (phi) {
    case Aggregation::median: return "median";
    case Aggregation::mean: return "mean";
    case Aggregation::min: return "min";
  }
  return "?";
}

Aggregation parse_aggregation(std::string_view name) {
  for (Aggregation a : {Aggregation::median, Aggregation::mean, Aggregation::min}) {
    if (to_string(a) == name) return a;
  }
  throw ArgumentError(fmt::format("unknown aggregation '{}' (median, mean or min)", name));
}

double aggregate(std::span<const double> scores, Aggregation phi) {
  if (scores.empty()) throw ArgumentError("cannot aggregate zero scores");
  switch (phi) {
    case Aggregation::median: {
      std::vector<double> v(scores.begin(), scores.end());
      const auto k = (v.size() - 1) / 2;
      std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
      return v[k];
    }
    case Aggregation::mean: {
      double s = 0.0;
      for (double x : scores) s += x;
      return s / static_cast<double>(scores.size());
    }
    case Aggregation::min: return *std::min_element(scores.begin(), scores.end());
  }
  throw ArgumentError("unknown aggregation");
}

std::vector<double> sample_positions(double h_seconds, double t_seconds, int m) {
  if (m < 1) throw ArgumentError(fmt::format("m must be at least 1, got {}", m));
  if (!(t_seconds > 0.0)) throw ArgumentError("sample length t must be positive");
  if (h_seconds < t_seconds) {
    throw ArgumentError(fmt::format("horizon {} s is shorter than the sample length {} s",
                                    h_seconds, t_seconds));
  }
  std::vector<double> out(static_cast<std::size_t>(m));
  const double span = h_seconds - t_seconds;
  for (int i = 1; i <= m; ++i) {
    out[static_cast<std::size_t>(i - 1)] = std::floor(i * span / m);
  }
  return out;
}

DetectionResult detect(const Recording& recording, const ClipScorer& scorer,
                       const DetectorConfig& config) {
  if (recording.rate() != scorer.sample_rate()) {
    throw ArgumentError(fmt::format("recording rate {} Hz does not match model rate {} Hz",
                                    recording.rate(), scorer.sample_rate()));
  }
  DetectionResult r;
  r.offsets = sample_positions(recording.duration(), config.t_seconds, config.m);
  r.scores.assign(r.offsets.size(), 0.0);
  parallel_for(r.offsets.size(), config.threads, [&](std::size_t i) {
    r.scores[i] = scorer.score_clip(extract_clip(recording, r.offsets[i], config.t_seconds));
  });
  r.aggregate = aggregate(r.scores, config.phi);
  return r;
}

std::string to_csv_row(std::string_view id, const DetectionResult& result,
                       const DetectorConfig& config) {
  std::string row = fmt::format("{},{},{},{},{}", id, result.aggregate, result.scores.size(),
                                config.t_seconds, to_string(config.phi));
  for (double s : result.scores) row += fmt::format(",{}", s);
  return row;
}

std::string detection_csv_header(int m) {
  std::string h = "id,aggregate,m,t,phi";
  for (int i = 1; i <= m; ++i) h += fmt::format(",score_{}", i);
  return h;
}

}  // namespace leakdet
