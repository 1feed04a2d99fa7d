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

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leakdet/audio.hpp"
#include "leakdet/model.hpp"

namespace leakdet {

enum class Aggregation { median, mean, min };

std::string_view to_string(Aggregation phi);
Aggregation parse_aggregation(std::string_view name);

// Lower median for even counts, arithmetic mean, or minimum.
double aggregate(std::span<const double> scores, Aggregation phi);

// {floor(i * (h - t) / m) : i = 1..m} in seconds, ascending.
std::vector<double> sample_positions(double h_seconds, double t_seconds, int m);

struct DetectorConfig {
  Aggregation phi = Aggregation::median;
  double t_seconds = 2.0;
  int m = 20;
  unsigned threads = 1;
};

struct DetectionResult {
  double aggregate = 0.0;
  std::vector<double> scores;
  std::vector<double> offsets;  // seconds
};

// Samples m clips over the whole recording, scores each and aggregates.
DetectionResult detect(const Recording& recording, const ClipScorer& scorer,
                       const DetectorConfig& config);

// id,aggregate,m,t,phi,score_1,...,score_m
std::string to_csv_row(std::string_view id, const DetectionResult& result,
                       const DetectorConfig& config);
std::string detection_csv_header(int m);

}  // namespace leakdet
