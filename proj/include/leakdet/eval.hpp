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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "leakdet/audio.hpp"
#include "leakdet/detector.hpp"
#include "leakdet/model.hpp"

namespace leakdet {

enum class Label { no_leak = 0, leak = 1 };

struct LabeledSegment {
  Recording recording;
  Label label;
  std::string source;
};

// Mann-Whitney AUC: fraction of (leak, no-leak) pairs ranked correctly, ties
// counting one half. Needs at least one score of each label.
double auc(std::span<const double> scores, std::span<const Label> labels);

struct DatasetOptions {
  double h_minutes = 5.0;
  int leak_segments = 10;
  int no_leak_segments = 10;
  double close_snr_db = 0.0;     // loud nearby leak
  double distant_snr_db = 24.0;  // leak 24 dB below the ambient
  double train_minutes = 30.0;   // leak-free training audio per seed
  double rate = kCanonicalRate;
};

enum class Scenario { close, distant };
std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view name);

// Leak segments are independent ambient recordings mixed with leak audio at
// the scenario SNR; no-leak segments are ambient only. Segment i of a seed
// always uses the same ambient and leak streams, so the two scenarios differ
// only in the SNR.
std::vector<LabeledSegment> build_close_set(std::uint64_t seed, const DatasetOptions& options = {});
std::vector<LabeledSegment> build_distant_set(std::uint64_t seed,
                                              const DatasetOptions& options = {});
std::vector<LabeledSegment> build_set(Scenario scenario, std::uint64_t seed,
                                      const DatasetOptions& options = {});

// Leak-free t-second clips from ambient audio independent of every
// evaluation segment.
std::vector<Clip> build_training_clips(std::uint64_t seed, double t_seconds,
                                       const DatasetOptions& options = {});

using ModelProvider =
    std::function<std::shared_ptr<const ClipScorer>(ModelKind kind, std::uint64_t seed,
                                                    double t_seconds)>;
using DatasetProvider =
    std::function<std::vector<LabeledSegment>(std::uint64_t seed, double h_minutes)>;

// Trains each (kind, seed, t) once on build_training_clips and keeps it.
// The preprocessed training set of the most recent (seed, t) is shared
// between kinds.
class ModelCache {
 public:
  ModelCache(ModelConfig config, DatasetOptions data) : config_(std::move(config)), data_(data) {}

  std::shared_ptr<const ScoreModel> get(ModelKind kind, std::uint64_t seed, double t_seconds);
  ModelProvider provider();

 private:
  struct TrainingSet {
    std::uint64_t seed = 0;
    double t_seconds = 0.0;
    double rate = 0.0;
    std::vector<Vector> features;
    std::vector<MelSpec> mels;
  };
  const TrainingSet& training_set(std::uint64_t seed, double t_seconds);

  ModelConfig config_;
  DatasetOptions data_;
  std::mutex mu_;
  std::optional<TrainingSet> training_;
  std::map<std::tuple<int, std::uint64_t, double>, std::shared_ptr<const ScoreModel>> models_;
};

struct GridSpec {
  std::vector<ModelKind> models;
  std::vector<double> h_minutes{5.0};
  std::vector<double> t_seconds{2.0};
  std::vector<int> m_values{20};
  Aggregation phi = Aggregation::median;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  unsigned threads = 1;
};

struct ReportRow {
  ModelKind model;
  double h_minutes;
  double t_seconds;
  int m;
  Aggregation phi;
  std::vector<double> aucs;  // one per seed, in seed order
  double auc_mean = 0.0;
  double auc_std = 0.0;  // population standard deviation over seeds
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::vector<std::uint64_t> seeds;

  const ReportRow& find(ModelKind model, double h_minutes, double t_seconds, int m) const;
};

// For every seed, horizon, sample length, model and m: detect on every
// segment and compute the AUC of the aggregate scores.
ExperimentReport run_grid(const GridSpec& spec, const ModelProvider& models,
                          const DatasetProvider& datasets);

std::vector<int> default_sweep_m_values();  // 5, 15, ..., 105

ExperimentReport sweep_m(ModelKind model, double h_minutes, double t_seconds, Aggregation phi,
                         std::vector<int> m_values, std::vector<std::uint64_t> seeds,
                         const ModelProvider& models, const DatasetProvider& datasets,
                         unsigned threads = 1);

// `header` lines are written first, each prefixed with "# ".
std::string report_csv(const ExperimentReport& report,
                       const std::vector<std::pair<std::string, std::string>>& header = {});
std::string sweep_csv(const ExperimentReport& report,
                      const std::vector<std::pair<std::string, std::string>>& header = {});

}  // namespace leakdet
