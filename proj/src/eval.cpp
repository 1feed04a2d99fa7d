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

#include "leakdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "leakdet/errors.hpp"
#include "leakdet/parallel.hpp"

namespace leakdet {

namespace {

constexpr double kTrainingChunkMinutes = 5.0;

std::string cell_name(ModelKind kind, double h, double t, int m, std::uint64_t seed) {
  return fmt::format("model={} h_min={} t_s={} m={} seed={}", to_string(kind), h, t, m, seed);
}

std::string header_lines(const std::vector<std::pair<std::string, std::string>>& header) {
  std::string out;
  for (const auto& [k, v] : header) out += fmt::format("# {}={}\n", k, v);
  return out;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw ArgumentError(fmt::format("auc: {} scores for {} labels", scores.size(), labels.size()));
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  std::uint64_t positives = 0, negatives = 0;
  for (Label l : labels) (l == Label::leak ? positives : negatives) += 1;
  if (positives == 0 || negatives == 0) {
    throw ArgumentError(fmt::format("auc needs both labels (leak={}, no_leak={})", positives,
                                    negatives));
  }
  for (double s : scores) {
    if (std::isnan(s)) throw ArgumentError("auc: NaN score");
  }
  // Count correctly ordered pairs in halves so ties stay exact.
  std::uint64_t halves = 0, negatives_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == Label::leak ? pos : neg) += 1;
      ++j;
    }
    halves += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    i = j;
  }
  return static_cast<double>(halves) /
         (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

std::string_view to_string(Scenario s) { return s == Scenario::close ? "close" : "distant"; }

Scenario parse_scenario(std::string_view name) {
  if (name == "close") return Scenario::close;
  if (name == "distant") return Scenario::distant;
  throw ArgumentError(fmt::format("unknown scenario '{}' (close or distant)", name));
}

std::vector<LabeledSegment> build_set(Scenario scenario, std::uint64_t seed,
                                      const DatasetOptions& options) {
  if (!(options.h_minutes > 0.0)) throw ArgumentError("segment length h must be positive");
  if (options.leak_segments < 0 || options.no_leak_segments < 0) {
    throw ArgumentError("segment counts must be non-negative");
  }
  const double seconds = options.h_minutes * 60.0;
  const double snr =
      scenario == Scenario::close ? options.close_snr_db : options.distant_snr_db;
  const auto n_leak = static_cast<std::size_t>(options.leak_segments);
  const auto total = n_leak + static_cast<std::size_t>(options.no_leak_segments);
  std::vector<LabeledSegment> out;
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    Recording ambient =
        synth_ambient(seconds, derive_seed(seed, "segment-ambient", i), options.rate);
    if (i < n_leak) {
      const Recording leak = synth_leak(seconds, derive_seed(seed, "segment-leak", i), options.rate);
      const MixSpec spec{snr, derive_seed(seed, "segment-mix", i)};
      out.push_back({mix_at_snr(ambient, leak, spec), Label::leak,
                     fmt::format("seed{}/leak{}", seed, i)});
    } else {
      out.push_back({std::move(ambient), Label::no_leak,
                     fmt::format("seed{}/ambient{}", seed, i - n_leak)});
    }
  }
  return out;
}

std::vector<LabeledSegment> build_close_set(std::uint64_t seed, const DatasetOptions& options) {
  return build_set(Scenario::close, seed, options);
}

std::vector<LabeledSegment> build_distant_set(std::uint64_t seed, const DatasetOptions& options) {
  return build_set(Scenario::distant, seed, options);
}

std::vector<Clip> build_training_clips(std::uint64_t seed, double t_seconds,
                                       const DatasetOptions& options) {
  if (!(options.train_minutes > 0.0)) throw ArgumentError("training duration must be positive");
  std::vector<Clip> clips;
  double remaining = options.train_minutes;
  for (std::uint64_t chunk = 0; remaining > 1e-9; ++chunk) {
    const double minutes = std::min(remaining, kTrainingChunkMinutes);
    remaining -= minutes;
    const Recording r =
        synth_ambient(minutes * 60.0, derive_seed(seed, "train-ambient", chunk), options.rate);
    if (r.duration() < t_seconds) continue;
    for (auto& c : segment(r, t_seconds)) clips.push_back(std::move(c));
  }
  if (clips.empty()) throw ArgumentError("training audio is shorter than one clip");
  return clips;
}

std::shared_ptr<const ScoreModel> ModelCache::get(ModelKind kind, std::uint64_t seed,
                                                  double t_seconds) {
  std::lock_guard lock(mu_);
  const auto key = std::make_tuple(static_cast<int>(kind), seed, t_seconds);
  if (auto it = models_.find(key); it != models_.end()) return it->second;
  const TrainingSet& set = training_set(seed, t_seconds);
  auto model = std::make_shared<const ScoreModel>(
      preprocessing_for(kind) == Preprocessing::mel_spec
          ? train_on_mels(set.mels, config_, seed, set.rate)
          : train_on_features(kind, set.features, config_, seed, set.rate));
  models_.emplace(key, model);
  return model;
}

const ModelCache::TrainingSet& ModelCache::training_set(std::uint64_t seed, double t_seconds) {
  if (training_ && training_->seed == seed && training_->t_seconds == t_seconds) {
    return *training_;
  }
  training_.reset();
  const auto clips = build_training_clips(seed, t_seconds, data_);
  TrainingSet set{seed, t_seconds, clips[0].rate, std::vector<Vector>(clips.size()),
                  std::vector<MelSpec>(clips.size())};
  parallel_for(clips.size(), static_cast<unsigned>(std::max(config_.threads, 1)),
               [&](std::size_t i) {
                 set.features[i] = clip_features(clips[i]);
                 set.mels[i] = clip_mel(clips[i]);
               });
  training_ = std::move(set);
  return *training_;
}

ModelProvider ModelCache::provider() {
  return [this](ModelKind kind, std::uint64_t seed, double t) -> std::shared_ptr<const ClipScorer> {
    return get(kind, seed, t);
  };
}

const ReportRow& ExperimentReport::find(ModelKind model, double h_minutes, double t_seconds,
                                        int m) const {
  for (const auto& r : rows) {
    if (r.model == model && r.h_minutes == h_minutes && r.t_seconds == t_seconds && r.m == m) {
      return r;
    }
  }
  throw ArgumentError(fmt::format("no report cell for model={} h_min={} t_s={} m={}",
                                  to_string(model), h_minutes, t_seconds, m));
}

ExperimentReport run_grid(const GridSpec& spec, const ModelProvider& models,
                          const DatasetProvider& datasets) {
  if (spec.models.empty() || spec.h_minutes.empty() || spec.t_seconds.empty() ||
      spec.m_values.empty() || spec.seeds.empty()) {
    throw ArgumentError("experiment grid has an empty axis");
  }
  using Key = std::tuple<int, double, double, int>;
  std::map<Key, std::vector<double>> cells;
  for (const std::uint64_t seed : spec.seeds) {
    for (const double h : spec.h_minutes) {
      const std::vector<LabeledSegment> segments = datasets(seed, h);
      std::vector<Label> labels;
      for (const auto& s : segments) labels.push_back(s.label);
      for (const double t : spec.t_seconds) {
        for (const ModelKind kind : spec.models) {
          const auto scorer = models(kind, seed, t);
          for (const int m : spec.m_values) {
            const DetectorConfig config{spec.phi, t, m, 1};
            std::vector<double> aggregates(segments.size());
            try {
              parallel_for(segments.size(), spec.threads, [&](std::size_t i) {
                aggregates[i] = detect(segments[i].recording, *scorer, config).aggregate;
              });
              cells[{static_cast<int>(kind), h, t, m}].push_back(auc(aggregates, labels));
            } catch (const ArgumentError& e) {
              throw ArgumentError(
                  fmt::format("{}: {}", cell_name(kind, h, t, m, seed), e.what()));
            }
          }
        }
      }
    }
  }
  ExperimentReport report;
  report.seeds = spec.seeds;
  for (const ModelKind kind : spec.models) {
    for (const double h : spec.h_minutes) {
      for (const double t : spec.t_seconds) {
        for (const int m : spec.m_values) {
          ReportRow row{kind, h, t, m, spec.phi, cells.at({static_cast<int>(kind), h, t, m})};
          const double n = static_cast<double>(row.aucs.size());
          row.auc_mean = std::accumulate(row.aucs.begin(), row.aucs.end(), 0.0) / n;
          double var = 0.0;
          for (double a : row.aucs) var += (a - row.auc_mean) * (a - row.auc_mean);
          row.auc_std = std::sqrt(var / n);
          report.rows.push_back(std::move(row));
        }
      }
    }
  }
  return report;
}

std::vector<int> default_sweep_m_values() {
  std::vector<int> m;
  for (int v = 5; v <= 105; v += 10) m.push_back(v);
  return m;
}

ExperimentReport sweep_m(ModelKind model, double h_minutes, double t_seconds, Aggregation phi,
                         std::vector<int> m_values, std::vector<std::uint64_t> seeds,
                         const ModelProvider& models, const DatasetProvider& datasets,
                         unsigned threads) {
  GridSpec spec;
  spec.models = {model};
  spec.h_minutes = {h_minutes};
  spec.t_seconds = {t_seconds};
  spec.m_values = std::move(m_values);
  spec.phi = phi;
  spec.seeds = std::move(seeds);
  spec.threads = threads;
  return run_grid(spec, models, datasets);
}

std::string report_csv(const ExperimentReport& report,
                       const std::vector<std::pair<std::string, std::string>>& header) {
  std::string out = header_lines(header);
  out += "model,h_min,t_s,m,phi,seed_count,auc_mean,auc_std\n";
  for (const auto& r : report.rows) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", to_string(r.model), r.h_minutes, r.t_seconds,
                       r.m, to_string(r.phi), r.aucs.size(), r.auc_mean, r.auc_std);
  }
  return out;
}

std::string sweep_csv(const ExperimentReport& report,
                      const std::vector<std::pair<std::string, std::string>>& header) {
  std::string out = header_lines(header);
  out += "model,h_min,t_s,m,auc_mean,auc_std\n";
  for (const auto& r : report.rows) {
    out += fmt::format("{},{},{},{},{},{}\n", to_string(r.model), r.h_minutes, r.t_seconds, r.m,
                       r.auc_mean, r.auc_std);
  }
  return out;
}

}  // namespace leakdet
