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

#include "leakdet/model.hpp"

#include <fmt/format.h>

#include "leakdet/errors.hpp"
#include "leakdet/parallel.hpp"

namespace leakdet {

namespace {

Matrix stack_rows(std::span<const Vector> rows) {
  if (rows.empty()) throw ArgumentError("empty training set");
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw ArgumentError("training vectors differ in dimension");
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return m;
}

void check_clips(std::span<const Clip> clips) {
  if (clips.empty()) throw ArgumentError("empty training set");
  for (const auto& c : clips) {
    if (c.rate != clips[0].rate) throw ArgumentError("training clips have mixed sample rates");
  }
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gmm: return "gmm";
    case ModelKind::bgmm: return "bgmm";
    case ModelKind::iforest: return "iforest";
    case ModelKind::realnvp: return "realnvp";
    case ModelKind::dcae: return "dcae";
  }
  return "?";
}

std::string_view to_string(Preprocessing p) {
  return p == Preprocessing::mel_spec ? "mel_spec" : "feature_vector";
}

ModelKind parse_model_kind(std::string_view name) {
  for (ModelKind k : kAllModelKinds) {
    if (to_string(k) == name) return k;
  }
  throw ArgumentError(fmt::format("unknown model kind '{}'", name));
}

Preprocessing preprocessing_for(ModelKind kind) {
  return kind == ModelKind::dcae ? Preprocessing::mel_spec : Preprocessing::feature_vector;
}

Vector clip_features(const Clip& clip) {
  const auto filtered = bandpass(clip.samples, clip.rate);
  return spectral_features(filtered, clip.rate);
}

MelSpec clip_mel(const Clip& clip) {
  const auto filtered = bandpass(clip.samples, clip.rate);
  return mel_spectrogram(filtered, clip.rate);
}

ScoreModel::ScoreModel(Impl impl, std::uint64_t seed, double sample_rate,
                       std::optional<Standardizer> standardizer, double training_objective)
    : impl_(std::move(impl)), seed_(seed), rate_(sample_rate),
      standardizer_(std::move(standardizer)), objective_(training_objective) {
  if (!(sample_rate > 0.0)) throw ArgumentError("model sample rate must be positive");
  const bool features = preprocessing() == Preprocessing::feature_vector;
  if (features != standardizer_.has_value()) {
    throw ArgumentError("feature-vector models carry a standardizer; mel models do not");
  }
}

ModelKind ScoreModel::kind() const { return static_cast<ModelKind>(impl_.index()); }

double ScoreModel::score_standardized(const Vector& z) const {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Dcae>) {
          throw ArgumentError("dcae scores mel-spectrograms, not feature vectors");
        } else {
          return m.score(z);
        }
      },
      impl_);
}

double ScoreModel::score_features(const Vector& features) const {
  if (!standardizer_) throw ArgumentError("dcae scores mel-spectrograms, not feature vectors");
  if (features.size() != standardizer_->dim()) {
    throw ArgumentError(fmt::format("expected {} features, got {}", standardizer_->dim(),
                                    features.size()));
  }
  return score_standardized(standardizer_->apply(features));
}

double ScoreModel::score_mel(const MelSpec& mel) const {
  const auto* dcae = std::get_if<Dcae>(&impl_);
  if (!dcae) throw ArgumentError(fmt::format("{} scores feature vectors", to_string(kind())));
  return dcae->score(mel);
}

double ScoreModel::score_clip(const Clip& clip) const {
  if (clip.rate != rate_) {
    throw ArgumentError(fmt::format("clip rate {} Hz does not match model rate {} Hz", clip.rate,
                                    rate_));
  }
  return preprocessing() == Preprocessing::mel_spec ? score_mel(clip_mel(clip))
                                                    : score_features(clip_features(clip));
}

ScoreModel train_on_features(ModelKind kind, std::span<const Vector> features,
                             const ModelConfig& config, std::uint64_t seed, double sample_rate) {
  if (kind == ModelKind::dcae) throw ArgumentError("dcae trains on mel-spectrograms");
  if (features.size() < 2) throw ArgumentError("need at least two training vectors");
  Standardizer standardizer = Standardizer::fit(features);
  Matrix data = stack_rows(features);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    data.row(i) = standardizer.apply(data.row(i).transpose()).transpose();
  }
  switch (kind) {
    case ModelKind::gmm: {
      Gmm g = Gmm::fit(data, config.gmm, seed);
      const double obj = g.history().empty() ? g.mean_log_likelihood(data) : g.history().back();
      return ScoreModel(std::move(g), seed, sample_rate, standardizer, obj);
    }
    case ModelKind::bgmm: {
      Bgmm b = Bgmm::fit(data, config.bgmm, seed);
      const double obj =
          b.history().empty() ? 0.0 : b.history().back() / static_cast<double>(data.rows());
      return ScoreModel(std::move(b), seed, sample_rate, standardizer, obj);
    }
    case ModelKind::iforest: {
      IsolationForest f = IsolationForest::fit(data, config.iforest, seed);
      double total = 0.0;
      for (Eigen::Index i = 0; i < data.rows(); ++i) total += f.score(data.row(i).transpose());
      return ScoreModel(std::move(f), seed, sample_rate, standardizer,
                        total / static_cast<double>(data.rows()));
    }
    case ModelKind::realnvp: {
      RealNvp r = RealNvp::fit(data, config.realnvp, seed);
      const double obj = r.mean_nll(data);
      return ScoreModel(std::move(r), seed, sample_rate, standardizer, obj);
    }
    case ModelKind::dcae: break;
  }
  throw ArgumentError("unreachable model kind");
}

ScoreModel train_on_mels(std::span<const MelSpec> mels, const ModelConfig& config,
                         std::uint64_t seed, double sample_rate) {
  Dcae d = Dcae::fit(mels, config.dcae, seed);
  const double obj = d.final_loss();
  return ScoreModel(std::move(d), seed, sample_rate, std::nullopt, obj);
}

ScoreModel train_model(ModelKind kind, std::span<const Clip> clips, const ModelConfig& config,
                       std::uint64_t seed) {
  check_clips(clips);
  const double rate = clips[0].rate;
  const auto threads = static_cast<unsigned>(std::max(config.threads, 1));
  if (preprocessing_for(kind) == Preprocessing::mel_spec) {
    std::vector<MelSpec> mels(clips.size());
    parallel_for(clips.size(), threads, [&](std::size_t i) { mels[i] = clip_mel(clips[i]); });
    return train_on_mels(mels, config, seed, rate);
  }
  std::vector<Vector> features(clips.size());
  parallel_for(clips.size(), threads, [&](std::size_t i) { features[i] = clip_features(clips[i]); });
  return train_on_features(kind, features, config, seed, rate);
}

}  // namespace leakdet
