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
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "leakdet/audio.hpp"
#include "leakdet/bgmm.hpp"
#include "leakdet/dcae.hpp"
#include "leakdet/dsp.hpp"
#include "leakdet/gmm.hpp"
#include "leakdet/iforest.hpp"
#include "leakdet/realnvp.hpp"

namespace leakdet {

enum class ModelKind { gmm, bgmm, iforest, realnvp, dcae };
enum class Preprocessing { feature_vector, mel_spec };

inline constexpr ModelKind kAllModelKinds[] = {ModelKind::gmm, ModelKind::bgmm,
                                                ModelKind::iforest, ModelKind::realnvp,
                                                ModelKind::dcae};

std::string_view to_string(ModelKind kind);
std::string_view to_string(Preprocessing p);
ModelKind parse_model_kind(std::string_view name);
Preprocessing preprocessing_for(ModelKind kind);

struct ModelConfig {
  GmmOptions gmm;
  BgmmOptions bgmm;
  IForestOptions iforest;
  RealNvpOptions realnvp;
  DcaeOptions dcae;
  int threads = 1;  // preprocessing only; training itself is sequential
};

// Preprocessing: band-pass to 300-3000 Hz, then features or mel-spectrogram.
Vector clip_features(const Clip& clip);
MelSpec clip_mel(const Clip& clip);

// Anything that maps a clip to an anomaly score (higher = more anomalous).
class ClipScorer {
 public:
  virtual ~ClipScorer() = default;
  virtual double score_clip(const Clip& clip) const = 0;
  virtual double sample_rate() const = 0;
};

class ScoreModel final : public ClipScorer {
 public:
  using Impl = std::variant<Gmm, Bgmm, IsolationForest, RealNvp, Dcae>;

  ScoreModel(Impl impl, std::uint64_t seed, double sample_rate,
             std::optional<Standardizer> standardizer, double training_objective = 0.0);

  ModelKind kind() const;
  Preprocessing preprocessing() const { return preprocessing_for(kind()); }
  std::uint64_t seed() const { return seed_; }
  double sample_rate() const override { return rate_; }
  const std::optional<Standardizer>& standardizer() const { return standardizer_; }
  // Final value of the quantity training optimised (mean log-likelihood,
  // ELBO per sample, mean training score, mean NLL, or MSE by kind).
  double training_objective() const { return objective_; }
  const Impl& impl() const { return impl_; }

  // Free-form provenance stored alongside the parameters.
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  void set_metadata(std::map<std::string, std::string> metadata) {
    metadata_ = std::move(metadata);
  }

  double score_clip(const Clip& clip) const override;
  // Raw (unstandardised) feature vector.
  double score_features(const Vector& features) const;
  double score_standardized(const Vector& z) const;
  double score_mel(const MelSpec& mel) const;

 private:
  Impl impl_;
  std::uint64_t seed_;
  double rate_;
  std::optional<Standardizer> standardizer_;
  double objective_;
  std::map<std::string, std::string> metadata_;
};

// Fits the standardiser on the training features for feature-vector kinds.
ScoreModel train_model(ModelKind kind, std::span<const Clip> clips, const ModelConfig& config,
                       std::uint64_t seed);
ScoreModel train_on_features(ModelKind kind, std::span<const Vector> features,
                             const ModelConfig& config, std::uint64_t seed, double sample_rate);
ScoreModel train_on_mels(std::span<const MelSpec> mels, const ModelConfig& config,
                         std::uint64_t seed, double sample_rate);

inline constexpr int kModelFormatVersion = 1;

// JSON with sorted keys; parameter arrays are base64 little-endian float64.
std::string serialize_model(const ScoreModel& model);
ScoreModel deserialize_model(std::string_view text);
void save_model(const ScoreModel& model, const std::filesystem::path& path);
ScoreModel load_model(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace leakdet
