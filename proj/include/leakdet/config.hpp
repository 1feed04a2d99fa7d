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
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "leakdet/detector.hpp"
#include "leakdet/eval.hpp"
#include "leakdet/model.hpp"

namespace leakdet {

// Everything a command can be configured with. Defaults are the published
// hyperparameters except where the desk-scale evaluation overrides them.
struct Config {
  std::uint64_t seed = 0;
  unsigned threads = 1;

  ModelKind model_kind = ModelKind::gmm;
  ModelConfig models;

  // Length of each evaluation segment; detect itself uses the recording
  // length as the horizon.
  double h_minutes = 5.0;
  DetectorConfig detector;

  DatasetOptions data;
  std::filesystem::path data_dir;

  double synth_seconds = 60.0;
  double mix_snr_db = 24.0;

  std::vector<ModelKind> eval_models{std::begin(kAllModelKinds), std::end(kAllModelKinds)};
  std::vector<Scenario> eval_scenarios{Scenario::close, Scenario::distant};
  std::vector<double> eval_h_minutes;  // empty means {h_minutes}
  std::vector<double> eval_t_seconds;  // empty means {detector.t_seconds}
  std::vector<int> eval_m_values;      // empty means {detector.m}
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  std::vector<int> sweep_m_values = default_sweep_m_values();
  Scenario sweep_scenario = Scenario::distant;

  GridSpec grid_spec() const;
};

// Every recognised key in sorted order.
std::vector<std::string> config_keys();

// Sets one dotted key. Throws ArgumentError naming the key if it is unknown
// or the value does not parse.
void set_config_value(Config& config, std::string_view key, std::string_view value);
std::string get_config_value(const Config& config, std::string_view key);

// Flat "key = value" lines; '#' starts a comment; blank lines are ignored.
Config parse_config(std::string_view text, Config base = {});
Config load_config(const std::filesystem::path& path, Config base = {});

// All keys with their effective values, sorted by key.
std::vector<std::pair<std::string, std::string>> config_entries(const Config& config);
// config_entries as "key = value" lines; parse_config reads it back.
std::string format_config(const Config& config);

}  // namespace leakdet
