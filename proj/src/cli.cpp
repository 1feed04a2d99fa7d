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

#include "leakdet/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "leakdet/audio.hpp"
#include "leakdet/config.hpp"
#include "leakdet/detector.hpp"
#include "leakdet/errors.hpp"
#include "leakdet/eval.hpp"
#include "leakdet/log.hpp"
#include "leakdet/model.hpp"

namespace leakdet {

namespace {

namespace fs = std::filesystem;

constexpr const char* kManifestName = "manifest.txt";

// Failures caused by what the user asked for rather than by the run itself.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_option = nullptr;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App& cmd, CommonOptions& o, bool out_required) {
  cmd.add_option("--config", o.config_path, "Flat key = value config file");
  o.seed_option = cmd.add_option("--seed", o.seed, "Overrides the 'seed' config key");
  cmd.add_option("--set", o.overrides, "Extra KEY=VALUE config overrides")->take_all();
  auto* out = cmd.add_option("--out", o.out, "Output path");
  if (out_required) out->required();
}

Config effective_config(const CommonOptions& o) {
  Config config;
  if (!o.config_path.empty()) {
    if (!fs::is_regular_file(o.config_path)) {
      throw UsageError(fmt::format("config file '{}' does not exist", o.config_path));
    }
    config = load_config(o.config_path);
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw UsageError(fmt::format("--set expects KEY=VALUE, got '{}'", kv));
    }
    set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed_option->count() > 0) config.seed = o.seed;
  config.models.threads = static_cast<int>(std::max(config.threads, 1u));
  return config;
}

std::string config_header(const Config& config,
                          const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  std::string out;
  for (const auto& [k, v] : config_entries(config)) out += fmt::format("# {}={}\n", k, v);
  for (const auto& [k, v] : extra) out += fmt::format("# {}={}\n", k, v);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

Recording read_input_wav(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw UsageError(fmt::format("input file '{}' does not exist", path.string()));
  }
  return read_wav(path);
}

// WAV files listed as no_leak in the manifest, or every WAV without one.
std::vector<fs::path> training_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw UsageError(fmt::format("data directory '{}' does not exist", dir.string()));
  }
  std::vector<fs::path> files;
  const fs::path manifest = dir / kManifestName;
  if (fs::is_regular_file(manifest)) {
    std::ifstream in(manifest);
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (!header_seen) {
        header_seen = true;
        continue;
      }
      std::istringstream row(line);
      std::string file, label;
      std::getline(row, file, ',');
      std::getline(row, label, ',');
      if (label == "no_leak") files.push_back(dir / file);
    }
  } else {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) {
    throw UsageError(fmt::format("no leak-free WAV files in '{}'", dir.string()));
  }
  return files;
}

std::map<std::string, std::string> as_map(
    const std::vector<std::pair<std::string, std::string>>& entries) {
  return {entries.begin(), entries.end()};
}

int cmd_synth(const CommonOptions& o, std::optional<double> duration, std::ostream& out) {
  Config config = effective_config(o);
  if (duration) config.synth_seconds = *duration;
  if (!(config.synth_seconds > 0.0)) {
    throw ArgumentError(fmt::format("duration must be positive, got {}", config.synth_seconds));
  }
  const fs::path dir = o.out;
  fs::create_directories(dir);
  const std::uint64_t ambient_seed = derive_seed(config.seed, "synth-ambient", 0);
  const std::uint64_t leak_seed = derive_seed(config.seed, "synth-leak", 0);
  write_wav(synth_ambient(config.synth_seconds, ambient_seed, config.data.rate), dir / "ambient.wav");
  write_wav(synth_leak(config.synth_seconds, leak_seed, config.data.rate), dir / "leak.wav");
  std::string manifest = config_header(config);
  manifest += "file,label,seed,seconds\n";
  manifest += fmt::format("ambient.wav,no_leak,{},{}\n", ambient_seed, config.synth_seconds);
  manifest += fmt::format("leak.wav,leak,{},{}\n", leak_seed, config.synth_seconds);
  write_text(dir / kManifestName, manifest);
  out << fmt::format("wrote {} and {}\n", (dir / "ambient.wav").string(),
                     (dir / "leak.wav").string());
  return kExitOk;
}

int cmd_mix(const CommonOptions& o, const std::string& signal_path, const std::string& noise_path,
            std::optional<double> snr, std::ostream& out) {
  Config config = effective_config(o);
  if (snr) config.mix_snr_db = *snr;
  const Recording signal = read_input_wav(signal_path);
  const Recording noise = read_input_wav(noise_path);
  const MixResult mix = mix_at_snr_detailed(signal, noise, {config.mix_snr_db, config.seed});
  write_wav(mix.output, o.out);
  const std::vector<std::pair<std::string, std::string>> extra{
      {"signal", signal_path},
      {"noise", noise_path},
      {"gain", fmt::format("{}", mix.gain)},
      {"achieved_snr_db", fmt::format("{}", mix.achieved_snr_db)},
      {"clipped", fmt::format("{}", mix.clipped)}};
  write_text(o.out + ".manifest", config_header(config, extra));
  out << fmt::format("achieved_snr_db={} gain={} clipped={}\n", mix.achieved_snr_db, mix.gain,
                     mix.clipped);
  return kExitOk;
}

int cmd_train(const CommonOptions& o, const std::string& data_dir, std::ostream& out) {
  Config config = effective_config(o);
  if (!data_dir.empty()) config.data_dir = data_dir;
  if (config.data_dir.empty()) throw UsageError("no data directory (use --data or data.dir)");
  const auto files = training_files(config.data_dir);
  std::vector<Clip> clips;
  std::string names;
  std::optional<double> rate;
  for (const auto& f : files) {
    const Recording r = read_input_wav(f);
    if (!rate) rate = r.rate();
    if (r.rate() != *rate) {
      throw ArgumentError(fmt::format("'{}' has rate {} Hz, unlike the other files",
                                      f.string(), r.rate()));
    }
    if (r.duration() < config.detector.t_seconds) continue;
    for (auto& c : segment(r, config.detector.t_seconds)) clips.push_back(std::move(c));
    names += (names.empty() ? "" : ",") + f.filename().string();
  }
  if (clips.empty()) throw UsageError("training files are shorter than one clip");
  ScoreModel model = train_model(config.model_kind, clips, config.models, config.seed);
  auto metadata = as_map(config_entries(config));
  metadata["train.files"] = names;
  metadata["train.clips"] = fmt::format("{}", clips.size());
  model.set_metadata(std::move(metadata));
  const fs::path path = o.out;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_model(model, path);
  out << fmt::format("trained {} on {} clips; final training objective {}\n",
                     to_string(config.model_kind), clips.size(), model.training_objective());
  return kExitOk;
}

int cmd_detect(const CommonOptions& o, const std::string& model_path, const std::string& wav,
               std::ostream& out) {
  const Config config = effective_config(o);
  if (!fs::is_regular_file(model_path)) {
    throw UsageError(fmt::format("model file '{}' does not exist", model_path));
  }
  const ScoreModel model = load_model(model_path);
  const Recording recording = read_input_wav(wav);
  DetectorConfig detector = config.detector;
  detector.threads = config.threads;
  const DetectionResult result = detect(recording, model, detector);
  const std::string row = to_csv_row(fs::path(wav).stem().string(), result, detector);
  out << row << "\n";
  if (!o.out.empty()) {
    write_text(o.out, config_header(config, {{"model", model_path}, {"input", wav}}) +
                          detection_csv_header(detector.m) + "\n" + row + "\n");
  }
  return kExitOk;
}

fs::path scenario_path(const fs::path& out, Scenario s, std::size_t scenario_count) {
  if (scenario_count == 1) return out;
  fs::path p = out;
  p.replace_filename(fmt::format("{}_{}{}", out.stem().string(), to_string(s),
                                 out.extension().string()));
  return p;
}

DatasetProvider dataset_provider(const Config& config, Scenario scenario) {
  return [&config, scenario](std::uint64_t seed, double h) {
    DatasetOptions d = config.data;
    d.h_minutes = h;
    return build_set(scenario, seed, d);
  };
}

int cmd_eval(const CommonOptions& o, std::ostream& out) {
  const Config config = effective_config(o);
  if (config.eval_scenarios.empty()) throw UsageError("eval.scenarios is empty");
  ModelCache cache(config.models, config.data);
  const GridSpec spec = config.grid_spec();
  for (const Scenario s : config.eval_scenarios) {
    const ExperimentReport report = run_grid(spec, cache.provider(), dataset_provider(config, s));
    const fs::path path = scenario_path(o.out, s, config.eval_scenarios.size());
    auto header = config_entries(config);
    header.emplace_back("scenario", std::string(to_string(s)));
    write_text(path, report_csv(report, header));
    out << fmt::format("{} scenario -> {}\n", to_string(s), path.string());
    for (const auto& r : report.rows) {
      out << fmt::format("  {:8} h={} t={} m={} auc={:.4f} +- {:.4f}\n", to_string(r.model),
                         r.h_minutes, r.t_seconds, r.m, r.auc_mean, r.auc_std);
    }
  }
  return kExitOk;
}

int cmd_sweep(const CommonOptions& o, std::ostream& out) {
  const Config config = effective_config(o);
  ModelCache cache(config.models, config.data);
  const ExperimentReport report =
      sweep_m(config.model_kind, config.h_minutes, config.detector.t_seconds, config.detector.phi,
              config.sweep_m_values, config.seeds, cache.provider(),
              dataset_provider(config, config.sweep_scenario), config.threads);
  write_text(o.out, sweep_csv(report, config_entries(config)));
  out << fmt::format("{} sweep on {} -> {}\n", to_string(config.model_kind),
                     to_string(config.sweep_scenario), o.out);
  for (const auto& r : report.rows) {
    out << fmt::format("  m={:3} auc={:.4f} +- {:.4f}\n", r.m, r.auc_mean, r.auc_std);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Acoustic leak detection from contact-microphone audio", "leakdet"};
  app.require_subcommand(1);

  CommonOptions synth_o, mix_o, train_o, detect_o, eval_o, sweep_o;
  std::optional<double> duration, snr;
  std::string signal_path, noise_path, data_dir, model_path, wav_path;

  auto* synth = app.add_subcommand("synth", "Write synthetic ambient and leak WAVs");
  add_common(*synth, synth_o, true);
  synth->add_option("--duration", duration, "Seconds per file (synth.seconds)");

  auto* mix = app.add_subcommand("mix", "Mix a leak WAV into an ambient WAV at an SNR");
  add_common(*mix, mix_o, true);
  mix->add_option("signal", signal_path, "Ambient WAV")->required();
  mix->add_option("noise", noise_path, "Leak WAV")->required();
  mix->add_option("--snr", snr, "Signal-to-noise ratio in dB (mix.snr_db)");

  auto* train = app.add_subcommand("train", "Train a model on leak-free WAVs");
  add_common(*train, train_o, true);
  train->add_option("--data", data_dir, "Directory of training WAVs (data.dir)");

  auto* det = app.add_subcommand("detect", "Score one recording");
  add_common(*det, detect_o, false);
  det->add_option("--model", model_path, "Model file")->required();
  det->add_option("wav", wav_path, "Recording to score")->required();

  auto* eval = app.add_subcommand("eval", "Run the AUC grid on synthetic data");
  add_common(*eval, eval_o, true);

  auto* sweep = app.add_subcommand("sweep-m", "AUC as a function of the number of samples");
  add_common(*sweep, sweep_o, true);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_o, duration, out);
    if (*mix) return cmd_mix(mix_o, signal_path, noise_path, snr, out);
    if (*train) return cmd_train(train_o, data_dir, out);
    if (*det) return cmd_detect(detect_o, model_path, wav_path, out);
    if (*eval) return cmd_eval(eval_o, out);
    if (*sweep) return cmd_sweep(sweep_o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DegenerateInputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace leakdet
