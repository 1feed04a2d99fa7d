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

#include "leakdet/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "leakdet/errors.hpp"

namespace leakdet {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ArgumentError(fmt::format("config key '{}': cannot parse '{}'", key, text));
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw ArgumentError(fmt::format("config key '{}': value must be finite", key));
    }
  }
  return value;
}

template <typename T, typename Parse>
std::vector<T> parse_list(std::string_view text, Parse parse) {
  std::vector<T> out;
  text = trim(text);
  if (text.empty()) return out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse(trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  return fmt::format("{}", fmt::join(values, ","));
}

std::string join_names(const auto& values) {
  std::vector<std::string> names;
  for (const auto& v : values) names.emplace_back(to_string(v));
  return join(names);
}

struct Field {
  std::function<void(Config&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const Config&)> get;
};

template <typename T, typename Member>
Field number(Member member) {
  return {[member](Config& c, std::string_view k, std::string_view v) {
            member(c) = parse_number<T>(k, v);
          },
          [member](const Config& c) { return fmt::format("{}", member(const_cast<Config&>(c))); }};
}

template <typename T, typename Member>
Field number_list(Member member) {
  return {[member](Config& c, std::string_view k, std::string_view v) {
            member(c) = parse_list<T>(v, [k](std::string_view s) { return parse_number<T>(k, s); });
          },
          [member](const Config& c) { return join(member(const_cast<Config&>(c))); }};
}

#define LEAKDET_FIELD(kind, type, expr) kind<type>([](Config& c) -> auto& { return expr; })

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = [] {
    std::map<std::string, Field, std::less<>> t;
    t["seed"] = LEAKDET_FIELD(number, std::uint64_t, c.seed);
    t["threads"] = LEAKDET_FIELD(number, unsigned, c.threads);

    t["model.kind"] = {[](Config& c, std::string_view, std::string_view v) {
                         c.model_kind = parse_model_kind(v);
                       },
                       [](const Config& c) { return std::string(to_string(c.model_kind)); }};

    t["gmm.components"] = LEAKDET_FIELD(number, int, c.models.gmm.components);
    t["gmm.max_iterations"] = LEAKDET_FIELD(number, int, c.models.gmm.max_iterations);
    t["gmm.tolerance"] = LEAKDET_FIELD(number, double, c.models.gmm.tolerance);
    t["gmm.variance_floor"] = LEAKDET_FIELD(number, double, c.models.gmm.variance_floor);

    t["bgmm.components"] = LEAKDET_FIELD(number, int, c.models.bgmm.components);
    t["bgmm.max_iterations"] = LEAKDET_FIELD(number, int, c.models.bgmm.max_iterations);
    t["bgmm.tolerance"] = LEAKDET_FIELD(number, double, c.models.bgmm.tolerance);
    t["bgmm.variance_floor"] = LEAKDET_FIELD(number, double, c.models.bgmm.variance_floor);
    t["bgmm.weight_concentration"] =
        LEAKDET_FIELD(number, double, c.models.bgmm.weight_concentration);
    t["bgmm.mean_precision"] = LEAKDET_FIELD(number, double, c.models.bgmm.mean_precision);
    t["bgmm.gamma_shape"] = LEAKDET_FIELD(number, double, c.models.bgmm.gamma_shape);

    t["iforest.trees"] = LEAKDET_FIELD(number, int, c.models.iforest.trees);
    t["iforest.subsample"] = LEAKDET_FIELD(number, int, c.models.iforest.subsample);
    t["iforest.max_depth"] = LEAKDET_FIELD(number, int, c.models.iforest.max_depth);

    t["realnvp.couplings"] = LEAKDET_FIELD(number, int, c.models.realnvp.couplings);
    t["realnvp.hidden"] = LEAKDET_FIELD(number, int, c.models.realnvp.hidden);
    t["realnvp.hidden_layers"] = LEAKDET_FIELD(number, int, c.models.realnvp.hidden_layers);
    t["realnvp.epochs"] = LEAKDET_FIELD(number, int, c.models.realnvp.epochs);
    t["realnvp.batch_size"] = LEAKDET_FIELD(number, int, c.models.realnvp.batch_size);
    t["realnvp.lr"] = LEAKDET_FIELD(number, double, c.models.realnvp.lr);
    t["realnvp.weight_decay"] = LEAKDET_FIELD(number, double, c.models.realnvp.weight_decay);

    t["dcae.channels"] = LEAKDET_FIELD(number_list, int, c.models.dcae.channels);
    t["dcae.kernel"] = LEAKDET_FIELD(number, int, c.models.dcae.kernel);
    t["dcae.bottleneck"] = LEAKDET_FIELD(number, int, c.models.dcae.bottleneck);
    t["dcae.epochs"] = LEAKDET_FIELD(number, int, c.models.dcae.epochs);
    t["dcae.batch_size"] = LEAKDET_FIELD(number, int, c.models.dcae.batch_size);
    t["dcae.lr"] = LEAKDET_FIELD(number, double, c.models.dcae.lr);
    t["dcae.weight_decay"] = LEAKDET_FIELD(number, double, c.models.dcae.weight_decay);

    t["detector.h_minutes"] = LEAKDET_FIELD(number, double, c.h_minutes);
    t["detector.t_seconds"] = LEAKDET_FIELD(number, double, c.detector.t_seconds);
    t["detector.m"] = LEAKDET_FIELD(number, int, c.detector.m);
    t["detector.phi"] = {[](Config& c, std::string_view, std::string_view v) {
                           c.detector.phi = parse_aggregation(v);
                         },
                         [](const Config& c) { return std::string(to_string(c.detector.phi)); }};

    t["data.dir"] = {[](Config& c, std::string_view, std::string_view v) { c.data_dir = v; },
                     [](const Config& c) { return c.data_dir.string(); }};
    t["data.leak_segments"] = LEAKDET_FIELD(number, int, c.data.leak_segments);
    t["data.no_leak_segments"] = LEAKDET_FIELD(number, int, c.data.no_leak_segments);
    t["data.close_snr_db"] = LEAKDET_FIELD(number, double, c.data.close_snr_db);
    t["data.distant_snr_db"] = LEAKDET_FIELD(number, double, c.data.distant_snr_db);
    t["data.train_minutes"] = LEAKDET_FIELD(number, double, c.data.train_minutes);
    t["data.rate"] = LEAKDET_FIELD(number, double, c.data.rate);

    t["synth.seconds"] = LEAKDET_FIELD(number, double, c.synth_seconds);
    t["mix.snr_db"] = LEAKDET_FIELD(number, double, c.mix_snr_db);

    t["eval.models"] = {[](Config& c, std::string_view, std::string_view v) {
                          c.eval_models = parse_list<ModelKind>(v, parse_model_kind);
                        },
                        [](const Config& c) { return join_names(c.eval_models); }};
    t["eval.scenarios"] = {[](Config& c, std::string_view, std::string_view v) {
                             c.eval_scenarios = parse_list<Scenario>(v, parse_scenario);
                           },
                           [](const Config& c) { return join_names(c.eval_scenarios); }};
    t["eval.h_minutes"] = LEAKDET_FIELD(number_list, double, c.eval_h_minutes);
    t["eval.t_seconds"] = LEAKDET_FIELD(number_list, double, c.eval_t_seconds);
    t["eval.m_values"] = LEAKDET_FIELD(number_list, int, c.eval_m_values);
    t["eval.seeds"] = LEAKDET_FIELD(number_list, std::uint64_t, c.seeds);

    t["sweep.m_values"] = LEAKDET_FIELD(number_list, int, c.sweep_m_values);
    t["sweep.scenario"] = {[](Config& c, std::string_view, std::string_view v) {
                             c.sweep_scenario = parse_scenario(v);
                           },
                           [](const Config& c) { return std::string(to_string(c.sweep_scenario)); }};
    return t;
  }();
  return table;
}

#undef LEAKDET_FIELD

const Field& field(std::string_view key) {
  const auto& table = fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ArgumentError(fmt::format("unknown config key '{}'", key));
  return it->second;
}

}  // namespace

GridSpec Config::grid_spec() const {
  GridSpec spec;
  spec.models = eval_models;
  spec.h_minutes = eval_h_minutes.empty() ? std::vector<double>{h_minutes} : eval_h_minutes;
  spec.t_seconds =
      eval_t_seconds.empty() ? std::vector<double>{detector.t_seconds} : eval_t_seconds;
  spec.m_values = eval_m_values.empty() ? std::vector<int>{detector.m} : eval_m_values;
  spec.phi = detector.phi;
  spec.seeds = seeds;
  spec.threads = threads;
  return spec;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

void set_config_value(Config& config, std::string_view key, std::string_view value) {
  const Field& f = field(key);
  try {
    f.set(config, key, trim(value));
  } catch (const ArgumentError& e) {
    const std::string msg = e.what();
    if (msg.find(fmt::format("'{}'", key)) != std::string::npos) throw;
    throw ArgumentError(fmt::format("config key '{}': {}", key, msg));
  }
}

std::string get_config_value(const Config& config, std::string_view key) {
  return field(key).get(config);
}

Config parse_config(std::string_view text, Config base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ArgumentError(fmt::format("config line {}: expected 'key = value'", line_no));
    }
    set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

Config load_config(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read config file {}", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), std::move(base));
}

std::vector<std::pair<std::string, std::string>> config_entries(const Config& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, f] : fields()) out.emplace_back(k, f.get(config));
  return out;
}

std::string format_config(const Config& config) {
  std::string out;
  for (const auto& [k, v] : config_entries(config)) out += fmt::format("{} = {}\n", k, v);
  return out;
}

}  // namespace leakdet
