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

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "leakdet/errors.hpp"
#include "leakdet/model.hpp"

namespace leakdet {

static_assert(std::endian::native == std::endian::little,
              "model files store little-endian doubles");

using json = nlohmann::json;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

struct Array {
  std::vector<int> shape;
  std::vector<double> data;
};

json encode(const double* data, std::size_t n, std::vector<int> shape) {
  std::vector<std::uint8_t> bytes(n * sizeof(double));
  if (n > 0) std::memcpy(bytes.data(), data, bytes.size());
  return json{{"shape", std::move(shape)}, {"data", base64_encode(bytes)}};
}

json encode(const Vector& v) {
  return encode(v.data(), static_cast<std::size_t>(v.size()), {static_cast<int>(v.size())});
}

json encode(const Matrix& m) {
  const RowMatrix r = m;
  return encode(r.data(), static_cast<std::size_t>(r.size()),
                {static_cast<int>(m.rows()), static_cast<int>(m.cols())});
}

template <typename T>
json encode_ints(const std::vector<T>& v) {
  std::vector<double> d(v.begin(), v.end());
  return encode(d.data(), d.size(), {static_cast<int>(d.size())});
}

Array decode(const json& j) {
  Array a;
  a.shape = j.at("shape").get<std::vector<int>>();
  std::size_t n = 1;
  for (int s : a.shape) {
    if (s < 0) throw FormatError("negative array dimension");
    n *= static_cast<std::size_t>(s);
  }
  const auto bytes = base64_decode(j.at("data").get<std::string>());
  if (bytes.size() != n * sizeof(double)) {
    throw FormatError(fmt::format("array holds {} bytes, shape needs {}", bytes.size(),
                                  n * sizeof(double)));
  }
  a.data.resize(n);
  if (n > 0) std::memcpy(a.data.data(), bytes.data(), bytes.size());
  return a;
}

Vector decode_vector(const json& j) {
  Array a = decode(j);
  if (a.shape.size() != 1) throw FormatError("expected a 1-d array");
  return Eigen::Map<Vector>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
}

Matrix decode_matrix(const json& j) {
  Array a = decode(j);
  if (a.shape.size() != 2) throw FormatError("expected a 2-d array");
  return Eigen::Map<RowMatrix>(a.data.data(), a.shape[0], a.shape[1]);
}

template <typename T>
std::vector<T> decode_ints(const json& j) {
  Array a = decode(j);
  std::vector<T> out;
  out.reserve(a.data.size());
  for (double v : a.data) {
    if (v != std::floor(v)) throw FormatError("expected an integer array");
    out.push_back(static_cast<T>(v));
  }
  return out;
}

json encode_blocks(std::vector<nn::ParamBlock> blocks) {
  json out = json::object();
  for (const auto& b : blocks) {
    out[b.name] = encode(b.value.data(), b.value.size(), {static_cast<int>(b.value.size())});
  }
  return out;
}

void decode_blocks(const json& j, std::vector<nn::ParamBlock> blocks) {
  if (j.size() != blocks.size()) {
    throw FormatError(fmt::format("expected {} parameter blocks, found {}", blocks.size(),
                                  j.size()));
  }
  for (auto& b : blocks) {
    if (!j.contains(b.name)) throw FormatError(fmt::format("missing parameter block '{}'", b.name));
    const Array a = decode(j.at(b.name));
    if (a.data.size() != b.value.size()) {
      throw FormatError(fmt::format("parameter block '{}' has {} values, expected {}", b.name,
                                    a.data.size(), b.value.size()));
    }
    std::copy(a.data.begin(), a.data.end(), b.value.begin());
  }
}

json realnvp_config(const RealNvp& r) {
  const auto& o = r.options();
  return {{"dim", r.dim()},          {"couplings", o.couplings}, {"hidden", o.hidden},
          {"hidden_layers", o.hidden_layers}, {"epochs", o.epochs},
          {"batch_size", o.batch_size}, {"lr", o.lr},  {"weight_decay", o.weight_decay}};
}

json dcae_config(const Dcae& d) {
  const auto& o = d.options();
  return {{"rows", d.rows()},         {"cols", d.cols()},   {"channels", o.channels},
          {"kernel", o.kernel},       {"bottleneck", o.bottleneck}, {"epochs", o.epochs},
          {"batch_size", o.batch_size}, {"lr", o.lr},       {"weight_decay", o.weight_decay}};
}

json encode_params(const ScoreModel::Impl& impl, json& config) {
  json p = json::object();
  if (const auto* g = std::get_if<Gmm>(&impl)) {
    p["weights"] = encode(g->weights());
    p["means"] = encode(g->means());
    p["variances"] = encode(g->variances());
    config["variance_floor"] = g->variance_floor();
  } else if (const auto* b = std::get_if<Bgmm>(&impl)) {
    p["alpha"] = encode(b->alpha());
    p["beta"] = encode(b->beta());
    p["m"] = encode(b->m());
    p["a"] = encode(b->a());
    p["b"] = encode(b->b());
    const auto& pr = b->prior();
    p["prior"] = {{"alpha0", pr.alpha0}, {"beta0", pr.beta0}, {"m0", encode(pr.m0)},
                  {"a0", pr.a0},         {"b0", encode(pr.b0)}};
    config["variance_floor"] = b->variance_floor();
  } else if (const auto* f = std::get_if<IsolationForest>(&impl)) {
    json trees = json::array();
    for (const auto& t : f->trees()) {
      trees.push_back({{"dim", encode_ints(t.dim)},
                       {"split", encode(t.split.data(), t.split.size(),
                                        {static_cast<int>(t.split.size())})},
                       {"left", encode_ints(t.left)},
                       {"right", encode_ints(t.right)},
                       {"size", encode_ints(t.size)}});
    }
    p["trees"] = std::move(trees);
    config["subsample"] = f->subsample();
    config["dim"] = f->dim();
  } else if (const auto* r = std::get_if<RealNvp>(&impl)) {
    config = realnvp_config(*r);
    p = encode_blocks(const_cast<RealNvp*>(r)->params());
  } else if (const auto* d = std::get_if<Dcae>(&impl)) {
    config = dcae_config(*d);
    p = encode_blocks(const_cast<Dcae*>(d)->params());
  }
  return p;
}

ScoreModel::Impl decode_impl(ModelKind kind, const json& p, const json& c, std::uint64_t seed) {
  switch (kind) {
    case ModelKind::gmm:
      return Gmm(decode_vector(p.at("weights")), decode_matrix(p.at("means")),
                 decode_matrix(p.at("variances")), c.at("variance_floor").get<double>());
    case ModelKind::bgmm: {
      const json& pj = p.at("prior");
      Bgmm::Prior prior{pj.at("alpha0").get<double>(), pj.at("beta0").get<double>(),
                        decode_vector(pj.at("m0")), pj.at("a0").get<double>(),
                        decode_vector(pj.at("b0"))};
      return Bgmm(std::move(prior), decode_vector(p.at("alpha")), decode_vector(p.at("beta")),
                  decode_matrix(p.at("m")), decode_vector(p.at("a")), decode_matrix(p.at("b")),
                  c.at("variance_floor").get<double>());
    }
    case ModelKind::iforest: {
      std::vector<IsolationTree> trees;
      for (const auto& t : p.at("trees")) {
        IsolationTree tree;
        tree.dim = decode_ints<int>(t.at("dim"));
        tree.split = decode(t.at("split")).data;
        tree.left = decode_ints<int>(t.at("left"));
        tree.right = decode_ints<int>(t.at("right"));
        tree.size = decode_ints<int>(t.at("size"));
        trees.push_back(std::move(tree));
      }
      return IsolationForest(std::move(trees), c.at("subsample").get<int>(),
                             c.at("dim").get<int>());
    }
    case ModelKind::realnvp: {
      RealNvpOptions o;
      o.couplings = c.at("couplings").get<int>();
      o.hidden = c.at("hidden").get<int>();
      o.hidden_layers = c.at("hidden_layers").get<int>();
      o.epochs = c.at("epochs").get<int>();
      o.batch_size = c.at("batch_size").get<int>();
      o.lr = c.at("lr").get<double>();
      o.weight_decay = c.at("weight_decay").get<double>();
      RealNvp r(c.at("dim").get<int>(), o, seed);
      decode_blocks(p, r.params());
      return r;
    }
    case ModelKind::dcae: {
      DcaeOptions o;
      o.channels = c.at("channels").get<std::vector<int>>();
      o.kernel = c.at("kernel").get<int>();
      o.bottleneck = c.at("bottleneck").get<int>();
      o.epochs = c.at("epochs").get<int>();
      o.batch_size = c.at("batch_size").get<int>();
      o.lr = c.at("lr").get<double>();
      o.weight_decay = c.at("weight_decay").get<double>();
      Dcae d(c.at("rows").get<int>(), c.at("cols").get<int>(), o, seed);
      decode_blocks(p, d.params());
      return d;
    }
  }
  throw FormatError("unknown model kind");
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    std::uint32_t v = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int d;
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
        d = 0;
      } else {
        if (pad > 0) throw FormatError("malformed base64 padding");
        d = decode_char(c);
        if (d < 0) throw FormatError(fmt::format("invalid base64 character '{}'", c));
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

std::string serialize_model(const ScoreModel& model) {
  json config = json::object();
  json params = encode_params(model.impl(), config);
  json doc{{"format_version", kModelFormatVersion},
           {"kind", std::string(to_string(model.kind()))},
           {"preprocessing", std::string(to_string(model.preprocessing()))},
           {"seed", model.seed()},
           {"sample_rate", model.sample_rate()},
           {"training_objective", model.training_objective()},
           {"config", std::move(config)},
           {"params", std::move(params)}};
  if (model.standardizer()) {
    doc["standardizer"] = {{"mean", encode(model.standardizer()->mean())},
                           {"std", encode(model.standardizer()->std())}};
  }
  if (!model.metadata().empty()) doc["metadata"] = model.metadata();
  return doc.dump(1) + "\n";
}

ScoreModel deserialize_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("model file is not valid JSON: {}", e.what()));
  }
  try {
    if (!doc.is_object() || !doc.contains("format_version")) {
      throw FormatError("model file has no format_version");
    }
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw FormatError(fmt::format("unsupported model format version {} (expected {})", version,
                                    kModelFormatVersion));
    }
    const ModelKind kind = parse_model_kind(doc.at("kind").get<std::string>());
    const std::string prep = doc.at("preprocessing").get<std::string>();
    if (prep != to_string(preprocessing_for(kind))) {
      throw FormatError(fmt::format("preprocessing '{}' does not match kind '{}'", prep,
                                    to_string(kind)));
    }
    const auto seed = doc.at("seed").get<std::uint64_t>();
    std::optional<Standardizer> standardizer;
    if (doc.contains("standardizer")) {
      const json& s = doc.at("standardizer");
      standardizer = Standardizer(decode_vector(s.at("mean")), decode_vector(s.at("std")));
    }
    const json& objective = doc.at("training_objective");
    ScoreModel model(decode_impl(kind, doc.at("params"), doc.at("config"), seed), seed,
                     doc.at("sample_rate").get<double>(), std::move(standardizer),
                     objective.is_number() ? objective.get<double>() : 0.0);
    if (doc.contains("metadata")) {
      model.set_metadata(doc.at("metadata").get<std::map<std::string, std::string>>());
    }
    return model;
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("corrupted model file: {}", e.what()));
  } catch (const ArgumentError& e) {
    throw FormatError(fmt::format("corrupted model file: {}", e.what()));
  }
}

void save_model(const ScoreModel& model, const std::filesystem::path& path) {
  const std::string text = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

ScoreModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open model file '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace leakdet
