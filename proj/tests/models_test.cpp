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

#include <cmath>
#include <numbers>
#include <string>

#include <gtest/gtest.h>

#include "leakdet/errors.hpp"
#include "leakdet/model.hpp"
#include "leakdet/random.hpp"
#include "test_util.hpp"

namespace leakdet {
namespace {

const double kHalfLog2PiD25 = 22.973463330116818;

Matrix gaussian_data(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double scale = 1.0,
                     double shift = 0.0) {
  Rng rng(seed);
  NormalSampler normal;
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = shift + scale * normal(rng);
  }
  return m;
}

Matrix two_clusters(Eigen::Index per, Eigen::Index d, std::uint64_t seed) {
  Matrix m(2 * per, d);
  m.topRows(per) = gaussian_data(per, d, seed, 1.0, -10.0);
  m.bottomRows(per) = gaussian_data(per, d, seed + 1, 1.0, 10.0);
  return m;
}

std::vector<Vector> rows_of(const Matrix& m) {
  std::vector<Vector> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(m.row(i).transpose());
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian mixture

TEST(Gmm, SingleComponentRecoversStandardNormal) {
  const Matrix data = gaussian_data(10000, 25, 1);
  GmmOptions o;
  o.components = 1;
  const Gmm g = Gmm::fit(data, o, 0);
  EXPECT_LT(g.means().cwiseAbs().maxCoeff(), 0.05);
  EXPECT_LT((g.variances().array() - 1.0).abs().maxCoeff(), 0.05);
  EXPECT_DOUBLE_EQ(g.weights()(0), 1.0);
}

TEST(Gmm, StandardNormalScoreAtOrigin) {
  const Gmm g(Vector::Ones(1), Matrix::Zero(1, 25), Matrix::Ones(1, 25));
  EXPECT_NEAR(g.score(Vector::Zero(25)), 12.5 * std::log(2.0 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(g.score(Vector::Zero(25)), kHalfLog2PiD25, 1e-10);
}

TEST(Gmm, SinglePointCollapsesToFloor) {
  Matrix data(1, 3);
  data << 0.5, -2.0, 7.0;
  Gmm g(Vector::Ones(1), Matrix::Zero(1, 3), Matrix::Ones(1, 3), 1e-6);
  g.em_iterate(data);
  EXPECT_EQ(g.means().row(0), data.row(0));
  EXPECT_EQ(g.variances(), Matrix::Constant(1, 3, 1e-6));
}

TEST(Gmm, EmLikelihoodNeverDecreases) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Matrix data(600, 6);
    data << gaussian_data(200, 6, seed, 0.5, -2.0), gaussian_data(250, 6, seed + 10, 1.5, 1.0),
        gaussian_data(150, 6, seed + 20, 0.2, 4.0);
    GmmOptions o;
    o.components = 5;
    Gmm g = Gmm::initialise(data, o, seed);
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < 50; ++it) {
      const double ll = g.em_iterate(data);
      EXPECT_GE(ll, prev - 1e-9) << "seed " << seed << " iteration " << it;
      prev = ll;
    }
  }
}

TEST(Gmm, SeparatedClustersOwnResponsibility) {
  const Matrix data = two_clusters(200, 4, 3);
  GmmOptions o;
  o.components = 2;
  const Gmm g = Gmm::fit(data, o, 7);
  const Matrix r = g.responsibilities(data);
  const Eigen::Index left = g.means()(0, 0) < 0 ? 0 : 1;
  EXPECT_GE(r.topRows(200).col(left).minCoeff(), 0.99);
  EXPECT_GE(r.bottomRows(200).col(1 - left).minCoeff(), 0.99);
}

TEST(Gmm, FitInvariants) {
  const Matrix data = gaussian_data(500, 25, 4);
  const Gmm g = Gmm::fit(data, GmmOptions{}, 1);
  EXPECT_EQ(g.components(), 16);
  EXPECT_NEAR(g.weights().sum(), 1.0, 1e-9);
  EXPECT_GE(g.weights().minCoeff(), 0.0);
  EXPECT_GE(g.variances().minCoeff(), 1e-6);
  EXPECT_LE(g.iterations(), 200);
}

TEST(Gmm, DeterministicForSeed) {
  const Matrix data = gaussian_data(300, 5, 5);
  GmmOptions o;
  o.components = 4;
  const Gmm a = Gmm::fit(data, o, 9), b = Gmm::fit(data, o, 9);
  EXPECT_EQ(a.means(), b.means());
  EXPECT_EQ(a.variances(), b.variances());
}

TEST(Gmm, RejectsDimensionMismatchAndTinyData) {
  const Gmm g(Vector::Ones(1), Matrix::Zero(1, 3), Matrix::Ones(1, 3));
  EXPECT_THROW(g.score(Vector::Zero(4)), ArgumentError);
  GmmOptions o;
  o.components = 4;
  EXPECT_THROW(Gmm::fit(gaussian_data(3, 2, 0), o, 0), ArgumentError);
}

// ---------------------------------------------------------------------------
// Variational mixture

TEST(Bgmm, ElboNeverDecreases) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Matrix data(400, 5);
    data << gaussian_data(250, 5, seed, 1.0, -3.0), gaussian_data(150, 5, seed + 7, 0.3, 2.0);
    BgmmOptions o;
    o.components = 6;
    Bgmm b = Bgmm::initialise(data, o, seed);
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < 50; ++it) {
      const double elbo = b.sweep(data);
      EXPECT_GE(elbo, prev - 1e-9) << "seed " << seed << " sweep " << it;
      prev = elbo;
    }
  }
}

TEST(Bgmm, PosteriorInvariants) {
  const Matrix data = gaussian_data(800, 25, 2);
  const Bgmm b = Bgmm::fit(data, BgmmOptions{}, 3);
  EXPECT_EQ(b.components(), 16);
  EXPECT_GT(b.alpha().minCoeff(), 0.0);
  EXPECT_GT(b.a().minCoeff(), 0.0);
  EXPECT_GT(b.b().minCoeff(), 0.0);
  EXPECT_GT(b.beta().minCoeff(), 0.0);
  const Gmm g = b.plug_in();
  EXPECT_NEAR(g.weights().sum(), 1.0, 1e-9);
  EXPECT_GE(g.variances().minCoeff(), 1e-6);
  EXPECT_TRUE(std::isfinite(b.score(Vector::Zero(25))));
}

TEST(Bgmm, ConcentratesOnStandardNormal) {
  const Matrix data = gaussian_data(5000, 4, 6);
  BgmmOptions o;
  o.components = 1;
  const Bgmm b = Bgmm::fit(data, o, 0);
  const Gmm g = b.plug_in();
  EXPECT_LT(g.means().cwiseAbs().maxCoeff(), 0.05);
  EXPECT_LT((g.variances().array() - 1.0).abs().maxCoeff(), 0.06);
}

TEST(Bgmm, OutlierScoresHigher) {
  const Matrix data = two_clusters(300, 3, 8);
  BgmmOptions o;
  o.components = 4;
  const Bgmm b = Bgmm::fit(data, o, 1);
  EXPECT_GT(b.score(Vector::Zero(3)), b.score(Vector::Constant(3, 10.0)) + 10.0);
}

// ---------------------------------------------------------------------------
// Isolation forest

TEST(IForest, AveragePathLength) {
  EXPECT_EQ(average_path_length(0), 0.0);
  EXPECT_EQ(average_path_length(1), 0.0);
  EXPECT_DOUBLE_EQ(average_path_length(2), 1.0);
  EXPECT_DOUBLE_EQ(average_path_length(3), 1.6666666666666667);
  EXPECT_NEAR(average_path_length(256), 10.248689925634562, 1e-12);
}

TEST(IForest, StructureInvariants) {
  const Matrix data = gaussian_data(1000, 25, 1);
  const IsolationForest f = IsolationForest::fit(data, IForestOptions{}, 2);
  ASSERT_EQ(f.trees().size(), 120u);
  EXPECT_EQ(f.subsample(), 256);
  for (const auto& t : f.trees()) {
    EXPECT_LE(t.depth(), 8);
    EXPECT_EQ(t.size[0], 256);
  }
}

TEST(IForest, DistantPointOutscoresTrainingSet) {
  const Matrix data = gaussian_data(500, 25, 3);
  const IsolationForest f = IsolationForest::fit(data, IForestOptions{}, 4);
  // 10 standard deviations from the centre along the diagonal.
  const Vector far = Vector::Constant(25, 10.0 / 5.0);
  const double outlier = f.score(far);
  double highest = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const double s = f.score(data.row(i).transpose());
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
    highest = std::max(highest, s);
  }
  EXPECT_GT(outlier, highest);
}

TEST(IForest, IdenticalPointsGiveConstantScore) {
  const Matrix data = Matrix::Constant(300, 4, 1.5);
  const IsolationForest f = IsolationForest::fit(data, IForestOptions{}, 0);
  EXPECT_NEAR(f.score(Vector::Zero(4)), 0.5, 1e-12);
  EXPECT_EQ(f.score(Vector::Zero(4)), f.score(Vector::Constant(4, 100.0)));
}

TEST(IForest, SmallDatasetUsesAllPoints) {
  const Matrix data = gaussian_data(40, 3, 5);
  const IsolationForest f = IsolationForest::fit(data, IForestOptions{}, 0);
  EXPECT_EQ(f.subsample(), 40);
  for (const auto& t : f.trees()) EXPECT_LE(t.depth(), 6);
}

// ---------------------------------------------------------------------------
// RealNVP

RealNvpOptions small_flow() {
  RealNvpOptions o;
  o.hidden = 16;
  o.epochs = 30;
  o.batch_size = 64;
  o.lr = 1e-2;
  return o;
}

TEST(RealNvp, IdentityAtInitialisation) {
  const RealNvp flow(25, RealNvpOptions{}, 0);
  const Matrix x = gaussian_data(10, 25, 1);
  const auto f = flow.forward(x);
  EXPECT_EQ(f.z, x);
  EXPECT_EQ(f.log_det, Vector::Zero(10));
  EXPECT_NEAR(flow.score(Vector::Zero(25)), kHalfLog2PiD25, 1e-10);
}

TEST(RealNvp, MasksSplitThirteenTwelve) {
  Rng rng(0);
  const AffineCoupling even(25, 0, RealNvpOptions{}, rng, "c0");
  const AffineCoupling odd(25, 1, RealNvpOptions{}, rng, "c1");
  EXPECT_EQ(even.fixed().size(), 13u);
  EXPECT_EQ(even.moved().size(), 12u);
  EXPECT_EQ(odd.fixed().size(), 12u);
  EXPECT_EQ(odd.moved().size(), 13u);
}

TEST(RealNvp, TrainedFlowInvertsAndLogDetsCancel) {
  Matrix data = gaussian_data(256, 25, 2);
  data.col(1) = data.col(0).array().square() + 0.1 * data.col(1).array();
  const RealNvp flow = RealNvp::fit(data, small_flow(), 3);
  const Matrix x = gaussian_data(100, 25, 4);
  const auto f = flow.forward(x);
  EXPECT_GT(f.log_det.cwiseAbs().maxCoeff(), 1e-3);
  const auto back = flow.inverse(f.z);
  EXPECT_LT((back.z - x).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((f.log_det + back.log_det).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(RealNvp, TrainingReducesNll) {
  Matrix data = gaussian_data(512, 6, 5, 0.3);
  data.col(1) = data.col(0).array().square() + 0.05 * data.col(1).array();
  RealNvp init(6, small_flow(), 6);
  const double before = init.mean_nll(data);
  const RealNvp flow = RealNvp::fit(data, small_flow(), 6);
  EXPECT_LT(flow.mean_nll(data), before - 1.0);
}

TEST(RealNvp, TrainingGradientMatchesFiniteDifferences) {
  const Matrix data = gaussian_data(256, 25, 7);
  RealNvpOptions o = small_flow();
  o.epochs = 5;
  RealNvp flow = RealNvp::fit(data, o, 8);
  // Keep samples whose ReLU inputs all sit at least 1e-3 from the kink.
  const Matrix pool = gaussian_data(200, 25, 9);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < pool.rows() && keep.size() < 32; ++i) {
    if (flow.relu_margin(pool.row(i)) >= 1e-3) keep.push_back(i);
  }
  ASSERT_GE(keep.size(), 16u);
  const Matrix batch = pool(keep, Eigen::all);
  const auto blocks = flow.params();
  const auto result = nn::grad_check(
      blocks, [&] { return flow.mean_nll(batch); }, [&] { flow.nll_and_gradient(batch); },
      {.samples = 300});
  EXPECT_EQ(result.checked, 300u);
  EXPECT_LT(result.max_relative_error, 1e-4) << result.worst;
}

TEST(RealNvp, DatasetSmallerThanBatchIsRejected) {
  EXPECT_THROW(RealNvp::fit(gaussian_data(100, 25, 0), RealNvpOptions{}, 0), ArgumentError);
}

TEST(RealNvp, DeterministicForSeed) {
  const Matrix data = gaussian_data(128, 8, 1);
  RealNvpOptions o = small_flow();
  o.epochs = 3;
  const RealNvp a = RealNvp::fit(data, o, 2), b = RealNvp::fit(data, o, 2);
  EXPECT_EQ(a.forward(data).z, b.forward(data).z);
}

// ---------------------------------------------------------------------------
// Convolutional autoencoder

std::vector<MelSpec> random_mels(int count, int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MelSpec> out(static_cast<std::size_t>(count));
  for (auto& m : out) {
    m.values.resize(rows, cols);
    const double level = uniform01(rng);
    for (Eigen::Index i = 0; i < m.values.size(); ++i) {
      m.values.data()[i] = 0.5 * level + 0.5 * uniform01(rng);
    }
  }
  return out;
}

TEST(Dcae, ReconstructionKeepsOddShape) {
  const Dcae ae(64, 59, DcaeOptions{}, 0);
  const auto mels = random_mels(1, 64, 59, 1);
  const MelSpec r = ae.reconstruct(mels[0]);
  EXPECT_EQ(r.values.rows(), 64);
  EXPECT_EQ(r.values.cols(), 59);
  EXPECT_GE(ae.score(mels[0]), 0.0);
}

TEST(Dcae, RejectsWrongShape) {
  const Dcae ae(64, 59, DcaeOptions{}, 0);
  EXPECT_THROW(ae.score(random_mels(1, 64, 60, 0)[0]), ArgumentError);
  EXPECT_THROW(Dcae(6, 59, DcaeOptions{}, 0), ArgumentError);
}

TEST(Dcae, LossGradientMatchesFiniteDifferences) {
  DcaeOptions o;
  o.channels = {2, 3, 4};
  o.bottleneck = 5;
  Dcae ae(16, 13, o, 1);
  const auto mels = random_mels(3, 16, 13, 2);
  const std::vector<std::size_t> idx{0, 1, 2};
  const nn::Tensor batch = Dcae::stack(mels, idx);
  const auto blocks = ae.params();
  const auto result = nn::grad_check(
      blocks,
      [&] {
        double s = 0.0;
        for (const auto& m : mels) s += ae.score(m);
        return s / 3.0;
      },
      [&] { ae.loss_and_gradient(batch); }, {.samples = 200});
  EXPECT_LT(result.max_relative_error, 1e-4) << result.worst;
}

TEST(Dcae, ShortTrainingReducesLoss) {
  DcaeOptions o;
  o.epochs = 8;
  o.batch_size = 16;
  o.lr = 1e-3;
  const auto mels = random_mels(48, 32, 29, 3);
  const Dcae ae = Dcae::fit(mels, o, 4);
  EXPECT_LT(ae.final_loss(), ae.initial_loss());
  EXPECT_EQ(ae.history().size(), 8u);
}

TEST(Dcae, DatasetSmallerThanBatchIsRejected) {
  EXPECT_THROW(Dcae::fit(random_mels(10, 64, 59, 0), DcaeOptions{}, 0), ArgumentError);
}

// ---------------------------------------------------------------------------
// Score models and serialisation

TEST(Base64, KnownVectors) {
  const auto enc = [](std::string s) {
    return base64_encode({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("f"), "Zg==");
  EXPECT_EQ(enc("fo"), "Zm8=");
  EXPECT_EQ(enc("foo"), "Zm9v");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
  const auto dec = base64_decode("Zm9vYg==");
  EXPECT_EQ(std::string(dec.begin(), dec.end()), "foob");
  EXPECT_THROW(base64_decode("Zm9"), FormatError);
  EXPECT_THROW(base64_decode("Zm!v"), FormatError);
}

TEST(Base64, RoundTripsAllByteValues) {
  std::vector<std::uint8_t> bytes(1000);
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<std::uint8_t>(i * 37 + 11);
  for (std::size_t n : {0u, 1u, 2u, 3u, 998u, 999u, 1000u}) {
    const std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(n));
    EXPECT_EQ(base64_decode(base64_encode(part)), part);
  }
}

ModelConfig fast_config() {
  ModelConfig c;
  c.gmm.components = 3;
  c.bgmm.components = 3;
  c.iforest.trees = 10;
  c.realnvp = small_flow();
  c.realnvp.epochs = 2;
  c.dcae.channels = {2, 2, 2};
  c.dcae.bottleneck = 4;
  c.dcae.epochs = 1;
  c.dcae.batch_size = 8;
  return c;
}

ScoreModel small_model(ModelKind kind, std::uint64_t seed = 0) {
  if (kind == ModelKind::dcae) return train_on_mels(random_mels(16, 16, 13, seed), fast_config(), seed, 16000);
  const auto features = rows_of(gaussian_data(128, 25, seed, 2.0, 1.0));
  return train_on_features(kind, features, fast_config(), seed, 16000);
}

TEST(ScoreModel, PreprocessingFollowsKind) {
  for (ModelKind k : kAllModelKinds) {
    const ScoreModel m = small_model(k);
    EXPECT_EQ(m.kind(), k);
    EXPECT_EQ(m.standardizer().has_value(), k != ModelKind::dcae);
    EXPECT_EQ(m.preprocessing(),
              k == ModelKind::dcae ? Preprocessing::mel_spec : Preprocessing::feature_vector);
    EXPECT_EQ(parse_model_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_model_kind("svm"), ArgumentError);
}

TEST(ScoreModel, SaveLoadGmmGivesIdenticalScores) {
  const ScoreModel m = small_model(ModelKind::gmm);
  testing::TempDir dir("models_save");
  save_model(m, dir.path() / "gmm.json");
  const ScoreModel back = load_model(dir.path() / "gmm.json");
  const Matrix inputs = gaussian_data(100, 25, 3, 3.0);
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const Vector x = inputs.row(i).transpose();
    EXPECT_EQ(m.score_features(x), back.score_features(x));
  }
}

TEST(ScoreModel, SaveLoadRealNvpForwardBitIdentical) {
  const ScoreModel m = small_model(ModelKind::realnvp);
  const ScoreModel back = deserialize_model(serialize_model(m));
  const auto& a = std::get<RealNvp>(m.impl());
  const auto& b = std::get<RealNvp>(back.impl());
  const Matrix x = gaussian_data(50, 25, 4);
  const auto fa = a.forward(x), fb = b.forward(x);
  EXPECT_EQ(fa.z, fb.z);
  EXPECT_EQ(fa.log_det, fb.log_det);
}

TEST(ScoreModel, EveryKindRoundTripsByteIdentically) {
  for (ModelKind k : kAllModelKinds) {
    const ScoreModel m = small_model(k, 5);
    const std::string text = serialize_model(m);
    const ScoreModel back = deserialize_model(text);
    EXPECT_EQ(serialize_model(back), text) << to_string(k);
    EXPECT_EQ(back.seed(), 5u);
    EXPECT_EQ(back.training_objective(), m.training_objective());
  }
}

TEST(ScoreModel, MetadataRoundTrips) {
  ScoreModel m = small_model(ModelKind::gmm);
  EXPECT_EQ(serialize_model(m).find("metadata"), std::string::npos);
  m.set_metadata({{"seed", "3"}, {"model.kind", "gmm"}});
  const ScoreModel back = deserialize_model(serialize_model(m));
  EXPECT_EQ(back.metadata(), m.metadata());
}

TEST(ScoreModel, TrainingIsReproducible) {
  for (ModelKind k : kAllModelKinds) {
    EXPECT_EQ(serialize_model(small_model(k, 2)), serialize_model(small_model(k, 2)))
        << to_string(k);
  }
}

TEST(ScoreModel, RejectsUnknownVersionAndCorruption) {
  const std::string text = serialize_model(small_model(ModelKind::gmm));
  std::string v2 = text;
  v2.replace(v2.find("\"format_version\": 1"), 19, "\"format_version\": 2");
  EXPECT_THROW(deserialize_model(v2), FormatError);
  EXPECT_THROW(deserialize_model(text.substr(0, text.size() / 2)), FormatError);
  EXPECT_THROW(deserialize_model("{}"), FormatError);
  std::string wrong_kind = text;
  wrong_kind.replace(wrong_kind.find("\"kind\": \"gmm\""), 13, "\"kind\": \"xyz\"");
  EXPECT_THROW(deserialize_model(wrong_kind), FormatError);
  testing::TempDir dir("models_missing");
  EXPECT_THROW(load_model(dir.path() / "missing.json"), IoError);
}

TEST(ScoreModel, FileCarriesVersionAndKind) {
  const std::string text = serialize_model(small_model(ModelKind::iforest));
  EXPECT_NE(text.find("\"format_version\": 1"), std::string::npos);
  EXPECT_NE(text.find("\"kind\": \"iforest\""), std::string::npos);
  EXPECT_NE(text.find("\"preprocessing\": \"feature_vector\""), std::string::npos);
}

TEST(ScoreModel, ScoresClipsThroughPreprocessing) {
  const Recording ambient = synth_ambient(40.0, 1);
  const auto clips = segment(ambient, 2.0);
  ModelConfig c = fast_config();
  const ScoreModel m = train_model(ModelKind::gmm, clips, c, 0);
  const double s = m.score_clip(clips[3]);
  EXPECT_DOUBLE_EQ(s, m.score_features(clip_features(clips[3])));
  Clip wrong = clips[0];
  wrong.rate = 8000;
  EXPECT_THROW(m.score_clip(wrong), ArgumentError);
}

TEST(ScoreModel, FeatureModelsRejectMelInput) {
  const ScoreModel m = small_model(ModelKind::gmm);
  EXPECT_THROW(m.score_mel(random_mels(1, 16, 13, 0)[0]), ArgumentError);
  EXPECT_THROW(m.score_features(Vector::Zero(3)), ArgumentError);
}

}  // namespace
}  // namespace leakdet
