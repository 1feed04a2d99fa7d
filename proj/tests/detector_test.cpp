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

#include "leakdet/detector.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "leakdet/errors.hpp"
#include "leakdet/random.hpp"
#include "test_util.hpp"

namespace leakdet {
namespace {

class ConstantScorer final : public ClipScorer {
 public:
  explicit ConstantScorer(double c, double rate = kCanonicalRate) : c_(c), rate_(rate) {}
  double score_clip(const Clip&) const override { return c_; }
  double sample_rate() const override { return rate_; }

 private:
  double c_, rate_;
};

// Score depends on content and offset so that ordering mistakes show up.
class EnergyScorer final : public ClipScorer {
 public:
  double score_clip(const Clip& clip) const override {
    return rms(clip.samples) + 1e-3 * clip.origin_offset;
  }
  double sample_rate() const override { return kCanonicalRate; }
};

TEST(SamplePositions, SingleSampleIsEnd) {
  EXPECT_EQ(sample_positions(300.0, 2.0, 1), std::vector<double>{298.0});
}

TEST(SamplePositions, ThirtyMinuteExample) {
  const auto p = sample_positions(1800.0, 2.0, 20);
  ASSERT_EQ(p.size(), 20u);
  EXPECT_EQ(p[0], 89.0);
  EXPECT_EQ(p[1], 179.0);
  EXPECT_EQ(p[2], 269.0);
  EXPECT_EQ(p.back(), 1798.0);
}

TEST(SamplePositions, ZeroSpanRepeatsZero) {
  EXPECT_EQ(sample_positions(10.0, 10.0, 3), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(SamplePositions, SortedWithinRange) {
  for (int m : {1, 2, 7, 20, 105}) {
    const auto p = sample_positions(300.0, 2.0, m);
    ASSERT_EQ(p.size(), static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_GE(p[i], 0.0);
      EXPECT_LE(p[i], 298.0);
      if (i > 0) EXPECT_LE(p[i - 1], p[i]);
    }
  }
}

TEST(SamplePositions, RejectsInvalid) {
  EXPECT_THROW(sample_positions(1.0, 2.0, 3), ArgumentError);
  EXPECT_THROW(sample_positions(10.0, 2.0, 0), ArgumentError);
  EXPECT_THROW(sample_positions(10.0, 0.0, 3), ArgumentError);
}

TEST(Aggregate, Examples) {
  const std::vector<double> s{1.0, 2.0, 100.0};
  EXPECT_EQ(aggregate(s, Aggregation::median), 2.0);
  EXPECT_NEAR(aggregate(s, Aggregation::mean), 103.0 / 3.0, 1e-12);
  EXPECT_EQ(aggregate(std::vector<double>{3, 1, 2}, Aggregation::median), 2.0);
  EXPECT_EQ(aggregate(std::vector<double>{1, 2, 3, 4}, Aggregation::median), 2.0);
  EXPECT_EQ(aggregate(std::vector<double>{5, 0.1, 7}, Aggregation::min), 0.1);
}

TEST(Aggregate, EmptyThrows) {
  EXPECT_THROW(aggregate(std::vector<double>{}, Aggregation::mean), ArgumentError);
}

TEST(Aggregate, ParseNames) {
  for (Aggregation a : {Aggregation::median, Aggregation::mean, Aggregation::min}) {
    EXPECT_EQ(parse_aggregation(to_string(a)), a);
  }
  EXPECT_THROW(parse_aggregation("max"), ArgumentError);
}

TEST(Aggregate, OrderStatisticsCommuteWithMonotoneMaps) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(uniform_index(rng, 30));
    std::vector<double> a(m), b(m);
    for (int i = 0; i < m; ++i) {
      a[i] = uniform(rng, -3.0, 3.0);
      b[i] = uniform(rng, -3.0, 3.0);
    }
    auto f = [](std::vector<double> v) {
      for (double& x : v) x = std::exp(2.0 * x) + x;
      return v;
    };
    for (Aggregation phi : {Aggregation::median, Aggregation::min}) {
      const bool before = aggregate(a, phi) < aggregate(b, phi);
      const bool after = aggregate(f(a), phi) < aggregate(f(b), phi);
      EXPECT_EQ(before, after);
    }
  }
}

TEST(Detect, ConstantScorerGivesConstant) {
  const Recording r = synth_ambient(30.0, 3);
  const ConstantScorer scorer(0.75);
  for (Aggregation phi : {Aggregation::median, Aggregation::mean, Aggregation::min}) {
    const auto res = detect(r, scorer, {phi, 2.0, 9, 1});
    EXPECT_EQ(res.aggregate, 0.75);
    EXPECT_EQ(res.scores.size(), 9u);
  }
}

TEST(Detect, ScoresMatchRecomputation) {
  const Recording r = synth_ambient(40.0, 4);
  const EnergyScorer scorer;
  const DetectorConfig config{Aggregation::median, 2.0, 12, 1};
  const auto res = detect(r, scorer, config);
  EXPECT_EQ(res.offsets, sample_positions(r.duration(), 2.0, 12));
  for (std::size_t k = 0; k < res.scores.size(); ++k) {
    EXPECT_EQ(res.scores[k], scorer.score_clip(extract_clip(r, res.offsets[k], 2.0)));
  }
  EXPECT_EQ(res.aggregate, aggregate(res.scores, Aggregation::median));
}

TEST(Detect, ParallelMatchesSequential) {
  const Recording r = synth_ambient(40.0, 5);
  const EnergyScorer scorer;
  const auto seq = detect(r, scorer, {Aggregation::mean, 2.0, 15, 1});
  const auto par = detect(r, scorer, {Aggregation::mean, 2.0, 15, 4});
  EXPECT_EQ(seq.scores, par.scores);
  EXPECT_EQ(seq.aggregate, par.aggregate);
}

TEST(Detect, SingleSampleAggregateIsThatScore) {
  const Recording r = synth_ambient(10.0, 6);
  const EnergyScorer scorer;
  const auto res = detect(r, scorer, {Aggregation::median, 2.0, 1, 1});
  ASSERT_EQ(res.scores.size(), 1u);
  EXPECT_EQ(res.aggregate, res.scores[0]);
  EXPECT_EQ(res.offsets[0], 8.0);
}

TEST(Detect, RejectsShortRecordingAndRateMismatch) {
  const Recording r = synth_ambient(1.0, 7);
  EXPECT_THROW(detect(r, ConstantScorer(1.0), {Aggregation::median, 2.0, 3, 1}), ArgumentError);
  const Recording ok = synth_ambient(5.0, 7);
  EXPECT_THROW(detect(ok, ConstantScorer(1.0, 8000.0), {Aggregation::median, 2.0, 3, 1}),
               ArgumentError);
}

TEST(Detect, CsvRowLayout) {
  DetectionResult res{2.0, {1.0, 2.0, 100.0}, {1.0, 2.0, 3.0}};
  const DetectorConfig config{Aggregation::median, 2.0, 3, 1};
  EXPECT_EQ(to_csv_row("rec", res, config), "rec,2,3,2,median,1,2,100");
  EXPECT_EQ(detection_csv_header(2), "id,aggregate,m,t,phi,score_1,score_2");
}

}  // namespace
}  // namespace leakdet
