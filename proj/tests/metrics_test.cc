// Copyright 2026 The DialEdit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dialedit/metrics.h"

#include <gtest/gtest.h>

#include <cmath>

#include "dialedit/error.h"

namespace dialedit {
namespace {

AttributeValue V(std::string_view text) { return ParseValue(text); }

// Text embeddings chosen per attribute; the image embeds to e_0.
class TableJoint : public JointEmbedder {
 public:
  explicit TableJoint(std::map<std::string, std::vector<double>> table) : table_(std::move(table)) {}
  std::vector<double> EmbedImage(const Image&) const override { return {1, 0}; }
  std::vector<double> EmbedImageVjp(const Image& x, std::span<const double>) const override {
    return std::vector<double>(x.pixels.size(), 0.0);
  }
  std::vector<double> EmbedText(std::string_view text) const override {
    return table_.at(std::string(text));
  }

 private:
  std::map<std::string, std::vector<double>> table_;
};

TEST(RelevanceTest, AverageAndMinimum) {
  TableJoint joint({{"smiling", {0.8, 0.6}}, {"bangs", {0.6, 0.8}}});
  const Image x{{0.0}, "x"};
  const std::vector values = {V("smiling"), V("bangs")};
  const auto report = AvgMinRel(joint, x, values);
  EXPECT_NEAR(report.avg_rel, 0.7, 1e-12);
  EXPECT_NEAR(report.min_rel, 0.6, 1e-12);
  const std::vector one = {V("smiling")};
  const auto single = AvgMinRel(joint, x, one);
  EXPECT_DOUBLE_EQ(single.avg_rel, single.min_rel);
  try {
    AvgMinRel(joint, x, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyAttributeSet);
  }
}

TEST(RelevanceTest, MinNeverExceedsAverage) {
  Rng rng(4);
  const auto all = AllValues();
  for (int trial = 0; trial < 1000; ++trial) {
    std::map<AttributeValue, double> per;
    const std::size_t n = 1 + UniformIndex(rng, 6);
    for (std::size_t i = 0; i < n; ++i) per[all[UniformIndex(rng, all.size())]] = 2 * UniformUnit(rng) - 1;
    const auto r = AggregateRelevance(per);
    EXPECT_LE(r.min_rel, r.avg_rel);
    EXPECT_GE(r.min_rel, -1.0);
    EXPECT_LE(r.avg_rel, 1.0);
  }
}

TEST(BleuTest, Identities) {
  const std::vector<std::string> corpus = {"Done! Anything else?", "Would you like bangs?",
                                           "ok"};
  EXPECT_NEAR(Bleu(corpus, corpus), 1.0, 1e-12);
  const std::vector<std::string> hyp = {"a b c d"}, ref = {"a b c d e"};
  EXPECT_NEAR(Bleu(hyp, ref), std::exp(-0.25), 1e-12);
  EXPECT_NEAR(Bleu(hyp, ref), 0.7788, 1e-3);
  const std::vector<std::string> upper = {"A B C D"};
  EXPECT_NEAR(Bleu(upper, ref), std::exp(-0.25), 1e-12);
}

TEST(BleuTest, DisjointVocabularyNearZero) {
  std::vector<std::string> hyp, ref;
  for (int i = 0; i < 10; ++i) {
    std::string h, r;
    for (int k = 0; k < 10; ++k) {
      h += "h" + std::to_string(i * 10 + k) + " ";
      r += "r" + std::to_string(i * 10 + k) + " ";
    }
    hyp.push_back(h);
    ref.push_back(r);
  }
  EXPECT_LT(Bleu(hyp, ref), 0.05);
  EXPECT_GT(Bleu(hyp, ref), 0.0);
}

TEST(BleuTest, Errors) {
  const std::vector<std::string> one = {"a"}, two = {"a", "b"};
  try {
    Bleu({}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyCorpus);
  }
  try {
    Bleu(one, two);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
}

TEST(DistinctTest, Values) {
  const std::vector<std::string> corpus = {"a b", "a c"};
  EXPECT_EQ(DistinctN(corpus, 1), 0.75);
  EXPECT_EQ(DistinctN(corpus, 2), 1.0);
  const std::vector<std::string> unique = {"one two three four"};
  EXPECT_EQ(DistinctN(unique, 1), 1.0);
  double previous = 2.0;
  for (int copies : {1, 10, 100, 1000}) {
    std::vector<std::string> repeated(static_cast<std::size_t>(copies), "same reply here");
    const double d = DistinctN(repeated, 1);
    EXPECT_LT(d, previous);
    previous = d;
  }
  EXPECT_LT(previous, 0.01);
  EXPECT_THROW(DistinctN({}, 1), Error);
  EXPECT_THROW(DistinctN(corpus, 3), Error);
}

TEST(DistinctTest, DuplicationNeverIncreases) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> corpus;
    for (int i = 0; i < 5; ++i) {
      std::string s;
      for (int k = 0; k < 4; ++k) s += "w" + std::to_string(UniformIndex(rng, 8)) + " ";
      corpus.push_back(s);
    }
    std::vector<std::string> doubled = corpus;
    doubled.insert(doubled.end(), corpus.begin(), corpus.end());
    for (int n : {1, 2}) {
      const double d = DistinctN(corpus, n);
      EXPECT_GT(d, 0.0);
      EXPECT_LE(d, 1.0);
      EXPECT_LE(DistinctN(doubled, n), d);
    }
  }
}

DistributionStats Gaussian2(std::vector<double> mean, std::vector<double> cov) {
  DistributionStats s;
  s.dim = mean.size();
  s.count = 100;
  s.mean = std::move(mean);
  s.covariance = std::move(cov);
  return s;
}

TEST(FidTest, ClosedForms) {
  const auto a = Gaussian2({0, 0}, {1, 0, 0, 1});
  EXPECT_NEAR(Fid(a, a), 0.0, 1e-6);
  const auto shifted = Gaussian2({2, 0}, {1, 0, 0, 1});
  EXPECT_NEAR(Fid(a, shifted), 4.0, 1e-6);
  const auto far = Gaussian2({1, 1}, {1, 0, 0, 1});
  EXPECT_NEAR(Fid(a, far), 2.0, 1e-6);
  // Diagonal covariances commute: the trace term is sum (s_a - s_b)^2.
  const auto d1 = Gaussian2({0, 0}, {4, 0, 0, 9});
  const auto d2 = Gaussian2({0, 0}, {1, 0, 0, 1});
  EXPECT_NEAR(Fid(d1, d2), (2 - 1) * (2 - 1) + (3 - 1) * (3 - 1), 1e-9);
}

TEST(FidTest, SymmetricNonNegativeOnSamples) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> xs, ys;
    for (int i = 0; i < 40; ++i) {
      std::vector<double> x(5), y(5);
      for (int k = 0; k < 5; ++k) {
        x[k] = Gaussian(rng);
        y[k] = 0.5 * Gaussian(rng) + (k == 0 ? 1.0 : 0.0) + 0.3 * x[k];
      }
      xs.push_back(x);
      ys.push_back(y);
    }
    const auto a = DistributionStats::FromSamples(xs);
    const auto b = DistributionStats::FromSamples(ys);
    EXPECT_NEAR(Fid(a, b), Fid(b, a), 1e-8);
    EXPECT_GE(Fid(a, b), 0.0);
    EXPECT_NEAR(Fid(a, a), 0.0, 1e-6);
  }
}

TEST(FidTest, SampleStatistics) {
  const std::vector<std::vector<double>> samples = {{1, 2}, {3, 2}, {2, 5}};
  const auto s = DistributionStats::FromSamples(samples);
  EXPECT_EQ(s.count, 3u);
  EXPECT_DOUBLE_EQ(s.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(s.mean[1], 3.0);
  // Hand-computed unbiased covariance.
  EXPECT_DOUBLE_EQ(s.covariance[0], 1.0);
  EXPECT_DOUBLE_EQ(s.covariance[1], 0.0);
  EXPECT_DOUBLE_EQ(s.covariance[3], 3.0);
  EXPECT_EQ(DistributionStats::FromJson(s.ToJson()).covariance, s.covariance);
  EXPECT_THROW(DistributionStats::FromSamples(std::span(samples).first(1)), Error);
}

TEST(FidTest, Errors) {
  const auto a = Gaussian2({0, 0}, {1, 0, 0, 1});
  const auto b = Gaussian2({0}, {1});
  try {
    Fid(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  const auto indefinite = Gaussian2({0, 0}, {1, 0, 0, -1});
  try {
    Fid(indefinite, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonConvergedSqrt);
  }
}

TEST(LpipsTest, ToyExtractor) {
  ToyFeatureExtractor extractor;
  Image zero{std::vector<double>(16, 0.0), "zero"};
  Image unit = zero;
  unit.pixels[3] = 1.0;
  EXPECT_NEAR(Lpips(extractor, zero, unit), 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(Lpips(extractor, unit, unit), 0.0);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    Image a = zero, b = zero;
    for (auto* x : {&a, &b}) {
      for (double& v : x->pixels) v = Gaussian(rng);
    }
    EXPECT_DOUBLE_EQ(Lpips(extractor, a, b), Lpips(extractor, b, a));
    EXPECT_GE(Lpips(extractor, a, b), 0.0);
  }
}

std::vector<Dialogue> FourTurnDialogues(std::size_t n, std::uint64_t seed) {
  SimulatorConfig config;
  config.turn_counts = {4};
  std::vector<Dialogue> out;
  for (const auto& r : SyntheticRecords(n, seed)) {
    out.push_back(SimulateDialogue(r, UtteranceBank::Default(), config, DialogueSeed(seed, r.image_id)));
  }
  return out;
}

TEST(CompareModesTest, RowsAndRepeats) {
  ToyBackendConfig config;
  config.noise_sigma = 0.05;
  const Backends toy = MakeToyBackends(config);
  CompareConfig cc;
  cc.repeats = 3;
  cc.hyper.steps = 60;
  cc.jobs = 2;
  const auto dialogues = FourTurnDialogues(12, 3);
  const ComparisonTable table = CompareModes(dialogues, toy, cc);
  ASSERT_EQ(table.rows.size(), 4u);
  EXPECT_EQ(table.rows[0].method, "Single-turn");
  EXPECT_EQ(table.rows[2].input, "Dial");
  for (const auto& row : table.rows) {
    EXPECT_GT(row.fid.std, 0.0) << row.method << "/" << row.input;
    EXPECT_LE(row.min_rel.mean, row.avg_rel.mean);
  }
  // The rule tracker is exact on paraphrase-free dialogues.
  EXPECT_DOUBLE_EQ(table.rows[1].min_rel.mean, table.rows[3].min_rel.mean);
  EXPECT_EQ(table.ToJson()["rows"].size(), 4u);
  EXPECT_NE(table.ToText().find("Multi-turn"), std::string::npos);

  CompareConfig serial = cc;
  serial.jobs = 1;
  EXPECT_EQ(CompareModes(dialogues, toy, serial).ToJson(), table.ToJson());
}

TEST(DriftTest, MultiTurnDriftsLessThanCascade) {
  ToyBackendConfig config;
  config.noise_sigma = 0.05;
  const Backends noisy = MakeToyBackends(config);
  const Backends clean = MakeToyBackends();
  const auto report = DriftExperiment(FourTurnDialogues(30, 5), noisy, clean, EditHyperparams{});
  EXPECT_GE(report.drift_win_rate, 0.9);
  EXPECT_GE(report.min_rel_win_rate, 0.8);
  EXPECT_EQ(report.outcomes.size(), 30u);
}

}  // namespace
}  // namespace dialedit
