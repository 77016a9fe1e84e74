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

#include "dialedit/editor.h"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "dialedit/error.h"
#include "dialedit/lexicon.h"
#include "oracles.h"

namespace dialedit {
namespace {

AttributeValue V(std::string_view text) { return ParseValue(text); }

BeliefState Belief(std::initializer_list<std::string_view> values) {
  std::vector<SlotValue> pairs;
  for (auto v : values) pairs.push_back(MakeSlotValue(V(v)));
  return UpdateBelief({}, pairs);
}

std::vector<double> RandomPoint(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> w(n);
  for (double& v : w) v = scale * Gaussian(rng);
  return w;
}

// Joint embedder with fixed outputs.
class FixedJoint : public JointEmbedder {
 public:
  FixedJoint(std::vector<double> image, std::vector<double> text)
      : image_(std::move(image)), text_(std::move(text)) {}
  std::vector<double> EmbedImage(const Image&) const override { return image_; }
  std::vector<double> EmbedImageVjp(const Image& x, std::span<const double>) const override {
    return std::vector<double>(x.pixels.size(), 0.0);
  }
  std::vector<double> EmbedText(std::string_view) const override { return text_; }

 private:
  std::vector<double> image_, text_;
};

class FixedIdentity : public IdentityEmbedder {
 public:
  std::vector<double> Embed(const Image& x) const override {
    return x.pixels[0] > 0 ? std::vector<double>{1, 0} : std::vector<double>{0, 1};
  }
  std::vector<double> EmbedVjp(const Image& x, std::span<const double>) const override {
    return std::vector<double>(x.pixels.size(), 0.0);
  }
};

TEST(HyperparamsTest, Defaults) {
  EditHyperparams h;
  EXPECT_DOUBLE_EQ(h.lambda_l2, 0.008);
  EXPECT_DOUBLE_EQ(h.lambda_id, 0.005);
  EXPECT_EQ(h.steps, 300);
  EXPECT_DOUBLE_EQ(h.learning_rate, 0.1);
  auto parsed = EditHyperparams::FromJson({{"steps", 10}});
  EXPECT_EQ(parsed.steps, 10);
  EXPECT_DOUBLE_EQ(parsed.lambda_id, 0.005);
  EXPECT_THROW(EditHyperparams::FromJson({{"lambda_l2", -1.0}}), Error);
  EXPECT_THROW(EditHyperparams::FromJson({{"steps", 0}}), Error);
}

TEST(PromptTest, Examples) {
  EXPECT_EQ(BuildPrompt(Belief({"smiling", "bangs"})), "a face with a smiling expression, bangs");
  EXPECT_EQ(BuildPrompt(Belief({"no bangs"})), "a face without bangs");
  EXPECT_EQ(BuildPrompt(Belief({"blond hair", "no beard", "lipstick"})),
            "a face with blond hair, without beard, lipstick");
  const BeliefState b = Belief({"sad", "gray hair", "goatee"});
  EXPECT_EQ(BuildPrompt(b), BuildPrompt(b));
  try {
    BuildPrompt(BeliefState{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyBelief);
  }
}

// Every prompt phrase reads back as its own value.
TEST(PromptTest, PhrasesScanToTheirValue) {
  for (AttributeValue v : AllValues()) {
    const std::vector<AttributeValue> one = {v};
    EXPECT_EQ(Lexicon::Keywords(true).Values(BuildPrompt(one)), one) << BuildPrompt(one);
  }
}

TEST(LossTest, ClipLossValues) {
  const Image x{{1.0}, "x"};
  EXPECT_NEAR(ClipLoss(FixedJoint({1, 0}, {1, 0}), x, "p"), 0.0, 1e-12);
  EXPECT_NEAR(ClipLoss(FixedJoint({1, 0}, {-1, 0}), x, "p"), 2.0, 1e-12);
  EXPECT_NEAR(ClipLoss(FixedJoint({1, 0}, {0.6, 0.8}), x, "p"), 0.4, 1e-12);
}

TEST(LossTest, L2LossValues) {
  LatentCode a = LatentCode::Zeros(2, 4);
  LatentCode b = a;
  EXPECT_DOUBLE_EQ(L2Loss(a, b), 0.0);
  b.values[5] = 3.0;
  EXPECT_DOUBLE_EQ(L2Loss(b, a), 3.0);
  Rng rng(1);
  LatentCode c{2, 4, RandomPoint(rng, 8)};
  LatentCode scaled = c;
  for (double& v : scaled.values) v *= -2.5;
  EXPECT_NEAR(L2Loss(scaled, a), 2.5 * L2Loss(c, a), 1e-12);
  try {
    L2Loss(LatentCode::Zeros(1, 4), a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(LossTest, IdLossValues) {
  FixedIdentity id;
  const Image pos{{1.0}, "a"}, neg{{-1.0}, "b"};
  EXPECT_DOUBLE_EQ(IdLoss(id, pos, pos), 0.0);
  EXPECT_DOUBLE_EQ(IdLoss(id, pos, neg), 1.0);
  const Backends toy = MakeToyBackends();
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    Image a = toy.generator->Synthesize({2, 4, RandomPoint(rng, 8)});
    Image b = toy.generator->Synthesize({2, 4, RandomPoint(rng, 8)});
    const double v = IdLoss(*toy.identity, a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 2.0);
  }
}

TEST(ToyBackendTest, InversionRecoversLatent) {
  const Backends clean = MakeToyBackends();
  ToyBackendConfig noisy_config;
  noisy_config.noise_sigma = 0.05;
  const Backends noisy = MakeToyBackends(noisy_config);
  Rng rng(2);
  double sq = 0;
  int count = 0;
  for (int i = 0; i < 200; ++i) {
    const LatentCode w{2, 4, RandomPoint(rng, 8)};
    const Image x = clean.generator->Synthesize(w);
    const LatentCode back = clean.generator->Invert(x, 7);
    for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(back.values[k], w.values[k], 1e-9);
    const LatentCode noisy_back = noisy.generator->Invert(x, 7);
    for (std::size_t k = 0; k < 8; ++k) {
      sq += (noisy_back.values[k] - w.values[k]) * (noisy_back.values[k] - w.values[k]);
      ++count;
    }
    EXPECT_EQ(noisy.generator->Invert(x, 7).values, noisy_back.values);
  }
  EXPECT_NEAR(std::sqrt(sq / count), 0.05, 0.005);
}

TEST(ToyBackendTest, EmbeddingsAreUnitNorm) {
  const Backends toy = MakeToyBackends();
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Image x = toy.generator->Synthesize({2, 4, RandomPoint(rng, 8)});
    EXPECT_NEAR(Dot(toy.joint->EmbedImage(x), toy.joint->EmbedImage(x)), 1.0, 1e-12);
    EXPECT_NEAR(Dot(toy.identity->Embed(x), toy.identity->Embed(x)), 1.0, 1e-12);
  }
  for (const char* text : {"a face with blond hair", "hello there", ""}) {
    const auto t = toy.joint->EmbedText(text);
    EXPECT_NEAR(Dot(t, t), 1.0, 1e-12);
  }
  EXPECT_THROW(toy.joint->EmbedImage(Image{{1.0, 2.0}, "bad"}), Error);
  EXPECT_THROW(MakeBackends({{"kind", "stylegan"}}), Error);
}

TEST(ObjectiveTest, GradientMatchesFiniteDifferences) {
  const Backends toy = MakeToyBackends();
  const EditHyperparams h;
  Rng rng(11);
  for (int point = 0; point < 20; ++point) {
    const LatentCode w_s{2, 4, RandomPoint(rng, 8)};
    const std::string prompt = BuildPrompt(Belief({"smiling", "blond hair", "lipstick"}));
    EditObjective objective(toy, w_s, prompt, h);
    LatentCode w{2, 4, w_s.values};
    for (double& v : w.values) v += 0.3 * Gaussian(rng);
    std::vector<double> grad;
    objective.EvaluateWithGradient(w, &grad);
    const auto fd = oracle::FiniteDifference(toy, w_s, prompt, h, w.values);
    double diff = 0, norm = 0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      diff += (grad[i] - fd[i]) * (grad[i] - fd[i]);
      norm += fd[i] * fd[i];
    }
    EXPECT_LT(std::sqrt(diff / norm), 1e-4) << "point " << point;
  }
}

TEST(ObjectiveTest, ForwardMatchesComposedBackends) {
  const Backends toy = MakeToyBackends();
  const EditHyperparams h;
  Rng rng(12);
  const LatentCode w_s{2, 4, RandomPoint(rng, 8)};
  const std::string prompt = "a face with a sad expression";
  EditObjective objective(toy, w_s, prompt, h);
  for (int i = 0; i < 20; ++i) {
    const LatentCode w{2, 4, RandomPoint(rng, 8)};
    EXPECT_NEAR(objective.Evaluate(w).total, oracle::Loss(toy, w_s, prompt, h, w.values), 1e-12);
  }
}

TEST(EditTest, TrajectoryDecomposesAndImproves) {
  const Backends toy = MakeToyBackends();
  EditHyperparams h;
  for (int seed = 0; seed < 20; ++seed) {
    const Image source = ToyCatalogImage(*toy.generator, "img-" + std::to_string(seed));
    const EditResult r = Edit(toy, source, "a face with an angry expression, bangs", h, seed);
    ASSERT_EQ(r.trajectory.size(), static_cast<std::size_t>(h.steps));
    for (const auto& p : r.trajectory) {
      const double rebuilt = p.loss.clip + h.lambda_l2 * p.loss.l2 + h.lambda_id * p.loss.id;
      EXPECT_LE(std::abs(p.loss.total - rebuilt), 1e-9 * std::max(1.0, std::abs(p.loss.total)));
    }
    EXPECT_LE(r.final_loss.total, r.initial.total);
    EXPECT_EQ(r.trajectory.front().step, 0);
    EXPECT_EQ(r.source_id, source.id);
    EXPECT_TRUE(r.latent.AllFinite());
  }
}

TEST(EditTest, NearOracleMinimum) {
  const Backends toy = MakeToyBackends();
  const EditHyperparams h;
  for (int seed = 0; seed < 3; ++seed) {
    const Image source = ToyCatalogImage(*toy.generator, "oracle-" + std::to_string(seed));
    const std::string prompt = "a face with gray hair, a mustache";
    const EditResult r = Edit(toy, source, prompt, h, seed);
    const double best =
        oracle::MultiRestartMinimum(toy, r.source_latent, prompt, h, 3, 10 * h.steps, seed);
    EXPECT_LE(r.final_loss.total, 1.05 * best) << "oracle " << best;
  }
}

// Initializer already optimal: the prompt embeds exactly like the source.
TEST(EditTest, OptimalStartStaysPut) {
  const Backends toy = MakeToyBackends();
  const Image source = ToyCatalogImage(*toy.generator, "still");
  Backends fixed = toy;
  // Image embedding stays live for gradients; only the text side is pinned.
  class Aligned : public JointEmbedder {
   public:
    Aligned(std::shared_ptr<const JointEmbedder> base, std::vector<double> text)
        : base_(std::move(base)), text_(std::move(text)) {}
    std::vector<double> EmbedImage(const Image& x) const override { return base_->EmbedImage(x); }
    std::vector<double> EmbedImageVjp(const Image& x, std::span<const double> g) const override {
      return base_->EmbedImageVjp(x, g);
    }
    std::vector<double> EmbedText(std::string_view) const override { return text_; }

   private:
    std::shared_ptr<const JointEmbedder> base_;
    std::vector<double> text_;
  };
  fixed.joint = std::make_shared<Aligned>(toy.joint, toy.joint->EmbedImage(source));
  EditHyperparams h;
  h.lambda_l2 = 0;
  h.lambda_id = 0;
  const EditResult r = Edit(fixed, source, "anything", h, 0);
  // Rounding-level gradients still move Adam by about lr * g / eps per step.
  EXPECT_NEAR(L2Loss(r.latent, r.source_latent), 0.0, 1e-6);
  EXPECT_NEAR(r.final_loss.total, 0.0, 1e-12);
}

TEST(EditTest, StrongerAnchorStaysCloser) {
  const Backends toy = MakeToyBackends();
  for (int seed = 0; seed < 5; ++seed) {
    const Image source = ToyCatalogImage(*toy.generator, "anchor-" + std::to_string(seed));
    const std::string prompt = "a face with blond hair, heavy makeup";
    double previous = std::numeric_limits<double>::infinity();
    EditHyperparams none;
    none.lambda_l2 = 0;
    const double unanchored = L2Loss(Edit(toy, source, prompt, none, seed).latent,
                                     toy.generator->Invert(source, seed));
    for (double lambda : {0.008, 0.08, 0.8}) {
      EditHyperparams h;
      h.lambda_l2 = lambda;
      const EditResult r = Edit(toy, source, prompt, h, seed);
      const double dist = L2Loss(r.latent, r.source_latent);
      EXPECT_LT(dist, previous) << "lambda " << lambda;
      if (lambda == 0.008) EXPECT_GT(unanchored, dist);
      previous = dist;
    }
  }
}

TEST(EditTest, Errors) {
  const Backends toy = MakeToyBackends();
  const Image source = ToyCatalogImage(*toy.generator, "err");
  EXPECT_THROW(Edit(toy, source, "", EditHyperparams{}), Error);

  class NanGenerator : public ToyGenerator {
   public:
    using ToyGenerator::ToyGenerator;
    Image Synthesize(const LatentCode& w) const override {
      Image x = ToyGenerator::Synthesize(w);
      if (++calls_ > 40) x.pixels[0] = std::nan("");
      return x;
    }
    mutable std::atomic<int> calls_{0};
  };
  Backends nan = toy;
  nan.generator = std::make_shared<NanGenerator>(ToyBackendConfig{});
  try {
    Edit(nan, source, "a face with bangs", EditHyperparams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteLoss);
    EXPECT_TRUE(e.detail()["trajectory"].is_array());
    EXPECT_FALSE(e.detail()["trajectory"].empty());
  }

  class BrokenGenerator : public ToyGenerator {
   public:
    using ToyGenerator::ToyGenerator;
    Image Synthesize(const LatentCode&) const override { throw std::runtime_error("gpu lost"); }
  };
  Backends broken = toy;
  broken.generator = std::make_shared<BrokenGenerator>(ToyBackendConfig{});
  try {
    Edit(broken, source, "a face with bangs", EditHyperparams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBackendFailure);
  }
}

TEST(EditTurnTest, MultiTurnEditsOriginalWithFullBelief) {
  const Backends toy = MakeToyBackends();
  EditHyperparams h;
  h.steps = 50;
  const Image original = ToyCatalogImage(*toy.generator, "orig");
  EditState state{original, {}, {}, 3};
  const BeliefState b1 = Belief({"smiling"});
  const BeliefState b2 = Belief({"smiling", "bangs"});
  const EditResult r1 = EditTurn(state, b1, EditMode::kMultiTurn, toy, h);
  const EditResult r2 = EditTurn(state, b2, EditMode::kMultiTurn, toy, h);
  EXPECT_EQ(r1.source_id, "orig");
  EXPECT_EQ(r2.source_id, "orig");
  EXPECT_EQ(Lexicon::Keywords(true).Values(r2.prompt), (std::vector{V("smiling"), V("bangs")}));
  EXPECT_EQ(state.outputs.size(), 2u);
  EXPECT_EQ(state.original.pixels, original.pixels);
}

TEST(EditTurnTest, CascadeEditsPreviousOutputWithDelta) {
  const Backends toy = MakeToyBackends();
  EditHyperparams h;
  h.steps = 50;
  const Image original = ToyCatalogImage(*toy.generator, "orig");
  EditState state{original, {}, {}, 3};
  const EditResult r1 = EditTurn(state, Belief({"smiling"}), EditMode::kCascade, toy, h);
  const EditResult r2 =
      EditTurn(state, Belief({"smiling", "bangs"}), EditMode::kCascade, toy, h);
  EXPECT_EQ(r2.source_id, r1.image.id);
  EXPECT_EQ(Lexicon::Keywords(true).Values(r2.prompt), std::vector{V("bangs")});
  // Nothing new: the previous output passes through.
  const EditResult r3 =
      EditTurn(state, Belief({"smiling", "bangs"}), EditMode::kCascade, toy, h);
  EXPECT_TRUE(r3.skipped);
  EXPECT_EQ(r3.image.pixels, r2.image.pixels);
  EXPECT_THROW(EditTurn(state, BeliefState{}, EditMode::kCascade, toy, h), Error);
}

TEST(EditTurnTest, FirstTurnIdenticalAcrossModes) {
  ToyBackendConfig config;
  config.noise_sigma = 0.05;
  const Backends toy = MakeToyBackends(config);
  EditHyperparams h;
  h.steps = 60;
  const Image original = ToyCatalogImage(*toy.generator, "first");
  EditState multi{original, {}, {}, 9};
  EditState cascade{original, {}, {}, 9};
  const BeliefState b = Belief({"sad", "black hair"});
  const EditResult a = EditTurn(multi, b, EditMode::kMultiTurn, toy, h);
  const EditResult c = EditTurn(cascade, b, EditMode::kCascade, toy, h);
  EXPECT_EQ(a.image.pixels, c.image.pixels);
  EXPECT_EQ(a.prompt, c.prompt);
}

TEST(ConcurrencyTest, GateLimitsSimultaneousEdits) {
  class CountingGenerator : public ToyGenerator {
   public:
    using ToyGenerator::ToyGenerator;
    Image Synthesize(const LatentCode& w) const override {
      const int now = ++active;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {
      }
      std::this_thread::sleep_for(std::chrono::microseconds(50));
      --active;
      return ToyGenerator::Synthesize(w);
    }
    mutable std::atomic<int> active{0};
    mutable std::atomic<int> peak{0};
  };
  for (int limit : {1, 0}) {
    ToyBackendConfig config;
    config.max_concurrency = limit;
    Backends toy = MakeToyBackends(config);
    auto counting = std::make_shared<CountingGenerator>(config);
    toy.generator = counting;
    EditHyperparams h;
    h.steps = 20;
    const Image source = ToyCatalogImage(*toy.generator, "gate");
    counting->peak = 0;
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
      threads.emplace_back([&] { Edit(toy, source, "a face with bangs", h); });
    }
    for (auto& t : threads) t.join();
    if (limit == 1) {
      EXPECT_EQ(counting->peak.load(), 1);
    } else {
      EXPECT_GE(counting->peak.load(), 1);
    }
  }
}

}  // namespace
}  // namespace dialedit
