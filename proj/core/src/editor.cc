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

#include <cmath>
#include <exception>

#include "dialedit/error.h"

namespace dialedit {
namespace {

nlohmann::json TermsToJson(const LossTerms& t) {
  return {{"total", t.total}, {"clip", t.clip}, {"l2", t.l2}, {"id", t.id}};
}

nlohmann::json TrajectoryToJson(std::span<const TrajectoryPoint> trajectory) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : trajectory) {
    nlohmann::json row = TermsToJson(p.loss);
    row["step"] = p.step;
    out.push_back(std::move(row));
  }
  return out;
}

// Runs `fn`, turning non-library exceptions from backends into
// Error(kBackendFailure).
template <typename Fn>
auto Guarded(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kBackendFailure, std::string("backend failure: ") + e.what());
  }
}

class GateLease {
 public:
  explicit GateLease(ConcurrencyGate* gate) : gate_(gate) {
    if (gate_) gate_->Acquire();
  }
  ~GateLease() {
    if (gate_) gate_->Release();
  }
  GateLease(const GateLease&) = delete;
  GateLease& operator=(const GateLease&) = delete;

 private:
  ConcurrencyGate* gate_;
};

bool Finite(const LossTerms& t) {
  return std::isfinite(t.total) && std::isfinite(t.clip) && std::isfinite(t.l2) &&
         std::isfinite(t.id);
}

}  // namespace

void EditHyperparams::Validate() const {
  if (lambda_l2 < 0 || lambda_id < 0) {
    throw Error(ErrorCode::kInvalidArgument, "loss weights must be >= 0",
                {{"lambda_l2", lambda_l2}, {"lambda_id", lambda_id}});
  }
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "steps must be >= 1");
  if (!(learning_rate > 0)) throw Error(ErrorCode::kInvalidArgument, "learning_rate must be > 0");
}

nlohmann::json EditHyperparams::ToJson() const {
  return {{"lambda_l2", lambda_l2}, {"lambda_id", lambda_id}, {"steps", steps},
          {"learning_rate", learning_rate}, {"beta1", beta1}, {"beta2", beta2},
          {"epsilon", epsilon}};
}

EditHyperparams EditHyperparams::FromJson(const nlohmann::json& doc) {
  EditHyperparams h;
  h.lambda_l2 = doc.value("lambda_l2", h.lambda_l2);
  h.lambda_id = doc.value("lambda_id", h.lambda_id);
  h.steps = doc.value("steps", h.steps);
  h.learning_rate = doc.value("learning_rate", h.learning_rate);
  h.beta1 = doc.value("beta1", h.beta1);
  h.beta2 = doc.value("beta2", h.beta2);
  h.epsilon = doc.value("epsilon", h.epsilon);
  h.Validate();
  return h;
}

nlohmann::json EditResult::ToJson() const {
  return {{"prompt", prompt},
          {"source_id", source_id},
          {"skipped", skipped},
          {"image", image.ToJson()},
          {"latent", latent.ToJson()},
          {"initial", TermsToJson(initial)},
          {"final", TermsToJson(final_loss)},
          {"trajectory", TrajectoryToJson(trajectory)}};
}

std::string PromptPhrase(AttributeValue value) {
  const std::string text(value.text());
  if (text == "smiling") return "a smiling expression";
  if (text == "angry") return "an angry expression";
  if (text == "sad") return "a sad expression";
  if (text == "disgust") return "a disgusted expression";
  if (text == "surprise") return "a surprised expression";
  if (text == "fear") return "a fearful expression";
  if (text == "receding hairline") return "a receding hairline";
  if (text == "mustache") return "a mustache";
  if (text == "goatee") return "a goatee";
  if (text.rfind("no ", 0) == 0) return "without " + text.substr(3);
  return text;
}

std::string BuildPrompt(std::span<const AttributeValue> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyBelief, "cannot build a prompt from an empty belief");
  std::string prompt = "a face";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::string phrase = PromptPhrase(values[i]);
    if (i == 0) {
      prompt += phrase.rfind("without ", 0) == 0 ? " " : " with ";
    } else {
      prompt += ", ";
    }
    prompt += phrase;
  }
  return prompt;
}

std::string BuildPrompt(const BeliefState& belief) {
  const auto values = belief.Flatten();
  return BuildPrompt(std::span<const AttributeValue>(values));
}

double ClipLoss(const JointEmbedder& embedder, const Image& image, std::string_view prompt) {
  return 1.0 - Dot(embedder.EmbedImage(image), embedder.EmbedText(prompt));
}

double L2Loss(const LatentCode& w, const LatentCode& w_s) {
  if (!w.SameShape(w_s) || w.values.size() != w_s.values.size()) {
    throw Error(ErrorCode::kShapeMismatch, "latent shapes differ",
                {{"a", {w.layers, w.dim}}, {"b", {w_s.layers, w_s.dim}}});
  }
  double s = 0;
  for (std::size_t i = 0; i < w.values.size(); ++i) {
    const double d = w.values[i] - w_s.values[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double IdLoss(const IdentityEmbedder& embedder, const Image& a, const Image& b) {
  return 1.0 - Dot(embedder.Embed(a), embedder.Embed(b));
}

EditObjective::EditObjective(const Backends& backends, LatentCode w_s,
                             std::string_view prompt, const EditHyperparams& hyper)
    : backends_(backends), w_s_(std::move(w_s)), hyper_(hyper) {
  Guarded([&] {
    text_embedding_ = backends_.joint->EmbedText(prompt);
    source_identity_ = backends_.identity->Embed(backends_.generator->Synthesize(w_s_));
    return 0;
  });
}

LossTerms EditObjective::Evaluate(const LatentCode& w) const {
  return EvaluateWithGradient(w, nullptr);
}

LossTerms EditObjective::EvaluateWithGradient(const LatentCode& w,
                                              std::vector<double>* grad) const {
  return Guarded([&] {
    const Generator& g = *backends_.generator;
    const Image x = g.Synthesize(w);
    LossTerms t;
    t.clip = 1.0 - Dot(backends_.joint->EmbedImage(x), text_embedding_);
    t.l2 = L2Loss(w, w_s_);
    t.id = 1.0 - Dot(backends_.identity->Embed(x), source_identity_);
    t.total = t.clip + hyper_.lambda_l2 * t.l2 + hyper_.lambda_id * t.id;
    if (grad == nullptr) return t;

    std::vector<double> neg_text(text_embedding_.size());
    for (std::size_t i = 0; i < neg_text.size(); ++i) neg_text[i] = -text_embedding_[i];
    std::vector<double> grad_x = backends_.joint->EmbedImageVjp(x, neg_text);
    if (hyper_.lambda_id != 0) {
      std::vector<double> neg_id(source_identity_.size());
      for (std::size_t i = 0; i < neg_id.size(); ++i) neg_id[i] = -source_identity_[i];
      const std::vector<double> gid = backends_.identity->EmbedVjp(x, neg_id);
      for (std::size_t i = 0; i < grad_x.size(); ++i) grad_x[i] += hyper_.lambda_id * gid[i];
    }
    *grad = g.SynthesizeVjp(w, grad_x);
    // Subgradient 0 at w == w_s.
    if (hyper_.lambda_l2 != 0 && t.l2 > 0) {
      for (std::size_t i = 0; i < grad->size(); ++i) {
        (*grad)[i] += hyper_.lambda_l2 * (w.values[i] - w_s_.values[i]) / t.l2;
      }
    }
    return t;
  });
}

EditResult EditLatent(const Backends& backends, const LatentCode& w_s,
                      std::string_view prompt, const EditHyperparams& hyper) {
  hyper.Validate();
  if (prompt.empty()) throw Error(ErrorCode::kInvalidArgument, "prompt is empty");
  if (!w_s.AllFinite()) throw Error(ErrorCode::kNonFiniteLoss, "source latent is not finite");

  GateLease lease(backends.gate.get());
  EditObjective objective(backends, w_s, prompt, hyper);
  EditResult result;
  result.prompt = std::string(prompt);
  result.source_latent = w_s;
  result.trajectory.reserve(static_cast<std::size_t>(hyper.steps));

  LatentCode w = w_s;
  std::vector<double> grad;
  std::vector<double> m(w.values.size(), 0.0);
  std::vector<double> v(w.values.size(), 0.0);
  double beta1_power = 1.0;
  double beta2_power = 1.0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::kNonFiniteLoss, what,
                {{"trajectory", TrajectoryToJson(result.trajectory)}});
  };
  for (int step = 0; step < hyper.steps; ++step) {
    const LossTerms terms = objective.EvaluateWithGradient(w, &grad);
    if (!Finite(terms)) fail("loss became non-finite at step " + std::to_string(step));
    result.trajectory.push_back({step, terms});
    beta1_power *= hyper.beta1;
    beta2_power *= hyper.beta2;
    for (std::size_t i = 0; i < w.values.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g)) fail("gradient became non-finite at step " + std::to_string(step));
      m[i] = hyper.beta1 * m[i] + (1 - hyper.beta1) * g;
      v[i] = hyper.beta2 * v[i] + (1 - hyper.beta2) * g * g;
      const double m_hat = m[i] / (1 - beta1_power);
      const double v_hat = v[i] / (1 - beta2_power);
      w.values[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
  }
  result.initial = result.trajectory.front().loss;
  result.final_loss = objective.Evaluate(w);
  if (!Finite(result.final_loss)) fail("final loss is non-finite");
  result.image = Guarded([&] { return backends.generator->Synthesize(w); });
  result.latent = std::move(w);
  return result;
}

EditResult Edit(const Backends& backends, const Image& source, std::string_view prompt,
                const EditHyperparams& hyper, std::uint64_t seed) {
  if (prompt.empty()) throw Error(ErrorCode::kInvalidArgument, "prompt is empty");
  const LatentCode w_s = Guarded([&] { return backends.generator->Invert(source, seed); });
  EditResult result = EditLatent(backends, w_s, prompt, hyper);
  result.source_id = source.id;
  return result;
}

std::string_view EditModeName(EditMode mode) {
  return mode == EditMode::kMultiTurn ? "multi-turn" : "cascade";
}

std::optional<EditMode> ParseEditMode(std::string_view name) {
  const std::string n = NormalizeText(name);
  if (n == "multi-turn" || n == "multiturn" || n == "multi") return EditMode::kMultiTurn;
  if (n == "cascade" || n == "single-turn") return EditMode::kCascade;
  return std::nullopt;
}

EditResult EditTurn(EditState& state, const BeliefState& belief, EditMode mode,
                    const Backends& backends, const EditHyperparams& hyper) {
  if (belief.empty()) throw Error(ErrorCode::kEmptyBelief, "belief is empty");
  const int turn = static_cast<int>(state.outputs.size()) + 1;
  EditResult result;
  if (mode == EditMode::kMultiTurn) {
    result = Edit(backends, state.original, BuildPrompt(belief), hyper, state.seed);
  } else {
    const auto delta = BeliefDelta(state.previous_belief, belief);
    const Image& source = state.current();
    if (delta.empty()) {
      result.image = source;
      result.source_id = source.id;
      result.skipped = true;
    } else {
      std::vector<AttributeValue> values;
      for (const SlotValue& p : delta) values.push_back(p.value);
      result = Edit(backends, source, BuildPrompt(values), hyper, state.seed);
    }
  }
  result.image.id = state.original.id + "/" + std::string(EditModeName(mode)) + "/" +
                    std::to_string(turn);
  result.image.provenance =
      "edited(turn " + std::to_string(turn) + ", " + std::string(EditModeName(mode)) + ")";
  state.outputs.push_back(result.image);
  state.previous_belief = belief;
  return result;
}

}  // namespace dialedit
