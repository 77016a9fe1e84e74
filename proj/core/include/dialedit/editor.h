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

#ifndef DIALEDIT_EDITOR_H_
#define DIALEDIT_EDITOR_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialedit/backends.h"
#include "dialedit/ontology.h"

namespace dialedit {

struct EditHyperparams {
  double lambda_l2 = 0.008;
  double lambda_id = 0.005;
  int steps = 300;
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // Throws Error(kInvalidArgument) for negative weights or steps < 1.
  void Validate() const;
  nlohmann::json ToJson() const;
  // Missing keys keep their defaults.
  static EditHyperparams FromJson(const nlohmann::json& doc);
};

struct LossTerms {
  double total = 0;
  double clip = 0;
  double l2 = 0;
  double id = 0;
};

struct TrajectoryPoint {
  int step = 0;
  LossTerms loss;
};

struct EditResult {
  Image image;
  LatentCode latent;
  LatentCode source_latent;
  std::string prompt;
  std::string source_id;  // id of the image the edit started from
  // Loss at the iterate entering each step; size == steps.
  std::vector<TrajectoryPoint> trajectory;
  LossTerms initial;
  LossTerms final_loss;  // at the returned latent
  bool skipped = false;  // nothing new to edit; image passed through

  nlohmann::json ToJson() const;
};

// "a face with <phrase>, <phrase>, ..." over the belief in serialization
// order. Throws Error(kEmptyBelief).
std::string BuildPrompt(const BeliefState& belief);
std::string BuildPrompt(std::span<const AttributeValue> values);

// Wording of one value inside a prompt ("a smiling expression",
// "without bangs").
std::string PromptPhrase(AttributeValue value);

double ClipLoss(const JointEmbedder& embedder, const Image& image,
                std::string_view prompt);
// Throws Error(kShapeMismatch).
double L2Loss(const LatentCode& w, const LatentCode& w_s);
double IdLoss(const IdentityEmbedder& embedder, const Image& a, const Image& b);

// L_CLIP(G(w)) + lambda_l2 |w - w_s| + lambda_id (1 - <R(G(w_s)), R(G(w))>)
// with its exact gradient.
class EditObjective {
 public:
  EditObjective(const Backends& backends, LatentCode w_s, std::string_view prompt,
                const EditHyperparams& hyper);

  LossTerms Evaluate(const LatentCode& w) const;
  // `grad` receives d(total)/d(w), sized like w.values.
  LossTerms EvaluateWithGradient(const LatentCode& w, std::vector<double>* grad) const;

  const LatentCode& source_latent() const { return w_s_; }

 private:
  const Backends& backends_;
  LatentCode w_s_;
  EditHyperparams hyper_;
  std::vector<double> text_embedding_;
  std::vector<double> source_identity_;
};

// Initializes w = invert(source) and runs `steps` Adam updates.
// Errors: kInvalidArgument for an empty prompt, kNonFiniteLoss (detail
// carries the trajectory so far), kBackendFailure.
EditResult Edit(const Backends& backends, const Image& source,
                std::string_view prompt, const EditHyperparams& hyper,
                std::uint64_t seed = 0);

// Same loop from a given starting latent.
EditResult EditLatent(const Backends& backends, const LatentCode& w_s,
                      std::string_view prompt, const EditHyperparams& hyper);

enum class EditMode { kMultiTurn, kCascade };

std::string_view EditModeName(EditMode mode);  // "multi-turn", "cascade"
std::optional<EditMode> ParseEditMode(std::string_view name);

// Per-session editing state.
struct EditState {
  Image original;
  std::vector<Image> outputs;  // one per edited turn
  BeliefState previous_belief;
  std::uint64_t seed = 0;

  const Image& current() const { return outputs.empty() ? original : outputs.back(); }
};

// MultiTurn edits the original image with the prompt of the full belief;
// Cascade edits the previous output with the prompt of this turn's delta
// (an empty delta passes the previous output through). Appends the output
// and records `belief` in `state`. Throws Error(kEmptyBelief).
EditResult EditTurn(EditState& state, const BeliefState& belief, EditMode mode,
                    const Backends& backends, const EditHyperparams& hyper);

}  // namespace dialedit

#endif  // DIALEDIT_EDITOR_H_
