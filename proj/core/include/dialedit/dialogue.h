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

#ifndef DIALEDIT_DIALOGUE_H_
#define DIALEDIT_DIALOGUE_H_

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialedit/lexicon.h"
#include "dialedit/lm_client.h"
#include "dialedit/ontology.h"
#include "dialedit/random.h"
#include "dialedit/simulator.h"

namespace dialedit {

inline constexpr std::string_view kTrackTaskPrompt =
    "translate dialogue to dialogue state";
inline constexpr std::string_view kResponseTaskPrompt =
    "translate dialogue to dialogue response";

enum class Speaker { kUser, kSystem };

struct Utterance {
  Speaker speaker;
  std::string text;
};

// user_1, system_1, ..., user_k. With include_system the system reply of
// turn k is appended as well.
std::vector<Utterance> DialogueHistory(const Dialogue& dialogue, int turn,
                                       bool include_system = false);

// "caption: ...\nuser: ...\nsystem: ...". Caption line only when non-empty.
std::string LinearizeHistory(std::span<const Utterance> history,
                             std::string_view caption = {});

// --- tracking ------------------------------------------------------------

enum class TrackerKind { kRuleBased, kLmAdapter, kQaAdapter };

std::string_view TrackerKindName(TrackerKind kind);  // "rule", "lm", "qa"
std::optional<TrackerKind> ParseTrackerKind(std::string_view name);

// Maps dialogue history to the cumulative belief state. Implementations are
// deterministic for fixed model state. Failures to read model output throw
// Error(kParseFailure) with detail["raw"].
class Tracker {
 public:
  virtual ~Tracker() = default;
  virtual TrackerKind kind() const = 0;

  // Precondition: history is non-empty, alternates speakers and starts with
  // the user.
  virtual BeliefState Track(std::span<const Utterance> history) = 0;

  // Question-answering view: the values currently requested for one slot
  // ("what is the hair color?"). Empty when the slot was never requested.
  // Multi-valued slots may answer with several values.
  virtual std::vector<AttributeValue> AnswerSlot(
      std::span<const Utterance> history, Slot slot) = 0;
};

// Throws Error(kInvalidArgument) if the history precondition is violated.
void CheckHistory(std::span<const Utterance> history);

// Keyword-lexicon tracker. Each user utterance contributes the values it
// mentions; a leading affirmation ("yes", "sure", ...) additionally accepts
// the single value offered by the preceding system utterance.
class RuleBasedTracker : public Tracker {
 public:
  RuleBasedTracker();
  RuleBasedTracker(Lexicon lexicon, Lexicon qa_lexicon,
                   std::vector<std::string> affirmation_markers);

  TrackerKind kind() const override { return TrackerKind::kRuleBased; }
  BeliefState Track(std::span<const Utterance> history) override;
  std::vector<AttributeValue> AnswerSlot(std::span<const Utterance> history,
                                         Slot slot) override;

  // Values contributed by one user utterance given the previous system one.
  std::vector<SlotValue> TurnDelta(std::string_view user_text,
                                   std::string_view previous_system_text,
                                   bool include_ood) const;

  static const std::vector<std::string>& DefaultAffirmationMarkers();

 private:
  BeliefState Fold(std::span<const Utterance> history, bool include_ood) const;
  bool StartsWithAffirmation(std::string_view text) const;

  Lexicon lexicon_;
  Lexicon qa_lexicon_;  // includes out-of-distribution values
  std::vector<std::vector<std::string>> markers_;
};

// Seq2seq tracker behind an LmClient: the track prompt is prepended to the
// linearized history and the completion is read with ParseBelief.
class LmTracker : public Tracker {
 public:
  explicit LmTracker(std::shared_ptr<LmClient> client, int max_tokens = 128);

  TrackerKind kind() const override { return TrackerKind::kLmAdapter; }
  BeliefState Track(std::span<const Utterance> history) override;
  std::vector<AttributeValue> AnswerSlot(std::span<const Utterance> history,
                                         Slot slot) override;

  static std::string BuildPrompt(std::span<const Utterance> history);

 private:
  std::shared_ptr<LmClient> client_;
  int max_tokens_;
};

// Slot-wise question answering ("what is the hair color?") behind an
// LmClient. Answers are comma-separated values or "none" and may include
// out-of-distribution values.
class QaTracker : public Tracker {
 public:
  explicit QaTracker(std::shared_ptr<LmClient> client, int max_tokens = 32);

  TrackerKind kind() const override { return TrackerKind::kQaAdapter; }
  BeliefState Track(std::span<const Utterance> history) override;
  std::vector<AttributeValue> AnswerSlot(std::span<const Utterance> history,
                                         Slot slot) override;

  static std::string Question(Slot slot);  // "what is the hair color?"
  static std::string BuildPrompt(std::span<const Utterance> history, Slot slot);

 private:
  std::shared_ptr<LmClient> client_;
  int max_tokens_;
};

// Composes AnswerSlot over all four slots.
BeliefState TrackBySlots(Tracker& tracker, std::span<const Utterance> history);

struct TrackOutcome {
  BeliefState belief;
  bool parse_failed = false;
  std::string raw;  // model output when parsing failed
};

// Track() with ParseFailure degraded to `fallback`. Batch evaluation passes
// an empty state, interactive sessions the previous turn's belief.
TrackOutcome TrackOrFallback(Tracker& tracker,
                             std::span<const Utterance> history,
                             const BeliefState& fallback);

// --- response generation -------------------------------------------------

enum class ResponderKind { kTemplate, kLmAdapter };

std::string_view ResponderKindName(ResponderKind kind);  // "template", "lm"
std::optional<ResponderKind> ParseResponderKind(std::string_view name);

class Responder {
 public:
  virtual ~Responder() = default;
  virtual ResponderKind kind() const = 0;
  // Returns non-empty text.
  virtual std::string Respond(std::span<const Utterance> history,
                              std::string_view caption,
                              const SystemAction& action, Rng& rng) = 0;
};

class TemplateResponder : public Responder {
 public:
  explicit TemplateResponder(const UtteranceBank& bank = UtteranceBank::Default())
      : bank_(bank) {}
  ResponderKind kind() const override { return ResponderKind::kTemplate; }
  std::string Respond(std::span<const Utterance> history,
                      std::string_view caption, const SystemAction& action,
                      Rng& rng) override;

 private:
  UtteranceBank bank_;
};

// Empty generations are retried once, then answered from templates.
class LmResponder : public Responder {
 public:
  LmResponder(std::shared_ptr<LmClient> client,
              const UtteranceBank& bank = UtteranceBank::Default(),
              int max_tokens = 64);
  ResponderKind kind() const override { return ResponderKind::kLmAdapter; }
  std::string Respond(std::span<const Utterance> history,
                      std::string_view caption, const SystemAction& action,
                      Rng& rng) override;

  static std::string BuildPrompt(std::span<const Utterance> history,
                                 std::string_view caption);

 private:
  std::shared_ptr<LmClient> client_;
  TemplateResponder fallback_;
  int max_tokens_;
};

// --- evaluation ----------------------------------------------------------

struct TrackingEvalResult {
  double joint_accuracy = 0;
  std::map<Slot, double> per_slot_accuracy;
  std::vector<std::pair<BeliefState, BeliefState>> confusion;  // gold, predicted

  nlohmann::json ToJson() const;
};

// A turn is correct iff every slot holds exactly the gold set of values.
// Throws Error(kLengthMismatch).
TrackingEvalResult JointAccuracy(std::span<const BeliefState> predicted,
                                 std::span<const BeliefState> gold);

// Re-tracks every turn of every dialogue from its full history prefix.
TrackingEvalResult EvaluateTracker(Tracker& tracker,
                                   std::span<const Dialogue> dialogues);

// --- fine-tuning ---------------------------------------------------------

struct TrainingExample {
  std::string task_prompt;
  std::string input;
  std::string target;
};

struct LmTrainingSpec {
  std::string track_prompt{kTrackTaskPrompt};
  std::string response_prompt{kResponseTaskPrompt};
  double learning_rate = 5e-5;
  std::size_t batch_size = 64;
  int epochs = 3;
  std::uint64_t seed = 0;
};

// Optimization backend. TrainBatch returns the mean per-example negative
// log-likelihood of the batch targets (summed over target tokens) measured
// before the update.
class LmTrainer {
 public:
  virtual ~LmTrainer() = default;
  virtual double TrainBatch(std::span<const TrainingExample> batch,
                            double learning_rate) = 0;
  virtual std::string SaveCheckpoint(const std::string& dir) = 0;
};

struct FinetuneReport {
  std::vector<double> epoch_loss;
  std::string checkpoint;
  std::size_t examples = 0;
};

// Both tasks for every turn of every dialogue.
std::vector<TrainingExample> BuildTrainingExamples(
    const LmTrainingSpec& spec, std::span<const Dialogue> corpus);

// Multi-task fine-tuning: every batch interleaves tracking and response
// examples. Throws Error(kInvalidArgument) for an empty corpus and
// Error(kBackendUnavailable) for a null trainer, before any backend call.
FinetuneReport Finetune(const LmTrainingSpec& spec,
                        std::span<const Dialogue> corpus, LmTrainer* trainer,
                        const std::string& checkpoint_dir = {});

// Smallest in-process language model: a task-conditioned bigram softmax
// over whitespace tokens, trained with Adam on the token-level likelihood.
class BigramLmTrainer : public LmTrainer {
 public:
  explicit BigramLmTrainer(std::span<const TrainingExample> examples);

  double TrainBatch(std::span<const TrainingExample> batch,
                    double learning_rate) override;
  std::string SaveCheckpoint(const std::string& dir) override;

  // Sum of -log P(y_i | y_{i-1}, task) over the target tokens plus EOS.
  double ExampleLoss(const TrainingExample& example) const;

 private:
  std::size_t TokenId(const std::string& token) const;
  std::size_t TaskId(const std::string& prompt) const;
  std::size_t Row(std::size_t task, std::size_t prev) const;

  std::map<std::string, std::size_t> vocab_;  // 0 = BOS/EOS, 1 = UNK
  std::map<std::string, std::size_t> tasks_;
  std::size_t vocab_size_ = 2;
  std::vector<double> logits_;
  std::vector<double> m_;
  std::vector<double> v_;
  long step_ = 0;
};

}  // namespace dialedit

#endif  // DIALEDIT_DIALOGUE_H_
