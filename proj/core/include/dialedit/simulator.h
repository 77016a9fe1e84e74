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

#ifndef DIALEDIT_SIMULATOR_H_
#define DIALEDIT_SIMULATOR_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialedit/lm_client.h"
#include "dialedit/ontology.h"
#include "dialedit/random.h"

namespace dialedit {

struct ImageRecord {
  std::string image_id;
  std::string caption;
  std::vector<AttributeValue> original_attributes;  // in-domain only
  std::string image_ref;

  bool HasOriginal(AttributeValue v) const;
};

// "a woman with black hair, smiling"; subject falls back to "person".
std::string MakeCaption(std::string_view subject,
                        std::span<const AttributeValue> attributes);

// Placeholder records ("toy-00000", ...) with 0-3 consistent original
// attributes each. Deterministic in (n, seed).
std::vector<ImageRecord> SyntheticRecords(std::size_t n, std::uint64_t seed);

enum class ActionKind { kNext, kRequest, kSuggest };

std::string_view ActionKindName(ActionKind kind);  // "Next", ...
std::optional<ActionKind> ParseActionKind(std::string_view name);

struct SystemAction {
  ActionKind kind = ActionKind::kNext;
  std::optional<SlotValue> target;  // absent iff kind == kNext

  static SystemAction Next() { return {}; }
  static SystemAction Request(AttributeValue v) {
    return {ActionKind::kRequest, MakeSlotValue(v)};
  }
  static SystemAction Suggest(AttributeValue v) {
    return {ActionKind::kSuggest, MakeSlotValue(v)};
  }

  friend bool operator==(const SystemAction&, const SystemAction&) = default;
};

struct DialogueTurn {
  int index = 1;
  std::string user_utterance;
  BeliefState gold_belief;
  std::vector<SlotValue> turn_request;
  SystemAction system_action;
  std::string system_response;

  friend bool operator==(const DialogueTurn&, const DialogueTurn&) = default;
};

struct Dialogue {
  ImageRecord record;
  std::vector<DialogueTurn> turns;
  std::uint64_t seed = 0;
};

// Human-written utterances the simulator draws from.
//
// User templates are keyed by attribute value. System templates are keyed by
// action kind and may contain a "{value}" placeholder that is filled with the
// target's mention phrase; optional per-target templates take precedence.
// Affirmations are user replies accepting the previous Suggest/Request.
class UtteranceBank {
 public:
  static const UtteranceBank& Default();

  static UtteranceBank FromJson(const nlohmann::json& doc);
  nlohmann::json ToJson() const;

  const std::vector<std::string>& UserTemplates(AttributeValue v) const;
  std::vector<std::string>& MutableUserTemplates(AttributeValue v);

  // Candidate system responses with the target already substituted.
  std::vector<std::string> SystemTemplates(const SystemAction& action) const;
  std::vector<std::string>& MutableSystemTemplates(ActionKind kind);

  const std::vector<std::string>& affirmations() const { return affirmations_; }

  // Phrase used to mention `v` in system responses.
  std::string MentionPhrase(AttributeValue v) const;

  // Empty when every in-domain value and action kind has >= 3 templates.
  std::vector<std::string> Validate() const;

 private:
  std::map<AttributeValue, std::vector<std::string>> user_;
  std::map<ActionKind, std::vector<std::string>> system_;
  std::map<std::pair<ActionKind, AttributeValue>, std::vector<std::string>>
      system_targeted_;
  std::map<AttributeValue, std::string> mention_;
  std::vector<std::string> affirmations_;
};

struct PolicyConfig {
  // Relative weights of Next / Request / Suggest when a target is eligible.
  double next_weight = 1.0;
  double request_weight = 1.0;
  double suggest_weight = 1.0;
};

struct SimulatorConfig {
  int max_attrs_per_turn = 2;
  double p_two_attrs = 0.3;
  std::vector<int> turn_counts = {3, 4, 5};  // sampled uniformly
  double accept_prob = 0.5;  // user takes up the previous Suggest/Request
  PolicyConfig policy;
};

// Values a user may still ask for: in-domain, not original, not in belief.
std::vector<AttributeValue> EligibleValues(const ImageRecord& record,
                                           const BeliefState& belief);

// Draws this turn's request. `accepted`, when set and still eligible, is
// placed first (the user took up the system's offer). Throws
// Error(kExhaustedOntology) when nothing is eligible.
std::vector<SlotValue> SampleTurnRequest(
    Rng& rng, const ImageRecord& record, const BeliefState& prior_belief,
    const SimulatorConfig& config,
    std::optional<AttributeValue> accepted = std::nullopt);

// Rule-based policy: Request/Suggest only target values that are eligible
// and were not offered earlier in the dialogue; otherwise Next.
SystemAction DecideAction(const PolicyConfig& policy,
                          const BeliefState& belief,
                          std::span<const SystemAction> history,
                          const ImageRecord& record, Rng& rng);

Dialogue SimulateDialogue(const ImageRecord& record, const UtteranceBank& bank,
                          const SimulatorConfig& config, std::uint64_t seed);

// --- paraphrase ---------------------------------------------------------

// Few-shot prompt: instruction, requirement, numbered examples, and an
// open "Sentence N+1:" line.
std::string BuildParaphrasePrompt(std::string_view requirement,
                                  std::span<const std::string> examples);

struct ParaphraseLogEntry {
  std::string requirement;
  std::string prompt;
  std::string raw;
  bool accepted = false;
};

// Requests `n` completions. Empty, multi-line or duplicate completions are
// dropped. Every raw completion is appended to `log` for manual review.
// Throws Error(kClientUnavailable) if `client` is null or fails.
std::vector<std::string> Paraphrase(LmClient* client,
                                    std::string_view requirement,
                                    std::span<const std::string> examples,
                                    int n,
                                    std::vector<ParaphraseLogEntry>* log = nullptr);

// Appends paraphrases of every user template to a copy of `bank`. When the
// client is unavailable the bank is returned unchanged.
UtteranceBank AugmentBank(const UtteranceBank& bank, LmClient* client, int n,
                          std::vector<ParaphraseLogEntry>* log = nullptr);

// --- dataset ------------------------------------------------------------

struct DatasetConfig {
  std::size_t train_size = 10000;
  std::size_t valid_size = 1000;
  std::size_t test_size = 1000;
  std::uint64_t seed = 0;
  int jobs = 1;
  SimulatorConfig simulator;
};

struct DatasetBundle {
  std::vector<Dialogue> train;
  std::vector<Dialogue> valid;
  std::vector<Dialogue> test;
};

// Per-dialogue seed: a function of the dataset seed and the image id only.
std::uint64_t DialogueSeed(std::uint64_t dataset_seed, std::string_view image_id);

// Shuffles records with the dataset seed, assigns them to splits and
// simulates one dialogue per record. Throws Error(kInsufficientRecords).
DatasetBundle BuildDataset(std::span<const ImageRecord> records,
                           const DatasetConfig& config,
                           const UtteranceBank& bank = UtteranceBank::Default());

// --- JSON ---------------------------------------------------------------

nlohmann::json PairToJson(const SlotValue& pair);
SlotValue PairFromJson(const nlohmann::json& doc);
// {"kind", "slot", "value"}; slot and value are null for Next.
nlohmann::json ActionToJson(const SystemAction& action);
SystemAction ActionFromJson(const nlohmann::json& doc);

nlohmann::json DialogueToJson(const Dialogue& dialogue);
Dialogue DialogueFromJson(const nlohmann::json& doc);
nlohmann::json DialoguesToJson(std::span<const Dialogue> dialogues);
std::vector<Dialogue> DialoguesFromJson(const nlohmann::json& doc);

// Structural and semantic check of a split document. Returns one message
// per violation; empty means valid.
std::vector<std::string> ValidateDatasetJson(const nlohmann::json& doc);

// Writes train.json / valid.json / test.json under `dir`.
void WriteDataset(const DatasetBundle& bundle, const std::string& dir);
std::vector<Dialogue> ReadSplit(const std::string& path);

// Manual review round trip: one dialogue per line.
void WriteReviewJsonl(std::span<const Dialogue> dialogues, std::ostream& out);
std::vector<Dialogue> ReadReviewJsonl(std::istream& in);

nlohmann::json RecordToJson(const ImageRecord& record);
ImageRecord RecordFromJson(const nlohmann::json& doc);
// Accepts a JSON array or JSON lines.
std::vector<ImageRecord> ReadRecords(const std::string& path);

// --- statistics ---------------------------------------------------------

struct StatsReport {
  std::size_t total_dialogues = 0;
  std::size_t total_utterances = 0;
  double avg_turns = 0;
  double avg_utterances = 0;
  double avg_user_words = 0;
  double avg_system_words = 0;
  double avg_attributes_mentioned = 0;
  std::map<std::string, std::size_t> attribute_frequency;
  std::map<std::string, std::size_t> combination_frequency;
  std::map<std::string, std::size_t> flow_transitions;

  nlohmann::json ToJson() const;
  std::string ToText() const;
};

std::size_t WordCount(std::string_view text);

// An attribute counts as mentioned when the user requests it or the system
// offers it (Request/Suggest target); each distinct value counts once.
StatsReport ComputeStats(std::span<const Dialogue> dialogues);

}  // namespace dialedit

#endif  // DIALEDIT_SIMULATOR_H_
