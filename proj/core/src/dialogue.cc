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

#include "dialedit/dialogue.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "dialedit/error.h"

namespace dialedit {
namespace {

std::string Trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::string Call(LmClient& client, const std::string& prompt, int max_tokens) {
  return client.Complete(prompt, max_tokens);
}

}  // namespace

std::vector<Utterance> DialogueHistory(const Dialogue& dialogue, int turn,
                                       bool include_system) {
  std::vector<Utterance> history;
  for (const DialogueTurn& t : dialogue.turns) {
    if (t.index > turn) break;
    history.push_back({Speaker::kUser, t.user_utterance});
    if (t.index < turn || include_system) {
      history.push_back({Speaker::kSystem, t.system_response});
    }
  }
  return history;
}

std::string LinearizeHistory(std::span<const Utterance> history,
                             std::string_view caption) {
  std::string out;
  if (!caption.empty()) {
    out += "caption: ";
    out += caption;
  }
  for (const Utterance& u : history) {
    if (!out.empty()) out += '\n';
    out += u.speaker == Speaker::kUser ? "user: " : "system: ";
    out += u.text;
  }
  return out;
}

void CheckHistory(std::span<const Utterance> history) {
  if (history.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "dialogue history is empty");
  }
  for (std::size_t i = 0; i < history.size(); ++i) {
    const Speaker expected = i % 2 == 0 ? Speaker::kUser : Speaker::kSystem;
    if (history[i].speaker != expected) {
      throw Error(ErrorCode::kInvalidArgument,
                  "history must alternate speakers starting with the user",
                  {{"position", i}});
    }
  }
}

std::string_view TrackerKindName(TrackerKind kind) {
  switch (kind) {
    case TrackerKind::kRuleBased:
      return "rule";
    case TrackerKind::kLmAdapter:
      return "lm";
    case TrackerKind::kQaAdapter:
      return "qa";
  }
  return "";
}

std::optional<TrackerKind> ParseTrackerKind(std::string_view name) {
  for (TrackerKind k :
       {TrackerKind::kRuleBased, TrackerKind::kLmAdapter, TrackerKind::kQaAdapter}) {
    if (name == TrackerKindName(k)) return k;
  }
  return std::nullopt;
}

// --- RuleBasedTracker ----------------------------------------------------

const std::vector<std::string>& RuleBasedTracker::DefaultAffirmationMarkers() {
  static const std::vector<std::string> markers = {
      "yes", "yeah", "yep", "sure", "okay", "ok", "sounds good", "let's do it"};
  return markers;
}

RuleBasedTracker::RuleBasedTracker()
    : RuleBasedTracker(Lexicon::Keywords(false), Lexicon::Keywords(true),
                       DefaultAffirmationMarkers()) {}

RuleBasedTracker::RuleBasedTracker(Lexicon lexicon, Lexicon qa_lexicon,
                                   std::vector<std::string> affirmation_markers)
    : lexicon_(std::move(lexicon)), qa_lexicon_(std::move(qa_lexicon)) {
  for (const auto& m : affirmation_markers) markers_.push_back(Tokenize(m));
}

bool RuleBasedTracker::StartsWithAffirmation(std::string_view text) const {
  const auto tokens = Tokenize(text);
  for (const auto& marker : markers_) {
    if (!marker.empty() && marker.size() <= tokens.size() &&
        std::equal(marker.begin(), marker.end(), tokens.begin())) {
      return true;
    }
  }
  return false;
}

std::vector<SlotValue> RuleBasedTracker::TurnDelta(
    std::string_view user_text, std::string_view previous_system_text,
    bool include_ood) const {
  const Lexicon& lexicon = include_ood ? qa_lexicon_ : lexicon_;
  std::vector<SlotValue> delta;
  if (!previous_system_text.empty() && StartsWithAffirmation(user_text)) {
    const auto offered = lexicon.Values(previous_system_text);
    if (offered.size() == 1) delta.push_back(MakeSlotValue(offered.front()));
  }
  for (AttributeValue v : lexicon.Values(user_text)) {
    delta.push_back(MakeSlotValue(v));
  }
  return delta;
}

BeliefState RuleBasedTracker::Fold(std::span<const Utterance> history,
                                   bool include_ood) const {
  CheckHistory(history);
  BeliefState belief;
  std::string_view previous_system;
  int turn = 0;
  for (const Utterance& u : history) {
    if (u.speaker == Speaker::kSystem) {
      previous_system = u.text;
      continue;
    }
    ++turn;
    belief = UpdateBelief(belief, TurnDelta(u.text, previous_system, include_ood))
                 .WithTurnIndex(turn);
  }
  return belief;
}

BeliefState RuleBasedTracker::Track(std::span<const Utterance> history) {
  return Fold(history, false);
}

std::vector<AttributeValue> RuleBasedTracker::AnswerSlot(
    std::span<const Utterance> history, Slot slot) {
  return Fold(history, true).values(slot);
}

// --- LmTracker -----------------------------------------------------------

LmTracker::LmTracker(std::shared_ptr<LmClient> client, int max_tokens)
    : client_(std::move(client)), max_tokens_(max_tokens) {
  if (!client_) {
    throw Error(ErrorCode::kBackendUnavailable, "LM tracker needs a client");
  }
}

std::string LmTracker::BuildPrompt(std::span<const Utterance> history) {
  return std::string(kTrackTaskPrompt) + ":\n" + LinearizeHistory(history);
}

BeliefState LmTracker::Track(std::span<const Utterance> history) {
  CheckHistory(history);
  const std::string raw = Call(*client_, BuildPrompt(history), max_tokens_);
  try {
    return ParseBelief(Trim(raw));
  } catch (const Error& e) {
    spdlog::warn("tracker output could not be parsed: {}", raw);
    throw Error(ErrorCode::kParseFailure,
                std::string("tracker output could not be parsed: ") + e.what(),
                {{"raw", raw}, {"offset", e.detail().value("offset", 0)}});
  }
}

std::vector<AttributeValue> LmTracker::AnswerSlot(
    std::span<const Utterance> history, Slot slot) {
  return Track(history).values(slot);
}

// --- QaTracker -----------------------------------------------------------

QaTracker::QaTracker(std::shared_ptr<LmClient> client, int max_tokens)
    : client_(std::move(client)), max_tokens_(max_tokens) {
  if (!client_) {
    throw Error(ErrorCode::kBackendUnavailable, "QA tracker needs a client");
  }
}

std::string QaTracker::Question(Slot slot) {
  return "what is the " + std::string(SlotName(slot)) + "?";
}

std::string QaTracker::BuildPrompt(std::span<const Utterance> history,
                                   Slot slot) {
  return LinearizeHistory(history) + "\nquestion: " + Question(slot);
}

std::vector<AttributeValue> QaTracker::AnswerSlot(
    std::span<const Utterance> history, Slot slot) {
  CheckHistory(history);
  const std::string raw = Call(*client_, BuildPrompt(history, slot), max_tokens_);
  const std::string answer = NormalizeText(Trim(raw));
  std::vector<AttributeValue> values;
  if (answer.empty() || answer == "none") return values;

  std::stringstream parts(answer);
  std::string part;
  while (std::getline(parts, part, ',')) {
    AttributeValue value;
    try {
      value = ParseValue(part);
    } catch (const Error&) {
      spdlog::warn("QA tracker answer could not be parsed: {}", raw);
      throw Error(ErrorCode::kParseFailure,
                  "QA answer '" + Trim(part) + "' is not an attribute",
                  {{"raw", raw}, {"slot", SlotName(slot)}});
    }
    if (value.slot() != slot) {
      throw Error(ErrorCode::kParseFailure,
                  "QA answer '" + std::string(value.text()) +
                      "' belongs to another slot",
                  {{"raw", raw}, {"slot", SlotName(slot)}});
    }
    if (std::find(values.begin(), values.end(), value) == values.end()) {
      values.push_back(value);
    }
  }
  return values;
}

BeliefState QaTracker::Track(std::span<const Utterance> history) {
  return TrackBySlots(*this, history);
}

BeliefState TrackBySlots(Tracker& tracker, std::span<const Utterance> history) {
  BeliefState belief;
  for (Slot slot : kAllSlots) {
    std::vector<SlotValue> pairs;
    for (AttributeValue v : tracker.AnswerSlot(history, slot)) {
      pairs.push_back({slot, v});
    }
    belief = UpdateBelief(belief, pairs);
  }
  return belief;
}

TrackOutcome TrackOrFallback(Tracker& tracker,
                             std::span<const Utterance> history,
                             const BeliefState& fallback) {
  try {
    return {tracker.Track(history), false, {}};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kParseFailure) throw;
    return {fallback, true, e.detail().value("raw", std::string())};
  }
}

// --- responders ----------------------------------------------------------

std::string_view ResponderKindName(ResponderKind kind) {
  return kind == ResponderKind::kTemplate ? "template" : "lm";
}

std::optional<ResponderKind> ParseResponderKind(std::string_view name) {
  if (name == "template") return ResponderKind::kTemplate;
  if (name == "lm") return ResponderKind::kLmAdapter;
  return std::nullopt;
}

std::string TemplateResponder::Respond(std::span<const Utterance>,
                                       std::string_view,
                                       const SystemAction& action, Rng& rng) {
  const auto candidates = bank_.SystemTemplates(action);
  if (candidates.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "no system template for action " +
                    std::string(ActionKindName(action.kind)));
  }
  return candidates[UniformIndex(rng, candidates.size())];
}

LmResponder::LmResponder(std::shared_ptr<LmClient> client,
                         const UtteranceBank& bank, int max_tokens)
    : client_(std::move(client)), fallback_(bank), max_tokens_(max_tokens) {
  if (!client_) {
    throw Error(ErrorCode::kBackendUnavailable, "LM responder needs a client");
  }
}

std::string LmResponder::BuildPrompt(std::span<const Utterance> history,
                                     std::string_view caption) {
  return std::string(kResponseTaskPrompt) + ":\n" +
         LinearizeHistory(history, caption);
}

std::string LmResponder::Respond(std::span<const Utterance> history,
                                 std::string_view caption,
                                 const SystemAction& action, Rng& rng) {
  const std::string prompt = BuildPrompt(history, caption);
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string text = Trim(Call(*client_, prompt, max_tokens_));
    if (!text.empty()) return text;
  }
  spdlog::warn("responder produced empty text twice; using a template");
  return fallback_.Respond(history, caption, action, rng);
}

// --- evaluation ----------------------------------------------------------

nlohmann::json TrackingEvalResult::ToJson() const {
  nlohmann::json per_slot = nlohmann::json::object();
  for (const auto& [slot, acc] : per_slot_accuracy) {
    per_slot[std::string(SlotName(slot))] = acc;
  }
  nlohmann::json mismatches = nlohmann::json::array();
  for (const auto& [gold, predicted] : confusion) {
    mismatches.push_back({{"gold", SerializeBelief(gold)},
                          {"predicted", SerializeBelief(predicted)}});
  }
  return {{"joint_accuracy", joint_accuracy},
          {"per_slot_accuracy", per_slot},
          {"turns", confusion.size()},
          {"mismatches", mismatches}};
}

TrackingEvalResult JointAccuracy(std::span<const BeliefState> predicted,
                                 std::span<const BeliefState> gold) {
  if (predicted.size() != gold.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                "predicted and gold differ in length",
                {{"predicted", predicted.size()}, {"gold", gold.size()}});
  }
  TrackingEvalResult result;
  if (gold.empty()) return result;
  std::size_t joint = 0;
  std::map<Slot, std::size_t> slot_hits;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    bool all = true;
    for (Slot slot : kAllSlots) {
      auto a = predicted[i].values(slot);
      auto b = gold[i].values(slot);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      if (a == b) {
        ++slot_hits[slot];
      } else {
        all = false;
      }
    }
    if (all) {
      ++joint;
    } else {
      result.confusion.emplace_back(gold[i], predicted[i]);
    }
  }
  const double n = static_cast<double>(gold.size());
  result.joint_accuracy = static_cast<double>(joint) / n;
  for (Slot slot : kAllSlots) {
    result.per_slot_accuracy[slot] = static_cast<double>(slot_hits[slot]) / n;
  }
  return result;
}

TrackingEvalResult EvaluateTracker(Tracker& tracker,
                                   std::span<const Dialogue> dialogues) {
  std::vector<BeliefState> predicted;
  std::vector<BeliefState> gold;
  for (const Dialogue& d : dialogues) {
    for (const DialogueTurn& t : d.turns) {
      const auto history = DialogueHistory(d, t.index);
      predicted.push_back(TrackOrFallback(tracker, history, BeliefState()).belief);
      gold.push_back(t.gold_belief);
    }
  }
  return JointAccuracy(predicted, gold);
}

// --- fine-tuning ---------------------------------------------------------

std::vector<TrainingExample> BuildTrainingExamples(
    const LmTrainingSpec& spec, std::span<const Dialogue> corpus) {
  std::vector<TrainingExample> examples;
  for (const Dialogue& d : corpus) {
    for (const DialogueTurn& t : d.turns) {
      const auto history = DialogueHistory(d, t.index);
      examples.push_back({spec.track_prompt, LinearizeHistory(history),
                          SerializeBelief(t.gold_belief)});
      examples.push_back({spec.response_prompt,
                          LinearizeHistory(history, d.record.caption),
                          t.system_response});
    }
  }
  return examples;
}

FinetuneReport Finetune(const LmTrainingSpec& spec,
                        std::span<const Dialogue> corpus, LmTrainer* trainer,
                        const std::string& checkpoint_dir) {
  if (corpus.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "fine-tuning corpus is empty");
  }
  if (trainer == nullptr) {
    throw Error(ErrorCode::kBackendUnavailable,
                "no language-model training backend available");
  }
  if (spec.batch_size == 0 || spec.epochs < 1) {
    throw Error(ErrorCode::kInvalidArgument, "batch_size and epochs must be positive");
  }
  const auto examples = BuildTrainingExamples(spec, corpus);
  std::vector<std::size_t> track_ids;
  std::vector<std::size_t> response_ids;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    (examples[i].task_prompt == spec.track_prompt ? track_ids : response_ids)
        .push_back(i);
  }

  FinetuneReport report;
  report.examples = examples.size();
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    Rng rng(DeriveSeed(spec.seed, static_cast<std::uint64_t>(epoch)));
    auto shuffle = [&](std::vector<std::size_t>& ids) {
      for (std::size_t i = ids.size(); i > 1; --i) {
        std::swap(ids[i - 1], ids[UniformIndex(rng, i)]);
      }
    };
    shuffle(track_ids);
    shuffle(response_ids);
    // Alternate the two tasks so each batch carries both.
    std::vector<TrainingExample> order;
    order.reserve(examples.size());
    for (std::size_t i = 0; i < std::max(track_ids.size(), response_ids.size()); ++i) {
      if (i < track_ids.size()) order.push_back(examples[track_ids[i]]);
      if (i < response_ids.size()) order.push_back(examples[response_ids[i]]);
    }
    double weighted = 0;
    for (std::size_t b = 0; b < order.size(); b += spec.batch_size) {
      const std::size_t len = std::min(spec.batch_size, order.size() - b);
      const double loss = trainer->TrainBatch(
          std::span(order).subspan(b, len), spec.learning_rate);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::kBackendFailure, "training loss is not finite",
                    {{"epoch", epoch}});
      }
      weighted += loss * static_cast<double>(len);
    }
    report.epoch_loss.push_back(weighted / static_cast<double>(order.size()));
    spdlog::info("epoch {} loss {:.6f}", epoch + 1, report.epoch_loss.back());
  }
  if (!checkpoint_dir.empty()) {
    report.checkpoint = trainer->SaveCheckpoint(checkpoint_dir);
  }
  return report;
}

BigramLmTrainer::BigramLmTrainer(std::span<const TrainingExample> examples) {
  vocab_["<s>"] = 0;
  vocab_["<unk>"] = 1;
  for (const auto& ex : examples) {
    if (!tasks_.count(ex.task_prompt)) {
      const std::size_t id = tasks_.size();
      tasks_[ex.task_prompt] = id;
    }
    std::istringstream words(ex.target);
    std::string w;
    while (words >> w) {
      if (!vocab_.count(w)) {
        const std::size_t id = vocab_.size();
        vocab_[w] = id;
      }
    }
  }
  vocab_size_ = vocab_.size();
  const std::size_t n = std::max<std::size_t>(tasks_.size(), 1) * vocab_size_ * vocab_size_;
  logits_.assign(n, 0.0);
  m_.assign(n, 0.0);
  v_.assign(n, 0.0);
}

std::size_t BigramLmTrainer::TokenId(const std::string& token) const {
  auto it = vocab_.find(token);
  return it == vocab_.end() ? 1 : it->second;
}

std::size_t BigramLmTrainer::TaskId(const std::string& prompt) const {
  auto it = tasks_.find(prompt);
  return it == tasks_.end() ? 0 : it->second;
}

std::size_t BigramLmTrainer::Row(std::size_t task, std::size_t prev) const {
  return (task * vocab_size_ + prev) * vocab_size_;
}

double BigramLmTrainer::ExampleLoss(const TrainingExample& example) const {
  const std::size_t task = TaskId(example.task_prompt);
  std::istringstream words(example.target);
  std::vector<std::size_t> ids;
  std::string w;
  while (words >> w) ids.push_back(TokenId(w));
  ids.push_back(0);
  double loss = 0;
  std::size_t prev = 0;
  for (std::size_t id : ids) {
    const double* row = &logits_[Row(task, prev)];
    const double max = *std::max_element(row, row + vocab_size_);
    double z = 0;
    for (std::size_t j = 0; j < vocab_size_; ++j) z += std::exp(row[j] - max);
    loss -= row[id] - max - std::log(z);
    prev = id;
  }
  return loss;
}

double BigramLmTrainer::TrainBatch(std::span<const TrainingExample> batch,
                                   double learning_rate) {
  std::map<std::size_t, std::vector<double>> grads;  // row offset -> gradient
  double loss = 0;
  for (const auto& ex : batch) {
    loss += ExampleLoss(ex);
    const std::size_t task = TaskId(ex.task_prompt);
    std::istringstream words(ex.target);
    std::vector<std::size_t> ids;
    std::string w;
    while (words >> w) ids.push_back(TokenId(w));
    ids.push_back(0);
    std::size_t prev = 0;
    for (std::size_t id : ids) {
      const std::size_t offset = Row(task, prev);
      const double* row = &logits_[offset];
      const double max = *std::max_element(row, row + vocab_size_);
      double z = 0;
      for (std::size_t j = 0; j < vocab_size_; ++j) z += std::exp(row[j] - max);
      auto& g = grads[offset];
      if (g.empty()) g.assign(vocab_size_, 0.0);
      for (std::size_t j = 0; j < vocab_size_; ++j) {
        g[j] += std::exp(row[j] - max) / z;
      }
      g[id] -= 1.0;
      prev = id;
    }
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++step_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
  // Sparse Adam: only rows seen in this batch are updated.
  for (auto& [offset, g] : grads) {
    for (std::size_t j = 0; j < vocab_size_; ++j) {
      const double grad = g[j] * scale;
      double& m = m_[offset + j];
      double& v = v_[offset + j];
      m = kBeta1 * m + (1 - kBeta1) * grad;
      v = kBeta2 * v + (1 - kBeta2) * grad * grad;
      logits_[offset + j] -= learning_rate * (m / bc1) / (std::sqrt(v / bc2) + kEps);
    }
  }
  return loss * scale;
}

std::string BigramLmTrainer::SaveCheckpoint(const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/bigram_lm.json";
  nlohmann::json doc;
  doc["vocab"] = vocab_;
  doc["tasks"] = tasks_;
  doc["steps"] = step_;
  nlohmann::json weights = nlohmann::json::array();
  for (std::size_t i = 0; i < logits_.size(); ++i) {
    if (logits_[i] != 0.0) weights.push_back({i, logits_[i]});
  }
  doc["logits"] = weights;
  std::ofstream(path) << doc.dump() << '\n';
  return path;
}

}  // namespace dialedit
