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

#include <algorithm>

#include "dialedit/error.h"
#include "dialedit/simulator.h"

namespace dialedit {
namespace {

constexpr std::string_view kValuePlaceholder = "{value}";

const char* kDefaultBank = R"json({
  "user": {
    "smiling": ["Can you make the person smile?",
                "Please add a smile to the face.",
                "I'd like the person to be smiling in this photo.",
                "Could you give them a big grin?"],
    "no smiling": ["Can you make the person stop smiling?",
                   "I want a serious expression instead.",
                   "Please give the face a neutral expression.",
                   "Could you make it so they are not smiling?"],
    "angry": ["Make the person look angry.",
              "Can you give the face an angry look?",
              "I want them to appear furious."],
    "sad": ["Make the face look sad.",
            "Could you make them appear unhappy?",
            "I'd like the person to look gloomy."],
    "brown hair": ["Change the hair color to brown.",
                   "Can you give them brown hair?",
                   "I want the person to be a brunette."],
    "blond hair": ["Make the hair blond.",
                   "Can you dye the hair blonde?",
                   "I'd like them to have blond hair."],
    "black hair": ["Change the hair to black.",
                   "Give them black hair, please.",
                   "Could you dye the hair jet black?"],
    "gray hair": ["Make the hair gray.",
                  "Can you turn their hair grey?",
                  "I want to see them with silver hair."],
    "receding hairline": ["Give them a receding hairline.",
                          "Can you make the hairline look receding?",
                          "I'd like to see the person with a receding hairline."],
    "sideburns": ["Add some sideburns.",
                  "Can you give them sideburns?",
                  "I want long sideburns on the face."],
    "bangs": ["Add bangs to the hair.",
              "Can you give them a fringe?",
              "I'd like a hairstyle with bangs."],
    "no bangs": ["Please remove the bangs.",
                 "I want the hair with no bangs.",
                 "Can you show them without bangs?"],
    "mustache": ["Add a mustache.",
                 "Can you give them a moustache?",
                 "I'd like a thick mustache on the face."],
    "goatee": ["Add a goatee.",
               "Can you give them a goatee?",
               "I want to see a goatee on the chin."],
    "no beard": ["Make them clean-shaven.",
                 "Can you show the face without a beard?",
                 "I want the face to have no beard."],
    "no makeup": ["Please remove the makeup.",
                  "I want them with no makeup.",
                  "Can you give the face a natural look?"],
    "heavy makeup": ["Add heavy makeup.",
                     "Can you put lots of makeup on the face?",
                     "I'd like a full makeup look."],
    "lipstick": ["Add some lipstick.",
                 "Can you put red lipstick on the lips?",
                 "I want them wearing lipstick."],
    "bushy eyebrows": ["Give them bushy eyebrows.",
                       "Can you add thick eyebrows?",
                       "I'd like to see bushy brows on the face."],
    "rosy cheeks": ["Give them rosy cheeks.",
                    "Can you add some blush to the cheeks?",
                    "I want the cheeks to look a little rosy."],
    "pale skin": ["Make the skin pale.",
                  "Can you give them pale skin?",
                  "I'd like a paler complexion."]
  },
  "system": {
    "Next": ["Done! What else would you like to change?",
             "Here is the edited image. Is there anything else you want to edit?",
             "The image has been updated. What would you like to do next?",
             "All set. Tell me what you want to change next."],
    "Request": ["Would you also like {value}?",
                "Do you want me to add {value} as well?",
                "Should I try {value} too?"],
    "Suggest": ["How about {value}? I think it would look great.",
                "I suggest trying {value} next.",
                "Maybe we could add {value} to complete the look."]
  },
  "mention": {
    "smiling": "a smile",
    "no smiling": "a neutral expression",
    "angry": "an angry expression",
    "sad": "a sad expression",
    "brown hair": "brown hair",
    "blond hair": "blond hair",
    "black hair": "black hair",
    "gray hair": "gray hair",
    "receding hairline": "a receding hairline",
    "sideburns": "sideburns",
    "bangs": "bangs",
    "no bangs": "no bangs",
    "mustache": "a mustache",
    "goatee": "a goatee",
    "no beard": "a clean-shaven face",
    "no makeup": "no makeup",
    "heavy makeup": "heavy makeup",
    "lipstick": "lipstick",
    "bushy eyebrows": "bushy eyebrows",
    "rosy cheeks": "rosy cheeks",
    "pale skin": "pale skin"
  },
  "affirmations": ["Yes, please do that.",
                   "Sure, go ahead.",
                   "Yeah, that sounds great.",
                   "Okay, let's try it."]
})json";

std::string Substitute(std::string text, std::string_view phrase) {
  const auto pos = text.find(kValuePlaceholder);
  if (pos != std::string::npos) {
    text.replace(pos, kValuePlaceholder.size(), phrase);
  }
  return text;
}

template <typename T>
const T& Pick(Rng& rng, const std::vector<T>& items) {
  return items[UniformIndex(rng, items.size())];
}

}  // namespace

bool ImageRecord::HasOriginal(AttributeValue v) const {
  return std::find(original_attributes.begin(), original_attributes.end(), v) !=
         original_attributes.end();
}

std::string MakeCaption(std::string_view subject,
                        std::span<const AttributeValue> attributes) {
  std::string caption = "a ";
  caption += subject.empty() ? "person" : subject;
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    caption += i == 0 ? " with " : ", ";
    caption += attributes[i].text();
  }
  return caption;
}

std::vector<ImageRecord> SyntheticRecords(std::size_t n, std::uint64_t seed) {
  static constexpr std::array<std::string_view, 2> kSubjects = {"man", "woman"};
  std::vector<ImageRecord> records;
  records.reserve(n);
  const auto in_domain = InDomainValues();
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(DeriveSeed(seed, i));
    ImageRecord record;
    char id[32];
    std::snprintf(id, sizeof(id), "toy-%05zu", i);
    record.image_id = id;
    record.image_ref = id;
    const std::size_t want = UniformIndex(rng, 4);
    for (int tries = 0; record.original_attributes.size() < want && tries < 16;
         ++tries) {
      AttributeValue v = in_domain[UniformIndex(rng, in_domain.size())];
      bool ok = true;
      for (AttributeValue o : record.original_attributes) {
        ok = ok && o != v && !Conflicts(o, v);
      }
      if (ok) record.original_attributes.push_back(v);
    }
    std::sort(record.original_attributes.begin(),
              record.original_attributes.end());
    record.caption = MakeCaption(kSubjects[UniformIndex(rng, 2)],
                                 record.original_attributes);
    records.push_back(std::move(record));
  }
  return records;
}

std::string_view ActionKindName(ActionKind kind) {
  switch (kind) {
    case ActionKind::kNext:
      return "Next";
    case ActionKind::kRequest:
      return "Request";
    case ActionKind::kSuggest:
      return "Suggest";
  }
  return "";
}

std::optional<ActionKind> ParseActionKind(std::string_view name) {
  for (ActionKind k :
       {ActionKind::kNext, ActionKind::kRequest, ActionKind::kSuggest}) {
    if (name == ActionKindName(k)) return k;
  }
  return std::nullopt;
}

// --- UtteranceBank -------------------------------------------------------

const UtteranceBank& UtteranceBank::Default() {
  static const UtteranceBank bank = FromJson(nlohmann::json::parse(kDefaultBank));
  return bank;
}

UtteranceBank UtteranceBank::FromJson(const nlohmann::json& doc) {
  UtteranceBank bank;
  for (const auto& [value, templates] : doc.at("user").items()) {
    bank.user_[ParseValue(value)] = templates.get<std::vector<std::string>>();
  }
  for (const auto& [kind_name, templates] : doc.at("system").items()) {
    auto kind = ParseActionKind(kind_name);
    if (!kind) {
      throw Error(ErrorCode::kInvalidArgument,
                  "unknown action kind '" + kind_name + "' in bank");
    }
    bank.system_[*kind] = templates.get<std::vector<std::string>>();
  }
  if (doc.contains("system_targeted")) {
    for (const auto& entry : doc["system_targeted"]) {
      auto kind = ParseActionKind(entry.at("kind").get<std::string>());
      if (!kind) {
        throw Error(ErrorCode::kInvalidArgument, "unknown action kind in bank");
      }
      bank.system_targeted_[{*kind, ParseValue(entry.at("value").get<std::string>())}] =
          entry.at("templates").get<std::vector<std::string>>();
    }
  }
  if (doc.contains("mention")) {
    for (const auto& [value, phrase] : doc["mention"].items()) {
      bank.mention_[ParseValue(value)] = phrase.get<std::string>();
    }
  }
  if (doc.contains("affirmations")) {
    bank.affirmations_ = doc["affirmations"].get<std::vector<std::string>>();
  }
  return bank;
}

nlohmann::json UtteranceBank::ToJson() const {
  nlohmann::json doc;
  doc["user"] = nlohmann::json::object();
  for (const auto& [v, ts] : user_) doc["user"][std::string(v.text())] = ts;
  doc["system"] = nlohmann::json::object();
  for (const auto& [k, ts] : system_) {
    doc["system"][std::string(ActionKindName(k))] = ts;
  }
  doc["system_targeted"] = nlohmann::json::array();
  for (const auto& [key, ts] : system_targeted_) {
    doc["system_targeted"].push_back({{"kind", ActionKindName(key.first)},
                                      {"value", key.second.text()},
                                      {"templates", ts}});
  }
  doc["mention"] = nlohmann::json::object();
  for (const auto& [v, p] : mention_) doc["mention"][std::string(v.text())] = p;
  doc["affirmations"] = affirmations_;
  return doc;
}

const std::vector<std::string>& UtteranceBank::UserTemplates(
    AttributeValue v) const {
  static const std::vector<std::string> kEmpty;
  auto it = user_.find(v);
  return it == user_.end() ? kEmpty : it->second;
}

std::vector<std::string>& UtteranceBank::MutableUserTemplates(AttributeValue v) {
  return user_[v];
}

std::vector<std::string>& UtteranceBank::MutableSystemTemplates(
    ActionKind kind) {
  return system_[kind];
}

std::string UtteranceBank::MentionPhrase(AttributeValue v) const {
  auto it = mention_.find(v);
  return it == mention_.end() ? std::string(v.text()) : it->second;
}

std::vector<std::string> UtteranceBank::SystemTemplates(
    const SystemAction& action) const {
  std::vector<std::string> out;
  if (action.target) {
    auto it = system_targeted_.find({action.kind, action.target->value});
    if (it != system_targeted_.end() && !it->second.empty()) return it->second;
  }
  auto it = system_.find(action.kind);
  if (it == system_.end()) return out;
  const std::string phrase =
      action.target ? MentionPhrase(action.target->value) : std::string();
  for (const auto& t : it->second) out.push_back(Substitute(t, phrase));
  return out;
}

std::vector<std::string> UtteranceBank::Validate() const {
  std::vector<std::string> problems;
  for (AttributeValue v : InDomainValues()) {
    if (UserTemplates(v).size() < 3) {
      problems.push_back("fewer than 3 user templates for '" +
                         std::string(v.text()) + "'");
    }
  }
  for (ActionKind k :
       {ActionKind::kNext, ActionKind::kRequest, ActionKind::kSuggest}) {
    auto it = system_.find(k);
    if (it == system_.end() || it->second.size() < 3) {
      problems.push_back("fewer than 3 system templates for " +
                         std::string(ActionKindName(k)));
    }
  }
  if (affirmations_.empty()) problems.push_back("no affirmation templates");
  return problems;
}

// --- sampling and policy -------------------------------------------------

std::vector<AttributeValue> EligibleValues(const ImageRecord& record,
                                           const BeliefState& belief) {
  std::vector<AttributeValue> out;
  for (AttributeValue v : InDomainValues()) {
    if (!record.HasOriginal(v) && !belief.Contains(v)) out.push_back(v);
  }
  return out;
}

std::vector<SlotValue> SampleTurnRequest(Rng& rng, const ImageRecord& record,
                                         const BeliefState& prior_belief,
                                         const SimulatorConfig& config,
                                         std::optional<AttributeValue> accepted) {
  std::vector<AttributeValue> eligible = EligibleValues(record, prior_belief);
  if (eligible.empty()) {
    throw Error(ErrorCode::kExhaustedOntology,
                "no eligible attribute left for image '" + record.image_id + "'");
  }
  int count = 1;
  while (count < config.max_attrs_per_turn &&
         UniformUnit(rng) < config.p_two_attrs) {
    ++count;
  }

  std::vector<SlotValue> request;
  auto take = [&](AttributeValue v) {
    request.push_back(MakeSlotValue(v));
    std::erase_if(eligible, [&](AttributeValue e) {
      return e == v || Conflicts(e, v);
    });
  };
  if (accepted &&
      std::find(eligible.begin(), eligible.end(), *accepted) != eligible.end()) {
    take(*accepted);
  }
  while (static_cast<int>(request.size()) < count && !eligible.empty()) {
    take(eligible[UniformIndex(rng, eligible.size())]);
  }
  return request;
}

SystemAction DecideAction(const PolicyConfig& policy, const BeliefState& belief,
                          std::span<const SystemAction> history,
                          const ImageRecord& record, Rng& rng) {
  std::vector<AttributeValue> targets = EligibleValues(record, belief);
  std::erase_if(targets, [&](AttributeValue v) {
    return std::any_of(history.begin(), history.end(),
                       [&](const SystemAction& a) {
                         return a.target && a.target->value == v;
                       });
  });
  if (targets.empty()) return SystemAction::Next();

  const double total =
      policy.next_weight + policy.request_weight + policy.suggest_weight;
  const double u = UniformUnit(rng) * total;
  if (u < policy.next_weight) return SystemAction::Next();
  const AttributeValue target = targets[UniformIndex(rng, targets.size())];
  if (u < policy.next_weight + policy.request_weight) {
    return SystemAction::Request(target);
  }
  return SystemAction::Suggest(target);
}

Dialogue SimulateDialogue(const ImageRecord& record, const UtteranceBank& bank,
                          const SimulatorConfig& config, std::uint64_t seed) {
  if (config.turn_counts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "turn_counts is empty");
  }
  Rng rng(seed);
  Dialogue dialogue;
  dialogue.record = record;
  dialogue.seed = seed;

  const int n_turns = config.turn_counts[UniformIndex(rng, config.turn_counts.size())];
  BeliefState belief;
  std::vector<SystemAction> actions;
  for (int k = 1; k <= n_turns; ++k) {
    std::optional<AttributeValue> accepted;
    if (!actions.empty() && actions.back().target &&
        UniformUnit(rng) < config.accept_prob) {
      accepted = actions.back().target->value;
    }
    DialogueTurn turn;
    turn.index = k;
    turn.turn_request = SampleTurnRequest(rng, record, belief, config, accepted);

    for (const SlotValue& pair : turn.turn_request) {
      const auto& pool = (accepted && pair.value == *accepted)
                             ? bank.affirmations()
                             : bank.UserTemplates(pair.value);
      if (pool.empty()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "bank has no template for '" +
                        std::string(pair.value.text()) + "'");
      }
      if (!turn.user_utterance.empty()) turn.user_utterance += ' ';
      turn.user_utterance += Pick(rng, pool);
    }
    belief = UpdateBelief(belief, turn.turn_request).WithTurnIndex(k);
    turn.gold_belief = belief;

    turn.system_action = DecideAction(config.policy, belief, actions, record, rng);
    const auto responses = bank.SystemTemplates(turn.system_action);
    if (responses.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "bank has no system template");
    }
    turn.system_response = Pick(rng, responses);
    actions.push_back(turn.system_action);
    dialogue.turns.push_back(std::move(turn));
  }
  return dialogue;
}

}  // namespace dialedit
