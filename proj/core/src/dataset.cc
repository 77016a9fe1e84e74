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
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <set>
#include <sstream>

#include "dialedit/error.h"
#include "dialedit/simulator.h"

namespace dialedit {
namespace {

using nlohmann::json;

void WriteJsonFile(const std::string& path, const json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kInvalidArgument, "cannot write " + path);
  }
  out << doc.dump(2) << '\n';
}

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot read " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid JSON in " + path);
  }
  return doc;
}

}  // namespace

json PairToJson(const SlotValue& pair) {
  return {{"slot", SlotName(pair.slot)}, {"value", pair.value.text()}};
}

SlotValue PairFromJson(const json& doc) {
  auto slot = ParseSlotName(doc.at("slot").get<std::string>());
  if (!slot) {
    throw Error(ErrorCode::kInvalidArgument,
                "unknown slot '" + doc.at("slot").get<std::string>() + "'");
  }
  return {*slot, ParseValue(doc.at("value").get<std::string>())};
}

json ActionToJson(const SystemAction& action) {
  json doc{{"kind", ActionKindName(action.kind)}, {"slot", nullptr},
           {"value", nullptr}};
  if (action.target) {
    doc["slot"] = SlotName(action.target->slot);
    doc["value"] = action.target->value.text();
  }
  return doc;
}

SystemAction ActionFromJson(const json& doc) {
  auto kind = ParseActionKind(doc.at("kind").get<std::string>());
  if (!kind) {
    throw Error(ErrorCode::kInvalidArgument,
                "unknown action kind '" + doc.at("kind").get<std::string>() + "'");
  }
  SystemAction action{*kind, std::nullopt};
  if (doc.contains("value") && !doc["value"].is_null()) {
    action.target = PairFromJson(doc);
  }
  return action;
}

std::uint64_t DialogueSeed(std::uint64_t dataset_seed,
                           std::string_view image_id) {
  return DeriveSeed(dataset_seed, Fnv1a(image_id));
}

DatasetBundle BuildDataset(std::span<const ImageRecord> records,
                           const DatasetConfig& config,
                           const UtteranceBank& bank) {
  const std::size_t needed =
      config.train_size + config.valid_size + config.test_size;
  std::set<std::string_view> ids;
  for (const auto& r : records) ids.insert(r.image_id);
  if (ids.size() != records.size()) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate image ids in records");
  }
  if (records.size() < needed) {
    throw Error(ErrorCode::kInsufficientRecords,
                "need " + std::to_string(needed) + " records, have " +
                    std::to_string(records.size()),
                {{"needed", needed}, {"available", records.size()}});
  }
  if (auto problems = bank.Validate(); !problems.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "incomplete utterance bank",
                {{"problems", problems}});
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(DeriveSeed(config.seed, 0x5eed));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[UniformIndex(shuffle_rng, i)]);
  }
  order.resize(needed);

  std::vector<Dialogue> all(needed);
  auto simulate_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const ImageRecord& record = records[order[i]];
      all[i] = SimulateDialogue(record, bank, config.simulator,
                                DialogueSeed(config.seed, record.image_id));
    }
  };
  const std::size_t jobs =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(config.jobs, 1)),
                              1, std::max<std::size_t>(needed, 1));
  if (jobs == 1) {
    simulate_range(0, needed);
  } else {
    std::vector<std::future<void>> futures;
    const std::size_t chunk = (needed + jobs - 1) / jobs;
    for (std::size_t b = 0; b < needed; b += chunk) {
      futures.push_back(std::async(std::launch::async, simulate_range, b,
                                   std::min(needed, b + chunk)));
    }
    for (auto& f : futures) f.get();
  }

  DatasetBundle bundle;
  auto first = std::make_move_iterator(all.begin());
  bundle.train.assign(first, first + config.train_size);
  bundle.valid.assign(first + config.train_size,
                      first + config.train_size + config.valid_size);
  bundle.test.assign(first + config.train_size + config.valid_size,
                     first + needed);
  return bundle;
}

json RecordToJson(const ImageRecord& record) {
  json attrs = json::array();
  for (AttributeValue v : record.original_attributes) attrs.push_back(v.text());
  return {{"image_id", record.image_id},
          {"caption", record.caption},
          {"original_attributes", attrs},
          {"image_ref", record.image_ref}};
}

ImageRecord RecordFromJson(const json& doc) {
  ImageRecord record;
  record.image_id = doc.at("image_id").get<std::string>();
  for (const auto& v : doc.value("original_attributes", json::array())) {
    AttributeValue value = ParseValue(v.get<std::string>());
    if (value.ood()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "original attribute '" + std::string(value.text()) +
                      "' is outside the in-domain vocabulary");
    }
    record.original_attributes.push_back(value);
  }
  record.caption = doc.contains("caption")
                       ? doc["caption"].get<std::string>()
                       : MakeCaption(doc.value("subject", std::string("person")),
                                     record.original_attributes);
  record.image_ref = doc.value("image_ref", record.image_id);
  return record;
}

std::vector<ImageRecord> ReadRecords(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  std::vector<ImageRecord> records;
  json doc = json::parse(text, nullptr, false);
  if (!doc.is_discarded() && doc.is_array()) {
    for (const auto& r : doc) records.push_back(RecordFromJson(r));
    return records;
  }
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    records.push_back(RecordFromJson(json::parse(line)));
  }
  return records;
}

json DialogueToJson(const Dialogue& dialogue) {
  json originals = json::array();
  for (AttributeValue v : dialogue.record.original_attributes) {
    originals.push_back(v.text());
  }
  json turns = json::array();
  for (const DialogueTurn& turn : dialogue.turns) {
    json delta = json::array();
    for (const SlotValue& pair : turn.turn_request) delta.push_back(PairToJson(pair));
    turns.push_back({{"index", turn.index},
                     {"user", turn.user_utterance},
                     {"belief", SerializeBelief(turn.gold_belief)},
                     {"delta", delta},
                     {"action", ActionToJson(turn.system_action)},
                     {"system", turn.system_response}});
  }
  return {{"image_id", dialogue.record.image_id},
          {"caption", dialogue.record.caption},
          {"original_attributes", originals},
          {"turns", turns},
          {"seed", dialogue.seed}};
}

Dialogue DialogueFromJson(const json& doc) {
  Dialogue dialogue;
  dialogue.record = RecordFromJson(doc);
  dialogue.seed = doc.value("seed", std::uint64_t{0});
  for (const auto& t : doc.at("turns")) {
    DialogueTurn turn;
    turn.index = t.at("index").get<int>();
    turn.user_utterance = t.at("user").get<std::string>();
    turn.gold_belief =
        ParseBelief(t.at("belief").get<std::string>()).WithTurnIndex(turn.index);
    for (const auto& p : t.at("delta")) turn.turn_request.push_back(PairFromJson(p));
    turn.system_action = ActionFromJson(t.at("action"));
    turn.system_response = t.at("system").get<std::string>();
    dialogue.turns.push_back(std::move(turn));
  }
  return dialogue;
}

json DialoguesToJson(std::span<const Dialogue> dialogues) {
  json list = json::array();
  for (const auto& d : dialogues) list.push_back(DialogueToJson(d));
  return {{"dialogues", list}};
}

std::vector<Dialogue> DialoguesFromJson(const json& doc) {
  std::vector<Dialogue> out;
  for (const auto& d : doc.at("dialogues")) out.push_back(DialogueFromJson(d));
  return out;
}

std::vector<std::string> ValidateDatasetJson(const json& doc) {
  std::vector<std::string> errors;
  if (!doc.is_object() || !doc.contains("dialogues") ||
      !doc["dialogues"].is_array()) {
    errors.push_back("top level must be an object with a 'dialogues' array");
    return errors;
  }
  std::set<std::string> seen_ids;
  for (std::size_t di = 0; di < doc["dialogues"].size(); ++di) {
    const json& d = doc["dialogues"][di];
    const std::string where = "dialogues[" + std::to_string(di) + "]";
    auto fail = [&](const std::string& msg) { errors.push_back(where + ": " + msg); };
    if (!d.is_object()) {
      fail("not an object");
      continue;
    }
    for (const char* key : {"image_id", "caption"}) {
      if (!d.contains(key) || !d[key].is_string()) fail(std::string("missing string '") + key + "'");
    }
    if (!d.contains("seed") || !d["seed"].is_number_unsigned()) {
      fail("missing unsigned 'seed'");
    }
    if (d.contains("image_id") && d["image_id"].is_string() &&
        !seen_ids.insert(d["image_id"].get<std::string>()).second) {
      fail("duplicate image_id");
    }
    std::set<AttributeValue> originals;
    if (!d.contains("original_attributes") || !d["original_attributes"].is_array()) {
      fail("missing 'original_attributes' array");
    } else {
      for (const auto& v : d["original_attributes"]) {
        try {
          originals.insert(ParseValue(v.get<std::string>()));
        } catch (const std::exception& e) {
          fail(std::string("bad original attribute: ") + e.what());
        }
      }
    }
    if (!d.contains("turns") || !d["turns"].is_array() || d["turns"].empty()) {
      fail("missing non-empty 'turns' array");
      continue;
    }
    BeliefState folded;
    for (std::size_t ti = 0; ti < d["turns"].size(); ++ti) {
      const json& t = d["turns"][ti];
      const std::string twhere = "turns[" + std::to_string(ti) + "]";
      auto tfail = [&](const std::string& msg) { fail(twhere + ": " + msg); };
      if (!t.is_object()) {
        tfail("not an object");
        continue;
      }
      if (!t.contains("index") || !t["index"].is_number_integer() ||
          t["index"].get<int>() != static_cast<int>(ti) + 1) {
        tfail("index must be " + std::to_string(ti + 1));
      }
      for (const char* key : {"user", "belief", "system"}) {
        if (!t.contains(key) || !t[key].is_string()) tfail(std::string("missing string '") + key + "'");
      }
      try {
        std::vector<SlotValue> delta;
        for (const auto& p : t.at("delta")) {
          SlotValue pair = PairFromJson(p);
          if (pair.value.slot() != pair.slot) tfail("delta value in wrong slot");
          delta.push_back(pair);
        }
        folded = UpdateBelief(folded, delta);
        const BeliefState stored = ParseBelief(t.at("belief").get<std::string>());
        if (!stored.SameRequests(folded)) {
          tfail("belief '" + t["belief"].get<std::string>() +
                "' does not equal the fold of deltas '" + SerializeBelief(folded) + "'");
        }
        const SystemAction action = ActionFromJson(t.at("action"));
        if ((action.kind == ActionKind::kNext) == action.target.has_value()) {
          tfail("Next must have no target; Request/Suggest need one");
        }
      } catch (const std::exception& e) {
        tfail(e.what());
      }
    }
  }
  return errors;
}

void WriteDataset(const DatasetBundle& bundle, const std::string& dir) {
  std::filesystem::create_directories(dir);
  WriteJsonFile(dir + "/train.json", DialoguesToJson(bundle.train));
  WriteJsonFile(dir + "/valid.json", DialoguesToJson(bundle.valid));
  WriteJsonFile(dir + "/test.json", DialoguesToJson(bundle.test));
}

std::vector<Dialogue> ReadSplit(const std::string& path) {
  const json doc = ReadJsonFile(path);
  if (auto errors = ValidateDatasetJson(doc); !errors.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                path + ": " + errors.front(), {{"errors", errors}});
  }
  return DialoguesFromJson(doc);
}

void WriteReviewJsonl(std::span<const Dialogue> dialogues, std::ostream& out) {
  for (const auto& d : dialogues) out << DialogueToJson(d).dump() << '\n';
}

std::vector<Dialogue> ReadReviewJsonl(std::istream& in) {
  json wrapper{{"dialogues", json::array()}};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    wrapper["dialogues"].push_back(json::parse(line));
  }
  if (auto errors = ValidateDatasetJson(wrapper); !errors.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "reviewed dialogues failed validation: " + errors.front(),
                {{"errors", errors}});
  }
  return DialoguesFromJson(wrapper);
}

}  // namespace dialedit
