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
#include <cstdio>
#include <set>
#include <sstream>

#include "dialedit/simulator.h"

namespace dialedit {

std::size_t WordCount(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

StatsReport ComputeStats(std::span<const Dialogue> dialogues) {
  StatsReport report;
  report.total_dialogues = dialogues.size();
  if (dialogues.empty()) return report;

  std::size_t turns = 0;
  std::size_t user_words = 0;
  std::size_t system_words = 0;
  std::size_t mentioned = 0;
  for (const Dialogue& d : dialogues) {
    turns += d.turns.size();
    std::set<AttributeValue> mentions;
    std::string prev_block = "Start";
    for (const DialogueTurn& t : d.turns) {
      user_words += WordCount(t.user_utterance);
      system_words += WordCount(t.system_response);
      std::set<Slot> slots;
      for (const SlotValue& p : t.turn_request) {
        mentions.insert(p.value);
        slots.insert(p.slot);
        ++report.attribute_frequency[std::string(p.value.text())];
      }
      if (t.system_action.target) mentions.insert(t.system_action.target->value);

      const std::string n = std::to_string(t.index);
      const std::string system_block =
          "System-" + n + ":" + std::string(ActionKindName(t.system_action.kind));
      for (Slot s : slots) {
        const std::string user_block = "User-" + n + ":" + std::string(SlotName(s));
        ++report.flow_transitions[prev_block + " -> " + user_block];
        ++report.flow_transitions[user_block + " -> " + system_block];
      }
      prev_block = system_block;
    }
    mentioned += mentions.size();
    if (!d.turns.empty()) {
      std::string combo;
      for (AttributeValue v : d.turns.back().gold_belief.Flatten()) {
        if (!combo.empty()) combo += " + ";
        combo += v.text();
      }
      ++report.combination_frequency[combo];
    }
  }
  const double n = static_cast<double>(dialogues.size());
  report.total_utterances = 2 * turns;
  report.avg_turns = static_cast<double>(turns) / n;
  report.avg_utterances = static_cast<double>(report.total_utterances) / n;
  report.avg_user_words =
      turns ? static_cast<double>(user_words) / static_cast<double>(turns) : 0;
  report.avg_system_words =
      turns ? static_cast<double>(system_words) / static_cast<double>(turns) : 0;
  report.avg_attributes_mentioned = static_cast<double>(mentioned) / n;
  return report;
}

nlohmann::json StatsReport::ToJson() const {
  return {{"total_dialogues", total_dialogues},
          {"total_utterances", total_utterances},
          {"avg_turns_per_dialogue", avg_turns},
          {"avg_utterances_per_dialogue", avg_utterances},
          {"avg_words_per_user_turn", avg_user_words},
          {"avg_words_per_system_turn", avg_system_words},
          {"avg_attributes_mentioned_per_dialogue", avg_attributes_mentioned},
          {"attribute_frequency", attribute_frequency},
          {"combination_frequency", combination_frequency},
          {"flow_transitions", flow_transitions}};
}

std::string StatsReport::ToText() const {
  std::ostringstream out;
  char line[128];
  auto row = [&](const char* name, const std::string& value) {
    std::snprintf(line, sizeof(line), "%-42s %12s\n", name, value.c_str());
    out << line;
  };
  auto fixed1 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return std::string(buf);
  };
  row("Total # dialogues", std::to_string(total_dialogues));
  row("Total # utterances", std::to_string(total_utterances));
  row("Avg # turns per dialogue", fixed1(avg_turns));
  row("Avg # utterances per dialogue", fixed1(avg_utterances));
  row("Avg # words per user turns", fixed1(avg_user_words));
  row("Avg # words per system turns", fixed1(avg_system_words));
  row("Avg # attributes mentioned per dialogue", fixed1(avg_attributes_mentioned));

  std::size_t rare = 0;
  for (const auto& [combo, count] : combination_frequency) rare += count < 5;
  if (!combination_frequency.empty()) {
    std::snprintf(line, sizeof(line),
                  "\n%zu attribute combinations, %.1f%% occur fewer than 5 times\n",
                  combination_frequency.size(),
                  100.0 * static_cast<double>(rare) /
                      static_cast<double>(combination_frequency.size()));
    out << line;
  }
  return out.str();
}

}  // namespace dialedit
