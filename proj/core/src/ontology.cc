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

#include "dialedit/ontology.h"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "dialedit/error.h"

namespace dialedit {
namespace {

struct VocabEntry {
  std::string_view text;
  Slot slot;
};

constexpr std::array<VocabEntry, AttributeValue::kTotalCount> kVocabulary = {{
    // In-domain.
    {"smiling", Slot::kExpression},
    {"no smiling", Slot::kExpression},
    {"angry", Slot::kExpression},
    {"sad", Slot::kExpression},
    {"brown hair", Slot::kHairColor},
    {"blond hair", Slot::kHairColor},
    {"black hair", Slot::kHairColor},
    {"gray hair", Slot::kHairColor},
    {"receding hairline", Slot::kHair},
    {"sideburns", Slot::kHair},
    {"bangs", Slot::kHair},
    {"no bangs", Slot::kHair},
    {"mustache", Slot::kHair},
    {"goatee", Slot::kHair},
    {"no beard", Slot::kHair},
    {"no makeup", Slot::kMakeup},
    {"heavy makeup", Slot::kMakeup},
    {"lipstick", Slot::kMakeup},
    {"bushy eyebrows", Slot::kMakeup},
    {"rosy cheeks", Slot::kMakeup},
    {"pale skin", Slot::kMakeup},
    // Out-of-distribution.
    {"disgust", Slot::kExpression},
    {"surprise", Slot::kExpression},
    {"fear", Slot::kExpression},
    {"pink hair", Slot::kHairColor},
    {"purple hair", Slot::kHairColor},
    {"red hair", Slot::kHairColor},
    {"big eyes", Slot::kMakeup},
}};

// Antonym pairs inside multi-valued slots. "no makeup" is handled
// separately: it excludes every other makeup value.
constexpr std::array<std::pair<std::string_view, std::string_view>, 3>
    kAntonymPairs = {{
        {"bangs", "no bangs"},
        {"goatee", "no beard"},
        {"mustache", "no beard"},
    }};

const std::array<AttributeValue, AttributeValue::kTotalCount>& Interned() {
  static const auto values = [] {
    std::array<AttributeValue, AttributeValue::kTotalCount> out{};
    for (int i = 0; i < AttributeValue::kTotalCount; ++i) {
      out[i] = AttributeValue::FromIndex(i);
    }
    return out;
  }();
  return values;
}

int EditDistance(std::string_view a, std::string_view b) {
  std::vector<int> row(b.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      int up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

Error Malformed(std::string message, std::size_t offset) {
  return Error(ErrorCode::kMalformedBelief, message + " at byte " +
                                                std::to_string(offset),
               {{"offset", offset}});
}

}  // namespace

Cardinality SlotCardinality(Slot slot) {
  switch (slot) {
    case Slot::kExpression:
    case Slot::kHairColor:
      return Cardinality::kSingle;
    case Slot::kHair:
    case Slot::kMakeup:
      return Cardinality::kMulti;
  }
  return Cardinality::kSingle;
}

std::string_view SlotName(Slot slot) {
  switch (slot) {
    case Slot::kExpression:
      return "expression";
    case Slot::kHairColor:
      return "hair color";
    case Slot::kHair:
      return "hair";
    case Slot::kMakeup:
      return "makeup";
  }
  return "";
}

std::optional<Slot> ParseSlotName(std::string_view name) {
  const std::string normalized = NormalizeText(name);
  for (Slot slot : kAllSlots) {
    if (normalized == SlotName(slot)) return slot;
  }
  if (normalized == "hairstyle") return Slot::kHair;
  return std::nullopt;
}

AttributeValue AttributeValue::FromIndex(int index) {
  return AttributeValue(static_cast<std::uint8_t>(index));
}

std::string_view AttributeValue::text() const {
  return kVocabulary[index_].text;
}

Slot AttributeValue::slot() const { return kVocabulary[index_].slot; }

std::span<const AttributeValue> InDomainValues() {
  return std::span(Interned()).first(AttributeValue::kInDomainCount);
}

std::span<const AttributeValue> OodValues() {
  return std::span(Interned()).subspan(AttributeValue::kInDomainCount);
}

std::span<const AttributeValue> AllValues() { return Interned(); }

std::vector<AttributeValue> ValuesOf(Slot slot, bool include_ood) {
  std::vector<AttributeValue> out;
  for (AttributeValue v : include_ood ? AllValues() : InDomainValues()) {
    if (v.slot() == slot) out.push_back(v);
  }
  return out;
}

std::string NormalizeText(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(
        static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::vector<AttributeValue> NearestValues(std::string_view text,
                                          int max_distance) {
  const std::string normalized = NormalizeText(text);
  std::vector<std::pair<int, AttributeValue>> scored;
  for (AttributeValue v : AllValues()) {
    int d = EditDistance(normalized, v.text());
    if (d <= max_distance) scored.emplace_back(d, v);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<AttributeValue> out;
  for (const auto& [d, v] : scored) out.push_back(v);
  return out;
}

AttributeValue ParseValue(std::string_view text) {
  const std::string normalized = NormalizeText(text);
  for (AttributeValue v : AllValues()) {
    if (v.text() == normalized) return v;
  }
  nlohmann::json candidates = nlohmann::json::array();
  for (AttributeValue v : NearestValues(normalized)) {
    candidates.push_back(std::string(v.text()));
  }
  throw Error(ErrorCode::kUnknownAttribute,
              "unknown attribute '" + normalized + "'",
              {{"input", normalized}, {"candidates", candidates}});
}

bool Conflicts(AttributeValue a, AttributeValue b) {
  if (a == b || a.slot() != b.slot()) return false;
  if (SlotCardinality(a.slot()) == Cardinality::kSingle) return true;
  if (a.text() == "no makeup" || b.text() == "no makeup") return true;
  for (const auto& [x, y] : kAntonymPairs) {
    if ((a.text() == x && b.text() == y) || (a.text() == y && b.text() == x)) {
      return true;
    }
  }
  return false;
}

bool BeliefState::Contains(AttributeValue value) const {
  const auto& vs = values(value.slot());
  return std::find(vs.begin(), vs.end(), value) != vs.end();
}

bool BeliefState::empty() const { return size() == 0; }

std::size_t BeliefState::size() const {
  std::size_t n = 0;
  for (const auto& vs : entries_) n += vs.size();
  return n;
}

std::vector<AttributeValue> BeliefState::Flatten() const {
  std::vector<AttributeValue> out;
  for (const auto& vs : entries_) out.insert(out.end(), vs.begin(), vs.end());
  return out;
}

BeliefState BeliefState::WithTurnIndex(int turn_index) const {
  BeliefState copy = *this;
  copy.turn_index_ = turn_index;
  return copy;
}

bool BeliefState::SameRequests(const BeliefState& other) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto a = entries_[i];
    auto b = other.entries_[i];
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) return false;
  }
  return true;
}

BeliefState UpdateBelief(const BeliefState& state,
                         std::span<const SlotValue> pairs) {
  BeliefState next = state;
  for (const SlotValue& pair : pairs) {
    if (pair.value.slot() != pair.slot) {
      throw Error(ErrorCode::kSlotMismatch,
                  "value '" + std::string(pair.value.text()) +
                      "' does not belong to slot '" +
                      std::string(SlotName(pair.slot)) + "'",
                  {{"slot", SlotName(pair.slot)}, {"value", pair.value.text()}});
    }
    auto& slot_values = next.entries_[static_cast<std::size_t>(pair.slot)];
    if (std::find(slot_values.begin(), slot_values.end(), pair.value) !=
        slot_values.end()) {
      continue;
    }
    std::erase_if(slot_values, [&](AttributeValue existing) {
      return Conflicts(existing, pair.value);
    });
    slot_values.push_back(pair.value);
  }
  return next;
}

std::string SerializeBelief(const BeliefState& state) {
  std::string out;
  for (Slot slot : kAllSlots) {
    for (AttributeValue v : state.values(slot)) {
      if (!out.empty()) out += ", ";
      out += SlotName(slot);
      out += ": ";
      out += v.text();
    }
  }
  return out;
}

BeliefState ParseBelief(std::string_view text) {
  BeliefState state;
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < text.size() &&
           std::isspace(static_cast<unsigned char>(text[pos]))) {
      ++pos;
    }
  };
  skip_space();
  if (pos == text.size()) return state;

  while (true) {
    skip_space();
    const std::size_t pair_start = pos;
    const std::size_t colon = text.find(':', pos);
    const std::size_t comma = text.find(',', pos);
    if (colon == std::string_view::npos || colon > comma) {
      throw Malformed("expected 'slot: value'", pair_start);
    }
    auto slot = ParseSlotName(text.substr(pos, colon - pos));
    if (!slot) throw Malformed("unknown slot", pair_start);

    pos = colon + 1;
    skip_space();
    const std::size_t value_start = pos;
    const std::size_t value_end = std::min(comma, text.size());
    const std::string_view raw_value = text.substr(pos, value_end - pos);
    if (NormalizeText(raw_value).empty()) {
      throw Malformed("missing value", value_start);
    }
    AttributeValue value;
    try {
      value = ParseValue(raw_value);
    } catch (const Error&) {
      throw Malformed("unknown value", value_start);
    }
    if (value.slot() != *slot) {
      throw Malformed("value does not belong to slot", value_start);
    }
    const SlotValue pair{*slot, value};
    state = UpdateBelief(state, std::span(&pair, 1));

    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return state;
}

std::vector<SlotValue> BeliefDelta(const BeliefState& prev,
                                   const BeliefState& next) {
  std::vector<SlotValue> out;
  for (AttributeValue v : next.Flatten()) {
    if (!prev.Contains(v)) out.push_back(MakeSlotValue(v));
  }
  return out;
}

}  // namespace dialedit
