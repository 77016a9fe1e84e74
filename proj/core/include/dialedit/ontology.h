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

#ifndef DIALEDIT_ONTOLOGY_H_
#define DIALEDIT_ONTOLOGY_H_

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dialedit {

// Attribute categories. The declaration order is the canonical
// serialization order.
enum class Slot : std::uint8_t { kExpression, kHairColor, kHair, kMakeup };

inline constexpr std::array<Slot, 4> kAllSlots = {
    Slot::kExpression, Slot::kHairColor, Slot::kHair, Slot::kMakeup};

enum class Cardinality { kSingle, kMulti };

Cardinality SlotCardinality(Slot slot);

// "expression", "hair color", "hair", "makeup".
std::string_view SlotName(Slot slot);

// Accepts the canonical names plus the "hairstyle" alias. Case and
// surrounding whitespace are ignored.
std::optional<Slot> ParseSlotName(std::string_view name);

// One editable attribute. Values are interned: an AttributeValue is a small
// index into the fixed vocabulary (21 in-domain values followed by 7
// out-of-distribution ones), so copies are free and comparisons are exact.
class AttributeValue {
 public:
  static constexpr int kInDomainCount = 21;
  static constexpr int kTotalCount = 28;

  constexpr AttributeValue() = default;

  // Precondition: 0 <= index < kTotalCount.
  static AttributeValue FromIndex(int index);

  int index() const { return index_; }
  std::string_view text() const;
  Slot slot() const;
  bool ood() const { return index_ >= kInDomainCount; }

  friend bool operator==(AttributeValue, AttributeValue) = default;
  friend auto operator<=>(AttributeValue, AttributeValue) = default;

 private:
  explicit constexpr AttributeValue(std::uint8_t index) : index_(index) {}
  std::uint8_t index_ = 0;
};

std::span<const AttributeValue> InDomainValues();
std::span<const AttributeValue> OodValues();
std::span<const AttributeValue> AllValues();
std::vector<AttributeValue> ValuesOf(Slot slot, bool include_ood = false);

// Lowercases, trims and collapses internal whitespace.
std::string NormalizeText(std::string_view text);

// Maps free text onto the vocabulary. Throws Error(kUnknownAttribute) whose
// detail lists vocabulary entries within edit distance 2.
AttributeValue ParseValue(std::string_view text);

// Nearest vocabulary entries (edit distance <= max_distance) of the
// normalized input, closest first.
std::vector<AttributeValue> NearestValues(std::string_view text,
                                          int max_distance = 2);

// True when `a` and `b` cannot both be present in a belief state: same
// single-valued slot, or a listed antonym pair in a multi-valued slot.
bool Conflicts(AttributeValue a, AttributeValue b);

struct SlotValue {
  Slot slot;
  AttributeValue value;

  friend bool operator==(const SlotValue&, const SlotValue&) = default;
};

inline SlotValue MakeSlotValue(AttributeValue value) {
  return {value.slot(), value};
}

// The cumulative user requests of a dialogue.
//
// Values inside a slot keep insertion order. Equality compares slot contents
// in order and ignores turn_index; use SameRequests for order-insensitive
// comparison.
class BeliefState {
 public:
  BeliefState() = default;

  const std::vector<AttributeValue>& values(Slot slot) const {
    return entries_[static_cast<std::size_t>(slot)];
  }
  bool Contains(AttributeValue value) const;
  bool empty() const;
  std::size_t size() const;

  // Every value in serialization order.
  std::vector<AttributeValue> Flatten() const;

  int turn_index() const { return turn_index_; }
  BeliefState WithTurnIndex(int turn_index) const;

  // Set equality per slot.
  bool SameRequests(const BeliefState& other) const;

  friend bool operator==(const BeliefState& a, const BeliefState& b) {
    return a.entries_ == b.entries_;
  }

 private:
  friend BeliefState UpdateBelief(const BeliefState& state,
                                  std::span<const SlotValue> pairs);

  std::array<std::vector<AttributeValue>, kAllSlots.size()> entries_;
  int turn_index_ = 0;
};

// Folds `pairs` into `state`. Single-valued slots are overwritten; in
// multi-valued slots conflicting values are removed before the new value is
// appended. Re-applying a present value is a no-op. Throws
// Error(kSlotMismatch) when a value does not belong to its slot.
BeliefState UpdateBelief(const BeliefState& state,
                         std::span<const SlotValue> pairs);

// "expression: smiling, hair color: black hair, hair: bangs"
std::string SerializeBelief(const BeliefState& state);

// Inverse of SerializeBelief. Throws Error(kMalformedBelief) with the byte
// offset of the first violation in detail["offset"].
BeliefState ParseBelief(std::string_view text);

// Values in `next` that are absent from `prev`, in serialization order.
std::vector<SlotValue> BeliefDelta(const BeliefState& prev,
                                   const BeliefState& next);

}  // namespace dialedit

#endif  // DIALEDIT_ONTOLOGY_H_
