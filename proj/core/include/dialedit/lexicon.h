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

#ifndef DIALEDIT_LEXICON_H_
#define DIALEDIT_LEXICON_H_

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialedit/ontology.h"

namespace dialedit {

// Lowercased word tokens; anything other than [a-z0-9'] separates words.
std::vector<std::string> Tokenize(std::string_view text);

struct PhraseMatch {
  AttributeValue value;
  std::size_t begin = 0;  // token offsets, half-open
  std::size_t end = 0;
};

// Phrase -> attribute table scanned leftmost-longest over word tokens, so
// "not smiling" wins over "smiling" and "pink cheeks" over "pink".
class Lexicon {
 public:
  Lexicon() = default;

  void Add(std::string_view phrase, AttributeValue value);

  std::vector<PhraseMatch> Scan(std::string_view text) const;

  // Distinct matched values in order of first appearance.
  std::vector<AttributeValue> Values(std::string_view text) const;

  std::size_t size() const { return size_; }

  // {"<canonical value>": ["synonym", ...], ...}
  static Lexicon FromJson(const nlohmann::json& doc);
  nlohmann::json ToJson() const;

  // Canonical phrase plus hand-listed synonyms for every value.
  static const Lexicon& Keywords(bool include_ood);

 private:
  struct Entry {
    std::vector<std::string> tokens;
    AttributeValue value;
  };
  // first token -> entries sorted by length, longest first
  std::unordered_map<std::string, std::vector<Entry>> by_first_;
  std::size_t size_ = 0;
};

// Synonym table backing Lexicon::Keywords.
const nlohmann::json& KeywordSynonyms();

}  // namespace dialedit

#endif  // DIALEDIT_LEXICON_H_
