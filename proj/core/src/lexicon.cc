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

#include "dialedit/lexicon.h"

#include <algorithm>
#include <cctype>

#include "dialedit/error.h"

namespace dialedit {

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) || c == '\'') {
      current.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

void Lexicon::Add(std::string_view phrase, AttributeValue value) {
  std::vector<std::string> tokens = Tokenize(phrase);
  if (tokens.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty lexicon phrase");
  }
  auto& bucket = by_first_[tokens.front()];
  for (const Entry& e : bucket) {
    if (e.tokens == tokens) {
      if (e.value != value) {
        throw Error(ErrorCode::kInvalidArgument,
                    "phrase '" + std::string(phrase) +
                        "' mapped to two different values");
      }
      return;
    }
  }
  bucket.push_back({std::move(tokens), value});
  std::stable_sort(bucket.begin(), bucket.end(),
                   [](const Entry& a, const Entry& b) {
                     return a.tokens.size() > b.tokens.size();
                   });
  ++size_;
}

std::vector<PhraseMatch> Lexicon::Scan(std::string_view text) const {
  const std::vector<std::string> tokens = Tokenize(text);
  std::vector<PhraseMatch> matches;
  std::size_t i = 0;
  while (i < tokens.size()) {
    auto it = by_first_.find(tokens[i]);
    const Entry* hit = nullptr;
    if (it != by_first_.end()) {
      for (const Entry& e : it->second) {
        if (i + e.tokens.size() <= tokens.size() &&
            std::equal(e.tokens.begin(), e.tokens.end(), tokens.begin() + i)) {
          hit = &e;
          break;
        }
      }
    }
    if (hit) {
      matches.push_back({hit->value, i, i + hit->tokens.size()});
      i += hit->tokens.size();
    } else {
      ++i;
    }
  }
  return matches;
}

std::vector<AttributeValue> Lexicon::Values(std::string_view text) const {
  std::vector<AttributeValue> out;
  for (const PhraseMatch& m : Scan(text)) {
    if (std::find(out.begin(), out.end(), m.value) == out.end()) {
      out.push_back(m.value);
    }
  }
  return out;
}

Lexicon Lexicon::FromJson(const nlohmann::json& doc) {
  Lexicon lexicon;
  for (const auto& [key, phrases] : doc.items()) {
    const AttributeValue value = ParseValue(key);
    lexicon.Add(value.text(), value);
    for (const auto& phrase : phrases) {
      lexicon.Add(phrase.get<std::string>(), value);
    }
  }
  return lexicon;
}

nlohmann::json Lexicon::ToJson() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [first, entries] : by_first_) {
    for (const Entry& e : entries) {
      std::string phrase;
      for (const auto& t : e.tokens) {
        if (!phrase.empty()) phrase += ' ';
        phrase += t;
      }
      doc[std::string(e.value.text())].push_back(phrase);
    }
  }
  return doc;
}

const nlohmann::json& KeywordSynonyms() {
  static const nlohmann::json table = nlohmann::json::parse(R"({
    "smiling": ["smile", "smiles", "smiley", "grin", "grinning", "beaming"],
    "no smiling": ["not smiling", "stop smiling", "no smile", "without a smile",
                   "without smiling", "neutral expression",
                   "serious expression", "straight face", "non smiling"],
    "angry": ["anger", "furious", "mad"],
    "sad": ["sadness", "unhappy", "gloomy", "sorrowful"],
    "brown hair": ["brown", "brunette"],
    "blond hair": ["blond", "blonde", "blonde hair"],
    "black hair": ["black"],
    "gray hair": ["gray", "grey", "grey hair", "silver hair"],
    "receding hairline": ["receding"],
    "sideburns": ["sideburn"],
    "bangs": ["fringe"],
    "no bangs": ["without bangs", "remove the bangs", "remove bangs",
                 "no fringe", "without a fringe"],
    "mustache": ["moustache"],
    "goatee": [],
    "no beard": ["without beard", "without a beard", "clean shaven",
                 "beardless"],
    "no makeup": ["without makeup", "remove the makeup", "remove makeup",
                  "makeup free", "bare face", "natural look"],
    "heavy makeup": ["lots of makeup", "full makeup", "dramatic makeup"],
    "lipstick": [],
    "bushy eyebrows": ["bushy brows", "thick eyebrows", "thicker eyebrows"],
    "rosy cheeks": ["rosy", "blush", "blushing", "pink cheeks"],
    "pale skin": ["pale", "paler", "fair skin", "porcelain skin"],
    "disgust": ["disgusted", "disgusting"],
    "surprise": ["surprised", "astonished"],
    "fear": ["fearful", "scared", "afraid", "frightened"],
    "pink hair": ["pink"],
    "purple hair": ["purple", "violet hair"],
    "red hair": ["redhead", "ginger hair", "ginger"],
    "big eyes": ["bigger eyes", "larger eyes"]
  })");
  return table;
}

const Lexicon& Lexicon::Keywords(bool include_ood) {
  static const auto build = [](bool ood) {
    nlohmann::json subset = nlohmann::json::object();
    for (const auto& [key, phrases] : KeywordSynonyms().items()) {
      if (ood || !ParseValue(key).ood()) subset[key] = phrases;
    }
    return FromJson(subset);
  };
  static const Lexicon in_domain = build(false);
  static const Lexicon with_ood = build(true);
  return include_ood ? with_ood : in_domain;
}

}  // namespace dialedit
