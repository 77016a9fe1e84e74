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

constexpr std::string_view kParaphraseInstruction =
    "Write diverse sentences to express the given image editing requirements.";
constexpr int kParaphraseMaxTokens = 64;

std::string Trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

}  // namespace

std::string BuildParaphrasePrompt(std::string_view requirement,
                                  std::span<const std::string> examples) {
  std::string prompt(kParaphraseInstruction);
  prompt += "\nRequirements: ";
  prompt += requirement;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    prompt += "\nSentence " + std::to_string(i + 1) + ": " + examples[i];
  }
  prompt += "\nSentence " + std::to_string(examples.size() + 1) + ":";
  return prompt;
}

std::vector<std::string> Paraphrase(LmClient* client,
                                    std::string_view requirement,
                                    std::span<const std::string> examples,
                                    int n,
                                    std::vector<ParaphraseLogEntry>* log) {
  std::vector<std::string> candidates;
  if (n <= 0) return candidates;
  if (client == nullptr) {
    throw Error(ErrorCode::kClientUnavailable, "no language model configured");
  }
  const std::string prompt = BuildParaphrasePrompt(requirement, examples);
  for (int i = 0; i < n; ++i) {
    const std::string raw = client->Complete(prompt, kParaphraseMaxTokens);
    const std::string text = Trim(raw);
    const bool malformed = text.empty() || text.find('\n') != std::string::npos ||
                           text.rfind("Sentence", 0) == 0;
    const bool duplicate =
        std::find(examples.begin(), examples.end(), text) != examples.end() ||
        std::find(candidates.begin(), candidates.end(), text) != candidates.end();
    const bool accepted = !malformed && !duplicate;
    if (accepted) candidates.push_back(text);
    if (log) log->push_back({std::string(requirement), prompt, raw, accepted});
  }
  return candidates;
}

UtteranceBank AugmentBank(const UtteranceBank& bank, LmClient* client, int n,
                          std::vector<ParaphraseLogEntry>* log) {
  UtteranceBank out = bank;
  for (AttributeValue v : InDomainValues()) {
    const auto examples = bank.UserTemplates(v);
    try {
      auto extra = Paraphrase(client, v.text(), examples, n, log);
      auto& templates = out.MutableUserTemplates(v);
      templates.insert(templates.end(), extra.begin(), extra.end());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kClientUnavailable) throw;
      return bank;
    }
  }
  return out;
}

}  // namespace dialedit
