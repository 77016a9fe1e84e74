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

#ifndef DIALEDIT_METRICS_H_
#define DIALEDIT_METRICS_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialedit/backends.h"
#include "dialedit/dialogue.h"
#include "dialedit/editor.h"
#include "dialedit/ontology.h"
#include "dialedit/simulator.h"

namespace dialedit {

struct RelevanceReport {
  std::map<AttributeValue, double> per_attribute;
  double avg_rel = 0;
  double min_rel = 0;

  nlohmann::json ToJson() const;
};

// Cosine between the image embedding and each attribute's canonical text.
// Throws Error(kEmptyAttributeSet).
RelevanceReport AvgMinRel(const JointEmbedder& embedder, const Image& image,
                          std::span<const AttributeValue> attributes);
// Aggregates precomputed cosines the same way.
RelevanceReport AggregateRelevance(std::map<AttributeValue, double> per_attribute);

// Corpus BLEU-4 over lowercased whitespace tokens with brevity penalty.
// Zero n-gram match counts are add-one smoothed. Throws Error(kEmptyCorpus)
// or Error(kLengthMismatch).
double Bleu(std::span<const std::string> hypotheses,
            std::span<const std::string> references);

// Unique n-grams over total n-grams across the corpus, n in {1, 2}.
double DistinctN(std::span<const std::string> corpus, int n);

struct DistributionStats {
  std::size_t dim = 0;
  std::size_t count = 0;
  std::vector<double> mean;
  std::vector<double> covariance;  // dim x dim, row-major

  // Unbiased covariance; needs at least two samples of equal size.
  static DistributionStats FromSamples(std::span<const std::vector<double>> samples);
  nlohmann::json ToJson() const;
  static DistributionStats FromJson(const nlohmann::json& doc);
};

// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). Throws
// Error(kDimensionMismatch) or Error(kNonConvergedSqrt).
double Fid(const DistributionStats& a, const DistributionStats& b);

// Sum over layers of weight * mean over locations of the squared distance
// between channel-normalized features.
double Lpips(const FeatureExtractor& extractor, const Image& a, const Image& b);

struct MetricSummary {
  double mean = 0;
  double std = 0;
};

MetricSummary Summarize(std::span<const double> values);

struct ComparisonRow {
  std::string method;  // "Single-turn" or "Multi-turn"
  std::string input;   // "USR", "Dial" or "USR-T"
  MetricSummary fid;
  MetricSummary lpips;
  MetricSummary min_rel;
  MetricSummary avg_rel;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  int repeats = 0;
  std::size_t dialogues = 0;

  nlohmann::json ToJson() const;
  std::string ToText() const;
};

struct CompareConfig {
  int repeats = 1;
  std::uint64_t seed = 0;
  int jobs = 1;
  EditHyperparams hyper;
};

// Final-turn evaluation of every dialogue under Single-turn/USR,
// Multi-turn/USR, Multi-turn/Dial (linearized dialogue as the prompt) and
// Multi-turn/USR-T (beliefs from the rule-based tracker). FID compares edited
// images with the originals; LPIPS, MinRel and AvgRel are per-dialogue means.
ComparisonTable CompareModes(std::span<const Dialogue> dialogues, const Backends& backends,
                             const CompareConfig& config);

struct DriftOutcome {
  std::string image_id;
  double multi_drift = 0;
  double cascade_drift = 0;
  double multi_min_rel = 0;
  double cascade_min_rel = 0;
};

struct DriftReport {
  std::vector<DriftOutcome> outcomes;
  double drift_win_rate = 0;   // multi_drift < cascade_drift
  double min_rel_win_rate = 0;  // multi_min_rel >= cascade_min_rel

  nlohmann::json ToJson() const;
};

// Replays every dialogue's gold beliefs in both modes on `noisy` backends and
// measures LPIPS of the final image to the clean target: the multi-turn edit
// of the noise-free inversion (`clean` backends) with the final belief.
DriftReport DriftExperiment(std::span<const Dialogue> dialogues, const Backends& noisy,
                            const Backends& clean, const EditHyperparams& hyper,
                            std::uint64_t seed = 0, int jobs = 1);

// Original image of a dialogue for toy backends.
Image SourceImage(const Backends& backends, const ImageRecord& record);

}  // namespace dialedit

#endif  // DIALEDIT_METRICS_H_
