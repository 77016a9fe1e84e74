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

#include "dialedit/metrics.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <set>

#include <Eigen/Dense>

#include "dialedit/error.h"
#include "dialedit/random.h"

namespace dialedit {
namespace {

std::vector<std::string> LowerTokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::map<std::vector<std::string>, std::size_t> NgramCounts(
    const std::vector<std::string>& tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                      tokens.begin() + static_cast<long>(i + n))];
  }
  return counts;
}

nlohmann::json SummaryToJson(const MetricSummary& s) {
  return {{"mean", s.mean}, {"std", s.std}};
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; results in order.
template <typename T, typename Fn>
std::vector<T> ParallelMap(std::size_t n, int jobs, Fn fn) {
  std::vector<T> out(n);
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::future<void>> futures;
  for (std::size_t w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < n; i += workers) out[i] = fn(i);
    }));
  }
  for (auto& f : futures) f.get();
  return out;
}

std::vector<AttributeValue> FinalAttributes(const Dialogue& d) {
  return d.turns.empty() ? std::vector<AttributeValue>{} : d.turns.back().gold_belief.Flatten();
}

}  // namespace

nlohmann::json RelevanceReport::ToJson() const {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [v, c] : per_attribute) per[std::string(v.text())] = c;
  return {{"per_attribute", per}, {"avg_rel", avg_rel}, {"min_rel", min_rel}};
}

RelevanceReport AggregateRelevance(std::map<AttributeValue, double> per_attribute) {
  if (per_attribute.empty()) {
    throw Error(ErrorCode::kEmptyAttributeSet, "relevance needs at least one attribute");
  }
  RelevanceReport report;
  report.per_attribute = std::move(per_attribute);
  double sum = 0;
  report.min_rel = std::numeric_limits<double>::infinity();
  for (const auto& [v, c] : report.per_attribute) {
    sum += c;
    report.min_rel = std::min(report.min_rel, c);
  }
  report.avg_rel = sum / static_cast<double>(report.per_attribute.size());
  // Guard the ordering against rounding in the mean.
  report.avg_rel = std::max(report.avg_rel, report.min_rel);
  return report;
}

RelevanceReport AvgMinRel(const JointEmbedder& embedder, const Image& image,
                          std::span<const AttributeValue> attributes) {
  if (attributes.empty()) {
    throw Error(ErrorCode::kEmptyAttributeSet, "relevance needs at least one attribute");
  }
  const std::vector<double> e = embedder.EmbedImage(image);
  std::map<AttributeValue, double> per;
  for (AttributeValue v : attributes) per[v] = Dot(e, embedder.EmbedText(v.text()));
  return AggregateRelevance(std::move(per));
}

double Bleu(std::span<const std::string> hypotheses, std::span<const std::string> references) {
  if (hypotheses.empty()) throw Error(ErrorCode::kEmptyCorpus, "BLEU needs a non-empty corpus");
  if (hypotheses.size() != references.size()) {
    throw Error(ErrorCode::kLengthMismatch, "hypothesis and reference counts differ",
                {{"hypotheses", hypotheses.size()}, {"references", references.size()}});
  }
  constexpr std::size_t kMaxOrder = 4;
  std::array<double, kMaxOrder> matches{};
  std::array<double, kMaxOrder> totals{};
  double hyp_len = 0;
  double ref_len = 0;
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    const auto hyp = LowerTokens(hypotheses[k]);
    const auto ref = LowerTokens(references[k]);
    hyp_len += static_cast<double>(hyp.size());
    ref_len += static_cast<double>(ref.size());
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      const auto hyp_counts = NgramCounts(hyp, n);
      const auto ref_counts = NgramCounts(ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        totals[n - 1] += static_cast<double>(count);
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) {
          matches[n - 1] += static_cast<double>(std::min(count, it->second));
        }
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_precision = 0;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    const double p = matches[n] > 0 ? matches[n] / totals[n] : 1.0 / (totals[n] + 1.0);
    log_precision += std::log(p) / static_cast<double>(kMaxOrder);
  }
  const double brevity = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
  return brevity * std::exp(log_precision);
}

double DistinctN(std::span<const std::string> corpus, int n) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "distinct-n needs a non-empty corpus");
  if (n != 1 && n != 2) throw Error(ErrorCode::kInvalidArgument, "distinct-n supports n = 1 or 2");
  std::set<std::vector<std::string>> unique;
  std::size_t total = 0;
  for (const auto& text : corpus) {
    for (const auto& [gram, count] : NgramCounts(LowerTokens(text), static_cast<std::size_t>(n))) {
      unique.insert(gram);
      total += count;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

DistributionStats DistributionStats::FromSamples(std::span<const std::vector<double>> samples) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "distribution statistics need at least two samples");
  }
  DistributionStats s;
  s.dim = samples.front().size();
  s.count = samples.size();
  s.mean.assign(s.dim, 0.0);
  for (const auto& x : samples) {
    if (x.size() != s.dim) throw Error(ErrorCode::kDimensionMismatch, "samples differ in size");
    for (std::size_t i = 0; i < s.dim; ++i) s.mean[i] += x[i];
  }
  for (double& m : s.mean) m /= static_cast<double>(s.count);
  s.covariance.assign(s.dim * s.dim, 0.0);
  for (const auto& x : samples) {
    for (std::size_t i = 0; i < s.dim; ++i) {
      for (std::size_t j = 0; j < s.dim; ++j) {
        s.covariance[i * s.dim + j] += (x[i] - s.mean[i]) * (x[j] - s.mean[j]);
      }
    }
  }
  for (double& c : s.covariance) c /= static_cast<double>(s.count - 1);
  return s;
}

nlohmann::json DistributionStats::ToJson() const {
  return {{"dim", dim}, {"count", count}, {"mean", mean}, {"covariance", covariance}};
}

DistributionStats DistributionStats::FromJson(const nlohmann::json& doc) {
  DistributionStats s;
  s.mean = doc.at("mean").get<std::vector<double>>();
  s.dim = doc.value("dim", s.mean.size());
  s.count = doc.value("count", std::size_t{2});
  s.covariance = doc.at("covariance").get<std::vector<double>>();
  if (s.mean.size() != s.dim || s.covariance.size() != s.dim * s.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "mean/covariance sizes do not match dim");
  }
  return s;
}

double Fid(const DistributionStats& a, const DistributionStats& b) {
  if (a.dim != b.dim || a.mean.size() != b.mean.size() ||
      a.covariance.size() != a.dim * a.dim || b.covariance.size() != b.dim * b.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "statistics differ in dimension",
                {{"a", a.dim}, {"b", b.dim}});
  }
  using Matrix = Eigen::MatrixXd;
  const auto n = static_cast<Eigen::Index>(a.dim);
  const Matrix sa = Eigen::Map<const Matrix>(a.covariance.data(), n, n);
  const Matrix sb = Eigen::Map<const Matrix>(b.covariance.data(), n, n);
  auto clipped_eigen = [](const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (m + m.transpose()));
    if (solver.info() != Eigen::Success) {
      throw Error(ErrorCode::kNonConvergedSqrt, "eigendecomposition did not converge");
    }
    Eigen::VectorXd values = solver.eigenvalues();
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (values(i) < -1e-8 * scale) {
        throw Error(ErrorCode::kNonConvergedSqrt, "matrix is not positive semidefinite",
                    {{"eigenvalue", values(i)}});
      }
      values(i) = std::max(values(i), 0.0);
    }
    return std::pair{solver.eigenvectors(), values};
  };
  // (Sa Sb)^(1/2) has the trace of (Sa^(1/2) Sb Sa^(1/2))^(1/2).
  const auto [va, la] = clipped_eigen(sa);
  const Matrix root_a = va * la.cwiseSqrt().asDiagonal() * va.transpose();
  const auto [vc, lc] = clipped_eigen(root_a * sb * root_a);
  const double trace_sqrt = lc.cwiseSqrt().sum();

  double mean_term = 0;
  for (std::size_t i = 0; i < a.dim; ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_term += d * d;
  }
  const double value = mean_term + sa.trace() + sb.trace() - 2.0 * trace_sqrt;
  return std::max(value, 0.0);
}

double Lpips(const FeatureExtractor& extractor, const Image& a, const Image& b) {
  std::vector<FeatureMap> fa;
  std::vector<FeatureMap> fb;
  std::vector<double> weights;
  try {
    fa = extractor.Layers(a);
    fb = extractor.Layers(b);
    weights = extractor.LayerWeights();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kBackendFailure, std::string("feature extractor failed: ") + e.what());
  }
  if (fa.size() != fb.size() || fa.size() != weights.size()) {
    throw Error(ErrorCode::kBackendFailure, "feature extractor returned inconsistent layers");
  }
  constexpr double kEps = 1e-10;
  double total = 0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    const FeatureMap& x = fa[l];
    const FeatureMap& y = fb[l];
    if (x.locations != y.locations || x.channels != y.channels ||
        x.values.size() != x.locations * x.channels || y.values.size() != x.values.size()) {
      throw Error(ErrorCode::kBackendFailure, "feature maps differ in shape");
    }
    if (x.locations == 0) continue;
    double layer = 0;
    for (std::size_t s = 0; s < x.locations; ++s) {
      const double* px = x.values.data() + s * x.channels;
      const double* py = y.values.data() + s * y.channels;
      double nx = 0, ny = 0;
      for (std::size_t c = 0; c < x.channels; ++c) {
        nx += px[c] * px[c];
        ny += py[c] * py[c];
      }
      nx = std::sqrt(nx) + kEps;
      ny = std::sqrt(ny) + kEps;
      for (std::size_t c = 0; c < x.channels; ++c) {
        const double d = px[c] / nx - py[c] / ny;
        layer += d * d;
      }
    }
    total += weights[l] * layer / static_cast<double>(x.locations);
  }
  return total;
}

MetricSummary Summarize(std::span<const double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double var = 0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / static_cast<double>(values.size() - 1));
  }
  return s;
}

nlohmann::json ComparisonTable::ToJson() const {
  nlohmann::json out = {{"repeats", repeats}, {"dialogues", dialogues}, {"rows", nlohmann::json::array()}};
  for (const auto& r : rows) {
    out["rows"].push_back({{"method", r.method},
                           {"input", r.input},
                           {"fid", SummaryToJson(r.fid)},
                           {"lpips", SummaryToJson(r.lpips)},
                           {"min_rel", SummaryToJson(r.min_rel)},
                           {"avg_rel", SummaryToJson(r.avg_rel)}});
  }
  return out;
}

std::string ComparisonTable::ToText() const {
  auto cell = [](const MetricSummary& s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f ± %.3f", s.mean, s.std);
    std::string text(buf);
    const std::size_t width = text.size() - 1;
    return text + std::string(width < 18 ? 18 - width : 0, ' ');
  };
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-6s %-18s %-18s %-18s %s\n", "Method", "Input", "FID",
                "LPIPS", "MinRel", "AvgRel");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-12s %-6s ", r.method.c_str(), r.input.c_str());
    std::string row = line + cell(r.fid) + " " + cell(r.lpips) + " " + cell(r.min_rel) + " " +
                      cell(r.avg_rel);
    row.erase(row.find_last_not_of(' ') + 1);
    out += row + "\n";
  }
  return out;
}

Image SourceImage(const Backends& backends, const ImageRecord& record) {
  const std::string& ref = record.image_ref.empty() ? record.image_id : record.image_ref;
  return ToyCatalogImage(*backends.generator, ref);
}

ComparisonTable CompareModes(std::span<const Dialogue> dialogues, const Backends& backends,
                             const CompareConfig& config) {
  if (dialogues.empty()) throw Error(ErrorCode::kEmptyCorpus, "no dialogues to compare");
  if (config.repeats < 1) throw Error(ErrorCode::kInvalidArgument, "repeats must be >= 1");
  struct Cell {
    Image edited;
    double lpips = 0;
    RelevanceReport relevance;
  };
  constexpr int kRows = 4;
  const std::array<std::pair<const char*, const char*>, kRows> names = {
      std::pair{"Single-turn", "USR"}, std::pair{"Multi-turn", "USR"},
      std::pair{"Multi-turn", "Dial"}, std::pair{"Multi-turn", "USR-T"}};

  std::array<std::array<std::vector<double>, 4>, kRows> samples;  // row -> metric -> repeat
  for (int r = 0; r < config.repeats; ++r) {
    const std::uint64_t repeat_seed = DeriveSeed(config.seed, static_cast<std::uint64_t>(r));
    auto per_dialogue = ParallelMap<std::array<Cell, kRows>>(
        dialogues.size(), config.jobs, [&](std::size_t i) {
          const Dialogue& d = dialogues[i];
          if (d.turns.empty()) throw Error(ErrorCode::kInvalidArgument, "dialogue has no turns");
          const Image original = SourceImage(backends, d.record);
          const std::uint64_t seed = DeriveSeed(repeat_seed, Fnv1a(d.record.image_id));
          std::array<Cell, kRows> cells;

          EditState cascade{original, {}, {}, seed};
          for (const DialogueTurn& t : d.turns) {
            if (!t.gold_belief.empty()) {
              EditTurn(cascade, t.gold_belief, EditMode::kCascade, backends, config.hyper);
            }
          }
          cells[0].edited = cascade.current();

          const BeliefState& gold = d.turns.back().gold_belief;
          cells[1].edited = gold.empty() ? original
                                         : Edit(backends, original, BuildPrompt(gold),
                                                config.hyper, seed).image;

          const auto history = DialogueHistory(d, static_cast<int>(d.turns.size()));
          cells[2].edited =
              Edit(backends, original, LinearizeHistory(history, d.record.caption),
                   config.hyper, seed).image;

          RuleBasedTracker tracker;
          const BeliefState tracked = tracker.Track(history);
          cells[3].edited = tracked.empty() ? original
                                            : Edit(backends, original, BuildPrompt(tracked),
                                                   config.hyper, seed).image;

          const auto attrs = FinalAttributes(d);
          for (auto& c : cells) {
            c.lpips = Lpips(*backends.features, original, c.edited);
            if (!attrs.empty()) c.relevance = AvgMinRel(*backends.joint, c.edited, attrs);
          }
          return cells;
        });

    std::vector<std::vector<double>> original_features;
    for (const Dialogue& d : dialogues) {
      original_features.push_back(backends.features->Features(SourceImage(backends, d.record)));
    }
    const auto original_stats = DistributionStats::FromSamples(original_features);
    for (int row = 0; row < kRows; ++row) {
      std::vector<std::vector<double>> edited_features;
      std::vector<double> lp, minr, avgr;
      for (const auto& cells : per_dialogue) {
        edited_features.push_back(backends.features->Features(cells[row].edited));
        lp.push_back(cells[row].lpips);
        if (!cells[row].relevance.per_attribute.empty()) {
          minr.push_back(cells[row].relevance.min_rel);
          avgr.push_back(cells[row].relevance.avg_rel);
        }
      }
      samples[row][0].push_back(Fid(DistributionStats::FromSamples(edited_features), original_stats));
      samples[row][1].push_back(Summarize(lp).mean);
      samples[row][2].push_back(Summarize(minr).mean);
      samples[row][3].push_back(Summarize(avgr).mean);
    }
  }

  ComparisonTable table;
  table.repeats = config.repeats;
  table.dialogues = dialogues.size();
  for (int row = 0; row < kRows; ++row) {
    table.rows.push_back({names[row].first, names[row].second, Summarize(samples[row][0]),
                          Summarize(samples[row][1]), Summarize(samples[row][2]),
                          Summarize(samples[row][3])});
  }
  return table;
}

nlohmann::json DriftReport::ToJson() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& o : outcomes) {
    rows.push_back({{"image_id", o.image_id},
                    {"multi_drift", o.multi_drift},
                    {"cascade_drift", o.cascade_drift},
                    {"multi_min_rel", o.multi_min_rel},
                    {"cascade_min_rel", o.cascade_min_rel}});
  }
  return {{"drift_win_rate", drift_win_rate},
          {"min_rel_win_rate", min_rel_win_rate},
          {"outcomes", rows}};
}

DriftReport DriftExperiment(std::span<const Dialogue> dialogues, const Backends& noisy,
                            const Backends& clean, const EditHyperparams& hyper,
                            std::uint64_t seed, int jobs) {
  if (dialogues.empty()) throw Error(ErrorCode::kEmptyCorpus, "no dialogues for the drift experiment");
  DriftReport report;
  report.outcomes = ParallelMap<DriftOutcome>(dialogues.size(), jobs, [&](std::size_t i) {
    const Dialogue& d = dialogues[i];
    const auto attrs = FinalAttributes(d);
    if (attrs.empty()) throw Error(ErrorCode::kEmptyBelief, "dialogue ends with an empty belief");
    const Image original = SourceImage(noisy, d.record);
    const std::uint64_t dialogue_seed = DeriveSeed(seed, Fnv1a(d.record.image_id));

    const Image target =
        Edit(clean, original, BuildPrompt(d.turns.back().gold_belief), hyper, dialogue_seed).image;

    DriftOutcome o;
    o.image_id = d.record.image_id;
    EditState multi{original, {}, {}, dialogue_seed};
    EditState cascade{original, {}, {}, dialogue_seed};
    for (const DialogueTurn& t : d.turns) {
      if (t.gold_belief.empty()) continue;
      EditTurn(multi, t.gold_belief, EditMode::kMultiTurn, noisy, hyper);
      EditTurn(cascade, t.gold_belief, EditMode::kCascade, noisy, hyper);
    }
    o.multi_drift = Lpips(*noisy.features, multi.current(), target);
    o.cascade_drift = Lpips(*noisy.features, cascade.current(), target);
    o.multi_min_rel = AvgMinRel(*noisy.joint, multi.current(), attrs).min_rel;
    o.cascade_min_rel = AvgMinRel(*noisy.joint, cascade.current(), attrs).min_rel;
    return o;
  });
  double drift_wins = 0, rel_wins = 0;
  for (const auto& o : report.outcomes) {
    drift_wins += o.multi_drift < o.cascade_drift;
    rel_wins += o.multi_min_rel >= o.cascade_min_rel;
  }
  const double n = static_cast<double>(report.outcomes.size());
  report.drift_win_rate = drift_wins / n;
  report.min_rel_win_rate = rel_wins / n;
  return report;
}

}  // namespace dialedit
