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

#include "cli.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "dialedit/dialogue.h"
#include "dialedit/editor.h"
#include "dialedit/error.h"
#include "dialedit/metrics.h"
#include "dialedit/service.h"
#include "dialedit/simulator.h"

namespace dialedit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kBackendUrlEnv = "CHATEDIT_BACKEND_URL";

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  std::string backend;
  bool json_output = false;
  int jobs = 1;
};

struct Resolved {
  EditHyperparams hyper;
  json backend = {{"kind", "toy"}, {"noise_sigma", 0.0}, {"seed", 0}};
  std::string tracker = "rule";
  std::string responder = "template";
  std::uint64_t seed = 0;
  std::string out;
  int jobs = 1;

  json ToJson() const {
    json doc = hyper.ToJson();
    doc["backend"] = backend;
    doc["tracker"] = {{"kind", tracker}};
    doc["responder"] = {{"kind", responder}};
    doc["seed"] = seed;
    doc["out"] = out;
    doc["jobs"] = jobs;
    return doc;
  }
};

// Value at a dotted key, given either flat ("backend.kind") or nested.
const json* Lookup(const json& doc, const std::string& key) {
  if (doc.contains(key)) return &doc[key];
  const json* node = &doc;
  std::stringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part)) return nullptr;
    node = &(*node)[part];
  }
  return node;
}

json ReadJsonPath(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path + ": " + e.what());
  }
}

Resolved Resolve(const Globals& g) {
  Resolved r;
  json doc = json::object();
  if (!g.config_path.empty()) doc = ReadJsonPath(g.config_path);
  json hyper = json::object();
  for (const char* key : {"lambda_l2", "lambda_id", "steps", "learning_rate"}) {
    if (const json* v = Lookup(doc, key)) hyper[key] = *v;
  }
  r.hyper = EditHyperparams::FromJson(hyper);
  for (const char* key : {"kind", "noise_sigma", "seed", "max_concurrency"}) {
    if (const json* v = Lookup(doc, std::string("backend.") + key)) r.backend[key] = *v;
  }
  if (const json* v = Lookup(doc, "tracker.kind")) r.tracker = v->get<std::string>();
  if (const json* v = Lookup(doc, "responder.kind")) r.responder = v->get<std::string>();
  if (!g.backend.empty()) r.backend["kind"] = g.backend;
  r.seed = g.seed;
  r.out = g.out;
  r.jobs = std::max(1, g.jobs);
  return r;
}

std::shared_ptr<LmClient> ClientFromEnv() {
  const char* address = std::getenv(kBackendUrlEnv);
  if (address == nullptr || *address == '\0') return nullptr;
  return std::shared_ptr<LmClient>(MakeLmClient(address));
}

std::shared_ptr<LmClient> RequireClient(const std::string& what) {
  auto client = ClientFromEnv();
  if (!client) {
    throw Error(ErrorCode::kBackendUnavailable,
                what + " needs a model process; set " + std::string(kBackendUrlEnv));
  }
  return client;
}

TrackerFactory MakeTrackerFactory(const std::string& kind) {
  const auto parsed = ParseTrackerKind(kind);
  if (!parsed) throw Error(ErrorCode::kInvalidArgument, "unknown tracker '" + kind + "'");
  switch (*parsed) {
    case TrackerKind::kRuleBased:
      return [] { return std::make_unique<RuleBasedTracker>(); };
    case TrackerKind::kLmAdapter: {
      auto client = RequireClient("the lm tracker");
      return [client] { return std::make_unique<LmTracker>(client); };
    }
    case TrackerKind::kQaAdapter: {
      auto client = RequireClient("the qa tracker");
      return [client] { return std::make_unique<QaTracker>(client); };
    }
  }
  return nullptr;
}

ResponderFactory MakeResponderFactory(const std::string& kind) {
  const auto parsed = ParseResponderKind(kind);
  if (!parsed) throw Error(ErrorCode::kInvalidArgument, "unknown responder '" + kind + "'");
  if (*parsed == ResponderKind::kTemplate) {
    return [] { return std::make_unique<TemplateResponder>(); };
  }
  auto client = RequireClient("the lm responder");
  return [client] { return std::make_unique<LmResponder>(client); };
}

// A split file, or a directory holding train/valid/test.json.
std::vector<Dialogue> LoadDialogues(const std::string& path) {
  if (!fs::is_directory(path)) return ReadSplit(path);
  std::vector<Dialogue> all;
  for (const char* split : {"train.json", "valid.json", "test.json"}) {
    const fs::path file = fs::path(path) / split;
    if (!fs::exists(file)) continue;
    auto part = ReadSplit(file.string());
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (all.empty()) throw Error(ErrorCode::kInvalidArgument, "no dataset splits under " + path);
  return all;
}

std::vector<std::string> ReadLines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot read " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

DistributionStats LoadStats(const std::string& path) {
  const json doc = ReadJsonPath(path);
  if (doc.is_array()) return DistributionStats::FromSamples(doc.get<std::vector<std::vector<double>>>());
  return DistributionStats::FromJson(doc);
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kInvalidArgument, "cannot create " + dir);
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path.string());
  out << text;
}

char Format(const char* fmt, double v, std::string* into) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  *into += buf;
  return 0;
}

std::string Fixed(double v) {
  std::string s;
  Format("%.3f", v, &s);
  return s;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("dialedit", sink);
  logger->set_pattern("[%l] %v");
  auto previous_logger = spdlog::default_logger();
  spdlog::set_default_logger(logger);
  struct Restore {
    std::shared_ptr<spdlog::logger> logger;
    ~Restore() { spdlog::set_default_logger(logger); }
  } restore{previous_logger};

  CLI::App app{"Dialogue-driven facial image editing toolkit", "dialedit"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--backend", g.backend, "Editing backend kind (toy)");
  app.add_flag("--json", g.json_output, "Machine-readable output");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Simulate a dialogue dataset from image records");
  std::string records_path;
  std::size_t n = 12000;
  std::string split;
  int paraphrases = 0;
  std::string review_path;
  simulate->add_option("--records", records_path, "Image records (JSON array or JSON lines)");
  simulate->add_option("--n", n, "Number of synthetic records when --records is absent");
  simulate->add_option("--split", split, "train,valid,test sizes (default 10:1:1 of the records)");
  simulate->add_option("--paraphrase", paraphrases, "Paraphrases per template via the model process");
  simulate->add_option("--review", review_path, "Also write dialogues as JSON lines for review");

  // stats
  auto* stats = app.add_subcommand("stats", "Dataset statistics");
  std::string data_path;
  stats->add_option("--data", data_path, "Split file or dataset directory")->required();

  // track-eval
  auto* track_eval = app.add_subcommand("track-eval", "Joint accuracy of a tracker");
  std::string tracker_kind;
  track_eval->add_option("--data", data_path, "Split file or dataset directory")->required();
  track_eval->add_option("--tracker", tracker_kind, "rule | lm | qa");

  // respond-eval
  auto* respond_eval = app.add_subcommand("respond-eval", "BLEU and Distinct-n of a responder");
  std::string responder_kind;
  respond_eval->add_option("--data", data_path, "Split file or dataset directory")->required();
  respond_eval->add_option("--responder", responder_kind, "template | lm");

  // edit
  auto* edit = app.add_subcommand("edit", "Edit the image of one dialogue turn by turn");
  std::string mode_name = "multi-turn";
  std::size_t index = 0;
  edit->add_option("--data", data_path, "Split file or dataset directory")->required();
  edit->add_option("--index", index, "Dialogue index in the file");
  edit->add_option("--mode", mode_name, "multi-turn | cascade");

  // compare
  auto* compare = app.add_subcommand("compare", "Compare editing modes on a dataset");
  int repeats = 3;
  std::size_t limit = 0;
  bool drift = false;
  compare->add_option("--data", data_path, "Split file or dataset directory")->required();
  compare->add_option("--repeats", repeats, "Seeds per cell")->check(CLI::PositiveNumber);
  compare->add_option("--limit", limit, "Use only the first N dialogues");
  compare->add_flag("--drift", drift, "Run the multi-turn vs cascade drift experiment instead");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the session service over HTTP");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string store = "sessions";
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--store", store, "Session store directory");
  serve->add_option("--records", records_path, "Image catalog (defaults to 100 toy records)");

  // metric
  auto* metric = app.add_subcommand("metric", "Compute one metric on files");
  metric->require_subcommand(1);
  std::string hyp_path, ref_path, a_path, b_path;
  int order = 1;
  auto* bleu = metric->add_subcommand("bleu", "Corpus BLEU-4 of line-aligned files");
  bleu->add_option("--hyp", hyp_path)->required();
  bleu->add_option("--ref", ref_path)->required();
  auto* distinct = metric->add_subcommand("distinct", "Distinct-n of a file of responses");
  distinct->add_option("--corpus", hyp_path)->required();
  distinct->add_option("--n", order)->check(CLI::Range(1, 2));
  auto* fid = metric->add_subcommand("fid", "FID of two statistics or sample files");
  fid->add_option("--a", a_path)->required();
  fid->add_option("--b", b_path)->required();
  auto* lpips = metric->add_subcommand("lpips", "Toy LPIPS of two image files");
  lpips->add_option("--a", a_path)->required();
  lpips->add_option("--b", b_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const Resolved config = Resolve(g);
    spdlog::info("resolved config: {}", config.ToJson().dump());
    auto emit = [&](const json& doc, const std::string& text) {
      if (g.json_output) {
        out << doc.dump(2) << '\n';
      } else {
        out << text;
      }
    };

    if (simulate->parsed()) {
      std::vector<ImageRecord> records =
          records_path.empty() ? SyntheticRecords(n, config.seed) : ReadRecords(records_path);
      DatasetConfig dc;
      dc.seed = config.seed;
      dc.jobs = config.jobs;
      if (split.empty()) {
        const std::size_t total = records.size();
        dc.valid_size = total / 12;
        dc.test_size = total / 12;
        dc.train_size = total - dc.valid_size - dc.test_size;
      } else {
        std::stringstream parts(split);
        std::string a, b, c;
        if (!std::getline(parts, a, ',') || !std::getline(parts, b, ',') || !std::getline(parts, c)) {
          throw Error(ErrorCode::kInvalidArgument, "--split expects train,valid,test");
        }
        dc.train_size = std::stoul(a);
        dc.valid_size = std::stoul(b);
        dc.test_size = std::stoul(c);
      }
      UtteranceBank bank = UtteranceBank::Default();
      std::vector<ParaphraseLogEntry> log;
      if (paraphrases > 0) {
        auto client = ClientFromEnv();
        if (!client) spdlog::warn("no model process configured; using templates only");
        bank = AugmentBank(bank, client.get(), paraphrases, &log);
      }
      const DatasetBundle bundle = BuildDataset(records, dc, bank);
      const std::string dir = config.out.empty() ? "." : config.out;
      EnsureDir(dir);
      WriteDataset(bundle, dir);
      if (!review_path.empty()) {
        std::ofstream review(review_path);
        for (const auto* part : {&bundle.train, &bundle.valid, &bundle.test}) WriteReviewJsonl(*part, review);
      }
      if (!log.empty()) {
        std::ofstream paraphrase_log(fs::path(dir) / "paraphrase_log.jsonl");
        for (const auto& e : log) {
          paraphrase_log << json{{"requirement", e.requirement}, {"raw", e.raw}, {"accepted", e.accepted}}.dump()
                         << '\n';
        }
      }
      const json doc = {{"out", dir},
                        {"train", bundle.train.size()},
                        {"valid", bundle.valid.size()},
                        {"test", bundle.test.size()}};
      emit(doc, "wrote " + std::to_string(bundle.train.size()) + " train, " +
                    std::to_string(bundle.valid.size()) + " valid, " +
                    std::to_string(bundle.test.size()) + " test dialogues to " + dir + "\n");
      return 0;
    }

    if (stats->parsed()) {
      const auto dialogues = LoadDialogues(data_path);
      const StatsReport report = ComputeStats(dialogues);
      emit(report.ToJson(), report.ToText());
      return 0;
    }

    if (track_eval->parsed()) {
      const auto dialogues = LoadDialogues(data_path);
      auto tracker = MakeTrackerFactory(tracker_kind.empty() ? config.tracker : tracker_kind)();
      const TrackingEvalResult result = EvaluateTracker(*tracker, dialogues);
      std::string text = "joint accuracy " + Fixed(result.joint_accuracy) + "\n";
      for (const auto& [slot, acc] : result.per_slot_accuracy) {
        text += "  " + std::string(SlotName(slot)) + " " + Fixed(acc) + "\n";
      }
      emit(result.ToJson(), text);
      return 0;
    }

    if (respond_eval->parsed()) {
      const auto dialogues = LoadDialogues(data_path);
      auto responder =
          MakeResponderFactory(responder_kind.empty() ? config.responder : responder_kind)();
      std::vector<std::string> hyps, refs;
      Rng rng(config.seed);
      for (const Dialogue& d : dialogues) {
        for (std::size_t k = 0; k < d.turns.size(); ++k) {
          const auto history = DialogueHistory(d, static_cast<int>(k + 1));
          hyps.push_back(responder->Respond(history, d.record.caption, d.turns[k].system_action, rng));
          refs.push_back(d.turns[k].system_response);
        }
      }
      const json doc = {{"bleu", Bleu(hyps, refs)},
                        {"distinct_1", DistinctN(hyps, 1)},
                        {"distinct_2", DistinctN(hyps, 2)},
                        {"responses", hyps.size()}};
      emit(doc, "BLEU " + Fixed(100 * doc["bleu"].get<double>()) + "\nDistinct-1 " +
                    Fixed(doc["distinct_1"].get<double>()) + "\nDistinct-2 " +
                    Fixed(doc["distinct_2"].get<double>()) + "\n");
      return 0;
    }

    const Backends backends = MakeBackends(config.backend);

    if (edit->parsed()) {
      const auto mode = ParseEditMode(mode_name);
      if (!mode) throw Error(ErrorCode::kInvalidArgument, "unknown mode '" + mode_name + "'");
      const auto dialogues = LoadDialogues(data_path);
      if (index >= dialogues.size()) {
        throw Error(ErrorCode::kInvalidArgument, "--index out of range");
      }
      const Dialogue& d = dialogues[index];
      EditState state{SourceImage(backends, d.record), {}, {}, config.seed};
      json results = json::array();
      std::string text;
      for (const DialogueTurn& t : d.turns) {
        if (t.gold_belief.empty()) continue;
        const EditResult r = EditTurn(state, t.gold_belief, *mode, backends, config.hyper);
        results.push_back(r.ToJson());
        results.back()["turn"] = t.index;
        text += "turn " + std::to_string(t.index) + ": " +
                (r.skipped ? std::string("unchanged")
                           : r.prompt + "  loss " + Fixed(r.initial.total) + " -> " +
                                 Fixed(r.final_loss.total)) +
                "\n";
      }
      if (!config.out.empty()) {
        EnsureDir(config.out);
        WriteText(fs::path(config.out) / "edit_results.json", results.dump(2) + "\n");
        WriteText(fs::path(config.out) / "original.json", state.original.ToJson().dump() + "\n");
      }
      emit(json{{"image_id", d.record.image_id}, {"mode", EditModeName(*mode)}, {"turns", results}}, text);
      return 0;
    }

    if (compare->parsed()) {
      auto dialogues = LoadDialogues(data_path);
      if (limit > 0 && limit < dialogues.size()) dialogues.resize(limit);
      if (drift) {
        json clean_config = config.backend;
        clean_config["noise_sigma"] = 0.0;
        const DriftReport report = DriftExperiment(dialogues, backends, MakeBackends(clean_config),
                                                   config.hyper, config.seed, config.jobs);
        emit(report.ToJson(), "multi-turn drift below cascade: " + Fixed(report.drift_win_rate) +
                                  "\nmulti-turn MinRel >= cascade: " +
                                  Fixed(report.min_rel_win_rate) + "\n");
        return 0;
      }
      CompareConfig cc;
      cc.repeats = repeats;
      cc.seed = config.seed;
      cc.jobs = config.jobs;
      cc.hyper = config.hyper;
      const ComparisonTable table = CompareModes(dialogues, backends, cc);
      emit(table.ToJson(), table.ToText());
      return 0;
    }

    if (serve->parsed()) {
      ServiceConfig sc;
      sc.store_dir = store;
      sc.hyper = config.hyper;
      sc.catalog = records_path.empty() ? SyntheticRecords(100, 0) : ReadRecords(records_path);
      SessionService service(sc, backends, MakeTrackerFactory(config.tracker),
                             MakeResponderFactory(config.responder));
      HttpServer server(service);
      const int bound = server.Bind(host, port);
      spdlog::info("serving on http://{}:{}", host, bound);
      server.Run();
      return 0;
    }

    if (metric->parsed()) {
      double value = 0;
      std::string name;
      if (bleu->parsed()) {
        name = "bleu";
        value = Bleu(ReadLines(hyp_path), ReadLines(ref_path));
      } else if (distinct->parsed()) {
        name = "distinct_" + std::to_string(order);
        value = DistinctN(ReadLines(hyp_path), order);
      } else if (fid->parsed()) {
        name = "fid";
        value = Fid(LoadStats(a_path), LoadStats(b_path));
      } else {
        name = "lpips";
        value = Lpips(*backends.features, Image::FromJson(ReadJsonPath(a_path)),
                      Image::FromJson(ReadJsonPath(b_path)));
      }
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", value);
      emit(json{{name, value}}, name + " " + buf + "\n");
      return 0;
    }
  } catch (const Error& e) {
    err << "error [" << ErrorCodeName(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace dialedit
