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

#include "dialedit/service.h"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "dialedit/error.h"
#include "dialedit/random.h"

namespace dialedit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string NowIso8601() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string NewSessionId() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

bool ValidId(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') return false;
  }
  return true;
}

// Write to a sibling temporary file, flush to disk, then rename over `path`.
void AtomicWrite(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp-" + NewSessionId().substr(0, 8);
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error(ErrorCode::kStoreFailure, "cannot create " + tmp.string());
  std::size_t written = 0;
  while (written < content.size()) {
    const ssize_t n = ::write(fd, content.data() + written, content.size() - written);
    if (n <= 0) {
      ::close(fd);
      fs::remove(tmp);
      throw Error(ErrorCode::kStoreFailure, "cannot write " + tmp.string());
    }
    written += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::kStoreFailure, "cannot rename into " + path.string() + ": " + ec.message());
  }
}

json ReadJson(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kStoreFailure, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kStoreFailure, "corrupt file " + path.string() + ": " + e.what());
  }
}

json TurnToJson(const SessionTurn& t) {
  json doc{{"index", t.index},
           {"user", t.user},
           {"belief", SerializeBelief(t.belief)},
           {"action", ActionToJson(t.action)},
           {"response", t.response},
           {"edited", t.edited},
           {"source_id", t.source_id},
           {"relevance", t.relevance ? t.relevance->ToJson() : json(nullptr)}};
  return doc;
}

RelevanceReport RelevanceFromJson(const json& doc) {
  std::map<AttributeValue, double> per;
  for (const auto& [k, v] : doc.at("per_attribute").items()) per[ParseValue(k)] = v.get<double>();
  return AggregateRelevance(std::move(per));
}

}  // namespace

// --- session ----------------------------------------------------------------

json Session::ToJson() const {
  json turns = json::array();
  for (const auto& t : history) turns.push_back(TurnToJson(t));
  return {{"id", id},
          {"image_id", record.image_id},
          {"caption", record.caption},
          {"mode", EditModeName(mode)},
          {"seed", seed},
          {"created_at", created_at},
          {"turns", turns}};
}

json Session::ToStoredJson() const {
  json doc = ToJson();
  doc["record"] = RecordToJson(record);
  for (std::size_t i = 0; i < history.size(); ++i) {
    doc["turns"][i]["idempotency_key"] = history[i].idempotency_key;
    doc["turns"][i]["payload"] = history[i].payload;
  }
  return doc;
}

Session Session::FromStoredJson(const json& doc) {
  Session s;
  s.id = doc.at("id").get<std::string>();
  s.record = RecordFromJson(doc.at("record"));
  const auto mode = ParseEditMode(doc.at("mode").get<std::string>());
  if (!mode) throw Error(ErrorCode::kStoreFailure, "stored session has an unknown mode");
  s.mode = *mode;
  s.seed = doc.at("seed").get<std::uint64_t>();
  s.created_at = doc.value("created_at", std::string());
  for (const auto& t : doc.at("turns")) {
    SessionTurn turn;
    turn.index = t.at("index").get<int>();
    turn.user = t.at("user").get<std::string>();
    turn.belief = ParseBelief(t.at("belief").get<std::string>());
    turn.action = ActionFromJson(t.at("action"));
    turn.response = t.at("response").get<std::string>();
    turn.edited = t.value("edited", false);
    turn.source_id = t.value("source_id", std::string());
    if (t.contains("relevance") && !t["relevance"].is_null()) {
      turn.relevance = RelevanceFromJson(t["relevance"]);
    }
    turn.idempotency_key = t.value("idempotency_key", std::string());
    turn.payload = t.value("payload", json::object());
    s.history.push_back(std::move(turn));
  }
  return s;
}

Dialogue Session::ToDialogue() const {
  Dialogue d;
  d.record = record;
  d.seed = seed;
  BeliefState previous;
  for (const SessionTurn& t : history) {
    DialogueTurn turn;
    turn.index = t.index;
    turn.user_utterance = t.user;
    turn.gold_belief = t.belief;
    turn.turn_request = BeliefDelta(previous, t.belief);
    turn.system_action = t.action;
    turn.system_response = t.response;
    previous = t.belief;
    d.turns.push_back(std::move(turn));
  }
  return d;
}

// --- store ------------------------------------------------------------------

SessionStore::SessionStore(std::string dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::kStoreFailure, "cannot create store directory " + dir_);
}

void SessionStore::SaveImage(const std::string& id, int turn, const Image& image) {
  const fs::path session_dir = fs::path(dir_) / id;
  std::error_code ec;
  fs::create_directories(session_dir, ec);
  if (ec) throw Error(ErrorCode::kStoreFailure, "cannot create " + session_dir.string());
  AtomicWrite(session_dir / ("image-" + std::to_string(turn) + ".json"), image.ToJson().dump());
}

Image SessionStore::LoadImage(const std::string& id, int turn) const {
  const fs::path path = fs::path(dir_) / id / ("image-" + std::to_string(turn) + ".json");
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kSessionNotFound, "no image for turn " + std::to_string(turn),
                {{"session_id", id}, {"turn", turn}});
  }
  return Image::FromJson(ReadJson(path));
}

void SessionStore::Save(const Session& session) {
  const fs::path session_dir = fs::path(dir_) / session.id;
  std::error_code ec;
  fs::create_directories(session_dir, ec);
  if (ec) throw Error(ErrorCode::kStoreFailure, "cannot create " + session_dir.string());
  AtomicWrite(session_dir / "session.json", session.ToStoredJson().dump(2));
}

bool SessionStore::Exists(const std::string& id) const {
  return ValidId(id) && fs::exists(fs::path(dir_) / id / "session.json");
}

Session SessionStore::Load(const std::string& id) const {
  if (!Exists(id)) {
    throw Error(ErrorCode::kSessionNotFound, "no session '" + id + "'", {{"session_id", id}});
  }
  return Session::FromStoredJson(ReadJson(fs::path(dir_) / id / "session.json"));
}

std::vector<std::string> SessionStore::List() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.is_directory() && fs::exists(entry.path() / "session.json")) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

// --- service ----------------------------------------------------------------

SessionService::SessionService(ServiceConfig config, Backends backends, TrackerFactory tracker,
                               ResponderFactory responder)
    : config_(std::move(config)),
      backends_(std::move(backends)),
      tracker_factory_(std::move(tracker)),
      responder_factory_(std::move(responder)),
      store_(config_.store_dir) {
  if (!tracker_factory_) {
    tracker_factory_ = [] { return std::make_unique<RuleBasedTracker>(); };
  }
  if (!responder_factory_) {
    responder_factory_ = [] { return std::make_unique<TemplateResponder>(); };
  }
  for (const auto& r : config_.catalog) catalog_[r.image_id] = r;
}

std::mutex& SessionService::SessionMutex(const std::string& id) {
  std::lock_guard lock(map_mutex_);
  auto& slot = session_mutexes_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void SessionService::Publish(std::shared_ptr<const Session> session) {
  std::lock_guard lock(map_mutex_);
  snapshots_[session->id] = std::move(session);
}

std::shared_ptr<const Session> SessionService::Snapshot(const std::string& id) {
  {
    std::lock_guard lock(map_mutex_);
    auto it = snapshots_.find(id);
    if (it != snapshots_.end()) return it->second;
  }
  // Not cached: recover from disk (after a restart, for example).
  auto session = std::make_shared<const Session>(store_.Load(id));
  std::lock_guard lock(map_mutex_);
  return snapshots_.emplace(id, std::move(session)).first->second;
}

json SessionService::CreateSession(const json& body) {
  if (!body.is_object()) throw Error(ErrorCode::kInvalidArgument, "body must be a JSON object");
  Session session;
  session.id = NewSessionId();
  session.seed = body.value("seed", std::uint64_t{0});
  session.created_at = NowIso8601();
  if (body.contains("mode")) {
    const auto mode = ParseEditMode(body["mode"].get<std::string>());
    if (!mode) {
      throw Error(ErrorCode::kInvalidArgument, "unknown mode", {{"mode", body["mode"]}});
    }
    session.mode = *mode;
  }

  Image original;
  if (body.contains("image_id")) {
    const std::string image_id = body["image_id"].get<std::string>();
    auto it = catalog_.find(image_id);
    if (it == catalog_.end()) {
      throw Error(ErrorCode::kUnsupportedImage, "unknown image id '" + image_id + "'",
                  {{"image_id", image_id}});
    }
    session.record = it->second;
    original = SourceImage(backends_, session.record);
  } else if (body.contains("image")) {
    try {
      original = Image::FromJson(body["image"]);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kUnsupportedImage, std::string("cannot decode image: ") + e.what());
    }
    bool finite = true;
    for (double v : original.pixels) finite = finite && std::isfinite(v);
    if (original.pixels.size() != backends_.generator->image_size() || !finite) {
      throw Error(ErrorCode::kUnsupportedImage, "image does not fit the active backend",
                  {{"expected_size", backends_.generator->image_size()},
                   {"size", original.pixels.size()}});
    }
    const std::string_view bytes(reinterpret_cast<const char*>(original.pixels.data()),
                                 original.pixels.size() * sizeof(double));
    char buf[32];
    std::snprintf(buf, sizeof buf, "upload-%016llx",
                  static_cast<unsigned long long>(Fnv1a(bytes)));
    session.record.image_id = buf;
    session.record.image_ref = buf;
    session.record.caption = MakeCaption("", {});
  } else {
    throw Error(ErrorCode::kInvalidArgument, "body needs 'image_id' or 'image'");
  }
  if (body.contains("caption")) session.record.caption = body["caption"].get<std::string>();
  original.id = session.record.image_id;
  original.provenance = "original";

  store_.SaveImage(session.id, 0, original);
  store_.Save(session);
  auto snapshot = std::make_shared<const Session>(std::move(session));
  Publish(snapshot);
  spdlog::info("created session {} on image {}", snapshot->id, snapshot->record.image_id);
  return snapshot->ToJson();
}

json SessionService::PostTurn(const std::string& id, const std::string& user_text,
                              const std::string& idempotency_key) {
  Snapshot(id);  // throws kSessionNotFound before a mutex is allocated
  std::lock_guard session_lock(SessionMutex(id));
  Session session = *Snapshot(id);
  if (!idempotency_key.empty()) {
    for (const auto& t : session.history) {
      if (t.idempotency_key == idempotency_key) return t.payload;
    }
  }
  if (user_text.empty()) throw Error(ErrorCode::kInvalidArgument, "user text is empty");

  std::vector<Utterance> history;
  for (const auto& t : session.history) {
    history.push_back({Speaker::kUser, t.user});
    history.push_back({Speaker::kSystem, t.response});
  }
  history.push_back({Speaker::kUser, user_text});

  const int index = static_cast<int>(session.history.size()) + 1;
  SessionTurn turn;
  turn.index = index;
  turn.user = user_text;
  turn.idempotency_key = idempotency_key;
  turn.belief = tracker_factory_()->Track(history);

  std::vector<SystemAction> actions;
  for (const auto& t : session.history) actions.push_back(t.action);
  Rng rng(DeriveSeed(session.seed, static_cast<std::uint64_t>(index)));
  turn.action = DecideAction(config_.policy, turn.belief, actions, session.record, rng);
  turn.response = responder_factory_()->Respond(history, session.record.caption, turn.action, rng);

  const BeliefState previous =
      session.history.empty() ? BeliefState{} : session.history.back().belief;
  Image shown;
  if (turn.belief.empty()) {
    shown = store_.LoadImage(id, index - 1);
    turn.source_id = shown.id;
  } else {
    EditState state;
    state.original = store_.LoadImage(id, 0);
    for (int k = 1; k < index; ++k) state.outputs.push_back(store_.LoadImage(id, k));
    state.previous_belief = previous;
    state.seed = session.seed;
    EditResult result = EditTurn(state, turn.belief, session.mode, backends_, config_.hyper);
    shown = std::move(result.image);
    turn.edited = !result.skipped;
    turn.source_id = result.source_id;
    const auto attrs = turn.belief.Flatten();
    turn.relevance = AvgMinRel(*backends_.joint, shown, attrs);
  }

  json delta = json::array();
  for (const SlotValue& p : BeliefDelta(previous, turn.belief)) delta.push_back(PairToJson(p));
  turn.payload = {{"session_id", id},
                  {"turn", index},
                  {"user", user_text},
                  {"belief", SerializeBelief(turn.belief)},
                  {"delta", delta},
                  {"action", ActionToJson(turn.action)},
                  {"response", turn.response},
                  {"edited", turn.edited},
                  {"source_id", turn.source_id},
                  {"image_ref", "/sessions/" + id + "/image/" + std::to_string(index)},
                  {"relevance", turn.relevance ? turn.relevance->ToJson() : json(nullptr)}};
  session.history.push_back(turn);

  // Image first: a crash in between leaves an unreferenced file, never a
  // turn without its image.
  store_.SaveImage(id, index, shown);
  store_.Save(session);
  Publish(std::make_shared<const Session>(std::move(session)));
  return turn.payload;
}

json SessionService::GetSession(const std::string& id) { return Snapshot(id)->ToJson(); }

Image SessionService::GetImage(const std::string& id, int turn) {
  const auto session = Snapshot(id);
  if (turn < 0 || turn > static_cast<int>(session->history.size())) {
    throw Error(ErrorCode::kSessionNotFound, "no image for turn " + std::to_string(turn),
                {{"session_id", id}, {"turn", turn}});
  }
  return store_.LoadImage(id, turn);
}

json SessionService::Reset(const std::string& id) {
  Snapshot(id);
  std::lock_guard session_lock(SessionMutex(id));
  Session session = *Snapshot(id);
  session.history.clear();
  store_.Save(session);
  auto snapshot = std::make_shared<const Session>(std::move(session));
  Publish(snapshot);
  return snapshot->ToJson();
}

json SessionService::Export(const std::string& id) {
  const auto session = Snapshot(id);
  if (session->history.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "session has no turns to export", {{"session_id", id}});
  }
  const std::vector<Dialogue> dialogues = {session->ToDialogue()};
  return DialoguesToJson(dialogues);
}

// --- HTTP -------------------------------------------------------------------

int HttpStatus(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSessionNotFound:
      return 404;
    case ErrorCode::kUnsupportedImage:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kUnknownAttribute:
    case ErrorCode::kMalformedBelief:
    case ErrorCode::kEmptyBelief:
      return 400;
    case ErrorCode::kParseFailure:
      return 422;
    default:
      return 500;
  }
}

json ErrorPayload(const Error& error) {
  return {{"code", ErrorCodeName(error.code())},
          {"message", error.what()},
          {"detail", error.detail().is_null() ? json::object() : error.detail()}};
}

struct HttpServer::Impl {
  SessionService& service;
  httplib::Server server;

  explicit Impl(SessionService& s) : service(s) {}

  template <typename Fn>
  void Handle(httplib::Response& res, Fn fn) {
    try {
      res.status = 200;
      json body = fn();
      res.set_content(body.dump(), "application/json");
    } catch (const Error& e) {
      res.status = HttpStatus(e.code());
      res.set_content(ErrorPayload(e).dump(), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(ErrorPayload(Error(ErrorCode::kInvalidArgument,
                                         std::string("malformed request: ") + e.what()))
                          .dump(),
                      "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(
          ErrorPayload(Error(ErrorCode::kBackendFailure, e.what())).dump(),
          "application/json");
    }
  }

  static json ParseBody(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    return json::parse(req.body);
  }
};

HttpServer::HttpServer(SessionService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& s = impl_->server;
  Impl* impl = impl_.get();
  s.Get("/healthz", [impl](const httplib::Request&, httplib::Response& res) {
    impl->Handle(res, [&] {
      return json{{"status", "ok"}, {"backend", impl->service.backends().kind}};
    });
  });
  s.Get("/sessions", [impl](const httplib::Request&, httplib::Response& res) {
    impl->Handle(res, [&] { return json{{"sessions", impl->service.ListSessions()}}; });
  });
  s.Post("/sessions", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->Handle(res, [&] {
      json out = impl->service.CreateSession(Impl::ParseBody(req));
      res.status = 201;
      return out;
    });
  });
  s.Post(R"(/sessions/([A-Za-z0-9_-]+)/turns)",
         [impl](const httplib::Request& req, httplib::Response& res) {
           impl->Handle(res, [&] {
             const json body = Impl::ParseBody(req);
             std::string text = body.value("text", body.value("user", std::string()));
             return impl->service.PostTurn(req.matches[1], text,
                                           req.get_header_value("Idempotency-Key"));
           });
         });
  s.Get(R"(/sessions/([A-Za-z0-9_-]+))", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->Handle(res, [&] { return impl->service.GetSession(req.matches[1]); });
  });
  s.Get(R"(/sessions/([A-Za-z0-9_-]+)/image/(\d+))",
        [impl](const httplib::Request& req, httplib::Response& res) {
          impl->Handle(res, [&] {
            return impl->service.GetImage(req.matches[1], std::stoi(req.matches[2])).ToJson();
          });
        });
  s.Post(R"(/sessions/([A-Za-z0-9_-]+)/reset)",
         [impl](const httplib::Request& req, httplib::Response& res) {
           impl->Handle(res, [&] { return impl->service.Reset(req.matches[1]); });
         });
  s.Get(R"(/sessions/([A-Za-z0-9_-]+)/export)",
        [impl](const httplib::Request& req, httplib::Response& res) {
          impl->Handle(res, [&] { return impl->service.Export(req.matches[1]); });
        });
}

HttpServer::~HttpServer() { Stop(); }

int HttpServer::Bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kInvalidArgument, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::Run() { impl_->server.listen_after_bind(); }

void HttpServer::Stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace dialedit
