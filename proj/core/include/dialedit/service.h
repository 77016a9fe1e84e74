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

#ifndef DIALEDIT_SERVICE_H_
#define DIALEDIT_SERVICE_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialedit/backends.h"
#include "dialedit/dialogue.h"
#include "dialedit/editor.h"
#include "dialedit/error.h"
#include "dialedit/metrics.h"
#include "dialedit/simulator.h"

namespace dialedit {

struct SessionTurn {
  int index = 1;
  std::string user;
  BeliefState belief;
  SystemAction action;
  std::string response;
  bool edited = false;
  std::string source_id;  // image the edit started from
  std::optional<RelevanceReport> relevance;
  std::string idempotency_key;
  nlohmann::json payload;  // response returned for this turn, replayed verbatim
};

struct Session {
  std::string id;
  ImageRecord record;  // original image id, caption, original attributes
  EditMode mode = EditMode::kMultiTurn;
  std::uint64_t seed = 0;
  std::string created_at;
  std::vector<SessionTurn> history;

  // Public view: no image pixels.
  nlohmann::json ToJson() const;
  nlohmann::json ToStoredJson() const;
  static Session FromStoredJson(const nlohmann::json& doc);
  // Dataset-format dialogue: tracked beliefs as gold, deltas as requests.
  Dialogue ToDialogue() const;
};

// <dir>/<id>/session.json plus <dir>/<id>/image-<k>.json (k = 0 for the
// original). Every file is written to a temporary name and renamed.
class SessionStore {
 public:
  explicit SessionStore(std::string dir);

  void SaveImage(const std::string& id, int turn, const Image& image);
  Image LoadImage(const std::string& id, int turn) const;
  void Save(const Session& session);
  // Throws Error(kSessionNotFound).
  Session Load(const std::string& id) const;
  bool Exists(const std::string& id) const;
  std::vector<std::string> List() const;
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
};

struct ServiceConfig {
  std::string store_dir = "sessions";
  EditHyperparams hyper;
  PolicyConfig policy;
  // Images addressable by id at session creation.
  std::vector<ImageRecord> catalog;
};

using TrackerFactory = std::function<std::unique_ptr<Tracker>()>;
using ResponderFactory = std::function<std::unique_ptr<Responder>()>;

// Session logic behind the HTTP API. Turns on one session are serialized;
// different sessions run concurrently. Reads use immutable snapshots.
class SessionService {
 public:
  SessionService(ServiceConfig config, Backends backends,
                 TrackerFactory tracker = nullptr, ResponderFactory responder = nullptr);

  // body: {"image_id": ...} or {"image": {"pixels": [...]}}, optional
  // "mode" ("multi-turn" | "cascade"), "seed", "caption".
  // Errors: kUnsupportedImage, kInvalidArgument, kStoreFailure.
  nlohmann::json CreateSession(const nlohmann::json& body);

  // Track -> decide action -> respond -> edit. A repeated idempotency key
  // returns the stored payload. Errors: kSessionNotFound, kParseFailure
  // (the session is left unchanged), kBackendFailure, kStoreFailure.
  nlohmann::json PostTurn(const std::string& id, const std::string& user_text,
                          const std::string& idempotency_key = {});

  nlohmann::json GetSession(const std::string& id);
  Image GetImage(const std::string& id, int turn);
  nlohmann::json Reset(const std::string& id);
  nlohmann::json Export(const std::string& id);
  std::vector<std::string> ListSessions() const { return store_.List(); }

  std::shared_ptr<const Session> Snapshot(const std::string& id);
  const Backends& backends() const { return backends_; }

 private:
  std::mutex& SessionMutex(const std::string& id);
  void Publish(std::shared_ptr<const Session> session);

  ServiceConfig config_;
  Backends backends_;
  TrackerFactory tracker_factory_;
  ResponderFactory responder_factory_;
  SessionStore store_;
  std::map<std::string, ImageRecord> catalog_;

  std::mutex map_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> session_mutexes_;
  std::map<std::string, std::shared_ptr<const Session>> snapshots_;
};

// HTTP status for a library error code.
int HttpStatus(ErrorCode code);
nlohmann::json ErrorPayload(const Error& error);

// HTTP front end:
//   POST /sessions, POST /sessions/{id}/turns (Idempotency-Key header),
//   GET /sessions/{id}, GET /sessions/{id}/image/{turn},
//   POST /sessions/{id}/reset, GET /sessions/{id}/export, GET /healthz.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();

  // Returns the bound port; port 0 picks a free one.
  int Bind(const std::string& host, int port);
  // Blocks until Stop().
  void Run();
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dialedit

#endif  // DIALEDIT_SERVICE_H_
