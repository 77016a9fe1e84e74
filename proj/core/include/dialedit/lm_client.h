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

#ifndef DIALEDIT_LM_CLIENT_H_
#define DIALEDIT_LM_CLIENT_H_

#include <functional>
#include <memory>
#include <mutex>
#include <string>

namespace dialedit {

// Text-completion endpoint of an external language model.
//
// Wire format, one JSON object per line (or per HTTP body):
//   request  {"prompt": "...", "max_tokens": N}
//   response {"text": "..."}
// Transport failures surface as Error(kClientUnavailable).
class LmClient {
 public:
  virtual ~LmClient() = default;
  virtual std::string Complete(const std::string& prompt, int max_tokens) = 0;
};

// In-process client, mostly for tests and scripted backends.
class CallbackLmClient : public LmClient {
 public:
  using Fn = std::function<std::string(const std::string&, int)>;
  explicit CallbackLmClient(Fn fn) : fn_(std::move(fn)) {}
  std::string Complete(const std::string& prompt, int max_tokens) override {
    return fn_(prompt, max_tokens);
  }

 private:
  Fn fn_;
};

// POSTs the request object to `url` (e.g. http://127.0.0.1:8000/complete).
class HttpLmClient : public LmClient {
 public:
  explicit HttpLmClient(std::string url, int timeout_seconds = 60);
  std::string Complete(const std::string& prompt, int max_tokens) override;

 private:
  std::string url_;
  int timeout_seconds_;
};

// Spawns `command` through /bin/sh and exchanges line-delimited JSON over its
// stdin/stdout. Calls are serialized; the child is reaped on destruction.
class ProcessLmClient : public LmClient {
 public:
  explicit ProcessLmClient(std::string command);
  ~ProcessLmClient() override;
  ProcessLmClient(const ProcessLmClient&) = delete;
  ProcessLmClient& operator=(const ProcessLmClient&) = delete;

  std::string Complete(const std::string& prompt, int max_tokens) override;

 private:
  void Start();
  void Stop();

  std::string command_;
  std::mutex mu_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// Picks a client from an address: "http://..." / "https://..." gives an
// HttpLmClient, "exec:<command>" a ProcessLmClient. Empty address returns
// nullptr. The CLI reads the address from CHATEDIT_BACKEND_URL.
std::unique_ptr<LmClient> MakeLmClient(const std::string& address);

}  // namespace dialedit

#endif  // DIALEDIT_LM_CLIENT_H_
