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

#include "dialedit/lm_client.h"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dialedit/error.h"

namespace dialedit {
namespace {

std::string RequestLine(const std::string& prompt, int max_tokens) {
  return nlohmann::json{{"prompt", prompt}, {"max_tokens", max_tokens}}.dump();
}

std::string ParseResponse(const std::string& body) {
  nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("text") ||
      !doc["text"].is_string()) {
    throw Error(ErrorCode::kClientUnavailable,
                "model endpoint returned a malformed response",
                {{"raw", body}});
  }
  return doc["text"].get<std::string>();
}

}  // namespace

HttpLmClient::HttpLmClient(std::string url, int timeout_seconds)
    : url_(std::move(url)), timeout_seconds_(timeout_seconds) {}

std::string HttpLmClient::Complete(const std::string& prompt, int max_tokens) {
  const auto scheme_end = url_.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kClientUnavailable, "bad model url: " + url_);
  }
  const auto path_start = url_.find('/', scheme_end + 3);
  const std::string origin = url_.substr(0, path_start);
  const std::string path =
      path_start == std::string::npos ? "/" : url_.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  auto res = client.Post(path, RequestLine(prompt, max_tokens),
                         "application/json");
  if (!res) {
    throw Error(ErrorCode::kClientUnavailable,
                "model endpoint unreachable: " + url_,
                {{"error", httplib::to_string(res.error())}});
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kClientUnavailable,
                "model endpoint returned HTTP " + std::to_string(res->status),
                {{"raw", res->body}});
  }
  return ParseResponse(res->body);
}

ProcessLmClient::ProcessLmClient(std::string command)
    : command_(std::move(command)) {}

ProcessLmClient::~ProcessLmClient() { Stop(); }

void ProcessLmClient::Start() {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) {
    throw Error(ErrorCode::kClientUnavailable, "pipe() failed");
  }
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw Error(ErrorCode::kClientUnavailable, "pipe() failed");
  }
  const pid_t pid = fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    throw Error(ErrorCode::kClientUnavailable, "fork() failed");
  }
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  buffer_.clear();
}

void ProcessLmClient::Stop() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    if (waitpid(pid_, &status, WNOHANG) == 0) {
      kill(pid_, SIGTERM);
      waitpid(pid_, &status, 0);
    }
  }
  pid_ = -1;
}

std::string ProcessLmClient::Complete(const std::string& prompt,
                                      int max_tokens) {
  std::lock_guard lock(mu_);
  if (pid_ < 0) Start();

  // A dead child must not kill us through SIGPIPE.
  struct sigaction ignore {};
  struct sigaction previous {};
  ignore.sa_handler = SIG_IGN;
  sigaction(SIGPIPE, &ignore, &previous);

  const std::string line = RequestLine(prompt, max_tokens) + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    ssize_t n = write(to_child_, line.data() + written, line.size() - written);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      sigaction(SIGPIPE, &previous, nullptr);
      Stop();
      throw Error(ErrorCode::kClientUnavailable,
                  "model process closed its input: " + command_);
    }
    written += static_cast<std::size_t>(n);
  }
  sigaction(SIGPIPE, &previous, nullptr);

  std::size_t newline;
  while ((newline = buffer_.find('\n')) == std::string::npos) {
    char chunk[4096];
    ssize_t n = read(from_child_, chunk, sizeof(chunk));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      Stop();
      throw Error(ErrorCode::kClientUnavailable,
                  "model process exited: " + command_);
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
  std::string response = buffer_.substr(0, newline);
  buffer_.erase(0, newline + 1);
  return ParseResponse(response);
}

std::unique_ptr<LmClient> MakeLmClient(const std::string& address) {
  if (address.empty()) return nullptr;
  if (address.rfind("exec:", 0) == 0) {
    return std::make_unique<ProcessLmClient>(address.substr(5));
  }
  if (address.rfind("http://", 0) == 0 || address.rfind("https://", 0) == 0) {
    return std::make_unique<HttpLmClient>(address);
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unsupported model address '" + address +
                  "' (expected http://... or exec:<command>)");
}

}  // namespace dialedit
