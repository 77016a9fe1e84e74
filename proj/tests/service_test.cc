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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "dialedit/error.h"

namespace dialedit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

AttributeValue V(std::string_view text) { return ParseValue(text); }

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dialedit_service_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    config_.store_dir = dir_.string();
    config_.catalog = SyntheticRecords(5, 0);
    config_.hyper.steps = 40;
  }
  void TearDown() override { fs::remove_all(dir_); }

  SessionService MakeService(TrackerFactory tracker = nullptr) {
    return SessionService(config_, MakeToyBackends(), std::move(tracker));
  }

  fs::path dir_;
  ServiceConfig config_;
};

const std::vector<std::string> kScript = {
    "I want to change her hair to blond.", "Could you make her smile?",
    "Please add some lipstick as well.", "Actually, give her bangs too."};

TEST_F(ServiceTest, CreateSession) {
  auto service = MakeService();
  const json a = service.CreateSession({{"image_id", "toy-00001"}});
  const json b = service.CreateSession({{"image_id", "toy-00001"}});
  EXPECT_NE(a["id"], b["id"]);
  EXPECT_TRUE(a["turns"].empty());
  EXPECT_EQ(a["mode"], "multi-turn");
  EXPECT_EQ(service.ListSessions().size(), 2u);

  try {
    service.CreateSession({{"image_id", "celeba-123"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedImage);
  }
  try {
    service.CreateSession({{"image", {{"pixels", {1.0, 2.0}}}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedImage);
  }
  const json upload = service.CreateSession(
      {{"image", {{"pixels", std::vector<double>(16, 0.5)}}}, {"mode", "cascade"}});
  EXPECT_EQ(upload["mode"], "cascade");
  EXPECT_EQ(service.GetImage(upload["id"], 0).pixels, std::vector<double>(16, 0.5));
}

TEST_F(ServiceTest, TurnTracksAndEdits) {
  auto service = MakeService();
  const std::string id = service.CreateSession({{"image_id", "toy-00002"}})["id"];
  const json turn = service.PostTurn(id, kScript[0]);
  EXPECT_TRUE(ParseBelief(turn["belief"].get<std::string>()).Contains(V("blond hair")));
  EXPECT_TRUE(turn["edited"].get<bool>());
  EXPECT_FALSE(turn["response"].get<std::string>().empty());
  EXPECT_LE(turn["relevance"]["min_rel"].get<double>(), turn["relevance"]["avg_rel"].get<double>());
  EXPECT_EQ(service.GetImage(id, 1).provenance, "edited(turn 1, multi-turn)");

  // Chit-chat before any request: nothing to edit.
  const std::string quiet = service.CreateSession({{"image_id", "toy-00002"}})["id"];
  const json hello = service.PostTurn(quiet, "Hello there!");
  EXPECT_FALSE(hello["edited"].get<bool>());
  EXPECT_TRUE(hello["relevance"].is_null());
}

TEST_F(ServiceTest, IdempotentReplay) {
  auto service = MakeService();
  const std::string id = service.CreateSession({{"image_id", "toy-00003"}})["id"];
  const json first = service.PostTurn(id, kScript[0], "key-1");
  const json again = service.PostTurn(id, kScript[0], "key-1");
  EXPECT_EQ(first, again);
  EXPECT_EQ(service.GetSession(id)["turns"].size(), 1u);
  service.PostTurn(id, kScript[1], "key-2");
  EXPECT_EQ(service.GetSession(id)["turns"].size(), 2u);
}

TEST_F(ServiceTest, UnknownSession) {
  auto service = MakeService();
  for (auto call : {+[](SessionService& s) { s.PostTurn("nope", "hi"); },
                    +[](SessionService& s) { s.GetSession("nope"); },
                    +[](SessionService& s) { s.Reset("nope"); },
                    +[](SessionService& s) { s.Export("../etc"); }}) {
    try {
      call(service);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kSessionNotFound);
    }
  }
}

TEST_F(ServiceTest, ResetKeepsOriginal) {
  auto service = MakeService();
  const std::string id = service.CreateSession({{"image_id", "toy-00004"}})["id"];
  const Image original = service.GetImage(id, 0);
  service.PostTurn(id, kScript[0]);
  service.Reset(id);
  EXPECT_TRUE(service.GetSession(id)["turns"].empty());
  EXPECT_EQ(service.GetImage(id, 0).pixels, original.pixels);
}

TEST_F(ServiceTest, ExportValidatesAndRetracks) {
  for (const char* mode : {"multi-turn", "cascade"}) {
    auto service = MakeService();
    const std::string id =
        service.CreateSession({{"image_id", "toy-00001"}, {"mode", mode}, {"seed", 5}})["id"];
    for (const auto& text : kScript) service.PostTurn(id, text);
    const json exported = service.Export(id);
    EXPECT_TRUE(ValidateDatasetJson(exported).empty()) << ValidateDatasetJson(exported).front();
    const auto dialogues = DialoguesFromJson(exported);
    RuleBasedTracker tracker;
    EXPECT_DOUBLE_EQ(EvaluateTracker(tracker, dialogues).joint_accuracy, 1.0);

    const auto session = service.Snapshot(id);
    for (const auto& t : session->history) {
      if (std::string(mode) == "multi-turn") EXPECT_EQ(t.source_id, "toy-00001");
    }
  }
}

TEST_F(ServiceTest, RecoversFromDisk) {
  std::string id;
  {
    auto service = MakeService();
    id = service.CreateSession({{"image_id", "toy-00001"}})["id"].get<std::string>();
    service.PostTurn(id, kScript[0]);
    service.PostTurn(id, kScript[1]);
  }
  // An interrupted write leaves only a temporary file behind.
  std::ofstream(dir_ / id / "session.json.tmp-dead") << "{ partial";
  auto restarted = MakeService();
  const json s = restarted.GetSession(id);
  EXPECT_EQ(s["turns"].size(), 2u);
  const json next = restarted.PostTurn(id, kScript[2]);
  EXPECT_EQ(next["turn"], 3);
}

TEST_F(ServiceTest, ParseFailureLeavesSessionUnchanged) {
  auto service = MakeService([] {
    auto client = std::make_shared<CallbackLmClient>(
        [](const std::string&, int) { return std::string("hair color blond ??"); });
    return std::make_unique<LmTracker>(client);
  });
  const std::string id = service.CreateSession({{"image_id", "toy-00001"}})["id"];
  try {
    service.PostTurn(id, kScript[0]);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseFailure);
    EXPECT_EQ(HttpStatus(e.code()), 422);
  }
  EXPECT_TRUE(service.GetSession(id)["turns"].empty());
}

TEST_F(ServiceTest, ErrorMapping) {
  EXPECT_EQ(HttpStatus(ErrorCode::kSessionNotFound), 404);
  EXPECT_EQ(HttpStatus(ErrorCode::kUnsupportedImage), 400);
  EXPECT_EQ(HttpStatus(ErrorCode::kParseFailure), 422);
  EXPECT_EQ(HttpStatus(ErrorCode::kBackendFailure), 500);
  const json payload = ErrorPayload(Error(ErrorCode::kSessionNotFound, "gone", {{"session_id", "x"}}));
  EXPECT_EQ(payload["code"], "SessionNotFound");
  EXPECT_EQ(payload["message"], "gone");
  EXPECT_EQ(payload["detail"]["session_id"], "x");
}

class HttpTest : public ServiceTest {
 protected:
  void SetUp() override {
    ServiceTest::SetUp();
    service_ = std::make_unique<SessionService>(config_, MakeToyBackends());
    server_ = std::make_unique<HttpServer>(*service_);
    port_ = server_->Bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->Run(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int i = 0; i < 100 && !client_->Get("/healthz"); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  void TearDown() override {
    server_->Stop();
    thread_.join();
    ServiceTest::TearDown();
  }

  json Post(const std::string& path, const json& body, int expected,
            const httplib::Headers& headers = {}) {
    auto res = client_->Post(path, headers, body.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expected) << res->body;
    return json::parse(res->body);
  }
  json Get(const std::string& path, int expected) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expected) << res->body;
    return json::parse(res->body);
  }

  std::unique_ptr<SessionService> service_;
  std::unique_ptr<HttpServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpTest, ScriptedSession) {
  EXPECT_EQ(Get("/healthz", 200)["status"], "ok");
  const std::string id = Post("/sessions", {{"image_id", "toy-00002"}}, 201)["id"];
  for (std::size_t k = 0; k < kScript.size(); ++k) {
    const json turn = Post("/sessions/" + id + "/turns", {{"text", kScript[k]}}, 200,
                           {{"Idempotency-Key", "k" + std::to_string(k)}});
    EXPECT_EQ(turn["turn"], k + 1);
    const json image = Get(turn["image_ref"].get<std::string>(), 200);
    EXPECT_EQ(image["pixels"].size(), 16u);
  }
  Post("/sessions/" + id + "/turns", {{"text", kScript[3]}}, 200, {{"Idempotency-Key", "k3"}});
  const json session = Get("/sessions/" + id, 200);
  EXPECT_EQ(session["turns"].size(), 4u);

  const json exported = Get("/sessions/" + id + "/export", 200);
  EXPECT_TRUE(ValidateDatasetJson(exported).empty());
  RuleBasedTracker tracker;
  EXPECT_DOUBLE_EQ(EvaluateTracker(tracker, DialoguesFromJson(exported)).joint_accuracy, 1.0);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(session["turns"][k]["belief"], exported["dialogues"][0]["turns"][k]["belief"]);
  }

  EXPECT_TRUE(Post("/sessions/" + id + "/reset", json::object(), 200)["turns"].empty());
}

TEST_F(HttpTest, ErrorPayloads) {
  const json missing = Get("/sessions/unknown", 404);
  EXPECT_EQ(missing["code"], "SessionNotFound");
  EXPECT_TRUE(missing.contains("message"));
  EXPECT_TRUE(missing.contains("detail"));
  EXPECT_EQ(Post("/sessions", {{"image_id", "nope"}}, 400)["code"], "UnsupportedImage");
  EXPECT_EQ(Post("/sessions/unknown/turns", {{"text", "hi"}}, 404)["code"], "SessionNotFound");
  auto res = client_->Post("/sessions", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(HttpTest, ConcurrentSessionsStayIsolated) {
  const std::string a = Post("/sessions", {{"image_id", "toy-00001"}}, 201)["id"];
  const std::string b = Post("/sessions", {{"image_id", "toy-00003"}, {"mode", "cascade"}}, 201)["id"];
  const std::vector<std::string> script_b = {"Make him look sad.", "Add a goatee please.",
                                             "Can you give him gray hair?", "Add bushy eyebrows."};
  auto run = [&](const std::string& id, const std::vector<std::string>& script) {
    httplib::Client client("127.0.0.1", port_);
    for (const auto& text : script) {
      auto res = client.Post("/sessions/" + id + "/turns", json{{"text", text}}.dump(),
                             "application/json");
      ASSERT_TRUE(res);
      ASSERT_EQ(res->status, 200) << res->body;
    }
  };
  std::thread ta(run, a, kScript), tb(run, b, script_b);
  ta.join();
  tb.join();
  const json sa = Get("/sessions/" + a, 200);
  const json sb = Get("/sessions/" + b, 200);
  ASSERT_EQ(sa["turns"].size(), 4u);
  ASSERT_EQ(sb["turns"].size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(sa["turns"][k]["user"], kScript[k]);
    EXPECT_EQ(sb["turns"][k]["user"], script_b[k]);
  }
  const auto belief_a = ParseBelief(sa["turns"][3]["belief"].get<std::string>());
  const auto belief_b = ParseBelief(sb["turns"][3]["belief"].get<std::string>());
  EXPECT_TRUE(belief_a.Contains(V("blond hair")));
  EXPECT_FALSE(belief_a.Contains(V("goatee")));
  EXPECT_TRUE(belief_b.Contains(V("goatee")));
  EXPECT_FALSE(belief_b.Contains(V("lipstick")));
}

}  // namespace
}  // namespace dialedit
