#include <doctest.h>
#include <httplib.h>

#include <future>

#include "../oracles.hpp"
#include "kgap/error.hpp"
#include "kgap/json_schema.hpp"
#include "kgap/service.hpp"

using namespace kgap;
using namespace kgap::test;
using nlohmann::json;

namespace {

constexpr const char* kToken = "instructor-secret-42";
constexpr const char* kSalt = "salt-for-tests";

ServiceConfig demo_config(std::optional<std::filesystem::path> log = std::nullopt) {
  ServiceConfig c;
  c.kc_list_path = (data_dir() / "kc" / "ai_course.json").string();
  c.corpus_dir = (data_dir() / "demo" / "corpus").string();
  if (log) c.log_path = log->string();
  c.port = 0;
  c.instructor_token = kToken;
  c.pseudonym_salt = kSalt;
  c.gateway = fast_gateway();
  return c;
}

std::shared_ptr<ScriptedProvider> demo_tutor() { return script_from_file(data_dir() / "demo" / "script.json", "dialogue"); }
std::shared_ptr<ScriptedProvider> demo_analyst() { return script_from_file(data_dir() / "demo" / "script.json", "analysis"); }
std::vector<std::string> demo_student() { return script_lines(load_json(data_dir() / "demo" / "student.json")); }

void check_schema(const std::string& body, const std::string& schema) {
  const auto doc = json::parse(body);
  const auto err = validate_json(doc, load_schema(schema));
  CHECK_MESSAGE(!err.has_value(), schema << ": " << err.value_or("") << " in " << body);
}

httplib::Headers instructor() { return {{"Authorization", std::string("Bearer ") + kToken}}; }

struct SseEvent {
  std::string name;
  json data;
};

std::vector<SseEvent> parse_sse(const std::string& body) {
  std::vector<SseEvent> out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto end = body.find("\n\n", pos);
    if (end == std::string::npos) end = body.size();
    const auto block = body.substr(pos, end - pos);
    SseEvent e;
    std::size_t lp = 0;
    while (lp < block.size()) {
      auto le = block.find('\n', lp);
      if (le == std::string::npos) le = block.size();
      const auto line = block.substr(lp, le - lp);
      if (line.starts_with("event: ")) e.name = line.substr(7);
      if (line.starts_with("data: ")) e.data = json::parse(line.substr(6));
      lp = le + 1;
    }
    if (!e.name.empty()) out.push_back(std::move(e));
    pos = end + 2;
  }
  return out;
}

// Blocks every call until released, so a second request can arrive mid-reply.
class GateProvider final : public ChatProvider {
 public:
  std::string chat(const CompletionRequest&) override {
    entered.set_value();
    release.get_future().wait();
    return "Released. What next?";
  }
  std::promise<void> entered;
  std::promise<void> release;
};

class FailOnceProvider final : public ChatProvider {
 public:
  std::string chat(const CompletionRequest&) override {
    if (calls++ == 0) throw Error(Errc::ProviderRejection, "simulated outage");
    return "Back again. Which step failed?";
  }
  int calls = 0;
};

}  // namespace

TEST_CASE("pseudonyms and stream pieces") {
  CHECK(pseudonymize("s", "alice") == pseudonymize("s", "alice"));
  CHECK(pseudonymize("s", "alice") != pseudonymize("t", "alice"));
  CHECK(pseudonymize("s", "alice").size() == 32);
  CHECK(pseudonymize("s", "alice").find("alice") == std::string::npos);

  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const auto reply = random_phrase(rng, 0, 60);
    const auto target = uniform(rng, 1, 80);
    auto pieces = stream_pieces(reply, target);
    std::string joined;
    for (const auto& p : pieces) {
      CHECK_FALSE(p.empty());
      joined += p;
    }
    CHECK(joined == reply);
  }
}

TEST_CASE("startup errors name the missing input") {
  auto expect = [](ServiceConfig c, const std::string& needle) {
    try {
      Service s(std::move(c), scripted_provider({}), scripted_provider({}));
      FAIL("service started");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::Startup);
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  auto c = demo_config();
  c.kc_list_path.clear();
  expect(c, "--kc-list");
  c = demo_config();
  c.kc_list_path = "/nonexistent/kc.json";
  expect(c, "--kc-list");
  c = demo_config();
  c.corpus_dir = "/nonexistent";
  expect(c, "--corpus");
  c = demo_config();
  c.instructor_token.clear();
  unsetenv("QQ_INSTRUCTOR_TOKEN");
  expect(c, "QQ_INSTRUCTOR_TOKEN");

  TempDir dir;
  {
    std::ofstream out(dir / "events.ndjson");
    out << "{\"seq\":1,\"kind\":\"session_created\"";
  }
  expect(demo_config(dir / "events.ndjson"), "corrupt event at seq 1");
}

TEST_CASE("demo end to end over HTTP") {
  TempDir dir;
  const auto log = dir / "events.ndjson";
  std::string session_id;
  json top_before_restart;
  json transcript_before_restart;
  {
    Service svc(demo_config(log), demo_tutor(), demo_analyst());
    const int port = svc.start();
    httplib::Client cli("127.0.0.1", port);

    auto health = cli.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);
    check_schema(health->body, "health");

    auto created = cli.Post("/api/sessions", R"({"student_id":"alice@example.edu"})", "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    check_schema(created->body, "session_created");
    session_id = json::parse(created->body)["session_id"];
    CHECK(svc.session(session_id)->student_ref == pseudonymize(kSalt, "alice@example.edu"));

    const auto student = demo_student();
    REQUIRE(student.size() == 3);

    // Turn 1 streams.
    auto streamed = cli.Post("/api/sessions/" + session_id + "/messages", {{"Accept", "text/event-stream"}},
                             json{{"text", student[0]}}.dump(), "application/json");
    REQUIRE(streamed);
    CHECK(streamed->status == 200);
    CHECK(streamed->get_header_value("Content-Type").find("text/event-stream") != std::string::npos);
    auto events = parse_sse(streamed->body);
    REQUIRE(events.size() >= 2);
    std::string joined;
    for (std::size_t i = 0; i + 1 < events.size(); ++i) {
      CHECK(events[i].name == "delta");
      CHECK_FALSE(validate_json(events[i].data, load_schema("stream_delta")).has_value());
      joined += events[i].data["text"].get<std::string>();
    }
    CHECK(events.back().name == "done");
    CHECK_FALSE(validate_json(events.back().data, load_schema("reply")).has_value());
    CHECK(joined == events.back().data["reply"]);

    // Turns 2 and 3 as plain JSON.
    for (int t = 1; t < 3; ++t) {
      auto r = cli.Post("/api/sessions/" + session_id + "/messages?stream=0", json{{"text", student[t]}}.dump(),
                        "application/json");
      REQUIRE(r);
      CHECK(r->status == 200);
      check_schema(r->body, "reply");
    }
    REQUIRE(svc.drain(std::chrono::seconds(5)));

    auto transcript = cli.Get("/api/sessions/" + session_id);
    REQUIRE(transcript);
    check_schema(transcript->body, "transcript");
    CHECK(json::parse(transcript->body)["messages"].size() == 6);
    CHECK_FALSE(json::parse(transcript->body).contains("student_ref"));
    transcript_before_restart = json::parse(transcript->body);

    auto top = cli.Get("/api/reports/top?n=5&window=all", instructor());
    REQUIRE(top);
    CHECK(top->status == 200);
    check_schema(top->body, "frequency_report");
    const auto report = json::parse(top->body);
    REQUIRE(report["entries"].size() == 1);
    CHECK(report["entries"][0]["kc_id"] == "KC1.2.1");
    CHECK(report["entries"][0]["count"] == 1);
    top_before_restart = report;

    auto lecture = cli.Get("/api/reports/top?n=5", {{"X-Instructor-Token", kToken}});
    REQUIRE(lecture);
    CHECK(json::parse(lecture->body)["entries"].size() == 1);

    auto csv = cli.Get("/api/reports/top?n=5&window=all&format=csv", instructor());
    REQUIRE(csv);
    CHECK(csv->body == "kc_id,count\nKC1.2.1,1\n");

    auto sr = cli.Get("/api/reports/sessions/" + session_id, instructor());
    REQUIRE(sr);
    CHECK(sr->status == 200);
    check_schema(sr->body, "session_report");
    CHECK(json::parse(sr->body)["analyzed_turns"] == json::array({1, 2, 3}));

    // Authorization and error contract.
    for (const auto& headers : {httplib::Headers{}, httplib::Headers{{"Authorization", "Bearer wrong"}},
                                httplib::Headers{{"X-Instructor-Token", std::string(kToken) + "x"}}}) {
      auto denied = cli.Get("/api/reports/top", headers);
      REQUIRE(denied);
      CHECK(denied->status == 401);
      check_schema(denied->body, "error");
    }
    auto denied_session = cli.Get("/api/reports/sessions/" + session_id);
    CHECK(denied_session->status == 401);

    auto missing = cli.Get("/api/sessions/nope");
    CHECK(missing->status == 404);
    check_schema(missing->body, "error");
    CHECK(json::parse(missing->body)["error"] == "NotFound");

    auto empty = cli.Post("/api/sessions/" + session_id + "/messages", R"({"text":"   "})", "application/json");
    CHECK(empty->status == 400);
    check_schema(empty->body, "error");
    auto bad_body = cli.Post("/api/sessions/" + session_id + "/messages", "[1]", "application/json");
    CHECK(bad_body->status == 400);
    auto bad_window = cli.Get("/api/reports/top?window=week", instructor());
    CHECK(bad_window->status == 400);
    auto zero = cli.Get("/api/reports/top?n=0", instructor());
    CHECK(zero->status == 400);
    auto nothing_pending = cli.Post("/api/sessions/" + session_id + "/retry", "", "application/json");
    CHECK(nothing_pending->status == 409);
    check_schema(nothing_pending->body, "error");

    auto h2 = cli.Get("/healthz");
    CHECK(json::parse(h2->body)["event_seq"] == svc.event_seq());
    svc.stop();
  }

  const auto text = read_file(log);
  CHECK(text.find(kToken) == std::string::npos);
  CHECK(text.find("alice@example.edu") == std::string::npos);
  CHECK(text.find(pseudonymize(kSalt, "alice@example.edu")) != std::string::npos);

  // A restart over the same log restores sessions, reports and counts.
  Service again(demo_config(log), scripted_provider({}), scripted_provider({}));
  CHECK(again.pending_analyses() == 0);
  CHECK(again.top_report(5, "all")["entries"] == top_before_restart["entries"]);
  const int port = again.start();
  httplib::Client cli("127.0.0.1", port);
  auto transcript = cli.Get("/api/sessions/" + session_id);
  REQUIRE(transcript);
  CHECK(json::parse(transcript->body) == transcript_before_restart);
  CHECK(again.session_report(session_id)->analyzed_turns == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("an unanswered message blocks new ones until retried") {
  auto tutor = std::make_shared<FailOnceProvider>();
  auto cfg = demo_config();
  cfg.gateway.retry_limit = 0;
  Service svc(cfg, tutor, scripted_provider({R"({"findings":[{"verdict":"correct"}]})"}));
  const int port = svc.start();
  httplib::Client cli("127.0.0.1", port);
  const auto id = svc.create_session("");

  auto failed = cli.Post("/api/sessions/" + id + "/messages?stream=0", R"({"text":"my code crashes on line 3"})",
                         "application/json");
  REQUIRE(failed);
  CHECK(failed->status == 502);
  CHECK(json::parse(failed->body)["error"] == "RespondFailed");
  CHECK(svc.session(id)->messages.size() == 1);

  auto blocked = cli.Post("/api/sessions/" + id + "/messages?stream=0", R"({"text":"hello?"})", "application/json");
  CHECK(blocked->status == 409);
  CHECK(json::parse(blocked->body)["error"] == "Conflict");

  auto retried = cli.Post("/api/sessions/" + id + "/retry?stream=0", "", "application/json");
  REQUIRE(retried);
  CHECK(retried->status == 200);
  CHECK(json::parse(retried->body)["reply"] == "Back again. Which step failed?");
  CHECK(svc.session(id)->messages.size() == 2);
  svc.drain(std::chrono::seconds(5));
}

TEST_CASE("a second message during a reply is a conflict") {
  auto gate = std::make_shared<GateProvider>();
  Service svc(demo_config(), gate, scripted_provider({R"({"findings":[{"verdict":"correct"}]})"}));
  const int port = svc.start();
  const auto id = svc.create_session("bob");
  auto first = std::async(std::launch::async, [&] {
    httplib::Client cli("127.0.0.1", port);
    return cli.Post("/api/sessions/" + id + "/messages?stream=0", R"({"text":"why is my accuracy so low on test data"})",
                    "application/json");
  });
  gate->entered.get_future().wait();
  httplib::Client cli("127.0.0.1", port);
  auto second = cli.Post("/api/sessions/" + id + "/messages?stream=0", R"({"text":"also this"})", "application/json");
  REQUIRE(second);
  CHECK(second->status == 409);
  gate->release.set_value();
  auto r = first.get();
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(svc.session(id)->messages.size() == 2);
  svc.drain(std::chrono::seconds(5));
}

TEST_CASE("analysis runs in the background for many sessions") {
  std::vector<std::string> replies(40, "Noted. What did you expect?");
  std::vector<std::string> analyses(40, R"({"findings":[{"verdict":"gap","kc_id":"KC1.6.1","confidence":0.7,"misconception":"large steps always converge faster"}]})");
  auto cfg = demo_config();
  cfg.workers = 3;
  Service svc(cfg, scripted_provider(replies), scripted_provider(analyses));
  svc.start();
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) {
    ids.push_back(svc.create_session("student" + std::to_string(i)));
    svc.post_message(ids.back(), "my learning rate is 10 and training diverges, bigger is faster right?");
  }
  REQUIRE(svc.drain(std::chrono::seconds(10)));
  const auto top = svc.top_report(3, "lecture");
  REQUIRE(top["entries"].size() == 1);
  CHECK(top["entries"][0]["count"] == 10);
  CHECK(top["sessions_counted"] == 10);
}
