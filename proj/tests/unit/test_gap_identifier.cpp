#include <doctest.h>

#include "../oracles.hpp"
#include "kgap/error.hpp"
#include "kgap/eval_harness.hpp"
#include "kgap/gap_identifier.hpp"
#include "kgap/json_schema.hpp"

using namespace kgap;
using namespace kgap::test;
using nlohmann::json;

namespace {

std::string findings(const json& items) { return json{{"findings", items}}.dump(); }

json gap(const std::string& kc, double conf, const std::string& why) {
  return {{"verdict", "gap"}, {"kc_id", kc}, {"confidence", conf}, {"misconception", why}};
}

const json kCorrect = {{"verdict", "correct"}};

// Two student turns; the second mistakes accuracy for a per-point probability.
DialogueSession accuracy_dialogue() {
  DialogueSession s;
  s.session_id = "acc";
  s.messages = {
      {Role::User, "Which sklearn method gives me how good my logistic regression is on the test set?"},
      {Role::Assistant, "You can call model.score(X_test, y_test). What number did you get, and what do you make of it?"},
      {Role::User, "I got 0.912, so each prediction has a 91.2% chance of being the right class."},
  };
  return s;
}

GapFinding gap_finding(std::size_t turn, const std::string& kc, double conf) {
  GapFinding f;
  f.session_id = "s";
  f.turn_index = turn;
  f.verdict = Verdict::Gap;
  f.kc_id = kc;
  f.confidence = conf;
  f.misconception = "x";
  return f;
}

SessionReport report_of(std::vector<GapFinding> fs) {
  SessionReport r;
  r.session_id = "s";
  r.findings = std::move(fs);
  r.distinct_kcs = rollup_findings(r.findings);
  return r;
}

}  // namespace

TEST_CASE("turn 2 accuracy confusion maps to the evaluation KC") {
  auto reg = course_registry();
  auto provider = scripted_provider(
      {findings(json::array({kCorrect})),
       findings(json::array({gap("KC1.2.1", 0.85, "reads test accuracy as a per-prediction probability")}))});
  Gateway g(provider);
  GapIdentifier id(g, reg);
  auto s = accuracy_dialogue();
  auto report = id.analyze_session(s);
  CHECK(report.status == ReportStatus::Analyzed);
  CHECK(report.registry_version == reg.version());
  CHECK(report.analyzed_turns == std::vector<std::size_t>{1, 2});
  REQUIRE(report.distinct_kcs.size() == 1);
  const auto& r = report.distinct_kcs.at("KC1.2.1");
  CHECK(r.first_detected_turn == 2);
  CHECK(r.max_confidence == doctest::Approx(0.85));
  REQUIRE(report.findings.size() == 2);
  CHECK(report.findings[0].verdict == Verdict::Correct);
  CHECK(report.findings[0].kc_id.empty());
  CHECK_FALSE(report.findings[0].confidence.has_value());
  CHECK(top_kc(report) == "KC1.2.1");
  CHECK(provider->calls() == 2);

  // The analysis prompt carries the KC list and the tutor turn before s_2.
  const auto req = provider->requests().at(1);
  CHECK(req.messages[0].content.find("KC1.2.1: Classification accuracy") != std::string::npos);
  CHECK(req.messages[1].content.find("Tutor: You can call model.score") != std::string::npos);
  CHECK(req.response_schema == finding_list_schema());
}

TEST_CASE("undeclared KCs are dropped and tallied") {
  auto reg = course_registry();
  Gateway g(scripted_provider({findings(json::array({gap("KC9.9.9", 0.9, "made up"), gap("KC1.6.1", 0.5, "lr")}))}));
  GapIdentifier id(g, reg);
  DialogueSession s;
  s.session_id = "u";
  s.messages = {{Role::User, "my learning rate is 10 and the loss is nan after two steps, why?"}};
  auto report = id.analyze_session(s);
  REQUIRE(report.findings.size() == 1);
  CHECK(report.findings[0].kc_id == "KC1.6.1");
  CHECK(report.dropped_unknown_kcs == 1);
  CHECK(id.dropped_unknown_total() == 1);
  for (const auto& f : report.findings) {
    if (f.verdict == Verdict::Gap) CHECK(reg.contains(f.kc_id));
  }
}

TEST_CASE("gap findings without confidence or misconception are dropped as malformed") {
  auto reg = course_registry();
  Gateway g(scripted_provider({findings(json::array({{{"verdict", "gap"}, {"kc_id", "KC1.2.1"}, {"misconception", "m"}},
                                                     gap("KC1.2.2", 0.4, "   "), gap("KC1.2.3", 0.4, "cv")}))}));
  GapIdentifier id(g, reg);
  DialogueSession s;
  s.session_id = "m";
  s.messages = {{Role::User, "cross validation just means testing on the training data several times?"}};
  auto report = id.analyze_session(s);
  CHECK(report.dropped_malformed == 2);
  REQUIRE(report.distinct_kcs.size() == 1);
  CHECK(report.distinct_kcs.count("KC1.2.3") == 1);
}

TEST_CASE("rollup keeps the max confidence and the first turn") {
  auto roll = rollup_findings({gap_finding(1, "KC1.2.1", 0.6), gap_finding(3, "KC1.2.1", 0.9)});
  REQUIRE(roll.size() == 1);
  CHECK(roll.at("KC1.2.1").max_confidence == doctest::Approx(0.9));
  CHECK(roll.at("KC1.2.1").first_detected_turn == 1);
  CHECK(roll.at("KC1.2.1").occurrences == 2);
}

TEST_CASE("a three-word transcript is insufficient and costs no model calls") {
  auto reg = course_registry();
  auto provider = scripted_provider({});
  Gateway g(provider);
  GapIdentifier id(g, reg);
  DialogueSession s;
  s.session_id = "short";
  s.messages = {{Role::User, "implement rnn using torch"}};
  auto report = id.analyze_session(s);
  CHECK(report.status == ReportStatus::Insufficient);
  CHECK(report.findings.empty());
  CHECK(provider->calls() == 0);
  CHECK_FALSE(top_kc(report).has_value());
}

TEST_CASE("the model may decline every turn") {
  auto reg = course_registry();
  Gateway g(scripted_provider({findings(json::array({{{"verdict", "insufficient_evidence"}}}))}));
  GapIdentifier id(g, reg);
  DialogueSession s;
  s.session_id = "vague";
  s.messages = {{Role::User, "it does not work and I do not know what to do with any of it"}};
  CHECK(id.analyze_session(s).status == ReportStatus::Insufficient);
}

TEST_CASE("failed turns are reported as unanalyzed") {
  auto reg = course_registry();
  Gateway g(scripted_provider({"garbage", "more garbage", findings(json::array({kCorrect}))}));
  GapIdentifier id(g, reg);
  auto report = id.analyze_session(accuracy_dialogue());
  CHECK(report.unanalyzed_turns == std::vector<std::size_t>{1});
  CHECK(report.analyzed_turns == std::vector<std::size_t>{2});
}

TEST_CASE("20-dialogue fixture: 19 complete reports and one insufficient") {
  auto reg = course_registry();
  auto dialogues = parse_transcripts(load_json(data_dir() / "completeness" / "transcripts.json"));
  auto labels = parse_labels(load_json(data_dir() / "completeness" / "labels.json"));
  REQUIRE(dialogues.size() == 20);
  Gateway g(script_from_file(data_dir() / "completeness" / "script.json", "analysis"));
  GapIdentifier id(g, reg);
  std::vector<SessionReport> reports;
  std::size_t insufficient = 0;
  for (const auto& d : dialogues) {
    reports.push_back(id.analyze_session(d));
    const auto& r = reports.back();
    if (r.status == ReportStatus::Insufficient) {
      ++insufficient;
      CHECK(d.session_id == "d19");
      continue;
    }
    for (const auto& kc : labels.at(d.session_id)) {
      CHECK_MESSAGE(r.distinct_kcs.count(kc) == 1, d.session_id << " misses " << kc);
    }
  }
  CHECK(insufficient == 1);
  auto result = completeness(labels, reports);
  CHECK(result.fraction == doctest::Approx(0.95).epsilon(1e-12));
  CHECK_FALSE(result.per_dialogue.at("d19"));
}

TEST_CASE("top KC") {
  CHECK(top_kc(report_of({gap_finding(1, "KC1", 0.8), gap_finding(1, "KC2", 0.6)})) == "KC1");
  CHECK(top_kc(report_of({gap_finding(2, "KC1", 0.8), gap_finding(1, "KC2", 0.8)})) == "KC2");
  CHECK(top_kc(report_of({gap_finding(1, "KC2", 0.8), gap_finding(1, "KC1", 0.8)})) == "KC1");
  SessionReport none;
  none.status = ReportStatus::Insufficient;
  CHECK_FALSE(top_kc(none).has_value());
}

TEST_CASE("property: rollup and top KC equal brute force") {
  Rng rng(99);
  const std::vector<std::string> pool = {"KC1", "KC1.2", "KC1.2.1", "KC2", "KC2.4.1", "KC3.1"};
  for (int i = 0; i < 500; ++i) {
    auto fs = generate_findings(rng, "s", pool, 12);
    auto roll = rollup_findings(fs);
    CHECK(roll == oracle_rollup(fs));
    std::set<std::string> seen;
    for (const auto& f : fs) {
      if (f.verdict == Verdict::Gap) seen.insert(f.kc_id);
    }
    CHECK(roll.size() == seen.size());
    CHECK(top_kc(report_of(fs)) == oracle_top_kc(fs));
  }
}

TEST_CASE("analysis is deterministic, idempotent and leaves the session alone") {
  auto reg = course_registry();
  const std::vector<std::string> script = {findings(json::array({kCorrect})),
                                           findings(json::array({gap("KC1.2.1", 0.85, "per-point probability")}))};
  auto s = accuracy_dialogue();
  const auto before = s;

  Gateway g1(scripted_provider(script));
  GapIdentifier a(g1, reg);
  Gateway g2(scripted_provider(script));
  GapIdentifier b(g2, reg);
  auto ra = a.analyze_session(s);
  CHECK(ra == b.analyze_session(s));
  CHECK(s == before);

  // Cached: the second pass makes no further calls.
  CHECK(a.analyze_session(s) == ra);
  CHECK(g1.provider_calls() == 2);
}

TEST_CASE("re-analysis after a new message costs one call") {
  auto reg = course_registry();
  auto provider = scripted_provider({findings(json::array({kCorrect})),
                                     findings(json::array({gap("KC1.2.1", 0.85, "per-point probability")})),
                                     findings(json::array({gap("KC1.2.1", 0.95, "still per-point")}))});
  Gateway g(provider);
  GapIdentifier id(g, reg);
  auto s = accuracy_dialogue();
  id.analyze_session(s);
  s.messages.push_back({Role::Assistant, "What would the accuracy be if every prediction were a coin flip?"});
  s.messages.push_back({Role::User, "Fifty percent, so each point still has its own 91.2% chance."});
  auto r = id.analyze_session(s);
  CHECK(provider->calls() == 3);
  CHECK(r.analyzed_turns == std::vector<std::size_t>{1, 2, 3});
  CHECK(r.distinct_kcs.at("KC1.2.1").max_confidence == doctest::Approx(0.95));
  CHECK(r.distinct_kcs.at("KC1.2.1").first_detected_turn == 2);

  // A seeded identifier reproduces the report without calls.
  auto idle = scripted_provider({});
  Gateway g2(idle);
  GapIdentifier seeded(g2, reg);
  seeded.seed(r);
  CHECK(seeded.analyze_session(s) == r);
  CHECK(idle->calls() == 0);
}

TEST_CASE("report JSON round trip and schema") {
  Rng rng(3);
  const auto schema = load_schema("session_report");
  const std::vector<std::string> pool = {"KC1.2.1", "KC1.3.1", "KC2.4.1"};
  for (int i = 0; i < 100; ++i) {
    auto r = generate_report(rng, "s" + std::to_string(i), "v1", pool);
    r.dropped_unknown_kcs = uniform(rng, 0, 3);
    const auto doc = to_json(r);
    CHECK(session_report_from_json(doc) == r);
    auto err = validate_json(doc, schema);
    CHECK_MESSAGE(!err.has_value(), err.value_or(""));
  }
}

TEST_CASE("the finding list schema file matches the one sent to the model") {
  CHECK(load_schema("finding_list") == finding_list_schema());
  CHECK_FALSE(validate_json(json::parse(findings(json::array({gap("KC1", 0.5, "m"), kCorrect}))), finding_list_schema())
                  .has_value());
  CHECK(validate_json(json{{"findings", {{{"verdict", "gap"}, {"confidence", 2}}}}}, finding_list_schema()).has_value());
}
