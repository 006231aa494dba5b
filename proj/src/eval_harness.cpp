#include "kgap/eval_harness.hpp"

#include <algorithm>
#include <future>

#include "kgap/error.hpp"
#include "kgap/event_log.hpp"

namespace kgap {

using nlohmann::json;

std::string_view behavior_name(Behavior b) {
  switch (b) {
    case Behavior::Terse: return "terse";
    case Behavior::Verbose: return "verbose";
    case Behavior::CopiesMaterial: return "copies-material";
    case Behavior::AsksFollowUps: return "asks-follow-ups";
    case Behavior::Overconfident: return "overconfident";
  }
  return "terse";
}

Behavior parse_behavior(std::string_view name) {
  if (name == "terse") return Behavior::Terse;
  if (name == "verbose") return Behavior::Verbose;
  if (name == "copies-material") return Behavior::CopiesMaterial;
  if (name == "asks-follow-ups") return Behavior::AsksFollowUps;
  if (name == "overconfident") return Behavior::Overconfident;
  throw Error(Errc::InvalidArgument, "unknown behavior '" + std::string(name) + "'");
}

std::vector<StudentProfile> parse_profiles(const json& doc, const KcRegistry& registry) {
  if (!doc.is_array()) throw Error(Errc::InvalidArgument, "profile file must hold a JSON list");
  std::vector<StudentProfile> out;
  std::set<std::string> ids;
  try {
    for (const auto& item : doc) {
      StudentProfile p;
      p.profile_id = item.at("profile_id").get<std::string>();
      p.group_id = item.at("group_id").get<std::string>();
      p.missing_kc = item.at("missing_kc").get<std::string>();
      p.behavior = parse_behavior(item.at("behavior").get<std::string>());
      if (item.contains("script") && !item["script"].is_null()) {
        p.script = item["script"].get<std::vector<std::string>>();
      }
      if (!registry.contains(p.missing_kc)) {
        throw Error(Errc::NotFound, "profile " + p.profile_id + ": missing_kc " + p.missing_kc +
                                        " is not in the KC list");
      }
      if (!ids.insert(p.profile_id).second) {
        throw Error(Errc::InvalidArgument, "duplicate profile id " + p.profile_id);
      }
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed profile: ") + e.what());
  }
  return out;
}

namespace {

class NullRetriever final : public Retriever {
 public:
  std::vector<CourseChunk> retrieve(std::string_view, std::size_t) const override { return {}; }
};

std::string_view behavior_description(Behavior b) {
  switch (b) {
    case Behavior::Terse:
      return "You write very short messages, often a single line, and rarely explain yourself.";
    case Behavior::Verbose:
      return "You write long messages with plenty of background about what you tried.";
    case Behavior::CopiesMaterial:
      return "You paste passages from lecture notes or the textbook and ask what they mean.";
    case Behavior::AsksFollowUps:
      return "You answer the tutor's questions and then ask follow-up questions of your own.";
    case Behavior::Overconfident:
      return "You state your beliefs confidently and expect the tutor to confirm them.";
  }
  return "";
}

}  // namespace

std::string student_persona_prompt(const StudentProfile& profile, const KcRegistry& registry) {
  const auto& kc = registry.lookup(profile.missing_kc);
  std::string p = "You are role-playing an undergraduate student in the course \"" +
                  registry.course_id() + "\" who is chatting with an AI teaching assistant.\n";
  p += "Persona: ";
  p += behavior_description(profile.behavior);
  p += "\nYou have not yet understood this part of the course: " + kc.title;
  if (!kc.detail.empty()) p += " (" + kc.detail + ")";
  p += ".\nHold the incomplete or mistaken beliefs a student with this gap would hold. Do not "
       "mention the gap or hint at it on your own; let it show only when the assistant's "
       "questions lead you there. Write only the student's next message, with no narration.";
  return p;
}

DialogueSession simulate_dialogue(const StudentProfile& profile, std::size_t max_turns,
                                  SimulationMode mode, DialogueAgent& tutor,
                                  const KcRegistry& registry, Gateway* student, Clock clock) {
  if (max_turns == 0) throw Error(Errc::InvalidArgument, "max_turns must be at least 1");
  DialogueSession session;
  session.session_id = "sim-" + profile.profile_id;
  session.course_id = registry.course_id();
  session.student_ref = profile.profile_id;
  session.created_at = session.updated_at = clock();

  if (mode == SimulationMode::Scripted) {
    if (!profile.script || profile.script->empty()) {
      throw Error(Errc::ScriptExhausted, "profile " + profile.profile_id + " has no script");
    }
    const auto& script = *profile.script;
    for (std::size_t i = 0; i < std::min(max_turns, script.size()); ++i) {
      tutor.respond(session, script[i]);
    }
    return session;
  }

  if (!student) throw Error(Errc::InvalidArgument, "model-driven simulation needs a student gateway");
  const std::string persona = student_persona_prompt(profile, registry);
  for (std::size_t turn = 0; turn < max_turns; ++turn) {
    CompletionRequest req;
    req.temperature = 0.9;
    req.messages.push_back({Role::System, persona});
    req.messages.push_back(
        {Role::User, "(Open the conversation by asking the assistant about your coursework.)"});
    // The simulated student speaks as the assistant in its own transcript.
    for (const auto& m : session.messages) {
      req.messages.push_back({m.role == Role::User ? Role::Assistant : Role::User, m.content});
    }
    std::string utterance = trim(student->complete(req));
    if (utterance.empty()) break;
    tutor.respond(session, utterance);
  }
  return session;
}

EvalResult evaluate_report(const StudentProfile& profile, SessionReport report) {
  EvalResult r;
  r.profile_id = profile.profile_id;
  r.missing_kc = profile.missing_kc;
  if (auto it = report.distinct_kcs.find(profile.missing_kc); it != report.distinct_kcs.end()) {
    r.detected = true;
    r.first_turn = it->second.first_detected_turn;
  }
  r.top1_match = top_kc(report) == profile.missing_kc;
  r.report = std::move(report);
  return r;
}

double detection_rate(const std::vector<EvalResult>& results) {
  if (results.empty()) throw Error(Errc::EmptyResults, "no evaluation results");
  const auto hits = std::count_if(results.begin(), results.end(), [](const EvalResult& r) { return r.detected; });
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double speed_of_detection(const std::vector<EvalResult>& results) {
  std::size_t n = 0;
  std::size_t sum = 0;
  for (const auto& r : results) {
    if (!r.detected) continue;
    ++n;
    sum += r.first_turn.value_or(0);
  }
  if (n == 0) throw Error(Errc::NoDetections, "no conversation detected its planted KC");
  return static_cast<double>(sum) / static_cast<double>(n);
}

double top1_accuracy(const std::vector<EvalResult>& results) {
  if (results.empty()) throw Error(Errc::EmptyResults, "no evaluation results");
  const auto hits = std::count_if(results.begin(), results.end(), [](const EvalResult& r) { return r.top1_match; });
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

CompletenessResult completeness(const std::map<std::string, std::set<std::string>>& labels,
                                const std::vector<SessionReport>& reports) {
  std::map<std::string, const SessionReport*> by_id;
  for (const auto& r : reports) {
    if (!by_id.emplace(r.session_id, &r).second) {
      throw Error(Errc::MisalignedIds, "two reports for dialogue " + r.session_id);
    }
  }
  if (by_id.size() != labels.size()) {
    throw Error(Errc::MisalignedIds, std::to_string(labels.size()) + " label sets but " +
                                         std::to_string(by_id.size()) + " reports");
  }
  if (labels.empty()) throw Error(Errc::EmptyResults, "no labeled dialogues");

  CompletenessResult out;
  std::size_t ok = 0;
  for (const auto& [id, wanted] : labels) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(Errc::MisalignedIds, "no report for labeled dialogue " + id);
    if (wanted.empty() || wanted.size() > 3) {
      throw Error(Errc::InvalidArgument, "dialogue " + id + " must carry 1 to 3 labeled KCs");
    }
    const auto& report = *it->second;
    bool success = report.status == ReportStatus::Analyzed &&
                   std::all_of(wanted.begin(), wanted.end(),
                               [&](const std::string& kc) { return report.distinct_kcs.contains(kc); });
    out.per_dialogue[id] = success;
    ok += success ? 1 : 0;
  }
  out.fraction = static_cast<double>(ok) / static_cast<double>(labels.size());
  return out;
}

std::map<std::string, std::set<std::string>> parse_labels(const json& doc) {
  if (!doc.is_object()) throw Error(Errc::InvalidArgument, "labels file must hold a JSON object");
  std::map<std::string, std::set<std::string>> out;
  try {
    for (const auto& [id, kcs] : doc.items()) {
      auto list = kcs.get<std::vector<std::string>>();
      out[id] = std::set<std::string>(list.begin(), list.end());
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed labels: ") + e.what());
  }
  return out;
}

std::vector<DialogueSession> parse_transcripts(const json& doc) {
  if (!doc.is_array()) throw Error(Errc::InvalidArgument, "transcript file must hold a JSON list");
  std::vector<DialogueSession> out;
  std::set<std::string> ids;
  try {
    for (const auto& item : doc) {
      DialogueSession s;
      s.session_id = item.at("dialogue_id").get<std::string>();
      s.course_id = item.value("course_id", std::string{});
      for (const auto& m : item.at("messages")) {
        s.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
      }
      validate_session(s);
      if (!ids.insert(s.session_id).second) {
        throw Error(Errc::InvalidArgument, "duplicate dialogue id " + s.session_id);
      }
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed transcript: ") + e.what());
  }
  return out;
}

json BenchmarkOutcome::to_json() const {
  json results_json = json::array();
  for (const auto& r : results) {
    auto top = top_kc(r.report);
    results_json.push_back({{"profile_id", r.profile_id},
                            {"missing_kc", r.missing_kc},
                            {"detected", r.detected},
                            {"first_turn", r.first_turn ? json(*r.first_turn) : json(nullptr)},
                            {"top1_match", r.top1_match},
                            {"top_kc", top ? json(*top) : json(nullptr)},
                            {"status", r.report.status == ReportStatus::Analyzed ? "analyzed" : "insufficient"}});
  }
  json failures_json = json::array();
  for (const auto& f : failures) {
    failures_json.push_back({{"profile_id", f.profile_id}, {"error", errc_name(f.code)}, {"message", f.message}});
  }
  return {{"metrics",
           {{"profiles", metrics.profiles},
            {"failed", metrics.failed},
            {"detection_rate", metrics.detection_rate},
            {"speed_of_detection",
             metrics.speed_of_detection ? json(*metrics.speed_of_detection) : json(nullptr)},
            {"speed_note", "mean first-detection turn over detected conversations only; turn 1 is the opening student message"},
            {"top1_accuracy", metrics.top1_accuracy}}},
          {"distribution", kgap::to_json(distribution)},
          {"results", std::move(results_json)},
          {"failures", std::move(failures_json)}};
}

BenchmarkOutcome run_benchmark(const std::vector<StudentProfile>& profiles, const KcRegistry& registry,
                               SimulationMode mode, BenchmarkSetup setup) {
  if (mode == SimulationMode::ModelDriven && !setup.student) {
    throw Error(Errc::InvalidArgument, "model-driven benchmark needs a student gateway");
  }
  NullRetriever no_material;
  const Retriever& retriever = setup.retriever ? *setup.retriever : no_material;
  DialogueAgent tutor(setup.tutor, retriever, setup.dialogue, setup.clock);
  GapIdentifier identifier(setup.analyst, registry, setup.analysis);
  Journal journal(PipelineState(registry.course_id(), registry.version()), setup.log_path, setup.clock);

  struct Slot {
    std::optional<EvalResult> result;
    std::optional<ProfileFailure> failure;
    DialogueSession session;
  };
  std::vector<Slot> slots(profiles.size());

  auto run_one = [&](std::size_t i) {
    const auto& profile = profiles[i];
    try {
      auto session = simulate_dialogue(profile, setup.max_turns, mode, tutor, registry,
                                       setup.student, setup.clock);
      auto report = identifier.analyze_session(session);
      journal.record(EventKind::SessionCreated, session_created_payload(session));
      for (const auto& m : session.messages) {
        journal.record(EventKind::MessageAppended, message_appended_payload(session.session_id, m));
      }
      journal.record(EventKind::ReportStored, report_stored_payload(report));
      journal.record(EventKind::AggregateRecorded, aggregate_recorded_payload(session.session_id));
      slots[i].result = evaluate_report(profile, std::move(report));
      slots[i].session = std::move(session);
    } catch (const Error& e) {
      slots[i].failure = ProfileFailure{profile.profile_id, e.code(), e.what()};
    }
  };

  if (mode == SimulationMode::Scripted || setup.workers <= 1) {
    for (std::size_t i = 0; i < profiles.size(); ++i) run_one(i);
  } else {
    for (std::size_t begin = 0; begin < profiles.size(); begin += setup.workers) {
      std::vector<std::future<void>> batch;
      for (std::size_t i = begin; i < std::min(profiles.size(), begin + setup.workers); ++i) {
        batch.push_back(std::async(std::launch::async, run_one, i));
      }
      for (auto& f : batch) f.get();
    }
  }

  BenchmarkOutcome out;
  for (auto& s : slots) {
    if (s.result) {
      out.results.push_back(std::move(*s.result));
      out.sessions.push_back(std::move(s.session));
    }
    if (s.failure) out.failures.push_back(std::move(*s.failure));
  }
  out.distribution = journal.read([](const PipelineState& st) { return st.aggregator.distribution(); });
  out.metrics.profiles = profiles.size();
  out.metrics.failed = out.failures.size();
  if (!out.results.empty()) {
    out.metrics.detection_rate = detection_rate(out.results);
    out.metrics.top1_accuracy = top1_accuracy(out.results);
    if (std::any_of(out.results.begin(), out.results.end(), [](const EvalResult& r) { return r.detected; })) {
      out.metrics.speed_of_detection = speed_of_detection(out.results);
    }
  }
  return out;
}

}  // namespace kgap
