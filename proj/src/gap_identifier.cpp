#include "kgap/gap_identifier.hpp"

#include <algorithm>

#include "kgap/error.hpp"
#include "kgap/util.hpp"

namespace kgap {

using nlohmann::json;

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Gap: return "gap";
    case Verdict::Correct: return "correct";
    case Verdict::InsufficientEvidence: return "insufficient_evidence";
  }
  return "correct";
}

Verdict parse_verdict(std::string_view name) {
  if (name == "gap") return Verdict::Gap;
  if (name == "correct") return Verdict::Correct;
  if (name == "insufficient_evidence") return Verdict::InsufficientEvidence;
  throw Error(Errc::InvalidArgument, "unknown verdict '" + std::string(name) + "'");
}

std::map<std::string, KcRollup> rollup_findings(const std::vector<GapFinding>& findings) {
  std::map<std::string, KcRollup> out;
  for (const auto& f : findings) {
    if (f.verdict != Verdict::Gap) continue;
    const double conf = f.confidence.value_or(0.0);
    auto [it, inserted] = out.try_emplace(f.kc_id, KcRollup{conf, f.turn_index, 0});
    auto& r = it->second;
    r.max_confidence = std::max(r.max_confidence, conf);
    r.first_detected_turn = std::min(r.first_detected_turn, f.turn_index);
    ++r.occurrences;
  }
  return out;
}

std::optional<std::string> top_kc(const SessionReport& report) {
  const std::pair<const std::string, KcRollup>* best = nullptr;
  for (const auto& entry : report.distinct_kcs) {
    if (!best) {
      best = &entry;
      continue;
    }
    const auto& [id, r] = entry;
    const auto& b = best->second;
    // Map iteration is in id order, so on a full tie the earlier entry wins.
    if (r.max_confidence > b.max_confidence ||
        (r.max_confidence == b.max_confidence && r.first_detected_turn < b.first_detected_turn)) {
      best = &entry;
    }
  }
  if (!best) return std::nullopt;
  return best->first;
}

namespace {

json finding_to_json(const GapFinding& f) {
  json j = {{"session_id", f.session_id},
            {"turn_index", f.turn_index},
            {"verdict", verdict_name(f.verdict)}};
  if (f.verdict == Verdict::Gap) {
    j["kc_id"] = f.kc_id;
    j["confidence"] = f.confidence.value_or(0.0);
    j["misconception"] = f.misconception;
  }
  return j;
}

GapFinding finding_from_json(const json& j) {
  GapFinding f;
  f.session_id = j.at("session_id").get<std::string>();
  f.turn_index = j.at("turn_index").get<std::size_t>();
  f.verdict = parse_verdict(j.at("verdict").get<std::string>());
  if (f.verdict == Verdict::Gap) {
    f.kc_id = j.at("kc_id").get<std::string>();
    f.confidence = j.at("confidence").get<double>();
    f.misconception = j.at("misconception").get<std::string>();
  }
  return f;
}

}  // namespace

json to_json(const SessionReport& report) {
  json findings = json::array();
  for (const auto& f : report.findings) findings.push_back(finding_to_json(f));
  json distinct = json::array();
  for (const auto& [id, r] : report.distinct_kcs) {
    distinct.push_back({{"kc_id", id},
                        {"max_confidence", r.max_confidence},
                        {"first_detected_turn", r.first_detected_turn},
                        {"occurrences", r.occurrences}});
  }
  return {{"session_id", report.session_id},
          {"registry_version", report.registry_version},
          {"status", report.status == ReportStatus::Analyzed ? "analyzed" : "insufficient"},
          {"findings", std::move(findings)},
          {"distinct_kcs", std::move(distinct)},
          {"analyzed_turns", report.analyzed_turns},
          {"unanalyzed_turns", report.unanalyzed_turns},
          {"diagnostics",
           {{"dropped_unknown_kcs", report.dropped_unknown_kcs},
            {"dropped_malformed", report.dropped_malformed}}}};
}

SessionReport session_report_from_json(const json& doc) {
  try {
    SessionReport r;
    r.session_id = doc.at("session_id").get<std::string>();
    r.registry_version = doc.at("registry_version").get<std::string>();
    const auto status = doc.at("status").get<std::string>();
    if (status == "analyzed") {
      r.status = ReportStatus::Analyzed;
    } else if (status == "insufficient") {
      r.status = ReportStatus::Insufficient;
    } else {
      throw Error(Errc::InvalidArgument, "unknown report status '" + status + "'");
    }
    for (const auto& f : doc.at("findings")) r.findings.push_back(finding_from_json(f));
    r.distinct_kcs = rollup_findings(r.findings);
    r.analyzed_turns = doc.at("analyzed_turns").get<std::vector<std::size_t>>();
    r.unanalyzed_turns = doc.at("unanalyzed_turns").get<std::vector<std::size_t>>();
    r.dropped_unknown_kcs = doc.at("diagnostics").at("dropped_unknown_kcs").get<std::size_t>();
    r.dropped_malformed = doc.at("diagnostics").at("dropped_malformed").get<std::size_t>();
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed session report: ") + e.what());
  }
}

const json& finding_list_schema() {
  static const json kSchema = json::parse(R"({
  "type": "object",
  "required": ["findings"],
  "properties": {
    "findings": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["verdict"],
        "properties": {
          "verdict": {"type": "string", "enum": ["gap", "correct", "insufficient_evidence"]},
          "kc_id": {"type": "string"},
          "confidence": {"type": "number", "minimum": 0, "maximum": 1},
          "misconception": {"type": "string"}
        }
      }
    }
  }
})");
  return kSchema;
}

GapIdentifier::GapIdentifier(Gateway& gateway, const KcRegistry& registry,
                             GapIdentifierConfig config)
    : gateway_(gateway), registry_(registry), config_(config) {
  system_prompt_ =
      "You analyze tutoring conversations from the course \"" + registry_.course_id() +
      "\" to find student knowledge gaps.\n"
      "For the turn pair you are given, judge whether the student's response is correct, and map "
      "every misconception or missing understanding it reveals onto the knowledge components "
      "listed below. Use only identifiers from this list.\n\n"
      "Knowledge components:\n" +
      render_for_prompt(registry_) +
      "\nReport each gap as verdict \"gap\" with its kc_id, a one-sentence misconception, and a "
      "confidence between 0 and 1. Use verdict \"correct\" when the response shows sound "
      "understanding, and \"insufficient_evidence\" when the turn is too short or vague to "
      "support a reliable conclusion. A turn may reveal several gaps.";
}

CompletionRequest GapIdentifier::build_request(const TurnPair& pair,
                                               std::span<const ChatMessage> history) const {
  std::string user = "Conversation before this turn pair:\n";
  if (history.empty()) user += "(none)\n";
  for (const auto& m : history) {
    user += (m.role == Role::User ? "Student: " : "Tutor: ") + m.content + "\n";
  }
  user += "\nTurn pair " + std::to_string(pair.index) + ":\nTutor: ";
  user += pair.agent_turn.empty() ? "(conversation opening)" : pair.agent_turn;
  user += "\nStudent: " + pair.student_response + "\n";

  CompletionRequest req;
  req.messages = {{Role::System, system_prompt_}, {Role::User, std::move(user)}};
  req.response_schema = finding_list_schema();
  req.temperature = config_.temperature;
  req.max_tokens = config_.max_tokens;
  return req;
}

TurnAnalysis GapIdentifier::analyze_turn_pair(std::string_view session_id, const TurnPair& pair,
                                              std::span<const ChatMessage> history) {
  json reply;
  try {
    reply = gateway_.complete_json(build_request(pair, history));
  } catch (const Error& e) {
    throw Error(Errc::AnalysisFailed, "turn " + std::to_string(pair.index) + ": " +
                                          std::string(errc_name(e.code())) + ": " + e.what());
  }

  TurnAnalysis out;
  for (const auto& item : reply.at("findings")) {
    GapFinding f;
    f.session_id = std::string(session_id);
    f.turn_index = pair.index;
    f.verdict = parse_verdict(item.at("verdict").get<std::string>());
    if (f.verdict == Verdict::Gap) {
      const auto kc = item.value("kc_id", std::string{});
      if (!registry_.contains(kc)) {
        ++out.dropped_unknown_kcs;
        continue;
      }
      if (!item.contains("confidence")) {
        ++out.dropped_malformed;
        continue;
      }
      f.kc_id = kc;
      f.confidence = item["confidence"].get<double>();
      f.misconception = trim(item.value("misconception", std::string{}));
      if (f.misconception.empty()) {
        ++out.dropped_malformed;
        continue;
      }
    }
    out.findings.push_back(std::move(f));
  }
  std::lock_guard lock(mu_);
  dropped_unknown_total_ += out.dropped_unknown_kcs;
  return out;
}

SessionReport GapIdentifier::analyze_session(const DialogueSession& session) {
  SessionReport report;
  report.session_id = session.session_id;
  report.registry_version = registry_.version();

  const auto pairs = turn_pairs(session);
  std::size_t evidence = 0;
  for (const auto& p : pairs) evidence += trim(p.student_response).size();
  if (pairs.empty() || evidence < config_.min_evidence_chars) {
    report.status = ReportStatus::Insufficient;
    return report;
  }

  bool any_conclusive = false;
  for (const auto& pair : pairs) {
    std::optional<TurnAnalysis> cached;
    {
      std::lock_guard lock(mu_);
      auto s = cache_.find(session.session_id);
      if (s != cache_.end()) {
        if (auto t = s->second.find(pair.index); t != s->second.end()) cached = t->second;
      }
    }
    if (!cached) {
      const std::size_t history_end =
          pair.agent_turn.empty() ? pair.message_pos : pair.message_pos - 1;
      std::span<const ChatMessage> history(session.messages.data(), history_end);
      try {
        cached = analyze_turn_pair(session.session_id, pair, history);
      } catch (const Error& e) {
        if (e.code() != Errc::AnalysisFailed) throw;
        report.unanalyzed_turns.push_back(pair.index);
        continue;
      }
      std::lock_guard lock(mu_);
      cache_[session.session_id][pair.index] = *cached;
    }
    report.analyzed_turns.push_back(pair.index);
    report.dropped_unknown_kcs += cached->dropped_unknown_kcs;
    report.dropped_malformed += cached->dropped_malformed;
    for (const auto& f : cached->findings) {
      if (f.verdict != Verdict::InsufficientEvidence) any_conclusive = true;
      report.findings.push_back(f);
    }
  }

  report.distinct_kcs = rollup_findings(report.findings);
  // The model may itself decline every analyzed turn as too thin to judge.
  const bool model_declined = !report.analyzed_turns.empty() && !any_conclusive &&
                              std::any_of(report.findings.begin(), report.findings.end(),
                                          [](const GapFinding& f) {
                                            return f.verdict == Verdict::InsufficientEvidence;
                                          });
  report.status = model_declined ? ReportStatus::Insufficient : ReportStatus::Analyzed;
  return report;
}

void GapIdentifier::seed(const SessionReport& report) {
  std::map<std::size_t, TurnAnalysis> turns;
  for (auto t : report.analyzed_turns) turns[t];
  for (const auto& f : report.findings) {
    if (auto it = turns.find(f.turn_index); it != turns.end()) it->second.findings.push_back(f);
  }
  if (!turns.empty()) {
    turns.begin()->second.dropped_unknown_kcs = report.dropped_unknown_kcs;
    turns.begin()->second.dropped_malformed = report.dropped_malformed;
  }
  std::lock_guard lock(mu_);
  cache_[report.session_id] = std::move(turns);
}

void GapIdentifier::forget(const std::string& session_id) {
  std::lock_guard lock(mu_);
  cache_.erase(session_id);
}

std::uint64_t GapIdentifier::dropped_unknown_total() const {
  std::lock_guard lock(mu_);
  return dropped_unknown_total_;
}

}  // namespace kgap
