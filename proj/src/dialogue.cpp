#include "kgap/dialogue.hpp"

#include <algorithm>

#include "kgap/error.hpp"

namespace kgap {

std::size_t DialogueSession::student_message_count() const {
  return static_cast<std::size_t>(std::count_if(
      messages.begin(), messages.end(), [](const ChatMessage& m) { return m.role == Role::User; }));
}

void validate_session(const DialogueSession& session) {
  for (std::size_t i = 0; i < session.messages.size(); ++i) {
    const Role expected = i % 2 == 0 ? Role::User : Role::Assistant;
    if (session.messages[i].role != expected) {
      throw Error(Errc::InvalidArgument, "session " + session.session_id + ": message " +
                                             std::to_string(i) + " breaks user/assistant alternation");
    }
    if (session.messages[i].content.empty()) {
      throw Error(Errc::InvalidArgument, "session " + session.session_id + ": empty message");
    }
  }
  if (session.updated_at < session.created_at) {
    throw Error(Errc::InvalidArgument, "session " + session.session_id + ": timestamps out of order");
  }
}

std::vector<TurnPair> turn_pairs(const DialogueSession& session) {
  std::vector<TurnPair> pairs;
  for (std::size_t i = 0; i < session.messages.size(); ++i) {
    const auto& m = session.messages[i];
    if (m.role != Role::User) continue;
    TurnPair p;
    p.index = pairs.size() + 1;
    p.message_pos = i;
    if (i > 0 && session.messages[i - 1].role == Role::Assistant) {
      p.agent_turn = session.messages[i - 1].content;
    }
    p.student_response = m.content;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::string_view probing_intensity_name(ProbingIntensity p) {
  switch (p) {
    case ProbingIntensity::Off: return "off";
    case ProbingIntensity::ClosingQuestion: return "closing_question";
    case ProbingIntensity::Interleaved: return "interleaved";
  }
  return "closing_question";
}

ProbingIntensity parse_probing_intensity(std::string_view name) {
  if (name == "off") return ProbingIntensity::Off;
  if (name == "closing_question") return ProbingIntensity::ClosingQuestion;
  if (name == "interleaved") return ProbingIntensity::Interleaved;
  throw Error(Errc::InvalidArgument, "unknown probing intensity '" + std::string(name) + "'");
}

namespace {

constexpr std::string_view kStrategy =
    "Interaction Strategy\n"
    "1. First, acknowledge their specific issue and offer a solution\n"
    "2. As you explain the solution, naturally incorporate questions that help reveal their "
    "conceptual understanding\n"
    "3. Conclude with follow-up questions as next steps\n"
    "\n"
    "Examples of Natural Diagnostic Questions:\n"
    "1. It seems you might be encountering an issue with [concept]. How do you typically think "
    "about [concept] when you're designing your solution?\n"
    "2. What's your goal after this step? Knowing that will help me suggest the most appropriate "
    "method.\n";

}  // namespace

std::string build_tutor_system_prompt(const DialogueConfig& config,
                                      const std::vector<CourseChunk>& material) {
  std::string p = "You are a teaching assistant";
  if (!config.course_name.empty()) p += " for the course \"" + config.course_name + "\"";
  p += ". Answer student questions accurately and stay consistent with the course material "
       "provided below.\n\n";

  switch (config.probing) {
    case ProbingIntensity::Off:
      p += "Give a direct, complete answer.\n";
      break;
    case ProbingIntensity::ClosingQuestion:
      p += kStrategy;
      p += "\nAlways end your reply with at least one diagnostic follow-up question.\n";
      break;
    case ProbingIntensity::Interleaved:
      p += kStrategy;
      p += "\nAsk short diagnostic questions while you explain, not only at the end, and still "
           "end your reply with a follow-up question.\n";
      break;
  }

  p += "\nCourse material:\n";
  if (material.empty()) {
    p += "(no matching passages)\n";
  } else {
    for (const auto& c : material) {
      p += "[" + c.doc_id + " #" + std::to_string(c.seq) + "]\n" + c.text + "\n\n";
    }
  }
  return p;
}

DialogueAgent::DialogueAgent(Gateway& gateway, const Retriever& retriever, DialogueConfig config,
                             Clock clock)
    : gateway_(gateway), retriever_(retriever), config_(std::move(config)), clock_(std::move(clock)) {
  if (config_.retrieve_k == 0) throw Error(Errc::InvalidArgument, "retrieve_k must be >= 1");
}

CompletionRequest DialogueAgent::build_request(const DialogueSession& session) const {
  if (!session.awaiting_reply()) {
    throw Error(Errc::InvalidArgument, "session has no student message awaiting a reply");
  }
  auto material = retriever_.retrieve(session.messages.back().content, config_.retrieve_k);
  CompletionRequest req;
  req.temperature = config_.temperature;
  req.max_tokens = config_.max_tokens;
  req.messages.push_back({Role::System, build_tutor_system_prompt(config_, material)});
  req.messages.insert(req.messages.end(), session.messages.begin(), session.messages.end());
  return req;
}

std::string DialogueAgent::answer_pending(DialogueSession& session) {
  std::string reply;
  try {
    reply = gateway_.complete(build_request(session));
  } catch (const Error& e) {
    throw Error(Errc::RespondFailed, std::string(errc_name(e.code())) + ": " + e.what());
  }
  if (trim(reply).empty()) throw Error(Errc::RespondFailed, "model returned an empty reply");
  session.messages.push_back({Role::Assistant, reply});
  session.updated_at = std::max(session.updated_at, clock_());
  return reply;
}

std::string DialogueAgent::respond(DialogueSession& session, std::string_view student_message) {
  if (trim(student_message).empty()) {
    throw Error(Errc::InvalidArgument, "student message is empty");
  }
  if (session.awaiting_reply()) {
    throw Error(Errc::InvalidArgument, "previous student message has no reply yet; resume first");
  }
  session.messages.push_back({Role::User, std::string(student_message)});
  session.updated_at = std::max(session.updated_at, clock_());
  return answer_pending(session);
}

std::string DialogueAgent::resume(DialogueSession& session) {
  if (!session.awaiting_reply()) {
    throw Error(Errc::InvalidArgument, "no student message awaiting a reply");
  }
  return answer_pending(session);
}

}  // namespace kgap
