#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "kgap/llm_gateway.hpp"
#include "kgap/retrieval.hpp"
#include "kgap/util.hpp"

namespace kgap {

struct DialogueSession {
  std::string session_id;
  std::string course_id;
  std::string student_ref;  // pseudonym, never the raw identifier
  std::vector<ChatMessage> messages;
  Millis created_at = 0;
  Millis updated_at = 0;

  bool awaiting_reply() const {
    return !messages.empty() && messages.back().role == Role::User;
  }
  std::size_t student_message_count() const;

  friend bool operator==(const DialogueSession&, const DialogueSession&) = default;
};

// Checks role alternation (user first, then assistant/user in turn) and
// timestamp order. Throws InvalidArgument.
void validate_session(const DialogueSession& session);

// (t_j, s_j): the tutor turn immediately before a student message, and that
// message. The opening student message pairs with an empty tutor turn.
struct TurnPair {
  std::size_t index = 0;          // 1-based
  std::size_t message_pos = 0;    // position of s_j in session.messages
  std::string agent_turn;
  std::string student_response;

  friend bool operator==(const TurnPair&, const TurnPair&) = default;
};

std::vector<TurnPair> turn_pairs(const DialogueSession& session);

enum class ProbingIntensity { Off, ClosingQuestion, Interleaved };

std::string_view probing_intensity_name(ProbingIntensity p);
ProbingIntensity parse_probing_intensity(std::string_view name);

struct DialogueConfig {
  std::string course_name;
  std::size_t retrieve_k = 4;
  ProbingIntensity probing = ProbingIntensity::ClosingQuestion;
  double temperature = 0.7;
  int max_tokens = 1024;
};

// The tutor's system prompt: role, probing strategy (unless Off) and the
// retrieved course passages.
std::string build_tutor_system_prompt(const DialogueConfig& config,
                                      const std::vector<CourseChunk>& material);

class DialogueAgent {
 public:
  DialogueAgent(Gateway& gateway, const Retriever& retriever, DialogueConfig config,
                Clock clock = system_now);

  // Appends the student message, asks the model, appends and returns the
  // reply. An empty message is rejected with the session untouched. A
  // gateway failure raises RespondFailed and leaves only the student message
  // stored; call resume() to answer it.
  std::string respond(DialogueSession& session, std::string_view student_message);

  // Answers a stored student message that has no reply yet.
  std::string resume(DialogueSession& session);

  // The request respond() would send for a session whose last message is the
  // student's.
  CompletionRequest build_request(const DialogueSession& session) const;

  const DialogueConfig& config() const { return config_; }

 private:
  std::string answer_pending(DialogueSession& session);

  Gateway& gateway_;
  const Retriever& retriever_;
  DialogueConfig config_;
  Clock clock_;
};

}  // namespace kgap
