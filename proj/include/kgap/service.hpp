#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "kgap/dialogue.hpp"
#include "kgap/gap_identifier.hpp"
#include "kgap/kc_registry.hpp"
#include "kgap/llm_gateway.hpp"
#include "kgap/retrieval.hpp"
#include "kgap/util.hpp"

namespace kgap {

struct ServiceConfig {
  std::string kc_list_path;
  std::string corpus_dir;
  std::optional<std::string> log_path;  // in-memory only when unset
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t workers = 2;
  std::string instructor_token;  // falls back to QQ_INSTRUCTOR_TOKEN
  std::string pseudonym_salt;    // falls back to QQ_PSEUDONYM_SALT, then a random salt
  Millis lecture_window_ms = 75LL * 60 * 1000;
  std::size_t snapshot_every = 500;
  std::string static_dir;  // optional directory served at /
  ChunkingOptions chunking;
  DialogueConfig dialogue;
  GapIdentifierConfig analysis;
  GatewayOptions gateway;
};

// Salted SHA-256 of a client-supplied student identifier (first 32 hex chars).
std::string pseudonymize(std::string_view salt, std::string_view student_identifier);

// Splits a reply into the pieces sent as server-sent events. Concatenating
// the pieces yields the reply.
std::vector<std::string> stream_pieces(std::string_view reply, std::size_t target = 48);

// Live classroom service: HTTP API, event-log persistence, and a background
// pool that analyzes each new student message and feeds the frequency table.
//
//   POST /api/sessions                      -> {session_id}
//   POST /api/sessions/{id}/messages {text} -> SSE reply (JSON with ?stream=0)
//   POST /api/sessions/{id}/retry           -> reply to a stored unanswered message
//   GET  /api/sessions/{id}                 -> transcript
//   GET  /api/reports/top?n=&window=&format= (instructor) -> FrequencyReport
//   GET  /api/reports/sessions/{id}          (instructor) -> SessionReport
//   GET  /healthz
class Service {
 public:
  // Validates configuration and rebuilds state from the event log. Throws
  // Error(Startup) with a message naming the offending flag or variable.
  Service(ServiceConfig config, std::shared_ptr<ChatProvider> tutor_provider,
          std::shared_ptr<ChatProvider> analysis_provider, Clock clock = system_now);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and starts serving on background threads; returns the bound port.
  int start();
  // Blocks until stop() is called.
  void wait();
  void stop();

  // Waits for the analysis queue to empty. False on timeout.
  bool drain(std::chrono::milliseconds timeout);

  std::int64_t event_seq() const;
  std::size_t pending_analyses() const;
  const KcRegistry& registry() const;

  // The operations behind the HTTP routes.
  std::string create_session(std::string_view student_identifier);
  std::string post_message(const std::string& session_id, std::string_view text);
  std::string retry_reply(const std::string& session_id);
  std::optional<DialogueSession> session(const std::string& session_id) const;
  std::optional<SessionReport> session_report(const std::string& session_id) const;
  nlohmann::json top_report(std::size_t n, std::string_view window) const;
  nlohmann::json state_json() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace kgap
