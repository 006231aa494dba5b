#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "kgap/aggregator.hpp"
#include "kgap/dialogue.hpp"
#include "kgap/gap_identifier.hpp"
#include "kgap/util.hpp"

namespace kgap {

enum class EventKind { SessionCreated, MessageAppended, ReportStored, AggregateRecorded };

std::string_view event_kind_name(EventKind kind);
EventKind parse_event_kind(std::string_view name);

struct Event {
  std::int64_t seq = 0;
  EventKind kind = EventKind::SessionCreated;
  Millis ts = 0;
  nlohmann::json payload;

  nlohmann::json to_json() const;
  static Event from_json(const nlohmann::json& doc);  // throws InvalidArgument
};

// Sessions, stored reports and the frequency table, as rebuilt from events.
struct PipelineState {
  PipelineState(std::string course_id, std::string registry_version)
      : aggregator(std::move(course_id), std::move(registry_version)) {}

  std::map<std::string, DialogueSession> sessions;
  std::map<std::string, SessionReport> reports;
  Aggregator aggregator;
  std::int64_t last_seq = 0;

  // Throws CorruptEventError when the event does not follow the state
  // (non-increasing seq, unknown session, malformed payload).
  void apply(const Event& event);

  nlohmann::json to_json() const;
  static PipelineState from_json(const nlohmann::json& doc);
};

// Parses a newline-delimited event log. A line that is not a complete event,
// or whose seq does not increase, raises CorruptEventError naming the seq
// where reading stopped.
std::vector<Event> read_events(const std::filesystem::path& path);

// Append-only NDJSON writer. Opening an existing log continues its sequence.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path);

  // Writes and flushes one line; returns the event with its assigned seq.
  Event append(EventKind kind, nlohmann::json payload, Millis ts);

  std::int64_t last_seq() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::int64_t last_seq_ = 0;
};

std::filesystem::path snapshot_path(const std::filesystem::path& log_path);
void write_snapshot(const std::filesystem::path& log_path, const PipelineState& state);

struct ReplayOptions {
  // When unset, taken from the first session / report in the log.
  std::optional<std::string> course_id;
  std::optional<std::string> registry_version;
  bool use_snapshot = true;
};

// Rebuilds state from a log (and its snapshot, when present and usable).
// A missing log yields an empty state.
PipelineState replay(const std::filesystem::path& log_path, const ReplayOptions& options = {});
PipelineState replay_events(const std::vector<Event>& events, std::string course_id,
                            std::string registry_version);

// Single writer for pipeline state: every mutation is an event that is
// appended to the log (when one is attached) and then applied to the live
// state, so replay reproduces the live state exactly.
class Journal {
 public:
  Journal(PipelineState initial, std::optional<std::filesystem::path> log_path, Clock clock,
          std::size_t snapshot_every = 0);

  Event record(EventKind kind, nlohmann::json payload);

  // Runs f(state) under a shared lock.
  template <typename F>
  auto read(F&& f) const {
    std::shared_lock lock(state_mu_);
    return f(static_cast<const PipelineState&>(state_));
  }

  std::int64_t last_seq() const;
  Millis now() const { return clock_(); }

 private:
  mutable std::mutex write_mu_;
  mutable std::shared_mutex state_mu_;
  PipelineState state_;
  std::optional<EventLog> log_;
  Clock clock_;
  std::size_t snapshot_every_;
};

// Payload helpers for the four event kinds.
nlohmann::json session_created_payload(const DialogueSession& session);
nlohmann::json message_appended_payload(const std::string& session_id, const ChatMessage& message);
nlohmann::json report_stored_payload(const SessionReport& report);
nlohmann::json aggregate_recorded_payload(const std::string& session_id);

nlohmann::json session_to_json(const DialogueSession& session);
DialogueSession session_from_json(const nlohmann::json& doc);

}  // namespace kgap
