#include "kgap/event_log.hpp"

#include <sstream>

#include "kgap/error.hpp"

namespace kgap {

using nlohmann::json;

std::string_view event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::SessionCreated: return "session_created";
    case EventKind::MessageAppended: return "message_appended";
    case EventKind::ReportStored: return "report_stored";
    case EventKind::AggregateRecorded: return "aggregate_recorded";
  }
  return "session_created";
}

EventKind parse_event_kind(std::string_view name) {
  if (name == "session_created") return EventKind::SessionCreated;
  if (name == "message_appended") return EventKind::MessageAppended;
  if (name == "report_stored") return EventKind::ReportStored;
  if (name == "aggregate_recorded") return EventKind::AggregateRecorded;
  throw Error(Errc::InvalidArgument, "unknown event kind '" + std::string(name) + "'");
}

json Event::to_json() const {
  return {{"seq", seq}, {"kind", event_kind_name(kind)}, {"ts", ts}, {"payload", payload}};
}

Event Event::from_json(const json& doc) {
  try {
    Event e;
    e.seq = doc.at("seq").get<std::int64_t>();
    e.kind = parse_event_kind(doc.at("kind").get<std::string>());
    e.ts = doc.at("ts").get<Millis>();
    e.payload = doc.at("payload");
    return e;
  } catch (const json::exception& ex) {
    throw Error(Errc::InvalidArgument, std::string("malformed event: ") + ex.what());
  }
}

json session_to_json(const DialogueSession& s) {
  json messages = json::array();
  for (const auto& m : s.messages) {
    messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  return {{"session_id", s.session_id},
          {"course_id", s.course_id},
          {"student_ref", s.student_ref},
          {"created_at", s.created_at},
          {"updated_at", s.updated_at},
          {"messages", std::move(messages)}};
}

DialogueSession session_from_json(const json& doc) {
  try {
    DialogueSession s;
    s.session_id = doc.at("session_id").get<std::string>();
    s.course_id = doc.value("course_id", std::string{});
    s.student_ref = doc.value("student_ref", std::string{});
    s.created_at = doc.value("created_at", Millis{0});
    s.updated_at = doc.value("updated_at", s.created_at);
    for (const auto& m : doc.at("messages")) {
      s.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed session: ") + e.what());
  }
}

json session_created_payload(const DialogueSession& s) {
  return {{"session_id", s.session_id}, {"course_id", s.course_id}, {"student_ref", s.student_ref}};
}

json message_appended_payload(const std::string& session_id, const ChatMessage& m) {
  return {{"session_id", session_id}, {"role", role_name(m.role)}, {"content", m.content}};
}

json report_stored_payload(const SessionReport& report) { return {{"report", to_json(report)}}; }

json aggregate_recorded_payload(const std::string& session_id) {
  return {{"session_id", session_id}};
}

void PipelineState::apply(const Event& e) {
  if (e.seq <= last_seq) {
    throw CorruptEventError(e.seq, "event seq " + std::to_string(e.seq) +
                                       " does not follow " + std::to_string(last_seq));
  }
  auto corrupt = [&](const std::string& why) -> CorruptEventError {
    return CorruptEventError(e.seq, "event " + std::to_string(e.seq) + " (" +
                                        std::string(event_kind_name(e.kind)) + "): " + why);
  };
  try {
    switch (e.kind) {
      case EventKind::SessionCreated: {
        DialogueSession s;
        s.session_id = e.payload.at("session_id").get<std::string>();
        s.course_id = e.payload.at("course_id").get<std::string>();
        s.student_ref = e.payload.at("student_ref").get<std::string>();
        s.created_at = s.updated_at = e.ts;
        if (sessions.contains(s.session_id)) throw corrupt("session already exists");
        sessions.emplace(s.session_id, std::move(s));
        break;
      }
      case EventKind::MessageAppended: {
        auto it = sessions.find(e.payload.at("session_id").get<std::string>());
        if (it == sessions.end()) throw corrupt("unknown session");
        auto& s = it->second;
        ChatMessage m{parse_role(e.payload.at("role").get<std::string>()),
                      e.payload.at("content").get<std::string>()};
        const Role expected = s.messages.size() % 2 == 0 ? Role::User : Role::Assistant;
        if (m.role != expected || m.content.empty()) throw corrupt("message breaks alternation");
        s.messages.push_back(std::move(m));
        s.updated_at = std::max(s.updated_at, e.ts);
        break;
      }
      case EventKind::ReportStored: {
        auto report = session_report_from_json(e.payload.at("report"));
        if (!sessions.contains(report.session_id)) throw corrupt("report for unknown session");
        reports[report.session_id] = std::move(report);
        break;
      }
      case EventKind::AggregateRecorded: {
        auto it = reports.find(e.payload.at("session_id").get<std::string>());
        if (it == reports.end()) throw corrupt("no stored report to aggregate");
        try {
          aggregator.record(it->second, e.ts);
        } catch (const Error& err) {
          if (err.code() != Errc::StaleRegistry) throw;
        }
        break;
      }
    }
  } catch (const CorruptEventError&) {
    throw;
  } catch (const json::exception& ex) {
    throw corrupt(ex.what());
  } catch (const Error& ex) {
    throw corrupt(ex.what());
  }
  last_seq = e.seq;
}

json PipelineState::to_json() const {
  json s = json::array();
  for (const auto& [id, session] : sessions) s.push_back(session_to_json(session));
  json r = json::array();
  for (const auto& [id, report] : reports) r.push_back(kgap::to_json(report));
  return {{"last_seq", last_seq}, {"sessions", std::move(s)}, {"reports", std::move(r)},
          {"aggregator", aggregator.snapshot()}};
}

PipelineState PipelineState::from_json(const json& doc) {
  try {
    auto agg = Aggregator::from_snapshot(doc.at("aggregator"));
    PipelineState st(agg.course_id(), agg.registry_version());
    st.aggregator = agg;
    st.last_seq = doc.at("last_seq").get<std::int64_t>();
    for (const auto& s : doc.at("sessions")) {
      auto session = session_from_json(s);
      st.sessions.emplace(session.session_id, std::move(session));
    }
    for (const auto& r : doc.at("reports")) {
      auto report = session_report_from_json(r);
      st.reports.emplace(report.session_id, std::move(report));
    }
    return st;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed state snapshot: ") + e.what());
  }
}

std::vector<Event> read_events(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open event log " + path.string());
  std::vector<Event> events;
  std::int64_t last = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const bool complete_line = !in.eof();  // getline stopped at '\n'
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !complete_line) {
      throw CorruptEventError(last + 1, "event log line after seq " + std::to_string(last) +
                                            " is truncated or not JSON");
    }
    Event e;
    try {
      e = Event::from_json(doc);
    } catch (const Error& err) {
      throw CorruptEventError(last + 1, err.what());
    }
    if (e.seq <= last) {
      throw CorruptEventError(e.seq, "event seq " + std::to_string(e.seq) + " does not follow " +
                                         std::to_string(last));
    }
    last = e.seq;
    events.push_back(std::move(e));
  }
  return events;
}

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    auto events = read_events(path_);
    if (!events.empty()) last_seq_ = events.back().seq;
  } else if (path_.has_parent_path()) {
    std::filesystem::create_directories(path_.parent_path());
  }
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw Error(Errc::Io, "cannot open event log for append: " + path_.string());
}

Event EventLog::append(EventKind kind, json payload, Millis ts) {
  std::lock_guard lock(mu_);
  Event e{last_seq_ + 1, kind, ts, std::move(payload)};
  out_ << e.to_json().dump() << '\n';
  out_.flush();
  if (!out_) throw Error(Errc::Io, "write to event log failed: " + path_.string());
  last_seq_ = e.seq;
  return e;
}

std::int64_t EventLog::last_seq() const {
  std::lock_guard lock(mu_);
  return last_seq_;
}

std::filesystem::path snapshot_path(const std::filesystem::path& log_path) {
  auto p = log_path;
  p += ".snapshot.json";
  return p;
}

void write_snapshot(const std::filesystem::path& log_path, const PipelineState& state) {
  write_file_atomic(snapshot_path(log_path), state.to_json().dump());
}

PipelineState replay_events(const std::vector<Event>& events, std::string course_id,
                            std::string registry_version) {
  PipelineState state(std::move(course_id), std::move(registry_version));
  for (const auto& e : events) state.apply(e);
  return state;
}

PipelineState replay(const std::filesystem::path& log_path, const ReplayOptions& options) {
  std::vector<Event> events;
  if (std::filesystem::exists(log_path)) events = read_events(log_path);

  std::optional<PipelineState> from_snapshot;
  const auto snap = snapshot_path(log_path);
  if (options.use_snapshot && std::filesystem::exists(snap)) {
    auto st = PipelineState::from_json(json::parse(read_file(snap)));
    const std::int64_t log_last = events.empty() ? 0 : events.back().seq;
    const bool version_ok =
        !options.registry_version || *options.registry_version == st.aggregator.registry_version();
    if (st.last_seq <= log_last && version_ok) from_snapshot = std::move(st);
  }

  if (from_snapshot) {
    for (const auto& e : events) {
      if (e.seq > from_snapshot->last_seq) from_snapshot->apply(e);
    }
    return std::move(*from_snapshot);
  }

  std::string course = options.course_id.value_or("");
  std::string version = options.registry_version.value_or("");
  for (const auto& e : events) {
    if (!options.course_id && course.empty() && e.kind == EventKind::SessionCreated) {
      course = e.payload.value("course_id", std::string{});
    }
    if (!options.registry_version && version.empty() && e.kind == EventKind::ReportStored &&
        e.payload.contains("report")) {
      version = e.payload["report"].value("registry_version", std::string{});
    }
  }
  return replay_events(events, std::move(course), std::move(version));
}

Journal::Journal(PipelineState initial, std::optional<std::filesystem::path> log_path, Clock clock,
                 std::size_t snapshot_every)
    : state_(std::move(initial)), clock_(std::move(clock)), snapshot_every_(snapshot_every) {
  if (log_path) {
    log_.emplace(*log_path);
    if (log_->last_seq() != state_.last_seq) {
      throw Error(Errc::Startup, "event log " + log_path->string() + " ends at seq " +
                                     std::to_string(log_->last_seq()) + " but state is at " +
                                     std::to_string(state_.last_seq));
    }
  }
}

Event Journal::record(EventKind kind, json payload) {
  std::lock_guard wlock(write_mu_);
  Event e;
  {
    std::unique_lock slock(state_mu_);
    e = Event{state_.last_seq + 1, kind, clock_(), std::move(payload)};
    state_.apply(e);
  }
  if (log_) {
    auto written = log_->append(e.kind, e.payload, e.ts);
    if (written.seq != e.seq) {
      throw Error(Errc::Internal, "event log and state diverged at seq " + std::to_string(e.seq));
    }
    if (snapshot_every_ > 0 && e.seq % static_cast<std::int64_t>(snapshot_every_) == 0) {
      std::shared_lock slock(state_mu_);
      write_snapshot(log_->path(), state_);
    }
  }
  return e;
}

std::int64_t Journal::last_seq() const {
  std::shared_lock lock(state_mu_);
  return state_.last_seq;
}

}  // namespace kgap
