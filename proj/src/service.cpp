#include "kgap/service.hpp"

#include <httplib.h>
#include <openssl/crypto.h>

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include "kgap/error.hpp"
#include "kgap/event_log.hpp"

namespace kgap {

using nlohmann::json;

namespace {

// A request that is well-formed but collides with the session's state.
class ConflictError : public Error {
 public:
  explicit ConflictError(const std::string& message) : Error(Errc::InvalidArgument, message) {}
};

class UnauthorizedError : public Error {
 public:
  UnauthorizedError() : Error(Errc::InvalidArgument, "instructor token required") {}
};

int http_status_for(const Error& e) {
  if (dynamic_cast<const ConflictError*>(&e)) return 409;
  if (dynamic_cast<const UnauthorizedError*>(&e)) return 401;
  switch (e.code()) {
    case Errc::InvalidArgument: return 400;
    case Errc::NotFound: return 404;
    case Errc::RespondFailed: return 502;
    default: return 500;
  }
}

std::string error_name(const Error& e) {
  if (dynamic_cast<const UnauthorizedError*>(&e)) return "Unauthorized";
  if (dynamic_cast<const ConflictError*>(&e)) return "Conflict";
  return std::string(errc_name(e.code()));
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, http_status_for(e), {{"error", error_name(e)}, {"message", e.what()}});
}

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

json transcript_json(const DialogueSession& s) {
  json messages = json::array();
  for (const auto& m : s.messages) messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  return {{"session_id", s.session_id},
          {"course_id", s.course_id},
          {"created_at", s.created_at},
          {"updated_at", s.updated_at},
          {"messages", std::move(messages)}};
}

}  // namespace

std::string pseudonymize(std::string_view salt, std::string_view student_identifier) {
  std::string material(salt);
  material += '\x1f';
  material += student_identifier;
  return sha256_hex(material).substr(0, 32);
}

std::vector<std::string> stream_pieces(std::string_view reply, std::size_t target) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < reply.size()) {
    std::size_t end = std::min(reply.size(), start + target);
    if (end < reply.size()) {
      auto space = reply.find(' ', end);
      end = space == std::string_view::npos ? reply.size() : space + 1;
    }
    out.emplace_back(reply.substr(start, end - start));
    start = end;
  }
  return out;
}

struct Service::Impl {
  ServiceConfig config;
  Clock clock;
  std::string token;
  std::string salt;

  std::unique_ptr<KcRegistry> registry;
  ChunkIndex index;
  std::unique_ptr<Gateway> tutor_gateway;
  std::unique_ptr<Gateway> analysis_gateway;
  std::unique_ptr<DialogueAgent> agent;
  std::unique_ptr<GapIdentifier> identifier;
  std::unique_ptr<Journal> journal;

  std::mutex locks_mu;
  std::map<std::string, std::shared_ptr<std::mutex>> session_locks;

  mutable std::mutex q_mu;
  std::condition_variable cv_work;
  mutable std::condition_variable cv_idle;
  std::deque<std::string> queue;
  std::set<std::string> queued;
  std::set<std::string> in_progress;
  std::set<std::string> dirty;
  bool stopping = false;
  std::vector<std::thread> workers;

  httplib::Server server;
  std::thread listener;
  int bound_port = -1;
  bool stopped = false;
  std::mutex lifecycle_mu;

  std::shared_ptr<std::mutex> lock_for(const std::string& id) {
    std::lock_guard lock(locks_mu);
    auto& m = session_locks[id];
    if (!m) m = std::make_shared<std::mutex>();
    return m;
  }

  DialogueSession find_session(const std::string& id) const {
    auto s = journal->read([&](const PipelineState& st) -> std::optional<DialogueSession> {
      auto it = st.sessions.find(id);
      if (it == st.sessions.end()) return std::nullopt;
      return it->second;
    });
    if (!s) throw Error(Errc::NotFound, "no session " + id);
    return *s;
  }

  void enqueue(const std::string& id) {
    {
      std::lock_guard lock(q_mu);
      if (in_progress.contains(id)) {
        dirty.insert(id);
      } else if (queued.insert(id).second) {
        queue.push_back(id);
      }
    }
    cv_work.notify_one();
  }

  void analyze(const std::string& id) {
    auto session = find_session(id);
    auto report = identifier->analyze_session(session);
    journal->record(EventKind::ReportStored, report_stored_payload(report));
    journal->record(EventKind::AggregateRecorded, aggregate_recorded_payload(id));
  }

  void worker_loop() {
    std::unique_lock lock(q_mu);
    while (true) {
      cv_work.wait(lock, [&] { return stopping || !queue.empty(); });
      if (stopping) return;
      std::string id = std::move(queue.front());
      queue.pop_front();
      queued.erase(id);
      in_progress.insert(id);
      lock.unlock();
      try {
        analyze(id);
      } catch (const std::exception& e) {
        std::cerr << "analysis of session " << id << " failed: " << e.what() << "\n";
      }
      lock.lock();
      in_progress.erase(id);
      if (dirty.erase(id) && queued.insert(id).second) {
        queue.push_back(id);
        cv_work.notify_one();
      }
      cv_idle.notify_all();
    }
  }

  std::size_t pending() const {
    std::lock_guard lock(q_mu);
    return queue.size() + in_progress.size();
  }

  std::string answer(const std::string& id, std::optional<std::string_view> text) {
    auto m = lock_for(id);
    std::unique_lock busy(*m, std::try_to_lock);
    if (!busy.owns_lock()) throw ConflictError("a reply for session " + id + " is already in progress");

    auto session = find_session(id);
    if (text) {
      if (trim(*text).empty()) throw Error(Errc::InvalidArgument, "message text is empty");
      if (session.awaiting_reply()) {
        throw ConflictError("the previous message has no reply yet; POST /api/sessions/" + id + "/retry");
      }
      ChatMessage user{Role::User, std::string(*text)};
      journal->record(EventKind::MessageAppended, message_appended_payload(id, user));
      session.messages.push_back(std::move(user));
      enqueue(id);
    } else if (!session.awaiting_reply()) {
      throw ConflictError("session " + id + " has no unanswered message");
    }
    std::string reply = agent->resume(session);
    journal->record(EventKind::MessageAppended,
                    message_appended_payload(id, ChatMessage{Role::Assistant, reply}));
    return reply;
  }

  std::string create_session(std::string_view student) {
    DialogueSession s;
    s.session_id = random_token();
    s.course_id = registry->course_id();
    s.student_ref = pseudonymize(salt, student.empty() ? random_token() : student);
    journal->record(EventKind::SessionCreated, session_created_payload(s));
    return s.session_id;
  }

  void require_instructor(const httplib::Request& req) const {
    std::string presented;
    if (auto auth = req.get_header_value("Authorization"); auth.starts_with("Bearer ")) {
      presented = auth.substr(7);
    } else {
      presented = req.get_header_value("X-Instructor-Token");
    }
    if (presented.size() != token.size() ||
        CRYPTO_memcmp(presented.data(), token.data(), token.size()) != 0) {
      throw UnauthorizedError();
    }
  }

  json health() const {
    return {{"status", "ok"},
            {"course_id", registry->course_id()},
            {"registry_version", registry->version()},
            {"event_seq", journal->last_seq()},
            {"pending_analyses", pending()}};
  }

  json top(std::size_t n, std::string_view window) const {
    if (n == 0 || n > 1000) throw Error(Errc::InvalidArgument, "n must lie in 1..1000");
    std::optional<TimeWindow> w;
    if (window == "lecture") {
      const Millis now = clock();
      w = TimeWindow{now - config.lecture_window_ms, now + 1};
    } else if (window != "all") {
      throw Error(Errc::InvalidArgument, "window must be 'lecture' or 'all'");
    }
    auto report = journal->read([&](const PipelineState& st) { return st.aggregator.top_n(n, w); });
    return to_json(report);
  }

  void install_routes();
};

void Service::Impl::install_routes() {
  auto guarded = [](auto&& fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const json::exception& e) {
        send_json(res, 400, {{"error", "InvalidArgument"}, {"message", e.what()}});
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
      }
    };
  };

  server.Get("/healthz", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, health());
  }));

  server.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::string student;
    if (!req.body.empty()) {
      auto body = json::parse(req.body);
      if (!body.is_object()) throw Error(Errc::InvalidArgument, "body must be a JSON object");
      student = body.value("student_id", std::string{});
    }
    const std::string id = create_session(student);
    send_json(res, 201, {{"session_id", id}});
  }));

  auto reply_route = [this](bool with_text) {
    return [this, with_text](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      std::optional<std::string> text;
      if (with_text) {
        auto body = json::parse(req.body);
        if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
          throw Error(Errc::InvalidArgument, "body must be {\"text\": string}");
        }
        text = body["text"].get<std::string>();
      }
      std::string reply = answer(id, text);

      const bool plain = req.get_param_value("stream") == "0" ||
                         (req.get_header_value("Accept").find("text/event-stream") == std::string::npos &&
                          req.get_header_value("Accept").find("application/json") != std::string::npos);
      if (plain) {
        send_json(res, 200, {{"session_id", id}, {"reply", reply}});
        return;
      }
      auto pieces = std::make_shared<std::vector<std::string>>(stream_pieces(reply));
      auto done = std::make_shared<std::string>(json{{"session_id", id}, {"reply", reply}}.dump());
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [pieces, done](std::size_t, httplib::DataSink& sink) {
            for (const auto& p : *pieces) {
              std::string ev = "event: delta\ndata: " + json{{"text", p}}.dump() + "\n\n";
              if (!sink.write(ev.data(), ev.size())) return false;
            }
            std::string ev = "event: done\ndata: " + *done + "\n\n";
            sink.write(ev.data(), ev.size());
            sink.done();
            return true;
          });
    };
  };
  server.Post(R"(/api/sessions/([A-Za-z0-9_\-]+)/messages)", guarded(reply_route(true)));
  server.Post(R"(/api/sessions/([A-Za-z0-9_\-]+)/retry)", guarded(reply_route(false)));

  server.Get(R"(/api/sessions/([A-Za-z0-9_\-]+))",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, transcript_json(find_session(req.matches[1])));
             }));

  server.Get("/api/reports/top", guarded([this](const httplib::Request& req, httplib::Response& res) {
    require_instructor(req);
    std::size_t n = 5;
    if (req.has_param("n")) {
      try {
        n = static_cast<std::size_t>(std::stoul(req.get_param_value("n")));
      } catch (const std::exception&) {
        throw Error(Errc::InvalidArgument, "n must be a positive integer");
      }
    }
    const std::string window = req.has_param("window") ? req.get_param_value("window") : "lecture";
    auto report = top(n, window);
    if (req.get_param_value("format") == "csv") {
      res.status = 200;
      res.set_content(to_csv(frequency_report_from_json(report)), "text/csv");
      return;
    }
    send_json(res, 200, report);
  }));

  server.Get(R"(/api/reports/sessions/([A-Za-z0-9_\-]+))",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               require_instructor(req);
               const std::string id = req.matches[1];
               auto report = journal->read([&](const PipelineState& st) -> std::optional<json> {
                 auto it = st.reports.find(id);
                 if (it == st.reports.end()) return std::nullopt;
                 return to_json(it->second);
               });
               if (!report) throw Error(Errc::NotFound, "no report for session " + id + " yet");
               send_json(res, 200, *report);
             }));

  if (!config.static_dir.empty()) server.set_mount_point("/", config.static_dir);
}

Service::Service(ServiceConfig config, std::shared_ptr<ChatProvider> tutor_provider,
                 std::shared_ptr<ChatProvider> analysis_provider, Clock clock)
    : impl_(std::make_unique<Impl>()) {
  auto& d = *impl_;
  d.config = std::move(config);
  d.clock = std::move(clock);
  const auto& cfg = d.config;

  if (cfg.kc_list_path.empty()) throw Error(Errc::Startup, "--kc-list is required");
  try {
    d.registry = std::make_unique<KcRegistry>(load_kc_list(cfg.kc_list_path));
  } catch (const Error& e) {
    throw Error(Errc::Startup, "--kc-list " + cfg.kc_list_path + ": " +
                                   std::string(errc_name(e.code())) + ": " + e.what());
  }
  if (cfg.corpus_dir.empty()) throw Error(Errc::Startup, "--corpus is required");
  try {
    d.index = ingest_course_material(load_corpus_dir(cfg.corpus_dir), cfg.chunking);
  } catch (const Error& e) {
    throw Error(Errc::Startup, "--corpus " + cfg.corpus_dir + ": " +
                                   std::string(errc_name(e.code())) + ": " + e.what());
  }
  d.token = cfg.instructor_token.empty() ? env_or_empty("QQ_INSTRUCTOR_TOKEN") : cfg.instructor_token;
  if (d.token.empty()) {
    throw Error(Errc::Startup, "QQ_INSTRUCTOR_TOKEN must be set to protect the report endpoints");
  }
  d.salt = cfg.pseudonym_salt.empty() ? env_or_empty("QQ_PSEUDONYM_SALT") : cfg.pseudonym_salt;
  if (d.salt.empty()) d.salt = random_token();
  if (!tutor_provider || !analysis_provider) throw Error(Errc::Startup, "--provider: no model provider configured");
  if (cfg.workers == 0) throw Error(Errc::Startup, "--workers must be at least 1");

  d.tutor_gateway = std::make_unique<Gateway>(std::move(tutor_provider), cfg.gateway);
  d.analysis_gateway = std::make_unique<Gateway>(std::move(analysis_provider), cfg.gateway);
  auto dialogue = cfg.dialogue;
  if (dialogue.course_name.empty()) dialogue.course_name = d.registry->course_id();
  d.agent = std::make_unique<DialogueAgent>(*d.tutor_gateway, d.index, dialogue, d.clock);
  d.identifier = std::make_unique<GapIdentifier>(*d.analysis_gateway, *d.registry, cfg.analysis);

  ReplayOptions ro;
  ro.course_id = d.registry->course_id();
  ro.registry_version = d.registry->version();
  std::optional<PipelineState> state;
  try {
    if (cfg.log_path) {
      state = replay(*cfg.log_path, ro);
    } else {
      state.emplace(d.registry->course_id(), d.registry->version());
    }
  } catch (const CorruptEventError& e) {
    throw Error(Errc::Startup, "--log-path " + cfg.log_path.value_or("") +
                                   ": corrupt event at seq " + std::to_string(e.seq()) + ": " + e.what());
  } catch (const Error& e) {
    throw Error(Errc::Startup, "--log-path " + cfg.log_path.value_or("") + ": " + e.what());
  }

  std::vector<std::string> backlog;
  for (const auto& [id, report] : state->reports) d.identifier->seed(report);
  for (const auto& [id, s] : state->sessions) {
    const auto pairs = s.student_message_count();
    if (pairs == 0) continue;
    auto r = state->reports.find(id);
    if (r == state->reports.end() || r->second.analyzed_turns.size() < pairs) backlog.push_back(id);
  }

  std::optional<std::filesystem::path> log;
  if (cfg.log_path) log = std::filesystem::path(*cfg.log_path);
  d.journal = std::make_unique<Journal>(std::move(*state), log, d.clock, cfg.snapshot_every);
  for (const auto& id : backlog) d.enqueue(id);
  d.install_routes();
}

Service::~Service() { stop(); }

int Service::start() {
  auto& d = *impl_;
  std::lock_guard lock(d.lifecycle_mu);
  if (d.bound_port >= 0) return d.bound_port;
  if (d.config.port == 0) {
    d.bound_port = d.server.bind_to_any_port(d.config.host);
  } else {
    d.bound_port = d.server.bind_to_port(d.config.host, d.config.port) ? d.config.port : -1;
  }
  if (d.bound_port < 0) {
    throw Error(Errc::Startup, "--port: cannot bind " + d.config.host + ":" + std::to_string(d.config.port));
  }
  for (std::size_t i = 0; i < d.config.workers; ++i) d.workers.emplace_back([&d] { d.worker_loop(); });
  d.listener = std::thread([&d] { d.server.listen_after_bind(); });
  // stop() is a no-op until the listener is running.
  d.server.wait_until_ready();
  return d.bound_port;
}

void Service::wait() {
  auto& d = *impl_;
  if (d.listener.joinable()) d.listener.join();
}

void Service::stop() {
  auto& d = *impl_;
  std::lock_guard lock(d.lifecycle_mu);
  if (d.stopped) return;
  d.stopped = true;
  d.server.stop();
  if (d.listener.joinable() && d.listener.get_id() != std::this_thread::get_id()) d.listener.join();
  {
    std::lock_guard q(d.q_mu);
    d.stopping = true;
  }
  d.cv_work.notify_all();
  for (auto& t : d.workers) {
    if (t.joinable()) t.join();
  }
}

bool Service::drain(std::chrono::milliseconds timeout) {
  auto& d = *impl_;
  std::unique_lock lock(d.q_mu);
  return d.cv_idle.wait_for(lock, timeout, [&] { return d.queue.empty() && d.in_progress.empty(); });
}

std::int64_t Service::event_seq() const { return impl_->journal->last_seq(); }
std::size_t Service::pending_analyses() const { return impl_->pending(); }
const KcRegistry& Service::registry() const { return *impl_->registry; }

std::string Service::create_session(std::string_view student_identifier) {
  return impl_->create_session(student_identifier);
}

std::string Service::post_message(const std::string& session_id, std::string_view text) {
  return impl_->answer(session_id, text);
}

std::string Service::retry_reply(const std::string& session_id) {
  return impl_->answer(session_id, std::nullopt);
}

std::optional<DialogueSession> Service::session(const std::string& session_id) const {
  try {
    return impl_->find_session(session_id);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::optional<SessionReport> Service::session_report(const std::string& session_id) const {
  return impl_->journal->read([&](const PipelineState& st) -> std::optional<SessionReport> {
    auto it = st.reports.find(session_id);
    if (it == st.reports.end()) return std::nullopt;
    return it->second;
  });
}

json Service::top_report(std::size_t n, std::string_view window) const { return impl_->top(n, window); }

json Service::state_json() const {
  return impl_->journal->read([](const PipelineState& st) { return st.to_json(); });
}

}  // namespace kgap
