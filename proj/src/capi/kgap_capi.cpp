#include "kgap/kgap.h"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "kgap/error.hpp"
#include "kgap/eval_harness.hpp"
#include "kgap/event_log.hpp"
#include "kgap/kc_registry.hpp"
#include "kgap/llm_gateway.hpp"
#include "kgap/retrieval.hpp"
#include "kgap/service.hpp"

using nlohmann::json;

struct kgap_registry {
  kgap::KcRegistry registry;
};

// Counts calls so scripted and HTTP providers report usage the same way.
class CountingProvider final : public kgap::ChatProvider {
 public:
  explicit CountingProvider(std::shared_ptr<kgap::ChatProvider> inner) : inner_(std::move(inner)) {}
  std::string chat(const kgap::CompletionRequest& request) override {
    ++calls_;
    return inner_->chat(request);
  }
  std::uint64_t calls() const { return calls_.load(); }

 private:
  std::shared_ptr<kgap::ChatProvider> inner_;
  std::atomic<std::uint64_t> calls_{0};
};

struct kgap_provider {
  std::shared_ptr<CountingProvider> provider;
  kgap::GatewayOptions gateway;
};

struct kgap_service {
  std::unique_ptr<kgap::Service> service;
};

static_assert(static_cast<int>(kgap::Errc::Internal) + 1 == KGAP_INTERNAL);

namespace {

thread_local std::string last_error;

kgap_status to_status(kgap::Errc code) { return static_cast<kgap_status>(static_cast<int>(code) + 1); }

kgap_status fail(kgap_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <typename F>
kgap_status guarded(F&& fn) {
  last_error.clear();
  try {
    fn();
    return KGAP_OK;
  } catch (const kgap::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(KGAP_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(KGAP_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(KGAP_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw kgap::Error(kgap::Errc::InvalidArgument, std::string(what) + " must not be NULL");
}

json parse_options(const char* options_json) {
  if (!options_json || !*options_json) return json::object();
  json doc = json::parse(options_json, nullptr, false);
  if (!doc.is_object()) throw kgap::Error(kgap::Errc::InvalidArgument, "options must be a JSON object");
  return doc;
}

json load_json_file(const std::string& path, const char* what) {
  json doc = json::parse(kgap::read_file(path), nullptr, false);
  if (doc.is_discarded()) {
    throw kgap::Error(kgap::Errc::MalformedDocument, std::string(what) + " " + path + " is not JSON");
  }
  return doc;
}

kgap_provider* wrap_provider(std::shared_ptr<kgap::ChatProvider> inner, kgap::GatewayOptions options) {
  auto* p = new kgap_provider;
  p->provider = std::make_shared<CountingProvider>(std::move(inner));
  p->gateway = options;
  return p;
}

std::vector<std::string> script_from(const json& doc, const std::string& where) {
  if (!doc.is_array()) throw kgap::Error(kgap::Errc::InvalidArgument, where + " must be a JSON array of strings");
  std::vector<std::string> out;
  for (const auto& r : doc) {
    if (r.is_string()) {
      out.push_back(r.get<std::string>());
    } else {
      out.push_back(r.dump());  // structured replies may be stored as JSON values
    }
  }
  return out;
}

}  // namespace

extern "C" {

const char* kgap_status_name(kgap_status status) {
  if (status == KGAP_OK) return "Ok";
  if (status < KGAP_OK || status > KGAP_INTERNAL) return "Unknown";
  return kgap::errc_name(static_cast<kgap::Errc>(static_cast<int>(status) - 1)).data();
}

const char* kgap_last_error(void) { return last_error.c_str(); }

void kgap_string_free(char* s) { std::free(s); }

kgap_status kgap_registry_load(const char* path, kgap_registry** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new kgap_registry{kgap::load_kc_list(path)};
  });
}

kgap_status kgap_registry_parse(const char* text, kgap_registry** out) {
  return guarded([&] {
    require(text, "json");
    require(out, "out");
    *out = new kgap_registry{kgap::parse_kc_list(text)};
  });
}

void kgap_registry_free(kgap_registry* registry) { delete registry; }

size_t kgap_registry_size(const kgap_registry* registry) { return registry ? registry->registry.size() : 0; }

kgap_status kgap_registry_summary(const kgap_registry* registry, char** out_json) {
  return guarded([&] {
    require(registry, "registry");
    require(out_json, "out_json");
    const auto& r = registry->registry;
    int max_depth = 0;
    for (const auto& kc : r.components()) max_depth = std::max(max_depth, kc.depth());
    json doc = {{"course_id", r.course_id()},
                {"version", r.version()},
                {"components", r.size()},
                {"max_depth", max_depth}};
    *out_json = dup_string(doc.dump());
  });
}

kgap_status kgap_registry_lookup(const kgap_registry* registry, const char* id, char** out_json) {
  return guarded([&] {
    require(registry, "registry");
    require(id, "id");
    require(out_json, "out_json");
    const auto& kc = registry->registry.lookup(id);
    json doc = {{"id", kc.id},
                {"title", kc.title},
                {"detail", kc.detail},
                {"parent_id", kc.parent_id ? json(*kc.parent_id) : json(nullptr)}};
    *out_json = dup_string(doc.dump());
  });
}

kgap_status kgap_registry_render(const kgap_registry* registry, char** out_text) {
  return guarded([&] {
    require(registry, "registry");
    require(out_text, "out_text");
    *out_text = dup_string(kgap::render_for_prompt(registry->registry));
  });
}

kgap_status kgap_ingest_corpus(const char* dir, size_t chunk_chars, size_t overlap_chars, char** out_json) {
  return guarded([&] {
    require(dir, "dir");
    require(out_json, "out_json");
    kgap::ChunkingOptions options;
    if (chunk_chars) options.chunk_chars = chunk_chars;
    if (overlap_chars) options.overlap_chars = overlap_chars;
    auto docs = kgap::load_corpus_dir(dir);
    const auto documents = docs.size();
    auto index = kgap::ingest_course_material(std::move(docs), options);
    std::set<std::string> terms;
    for (const auto& c : index.chunks()) {
      for (auto& t : kgap::tokenize(c.text)) terms.insert(std::move(t));
    }
    json doc = {{"documents", documents},
                {"chunks", index.size()},
                {"terms", terms.size()},
                {"chunk_chars", options.chunk_chars},
                {"overlap_chars", options.overlap_chars}};
    *out_json = dup_string(doc.dump());
  });
}

kgap_status kgap_provider_from_config(const char* config_json, kgap_provider** out) {
  return guarded([&] {
    require(out, "out");
    auto config = config_json && *config_json ? kgap::ProviderConfig::from_json(json::parse(config_json))
                                              : kgap::ProviderConfig::from_env();
    config.validate();
    *out = wrap_provider(std::make_shared<kgap::HttpProvider>(config), kgap::GatewayOptions::from(config));
  });
}

kgap_status kgap_provider_scripted(const char* replies_json, kgap_provider** out) {
  return guarded([&] {
    require(replies_json, "replies_json");
    require(out, "out");
    json doc = json::parse(replies_json, nullptr, false);
    *out = wrap_provider(kgap::scripted_provider(script_from(doc, "scripted replies")), {});
  });
}

kgap_status kgap_provider_scripted_file(const char* path, const char* section, kgap_provider** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    json doc = load_json_file(path, "script file");
    if (section && *section) {
      if (!doc.is_object() || !doc.contains(section)) {
        throw kgap::Error(kgap::Errc::NotFound, std::string("script file ") + path + " has no section '" +
                                                    section + "'");
      }
      doc = doc[section];
    }
    *out = wrap_provider(kgap::scripted_provider(script_from(doc, std::string("script ") + path)), {});
  });
}

uint64_t kgap_provider_calls(const kgap_provider* provider) {
  return provider ? provider->provider->calls() : 0;
}

void kgap_provider_free(kgap_provider* provider) { delete provider; }

kgap_status kgap_analyze_transcripts(const kgap_registry* registry, kgap_provider* analyst,
                                     const char* transcripts_path, const char* labels_path,
                                     const char* options_json, char** out_json) {
  return guarded([&] {
    require(registry, "registry");
    require(analyst, "analyst");
    require(transcripts_path, "transcripts_path");
    require(out_json, "out_json");
    const json options = parse_options(options_json);
    kgap::GapIdentifierConfig config;
    config.min_evidence_chars = options.value("min_evidence_chars", config.min_evidence_chars);

    auto sessions = kgap::parse_transcripts(load_json_file(transcripts_path, "transcripts"));
    std::optional<std::map<std::string, std::set<std::string>>> labels;
    if (labels_path && *labels_path) labels = kgap::parse_labels(load_json_file(labels_path, "labels"));

    kgap::Gateway gateway(analyst->provider, analyst->gateway);
    kgap::GapIdentifier identifier(gateway, registry->registry, config);
    std::vector<kgap::SessionReport> reports;
    json reports_json = json::array();
    for (const auto& s : sessions) {
      reports.push_back(identifier.analyze_session(s));
      reports_json.push_back(kgap::to_json(reports.back()));
    }
    json doc = {{"registry_version", registry->registry.version()}, {"reports", std::move(reports_json)}};
    if (labels) {
      auto result = kgap::completeness(*labels, reports);
      doc["completeness"] = result.fraction;
      doc["per_dialogue"] = result.per_dialogue;
    }
    *out_json = dup_string(doc.dump());
  });
}

kgap_status kgap_run_benchmark(const kgap_registry* registry, const char* profiles_path, kgap_provider* tutor,
                               kgap_provider* analyst, kgap_provider* student, const char* options_json,
                               char** out_json) {
  return guarded([&] {
    require(registry, "registry");
    require(profiles_path, "profiles_path");
    require(tutor, "tutor");
    require(analyst, "analyst");
    require(out_json, "out_json");
    const json options = parse_options(options_json);
    const std::string mode_name = options.value("mode", std::string("scripted"));
    kgap::SimulationMode mode;
    if (mode_name == "scripted") {
      mode = kgap::SimulationMode::Scripted;
    } else if (mode_name == "model") {
      mode = kgap::SimulationMode::ModelDriven;
      require(student, "student provider (model mode)");
    } else {
      throw kgap::Error(kgap::Errc::InvalidArgument, "mode must be 'scripted' or 'model'");
    }

    auto profiles = kgap::parse_profiles(load_json_file(profiles_path, "profiles"), registry->registry);

    std::optional<kgap::ChunkIndex> index;
    if (auto dir = options.value("corpus_dir", std::string{}); !dir.empty()) {
      index = kgap::ingest_course_material(kgap::load_corpus_dir(dir));
    }

    kgap::Gateway tutor_gateway(tutor->provider, tutor->gateway);
    kgap::Gateway analyst_gateway(analyst->provider, analyst->gateway);
    std::optional<kgap::Gateway> student_gateway;
    if (student) student_gateway.emplace(student->provider, student->gateway);

    kgap::BenchmarkSetup setup{tutor_gateway, analyst_gateway};
    setup.student = student_gateway ? &*student_gateway : nullptr;
    setup.retriever = index ? &*index : nullptr;
    setup.dialogue.course_name = registry->registry.course_id();
    if (options.contains("probing")) {
      setup.dialogue.probing = kgap::parse_probing_intensity(options["probing"].get<std::string>());
    }
    setup.max_turns = options.value("max_turns", setup.max_turns);
    if (auto log = options.value("log_path", std::string{}); !log.empty()) setup.log_path = log;

    auto outcome = kgap::run_benchmark(profiles, registry->registry, mode, std::move(setup));
    *out_json = dup_string(outcome.to_json().dump());
  });
}

kgap_status kgap_report_from_log(const char* log_path, const kgap_registry* registry, const char* options_json,
                                 char** out) {
  return guarded([&] {
    require(log_path, "log_path");
    require(out, "out");
    if (!std::filesystem::exists(log_path)) {
      throw kgap::Error(kgap::Errc::Io, std::string("event log ") + log_path + " does not exist");
    }
    const json options = parse_options(options_json);
    const std::size_t n = options.value("n", std::size_t{5});
    std::optional<kgap::TimeWindow> window;
    if (options.contains("since_ms") || options.contains("until_ms")) {
      window = kgap::TimeWindow{options.value("since_ms", std::numeric_limits<kgap::Millis>::min()),
                                options.value("until_ms", std::numeric_limits<kgap::Millis>::max())};
    }
    kgap::ReplayOptions ro;
    if (registry) {
      ro.course_id = registry->registry.course_id();
      ro.registry_version = registry->registry.version();
    }
    auto state = kgap::replay(log_path, ro);
    auto report = state.aggregator.top_n(n, window);
    const std::string format = options.value("format", std::string("json"));
    if (format == "csv") {
      *out = dup_string(kgap::to_csv(report));
    } else if (format == "json") {
      *out = dup_string(kgap::to_json(report).dump());
    } else {
      throw kgap::Error(kgap::Errc::InvalidArgument, "format must be 'json' or 'csv'");
    }
  });
}

kgap_status kgap_service_create(const char* config_json, kgap_provider* tutor, kgap_provider* analyst,
                                kgap_service** out) {
  return guarded([&] {
    require(config_json, "config_json");
    require(tutor, "tutor");
    require(analyst, "analyst");
    require(out, "out");
    const json doc = parse_options(config_json);
    kgap::ServiceConfig config;
    config.kc_list_path = doc.value("kc_list", std::string{});
    config.corpus_dir = doc.value("corpus", std::string{});
    if (auto log = doc.value("log_path", std::string{}); !log.empty()) config.log_path = log;
    config.host = doc.value("host", config.host);
    config.port = doc.value("port", config.port);
    config.workers = doc.value("workers", config.workers);
    config.instructor_token = doc.value("instructor_token", std::string{});
    config.static_dir = doc.value("static_dir", std::string{});
    if (doc.contains("probing")) {
      config.dialogue.probing = kgap::parse_probing_intensity(doc["probing"].get<std::string>());
    }
    if (doc.contains("lecture_minutes")) {
      config.lecture_window_ms = doc["lecture_minutes"].get<kgap::Millis>() * 60 * 1000;
    }
    config.gateway = tutor->gateway;
    *out = new kgap_service{std::make_unique<kgap::Service>(std::move(config), tutor->provider, analyst->provider)};
  });
}

kgap_status kgap_service_start(kgap_service* service, int* out_port) {
  return guarded([&] {
    require(service, "service");
    const int port = service->service->start();
    if (out_port) *out_port = port;
  });
}

void kgap_service_wait(kgap_service* service) {
  if (service) service->service->wait();
}

void kgap_service_stop(kgap_service* service) {
  if (service) service->service->stop();
}

void kgap_service_free(kgap_service* service) { delete service; }

}  // extern "C"
