// kgap command-line front end. Talks to the library through the C API only.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "kgap/kgap.h"

#ifndef KGAP_DATA_DIR
#define KGAP_DATA_DIR "data"
#endif

using nlohmann::json;

namespace {

struct Failure {
  std::string error;
  std::string message;
};

// Converts a failed C API call into a Failure carrying its status name.
void check(kgap_status status) {
  if (status != KGAP_OK) throw Failure{kgap_status_name(status), kgap_last_error()};
}

int report_failure(const Failure& f, int exit_code = 1) {
  std::cerr << json{{"error", f.error}, {"message", f.message}}.dump() << std::endl;
  return exit_code;
}

std::string take(char* s) {
  std::string out(s ? s : "");
  kgap_string_free(s);
  return out;
}

struct RegistryPtr {
  kgap_registry* p = nullptr;
  ~RegistryPtr() { kgap_registry_free(p); }
};

struct ProviderPtr {
  kgap_provider* p = nullptr;
  ~ProviderPtr() { kgap_provider_free(p); }
};

kgap_registry* load_registry(RegistryPtr& r, const std::string& path) {
  check(kgap_registry_load(path.c_str(), &r.p));
  return r.p;
}

// --demo selects a section of the script file; otherwise --provider (a JSON
// config file) or the QQ_* environment configures an HTTP provider.
void open_provider(ProviderPtr& out, bool demo, const std::string& script, const std::string& section,
                   const std::string& provider_file) {
  if (demo) {
    check(kgap_provider_scripted_file(script.c_str(), section.c_str(), &out.p));
    return;
  }
  std::string config;
  if (!provider_file.empty()) {
    std::FILE* f = std::fopen(provider_file.c_str(), "rb");
    if (!f) throw Failure{"Io", "--provider: cannot read " + provider_file};
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) config.append(buf, n);
    std::fclose(f);
  }
  check(kgap_provider_from_config(config.empty() ? nullptr : config.c_str(), &out.p));
}

struct ProviderFlags {
  bool demo = false;
  std::string script = std::string(KGAP_DATA_DIR) + "/demo/script.json";
  std::string provider_file;

  void add_to(CLI::App* cmd, const std::string& default_script) {
    script = default_script;
    cmd->add_flag("--demo", demo, "Use the scripted provider instead of a model endpoint");
    cmd->add_option("--script", script, "Script file used with --demo")->capture_default_str();
    cmd->add_option("--provider", provider_file,
                    "Provider config JSON {endpoint, model, api_key_env}; defaults to QQ_* env vars");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kgap: knowledge-gap tutoring pipeline"};
  app.require_subcommand(1);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the classroom HTTP service");
  std::string kc_list, corpus, log_path, host = "127.0.0.1", static_dir, probing = "closing_question";
  int port = 8080;
  std::size_t workers = 2;
  ProviderFlags serve_provider;
  serve->add_option("--kc-list", kc_list, "Knowledge-component list (JSON)");
  serve->add_option("--corpus", corpus, "Directory of course material");
  serve->add_option("--log-path", log_path, "Event log; state is rebuilt from it on start");
  serve->add_option("--port", port, "Listen port (0 picks a free one)")->capture_default_str();
  serve->add_option("--host", host, "Listen address")->capture_default_str();
  serve->add_option("--workers", workers, "Analysis worker threads")->capture_default_str();
  serve->add_option("--static-dir", static_dir, "Directory served at /");
  serve->add_option("--probing", probing, "off | closing_question | interleaved")->capture_default_str();
  serve_provider.add_to(serve, std::string(KGAP_DATA_DIR) + "/demo/script.json");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Chunk and index a course corpus");
  std::string ingest_corpus;
  std::size_t chunk_chars = 0, overlap_chars = 0;
  ingest->add_option("--corpus", ingest_corpus, "Directory of course material")->required();
  ingest->add_option("--chunk-chars", chunk_chars, "Chunk length in characters (default 800)");
  ingest->add_option("--overlap-chars", overlap_chars, "Overlap between chunks (default 200)");

  // validate-kc
  auto* validate = app.add_subcommand("validate-kc", "Lint a knowledge-component list");
  std::string validate_path;
  auto* kc_opt = validate->add_option("--kc-list", validate_path, "Knowledge-component list (JSON)");
  validate->add_option("path", validate_path, "Knowledge-component list (JSON)")->excludes(kc_opt);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Analyze a batch of transcripts");
  std::string analyze_kc, transcripts, labels;
  std::size_t min_evidence = 40;
  ProviderFlags analyze_provider;
  analyze->add_option("--kc-list", analyze_kc, "Knowledge-component list (JSON)")->required();
  analyze->add_option("--transcripts", transcripts, "JSON list of {dialogue_id, messages}")->required();
  analyze->add_option("--labels", labels, "JSON object {dialogue_id: [kc_id]} for completeness");
  analyze->add_option("--min-evidence-chars", min_evidence, "Student text below this is insufficient")
      ->capture_default_str();
  analyze_provider.add_to(analyze, std::string(KGAP_DATA_DIR) + "/completeness/script.json");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run the simulated-student benchmark");
  std::string sim_kc, profiles, sim_corpus, sim_log, sim_mode = "scripted", sim_probing = "closing_question";
  std::size_t max_turns = 4;
  ProviderFlags sim_provider;
  simulate->add_option("--kc-list", sim_kc, "Knowledge-component list (JSON)")->required();
  simulate->add_option("--profiles", profiles, "Student profiles (JSON)")->required();
  simulate->add_option("--corpus", sim_corpus, "Directory of course material for the tutor");
  simulate->add_option("--log-path", sim_log, "Fresh event log to write");
  simulate->add_option("--mode", sim_mode, "scripted | model")->capture_default_str();
  simulate->add_option("--max-turns", max_turns, "Student utterances per dialogue")->capture_default_str();
  simulate->add_option("--probing", sim_probing, "off | closing_question | interleaved")->capture_default_str();
  sim_provider.add_to(simulate, std::string(KGAP_DATA_DIR) + "/benchmark/script.json");

  // report
  auto* report = app.add_subcommand("report", "Export the class-wide frequency report from an event log");
  std::string report_log, report_kc, format = "json";
  std::size_t top = 5;
  std::optional<long long> since_ms, until_ms;
  report->add_option("--log-path", report_log, "Event log")->required();
  report->add_option("--kc-list", report_kc, "Pin the course and registry version");
  report->add_option("--top", top, "Number of entries")->capture_default_str();
  report->add_option("--since-ms", since_ms, "Window start (epoch ms, inclusive)");
  report->add_option("--until-ms", until_ms, "Window end (epoch ms, exclusive)");
  report->add_option("--format", format, "json | csv")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_failure({"Usage", e.what()}, 2);
  }

  try {
    if (*serve) {
      if (kc_list.empty()) throw Failure{"Startup", "--kc-list is required"};
      if (corpus.empty()) throw Failure{"Startup", "--corpus is required"};
      ProviderPtr tutor, analyst;
      open_provider(tutor, serve_provider.demo, serve_provider.script, "dialogue", serve_provider.provider_file);
      open_provider(analyst, serve_provider.demo, serve_provider.script, "analysis", serve_provider.provider_file);
      json config = {{"kc_list", kc_list}, {"corpus", corpus}, {"host", host},
                     {"port", port},       {"workers", workers}, {"probing", probing}};
      if (!log_path.empty()) config["log_path"] = log_path;
      if (!static_dir.empty()) config["static_dir"] = static_dir;

      // Handle SIGINT/SIGTERM synchronously on this thread; service threads
      // inherit the blocked mask.
      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);

      kgap_service* service = nullptr;
      const std::string config_text = config.dump();
      if (auto st = kgap_service_create(config_text.c_str(), tutor.p, analyst.p, &service); st != KGAP_OK) {
        check(st);
      }
      std::unique_ptr<kgap_service, decltype(&kgap_service_free)> guard(service, kgap_service_free);
      int bound = 0;
      check(kgap_service_start(service, &bound));
      std::cout << json{{"status", "listening"}, {"host", host}, {"port", bound}}.dump() << std::endl;
      int sig = 0;
      sigwait(&signals, &sig);
      kgap_service_stop(service);
      return 0;
    }

    if (*ingest) {
      char* out = nullptr;
      check(kgap_ingest_corpus(ingest_corpus.c_str(), chunk_chars, overlap_chars, &out));
      std::cout << take(out) << std::endl;
      return 0;
    }

    if (*validate) {
      if (validate_path.empty()) throw Failure{"InvalidArgument", "a KC list path is required"};
      RegistryPtr registry;
      load_registry(registry, validate_path);
      char* out = nullptr;
      check(kgap_registry_summary(registry.p, &out));
      json summary = json::parse(take(out));
      summary["ok"] = true;
      std::cout << summary.dump() << std::endl;
      return 0;
    }

    if (*analyze) {
      RegistryPtr registry;
      load_registry(registry, analyze_kc);
      ProviderPtr analyst;
      open_provider(analyst, analyze_provider.demo, analyze_provider.script, "analysis",
                    analyze_provider.provider_file);
      const std::string options = json{{"min_evidence_chars", min_evidence}}.dump();
      char* out = nullptr;
      check(kgap_analyze_transcripts(registry.p, analyst.p, transcripts.c_str(),
                                     labels.empty() ? nullptr : labels.c_str(), options.c_str(), &out));
      std::cout << take(out) << std::endl;
      return 0;
    }

    if (*simulate) {
      RegistryPtr registry;
      load_registry(registry, sim_kc);
      ProviderPtr tutor, analyst, student;
      open_provider(tutor, sim_provider.demo, sim_provider.script, "dialogue", sim_provider.provider_file);
      open_provider(analyst, sim_provider.demo, sim_provider.script, "analysis", sim_provider.provider_file);
      if (sim_mode == "model") {
        open_provider(student, sim_provider.demo, sim_provider.script, "student", sim_provider.provider_file);
      }
      json options = {{"mode", sim_mode}, {"max_turns", max_turns}, {"probing", sim_probing}};
      if (!sim_corpus.empty()) options["corpus_dir"] = sim_corpus;
      if (!sim_log.empty()) options["log_path"] = sim_log;
      const std::string options_text = options.dump();
      char* out = nullptr;
      check(kgap_run_benchmark(registry.p, profiles.c_str(), tutor.p, analyst.p, student.p,
                               options_text.c_str(), &out));
      std::cout << take(out) << std::endl;
      return 0;
    }

    if (*report) {
      RegistryPtr registry;
      if (!report_kc.empty()) load_registry(registry, report_kc);
      json options = {{"n", top}, {"format", format}};
      if (since_ms) options["since_ms"] = *since_ms;
      if (until_ms) options["until_ms"] = *until_ms;
      const std::string options_text = options.dump();
      char* out = nullptr;
      check(kgap_report_from_log(report_log.c_str(), registry.p, options_text.c_str(), &out));
      std::string text = take(out);
      std::cout << text;
      if (format == "json") std::cout << std::endl;
      return 0;
    }
  } catch (const Failure& f) {
    return report_failure(f);
  } catch (const std::exception& e) {
    return report_failure({"Internal", e.what()});
  }
  return 0;
}
