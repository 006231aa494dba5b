#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kgap/aggregator.hpp"
#include "kgap/error.hpp"
#include "kgap/dialogue.hpp"
#include "kgap/gap_identifier.hpp"
#include "kgap/kc_registry.hpp"
#include "kgap/llm_gateway.hpp"
#include "kgap/retrieval.hpp"

namespace kgap {

enum class Behavior { Terse, Verbose, CopiesMaterial, AsksFollowUps, Overconfident };

std::string_view behavior_name(Behavior b);
Behavior parse_behavior(std::string_view name);

struct StudentProfile {
  std::string profile_id;
  std::string group_id;
  std::string missing_kc;
  Behavior behavior = Behavior::Terse;
  std::optional<std::vector<std::string>> script;  // canned utterances for scripted mode
};

// JSON list of { profile_id, group_id, missing_kc, behavior, script? }.
// Every missing_kc must be declared in the registry; profile ids are unique.
std::vector<StudentProfile> parse_profiles(const nlohmann::json& doc, const KcRegistry& registry);

enum class SimulationMode { Scripted, ModelDriven };

// Generates the student side of a tutoring dialogue. Scripted mode replays
// profile.script (at most max_turns utterances; ScriptExhausted when the
// profile has none). Model-driven mode asks `student` for each utterance
// with a persona prompt that hides the missing KC until probed.
DialogueSession simulate_dialogue(const StudentProfile& profile, std::size_t max_turns,
                                  SimulationMode mode, DialogueAgent& tutor,
                                  const KcRegistry& registry, Gateway* student = nullptr,
                                  Clock clock = system_now);

std::string student_persona_prompt(const StudentProfile& profile, const KcRegistry& registry);

struct EvalResult {
  std::string profile_id;
  std::string missing_kc;
  bool detected = false;
  std::optional<std::size_t> first_turn;
  bool top1_match = false;
  SessionReport report;
};

EvalResult evaluate_report(const StudentProfile& profile, SessionReport report);

// Fraction of results whose planted KC was detected. EmptyResults when empty.
double detection_rate(const std::vector<EvalResult>& results);
// Mean first-detection turn over detected results only. NoDetections when
// nothing was detected.
double speed_of_detection(const std::vector<EvalResult>& results);
// Fraction of results whose top KC is the planted one. EmptyResults when empty.
double top1_accuracy(const std::vector<EvalResult>& results);

struct CompletenessResult {
  std::map<std::string, bool> per_dialogue;
  double fraction = 0.0;
};

// A dialogue succeeds when its report is analyzed and its KCs include every
// labeled KC. Label and report ids must match exactly (MisalignedIds).
CompletenessResult completeness(const std::map<std::string, std::set<std::string>>& labels,
                                const std::vector<SessionReport>& reports);

std::map<std::string, std::set<std::string>> parse_labels(const nlohmann::json& doc);

// JSON list of { dialogue_id, messages: [ {role, content} ] }.
std::vector<DialogueSession> parse_transcripts(const nlohmann::json& doc);

struct BenchmarkMetrics {
  std::size_t profiles = 0;
  std::size_t failed = 0;
  double detection_rate = 0.0;
  std::optional<double> speed_of_detection;
  double top1_accuracy = 0.0;
};

struct ProfileFailure {
  std::string profile_id;
  Errc code = Errc::Internal;
  std::string message;
};

struct BenchmarkOutcome {
  std::vector<EvalResult> results;
  std::vector<ProfileFailure> failures;
  FrequencyReport distribution;
  BenchmarkMetrics metrics;
  std::vector<DialogueSession> sessions;

  nlohmann::json to_json() const;
};

struct BenchmarkSetup {
  Gateway& tutor;
  Gateway& analyst;
  Gateway* student = nullptr;  // required in model-driven mode
  const Retriever* retriever = nullptr;  // no course material when null
  DialogueConfig dialogue;
  GapIdentifierConfig analysis;
  std::size_t max_turns = 4;
  std::optional<std::filesystem::path> log_path;
  Clock clock = logical_clock();
  std::size_t workers = 4;  // model-driven mode only; scripted runs in profile order
};

// simulate -> analyze -> aggregate for every profile. Per-profile failures
// are collected rather than aborting the run.
BenchmarkOutcome run_benchmark(const std::vector<StudentProfile>& profiles, const KcRegistry& registry,
                               SimulationMode mode, BenchmarkSetup setup);

}  // namespace kgap
