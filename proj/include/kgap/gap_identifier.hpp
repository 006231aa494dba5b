#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgap/dialogue.hpp"
#include "kgap/kc_registry.hpp"
#include "kgap/llm_gateway.hpp"

namespace kgap {

enum class Verdict { Gap, Correct, InsufficientEvidence };

std::string_view verdict_name(Verdict v);
Verdict parse_verdict(std::string_view name);

// kc_id, misconception and confidence are set only for Verdict::Gap.
struct GapFinding {
  std::string session_id;
  std::size_t turn_index = 0;
  Verdict verdict = Verdict::Correct;
  std::string kc_id;
  std::string misconception;
  std::optional<double> confidence;

  friend bool operator==(const GapFinding&, const GapFinding&) = default;
};

struct KcRollup {
  double max_confidence = 0.0;
  std::size_t first_detected_turn = 0;
  std::size_t occurrences = 0;  // gap findings on this KC within the session

  friend bool operator==(const KcRollup&, const KcRollup&) = default;
};

enum class ReportStatus { Analyzed, Insufficient };

struct SessionReport {
  std::string session_id;
  std::string registry_version;
  ReportStatus status = ReportStatus::Analyzed;
  std::vector<GapFinding> findings;
  std::map<std::string, KcRollup> distinct_kcs;
  std::vector<std::size_t> analyzed_turns;
  std::vector<std::size_t> unanalyzed_turns;
  std::size_t dropped_unknown_kcs = 0;
  std::size_t dropped_malformed = 0;

  friend bool operator==(const SessionReport&, const SessionReport&) = default;
};

// Per-KC max confidence and earliest turn over the gap findings.
std::map<std::string, KcRollup> rollup_findings(const std::vector<GapFinding>& findings);

// Highest max-confidence KC; ties go to the earlier first turn, then the
// smaller id. nullopt when the report has no gaps.
std::optional<std::string> top_kc(const SessionReport& report);

nlohmann::json to_json(const SessionReport& report);
SessionReport session_report_from_json(const nlohmann::json& doc);

// The structured output the analysis model must produce.
const nlohmann::json& finding_list_schema();

struct GapIdentifierConfig {
  std::size_t min_evidence_chars = 40;
  double temperature = 0.2;
  int max_tokens = 1024;
};

struct TurnAnalysis {
  std::vector<GapFinding> findings;
  std::size_t dropped_unknown_kcs = 0;
  std::size_t dropped_malformed = 0;
};

// Maps each turn pair of a session onto registry KCs. Results are cached per
// (session, turn) so re-analysis after a new student message costs one model
// call for the new turn only. Never modifies the sessions it reads.
class GapIdentifier {
 public:
  GapIdentifier(Gateway& gateway, const KcRegistry& registry, GapIdentifierConfig config = {});

  // One model call. Throws AnalysisFailed when the reply cannot be parsed.
  TurnAnalysis analyze_turn_pair(std::string_view session_id, const TurnPair& pair,
                                 std::span<const ChatMessage> history);

  SessionReport analyze_session(const DialogueSession& session);

  CompletionRequest build_request(const TurnPair& pair, std::span<const ChatMessage> history) const;

  // Primes the cache from a previously stored report.
  void seed(const SessionReport& report);
  void forget(const std::string& session_id);

  std::uint64_t dropped_unknown_total() const;
  const KcRegistry& registry() const { return registry_; }
  const GapIdentifierConfig& config() const { return config_; }

 private:
  Gateway& gateway_;
  const KcRegistry& registry_;
  GapIdentifierConfig config_;
  std::string system_prompt_;

  mutable std::mutex mu_;
  std::map<std::string, std::map<std::size_t, TurnAnalysis>> cache_;
  std::uint64_t dropped_unknown_total_ = 0;
};

}  // namespace kgap
