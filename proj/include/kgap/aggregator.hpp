#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "kgap/gap_identifier.hpp"
#include "kgap/util.hpp"

namespace kgap {

// Half-open interval [start, end) of recording times.
struct TimeWindow {
  Millis start = 0;
  Millis end = 0;

  bool contains(Millis t) const { return t >= start && t < end; }
  friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

struct FrequencyEntry {
  std::string kc_id;
  std::size_t count = 0;
  std::vector<std::string> sample_misconceptions;  // at most 3

  friend bool operator==(const FrequencyEntry&, const FrequencyEntry&) = default;
};

// Entries sorted by descending count, then ascending kc_id.
struct FrequencyReport {
  std::string course_id;
  std::string registry_version;
  std::optional<TimeWindow> window;
  std::vector<FrequencyEntry> entries;
  std::size_t sessions_counted = 0;

  friend bool operator==(const FrequencyReport&, const FrequencyReport&) = default;
};

nlohmann::json to_json(const FrequencyReport& report);
FrequencyReport frequency_report_from_json(const nlohmann::json& doc);
// "kc_id,count" header plus one row per entry.
std::string to_csv(const FrequencyReport& report);

// Class-wide frequency table. A session contributes each of its distinct gap
// KCs once; recording a session again replaces its earlier contribution.
// Writers are serialized, readers see consistent snapshots.
class Aggregator {
 public:
  Aggregator(std::string course_id, std::string registry_version);

  Aggregator(const Aggregator& other);
  Aggregator& operator=(const Aggregator& other);

  // Analyzed reports upsert the session's contribution; insufficient reports
  // withdraw it. A report built against another registry version is counted
  // in quarantined() and rejected with StaleRegistry.
  void record(const SessionReport& report, Millis recorded_at);

  FrequencyReport top_n(std::size_t n, std::optional<TimeWindow> window = std::nullopt) const;
  FrequencyReport distribution(std::optional<TimeWindow> window = std::nullopt) const;

  // Gap findings per KC counting repeats within a session.
  std::map<std::string, std::size_t> occurrence_counts() const;
  std::size_t quarantined() const;
  std::size_t sessions_recorded() const;

  const std::string& course_id() const { return course_id_; }
  const std::string& registry_version() const { return registry_version_; }

  nlohmann::json snapshot() const;
  static Aggregator from_snapshot(const nlohmann::json& doc);

  friend bool operator==(const Aggregator& a, const Aggregator& b);

 private:
  struct KcSample {
    std::string misconception;  // from the session's highest-confidence finding
    std::size_t occurrences = 0;
    friend bool operator==(const KcSample&, const KcSample&) = default;
  };
  struct Contribution {
    Millis recorded_at = 0;
    std::map<std::string, KcSample> kcs;
    friend bool operator==(const Contribution&, const Contribution&) = default;
  };

  FrequencyReport build(std::optional<std::size_t> n, std::optional<TimeWindow> window) const;

  std::string course_id_;
  std::string registry_version_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Contribution> contributions_;
  std::size_t quarantined_ = 0;
};

}  // namespace kgap
