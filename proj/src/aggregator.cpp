#include "kgap/aggregator.hpp"

#include <algorithm>
#include <mutex>

#include "kgap/error.hpp"

namespace kgap {

using nlohmann::json;

json to_json(const FrequencyReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"kc_id", e.kc_id},
                       {"count", e.count},
                       {"sample_misconceptions", e.sample_misconceptions}});
  }
  json window = nullptr;
  if (report.window) window = {{"start", report.window->start}, {"end", report.window->end}};
  return {{"course_id", report.course_id},
          {"registry_version", report.registry_version},
          {"window", std::move(window)},
          {"sessions_counted", report.sessions_counted},
          {"entries", std::move(entries)}};
}

FrequencyReport frequency_report_from_json(const json& doc) {
  try {
    FrequencyReport r;
    r.course_id = doc.at("course_id").get<std::string>();
    r.registry_version = doc.at("registry_version").get<std::string>();
    if (!doc.at("window").is_null()) {
      r.window = TimeWindow{doc["window"].at("start").get<Millis>(), doc["window"].at("end").get<Millis>()};
    }
    r.sessions_counted = doc.at("sessions_counted").get<std::size_t>();
    for (const auto& e : doc.at("entries")) {
      r.entries.push_back({e.at("kc_id").get<std::string>(), e.at("count").get<std::size_t>(),
                           e.at("sample_misconceptions").get<std::vector<std::string>>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed frequency report: ") + e.what());
  }
}

std::string to_csv(const FrequencyReport& report) {
  std::string out = "kc_id,count\n";
  for (const auto& e : report.entries) out += e.kc_id + "," + std::to_string(e.count) + "\n";
  return out;
}

Aggregator::Aggregator(std::string course_id, std::string registry_version)
    : course_id_(std::move(course_id)), registry_version_(std::move(registry_version)) {}

Aggregator::Aggregator(const Aggregator& other) {
  std::shared_lock lock(other.mu_);
  course_id_ = other.course_id_;
  registry_version_ = other.registry_version_;
  contributions_ = other.contributions_;
  quarantined_ = other.quarantined_;
}

Aggregator& Aggregator::operator=(const Aggregator& other) {
  if (this == &other) return *this;
  Aggregator copy(other);
  std::unique_lock lock(mu_);
  course_id_ = std::move(copy.course_id_);
  registry_version_ = std::move(copy.registry_version_);
  contributions_ = std::move(copy.contributions_);
  quarantined_ = copy.quarantined_;
  return *this;
}

void Aggregator::record(const SessionReport& report, Millis recorded_at) {
  std::unique_lock lock(mu_);
  if (report.registry_version != registry_version_) {
    ++quarantined_;
    throw Error(Errc::StaleRegistry, "report for session " + report.session_id +
                                         " was built against KC list version " +
                                         report.registry_version.substr(0, 12));
  }
  if (report.status != ReportStatus::Analyzed) {
    contributions_.erase(report.session_id);
    return;
  }
  Contribution c;
  c.recorded_at = recorded_at;
  std::map<std::string, double> best_conf;
  for (const auto& f : report.findings) {
    if (f.verdict != Verdict::Gap) continue;
    auto& sample = c.kcs[f.kc_id];
    ++sample.occurrences;
    const double conf = f.confidence.value_or(0.0);
    auto [it, inserted] = best_conf.try_emplace(f.kc_id, conf);
    if (inserted || conf > it->second) {
      it->second = conf;
      sample.misconception = f.misconception;
    }
  }
  contributions_[report.session_id] = std::move(c);
}

FrequencyReport Aggregator::build(std::optional<std::size_t> n,
                                  std::optional<TimeWindow> window) const {
  std::shared_lock lock(mu_);
  FrequencyReport r;
  r.course_id = course_id_;
  r.registry_version = registry_version_;
  r.window = window;

  std::map<std::string, FrequencyEntry> by_kc;
  for (const auto& [session, c] : contributions_) {
    if (window && !window->contains(c.recorded_at)) continue;
    ++r.sessions_counted;
    for (const auto& [kc, sample] : c.kcs) {
      auto& e = by_kc[kc];
      e.kc_id = kc;
      ++e.count;
      auto& samples = e.sample_misconceptions;
      if (samples.size() < 3 && !sample.misconception.empty() &&
          std::find(samples.begin(), samples.end(), sample.misconception) == samples.end()) {
        samples.push_back(sample.misconception);
      }
    }
  }
  for (auto& [kc, e] : by_kc) r.entries.push_back(std::move(e));
  std::stable_sort(r.entries.begin(), r.entries.end(),
                   [](const FrequencyEntry& a, const FrequencyEntry& b) { return a.count > b.count; });
  if (n && r.entries.size() > *n) r.entries.resize(*n);
  return r;
}

FrequencyReport Aggregator::top_n(std::size_t n, std::optional<TimeWindow> window) const {
  if (n == 0) throw Error(Errc::InvalidArgument, "top_n needs n >= 1");
  return build(n, window);
}

FrequencyReport Aggregator::distribution(std::optional<TimeWindow> window) const {
  return build(std::nullopt, window);
}

std::map<std::string, std::size_t> Aggregator::occurrence_counts() const {
  std::shared_lock lock(mu_);
  std::map<std::string, std::size_t> out;
  for (const auto& [session, c] : contributions_) {
    for (const auto& [kc, sample] : c.kcs) out[kc] += sample.occurrences;
  }
  return out;
}

std::size_t Aggregator::quarantined() const {
  std::shared_lock lock(mu_);
  return quarantined_;
}

std::size_t Aggregator::sessions_recorded() const {
  std::shared_lock lock(mu_);
  return contributions_.size();
}

json Aggregator::snapshot() const {
  std::shared_lock lock(mu_);
  json sessions = json::object();
  for (const auto& [session, c] : contributions_) {
    json kcs = json::object();
    for (const auto& [kc, s] : c.kcs) {
      kcs[kc] = {{"misconception", s.misconception}, {"occurrences", s.occurrences}};
    }
    sessions[session] = {{"recorded_at", c.recorded_at}, {"kcs", std::move(kcs)}};
  }
  return {{"course_id", course_id_},
          {"registry_version", registry_version_},
          {"quarantined", quarantined_},
          {"sessions", std::move(sessions)}};
}

Aggregator Aggregator::from_snapshot(const json& doc) {
  try {
    Aggregator a(doc.at("course_id").get<std::string>(), doc.at("registry_version").get<std::string>());
    a.quarantined_ = doc.at("quarantined").get<std::size_t>();
    for (const auto& [session, c] : doc.at("sessions").items()) {
      Contribution contrib;
      contrib.recorded_at = c.at("recorded_at").get<Millis>();
      for (const auto& [kc, s] : c.at("kcs").items()) {
        contrib.kcs[kc] = {s.at("misconception").get<std::string>(), s.at("occurrences").get<std::size_t>()};
      }
      a.contributions_[session] = std::move(contrib);
    }
    return a;
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed aggregator snapshot: ") + e.what());
  }
}

bool operator==(const Aggregator& a, const Aggregator& b) {
  if (&a == &b) return true;
  std::shared_lock la(a.mu_);
  std::shared_lock lb(b.mu_);
  return a.course_id_ == b.course_id_ && a.registry_version_ == b.registry_version_ &&
         a.contributions_ == b.contributions_ && a.quarantined_ == b.quarantined_;
}

}  // namespace kgap
