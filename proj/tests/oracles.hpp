#pragma once

// Random generators and brute-force reference implementations shared by the
// unit tests and the acceptance suite. The oracles recompute results from
// first principles and never call the code under test for the quantity they
// check.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "kgap/aggregator.hpp"
#include "kgap/eval_harness.hpp"
#include "kgap/gap_identifier.hpp"
#include "kgap/kc_registry.hpp"
#include "kgap/retrieval.hpp"
#include "support.hpp"

namespace kgap::test {

// ---- registry --------------------------------------------------------------

inline const std::vector<std::string>& words() {
  static const std::vector<std::string> w = {
      "gradient", "descent", "learning", "rate", "logistic", "regression", "score", "accuracy",
      "sigmoid", "boundary", "recurrent", "hidden", "state", "tensor", "batch", "epoch",
      "loss", "entropy", "feature", "label", "kernel", "pooling", "search", "heuristic",
      "minimax", "prune", "naïve", "bayes", "größe", "données", "matrix", "vector", "model",
      "train", "test", "split", "overfit", "ridge", "lasso", "scale", "encode", "sparse"};
  return w;
}

inline std::string random_phrase(Rng& rng, std::size_t lo, std::size_t hi) {
  const auto& w = words();
  std::string out;
  const std::size_t n = uniform(rng, lo, hi);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += w[uniform(rng, 0, w.size() - 1)];
  }
  return out;
}

// A valid component list of exactly n entries (depth <= 3, parents present).
inline std::vector<KnowledgeComponent> generate_components(Rng& rng, std::size_t n, bool shuffle = false) {
  struct Node {
    std::string id;
    int depth;
    int children = 0;
  };
  std::vector<Node> nodes;
  int roots = 0;
  std::vector<KnowledgeComponent> out;
  while (out.size() < n) {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].depth < 3) open.push_back(i);
    }
    KnowledgeComponent kc;
    if (open.empty() || coin(rng, 0.08)) {
      kc.id = "KC" + std::to_string(++roots);
      nodes.push_back({kc.id, 1});
    } else {
      auto& parent = nodes[open[uniform(rng, 0, open.size() - 1)]];
      kc.id = parent.id + "." + std::to_string(++parent.children);
      kc.parent_id = parent.id;
      nodes.push_back({kc.id, parent.depth + 1});
    }
    kc.title = random_phrase(rng, 1, 5);
    if (coin(rng, 0.1)) kc.title += " \"quoted\"\tand\\slashed";
    if (coin(rng, 0.6)) kc.detail = random_phrase(rng, 0, 12);
    if (coin(rng, 0.05)) kc.detail += "\nsecond line";
    out.push_back(std::move(kc));
  }
  if (shuffle) std::shuffle(out.begin(), out.end(), rng);
  return out;
}

inline nlohmann::json kc_document(const std::string& course, const std::vector<KnowledgeComponent>& comps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : comps) {
    nlohmann::json item = {{"id", c.id}, {"title", c.title}};
    if (!c.detail.empty()) item["detail"] = c.detail;
    arr.push_back(std::move(item));
  }
  return {{"course_id", course}, {"components", std::move(arr)}};
}

// ---- retrieval -------------------------------------------------------------

inline std::vector<std::string> oracle_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    const bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
    if (word) {
      cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Code points of a UTF-8 string, each as its own byte string.
inline std::vector<std::string> code_points(const std::string& s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t len = 1;
    const auto c = static_cast<unsigned char>(s[i]);
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

struct OracleChunk {
  std::string doc_id;
  std::size_t seq;
  std::size_t offset;
  std::string text;
};

inline std::vector<OracleChunk> oracle_chunks(const std::vector<SourceDocument>& docs, std::size_t chunk,
                                              std::size_t overlap) {
  std::vector<OracleChunk> out;
  for (const auto& d : docs) {
    const auto cps = code_points(d.text);
    std::size_t seq = 0;
    for (std::size_t start = 0; start < cps.size(); start += chunk - overlap) {
      std::string text;
      for (std::size_t i = start; i < std::min(cps.size(), start + chunk); ++i) text += cps[i];
      out.push_back({d.doc_id, seq++, start, text});
    }
  }
  return out;
}

struct OracleHit {
  std::string doc_id;
  std::size_t seq;
  double score;
  friend bool operator==(const OracleHit&, const OracleHit&) = default;
};

// Scores every chunk from scratch. Terms are visited in sorted order so the
// floating-point sums match an implementation that does the same.
inline std::vector<OracleHit> oracle_retrieve(const std::vector<CourseChunk>& chunks, const std::string& query,
                                              std::size_t k) {
  std::vector<std::map<std::string, std::size_t>> tf(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    for (const auto& t : oracle_tokens(chunks[i].text)) ++tf[i][t];
  }
  std::map<std::string, std::size_t> q;
  for (const auto& t : oracle_tokens(query)) ++q[t];
  std::map<std::string, std::size_t> df;
  for (const auto& [term, qc] : q) {
    for (const auto& m : tf) df[term] += m.count(term);
  }
  std::vector<OracleHit> hits;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    double s = 0.0;
    for (const auto& [term, qc] : q) {
      auto it = tf[i].find(term);
      if (it == tf[i].end()) continue;
      s += static_cast<double>(qc) * static_cast<double>(it->second) *
           std::log(1.0 + static_cast<double>(chunks.size()) / static_cast<double>(df[term]));
    }
    if (s > 0) hits.push_back({chunks[i].doc_id, chunks[i].seq, s});
  }
  std::sort(hits.begin(), hits.end(), [](const OracleHit& a, const OracleHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.doc_id, a.seq) < std::tie(b.doc_id, b.seq);
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

// Documents whose chunk count under `options` stays within max_chunks.
inline std::vector<SourceDocument> generate_corpus(Rng& rng, std::size_t max_chunks, ChunkingOptions options) {
  const std::size_t stride = options.chunk_chars - options.overlap_chars;
  std::vector<SourceDocument> docs;
  std::size_t budget = uniform(rng, 1, max_chunks);
  std::size_t n = 0;
  while (budget > 0) {
    const std::size_t chunks = uniform(rng, 1, std::min<std::size_t>(budget, 40));
    budget -= chunks;
    const std::size_t target = (chunks - 1) * stride + 1 + uniform(rng, 0, stride - 1);
    std::vector<std::string> cps;
    while (cps.size() < target) {
      for (auto& cp : code_points(random_phrase(rng, 1, 1) + (coin(rng, 0.1) ? ". " : " "))) cps.push_back(cp);
    }
    std::string text;
    for (std::size_t i = 0; i < target; ++i) text += cps[i];
    docs.push_back({"doc" + std::to_string(1000 + n++) + ".md", text});
  }
  return docs;
}

// ---- gap findings and reports ---------------------------------------------

inline std::map<std::string, KcRollup> oracle_rollup(const std::vector<GapFinding>& findings) {
  std::map<std::string, KcRollup> out;
  std::set<std::string> ids;
  for (const auto& f : findings) {
    if (f.verdict == Verdict::Gap) ids.insert(f.kc_id);
  }
  for (const auto& id : ids) {
    KcRollup r;
    bool first = true;
    for (const auto& f : findings) {
      if (f.verdict != Verdict::Gap || f.kc_id != id) continue;
      const double c = f.confidence.value_or(0.0);
      r.max_confidence = first ? c : std::max(r.max_confidence, c);
      r.first_detected_turn = first ? f.turn_index : std::min(r.first_detected_turn, f.turn_index);
      ++r.occurrences;
      first = false;
    }
    out[id] = r;
  }
  return out;
}

// Sort every candidate by (-confidence, first turn, id) and take the head.
inline std::optional<std::string> oracle_top_kc(const std::vector<GapFinding>& findings) {
  std::vector<std::tuple<double, std::size_t, std::string>> keys;
  for (const auto& [id, r] : oracle_rollup(findings)) keys.emplace_back(-r.max_confidence, r.first_detected_turn, id);
  if (keys.empty()) return std::nullopt;
  std::sort(keys.begin(), keys.end());
  return std::get<2>(keys.front());
}

inline std::vector<GapFinding> generate_findings(Rng& rng, const std::string& session,
                                                 const std::vector<std::string>& kc_pool, std::size_t max_n) {
  std::vector<GapFinding> out;
  const std::size_t n = uniform(rng, 0, max_n);
  for (std::size_t i = 0; i < n; ++i) {
    GapFinding f;
    f.session_id = session;
    f.turn_index = uniform(rng, 1, 6);
    const auto roll = uniform(rng, 0, 9);
    if (roll < 7) {
      f.verdict = Verdict::Gap;
      f.kc_id = kc_pool[uniform(rng, 0, kc_pool.size() - 1)];
      f.confidence = static_cast<double>(uniform(rng, 0, 20)) / 20.0;
      f.misconception = "m" + std::to_string(uniform(rng, 0, 6)) + " about " + f.kc_id;
    } else {
      f.verdict = roll < 9 ? Verdict::Correct : Verdict::InsufficientEvidence;
    }
    out.push_back(std::move(f));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const GapFinding& a, const GapFinding& b) { return a.turn_index < b.turn_index; });
  return out;
}

inline SessionReport generate_report(Rng& rng, const std::string& session, const std::string& version,
                                     const std::vector<std::string>& kc_pool) {
  SessionReport r;
  r.session_id = session;
  r.registry_version = version;
  r.status = coin(rng, 0.1) ? ReportStatus::Insufficient : ReportStatus::Analyzed;
  if (r.status == ReportStatus::Analyzed) {
    r.findings = generate_findings(rng, session, kc_pool, 8);
    std::set<std::size_t> turns;
    for (const auto& f : r.findings) turns.insert(f.turn_index);
    r.analyzed_turns.assign(turns.begin(), turns.end());
    r.distinct_kcs = rollup_findings(r.findings);
  }
  return r;
}

// ---- aggregation -----------------------------------------------------------

struct RecordedReport {
  SessionReport report;
  Millis at;
};

// Replays the recording sequence by hand: last accepted report per session
// wins, insufficient reports remove the session, other versions are ignored.
inline std::vector<FrequencyEntry> oracle_distribution(const std::vector<RecordedReport>& records,
                                                       const std::string& version,
                                                       std::optional<TimeWindow> window,
                                                       std::size_t* sessions_counted = nullptr) {
  std::map<std::string, const RecordedReport*> latest;
  for (const auto& r : records) {
    if (r.report.registry_version != version) continue;
    if (r.report.status == ReportStatus::Insufficient) {
      latest.erase(r.report.session_id);
    } else {
      latest[r.report.session_id] = &r;
    }
  }
  std::map<std::string, std::size_t> counts;
  std::map<std::string, std::vector<std::string>> samples;
  std::size_t counted = 0;
  for (const auto& [session, rec] : latest) {
    if (window && !(rec->at >= window->start && rec->at < window->end)) continue;
    ++counted;
    std::map<std::string, std::pair<double, std::string>> best;
    for (const auto& f : rec->report.findings) {
      if (f.verdict != Verdict::Gap) continue;
      auto it = best.find(f.kc_id);
      if (it == best.end() || *f.confidence > it->second.first) best[f.kc_id] = {*f.confidence, f.misconception};
    }
    for (const auto& [kc, b] : best) {
      ++counts[kc];
      auto& s = samples[kc];
      if (s.size() < 3 && !b.second.empty() && std::find(s.begin(), s.end(), b.second) == s.end()) {
        s.push_back(b.second);
      }
    }
  }
  std::vector<FrequencyEntry> out;
  for (const auto& [kc, c] : counts) out.push_back({kc, c, samples[kc]});
  std::sort(out.begin(), out.end(), [](const FrequencyEntry& a, const FrequencyEntry& b) {
    return a.count != b.count ? a.count > b.count : a.kc_id < b.kc_id;
  });
  if (sessions_counted) *sessions_counted = counted;
  return out;
}

// ---- metrics ---------------------------------------------------------------

struct OracleMetrics {
  double detection;
  std::optional<double> speed;
  double top1;
};

inline OracleMetrics oracle_metrics(const std::vector<std::pair<std::string, std::vector<GapFinding>>>& runs) {
  std::size_t detected = 0, turn_sum = 0, top1 = 0;
  for (const auto& [missing, findings] : runs) {
    std::optional<std::size_t> first;
    for (const auto& f : findings) {
      if (f.verdict == Verdict::Gap && f.kc_id == missing) {
        first = first ? std::min(*first, f.turn_index) : f.turn_index;
      }
    }
    if (first) {
      ++detected;
      turn_sum += *first;
    }
    if (oracle_top_kc(findings) == missing) ++top1;
  }
  OracleMetrics m;
  m.detection = static_cast<double>(detected) / static_cast<double>(runs.size());
  if (detected) m.speed = static_cast<double>(turn_sum) / static_cast<double>(detected);
  m.top1 = static_cast<double>(top1) / static_cast<double>(runs.size());
  return m;
}

}  // namespace kgap::test
