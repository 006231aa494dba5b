#include "kgap/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "kgap/error.hpp"
#include "kgap/util.hpp"

namespace kgap {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

// Byte offset of every code point start, plus a final entry for the end.
std::vector<std::size_t> code_point_offsets(std::string_view text) {
  std::vector<std::size_t> out;
  out.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) out.push_back(i);
  }
  out.push_back(text.size());
  return out;
}

bool chunk_less(const CourseChunk& a, const CourseChunk& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
  return a.seq < b.seq;
}

}  // namespace

std::vector<std::size_t> chunk_starts(std::size_t length, std::size_t chunk_chars,
                                      std::size_t overlap_chars) {
  if (chunk_chars <= overlap_chars) {
    throw Error(Errc::InvalidArgument, "chunk size must exceed overlap");
  }
  std::vector<std::size_t> starts;
  const std::size_t step = chunk_chars - overlap_chars;
  for (std::size_t s = 0; s < length; s += step) starts.push_back(s);
  return starts;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

double ChunkIndex::idf(const std::string& term) const {
  auto it = postings_.find(term);
  if (it == postings_.end() || it->second.empty()) return 0.0;
  return std::log(1.0 + static_cast<double>(chunks_.size()) /
                            static_cast<double>(it->second.size()));
}

std::vector<CourseChunk> ChunkIndex::retrieve(std::string_view query, std::size_t k) const {
  if (k == 0) throw Error(Errc::InvalidArgument, "k must be at least 1");
  std::map<std::string, std::uint32_t> query_terms;
  for (auto& t : tokenize(query)) ++query_terms[t];

  std::vector<double> scores(chunks_.size(), 0.0);
  for (const auto& [term, qcount] : query_terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double w = idf(term);
    for (const auto& p : it->second) {
      scores[p.chunk] += static_cast<double>(qcount) * static_cast<double>(p.tf) * w;
    }
  }

  std::vector<CourseChunk> hits;
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    if (scores[i] <= 0.0) continue;
    hits.push_back(chunks_[i]);
    hits.back().score = scores[i];
  }
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                    chunk_less);
  hits.resize(keep);
  return hits;
}

ChunkIndex ingest_course_material(std::vector<SourceDocument> docs, ChunkingOptions options) {
  if (options.chunk_chars <= options.overlap_chars) {
    throw Error(Errc::InvalidArgument, "chunk size must exceed overlap");
  }
  if (docs.empty()) throw Error(Errc::EmptyCorpus, "no course documents to ingest");

  std::set<std::string> seen;
  for (const auto& d : docs) {
    if (!seen.insert(d.doc_id).second) {
      throw Error(Errc::InvalidArgument, "duplicate document id '" + d.doc_id + "'");
    }
  }

  ChunkIndex index;
  for (const auto& doc : docs) {
    auto offsets = code_point_offsets(doc.text);
    const std::size_t length = offsets.size() - 1;
    std::size_t seq = 0;
    for (std::size_t start : chunk_starts(length, options.chunk_chars, options.overlap_chars)) {
      const std::size_t end = std::min(length, start + options.chunk_chars);
      CourseChunk c;
      c.doc_id = doc.doc_id;
      c.seq = seq++;
      c.offset = start;
      c.text = doc.text.substr(offsets[start], offsets[end] - offsets[start]);
      index.chunks_.push_back(std::move(c));
    }
  }
  if (index.chunks_.empty()) throw Error(Errc::EmptyCorpus, "course documents contain no text");

  for (std::uint32_t i = 0; i < index.chunks_.size(); ++i) {
    std::map<std::string, std::uint32_t> tf;
    for (auto& t : tokenize(index.chunks_[i].text)) ++tf[t];
    for (auto& [term, count] : tf) index.postings_[term].push_back({i, count});
  }
  return index;
}

std::vector<SourceDocument> load_corpus_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw Error(Errc::Io, "course corpus directory not found: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SourceDocument> docs;
  for (const auto& f : files) docs.push_back({f.filename().string(), read_file(f)});
  return docs;
}

}  // namespace kgap
