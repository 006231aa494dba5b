#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgap {

struct SourceDocument {
  std::string doc_id;
  std::string text;
};

struct CourseChunk {
  std::string doc_id;
  std::size_t seq = 0;
  std::size_t offset = 0;  // in characters (code points) from the start of the doc
  std::string text;
  double score = 0.0;  // filled in by retrieve()
};

struct ChunkingOptions {
  std::size_t chunk_chars = 800;
  std::size_t overlap_chars = 200;
};

// Character offsets at which chunks of a `length`-character document start:
// every multiple of (chunk - overlap) below `length`.
std::vector<std::size_t> chunk_starts(std::size_t length, std::size_t chunk_chars,
                                      std::size_t overlap_chars);

// Lowercased maximal runs of letters and digits. Bytes >= 0x80 count as
// letters so UTF-8 words stay whole.
std::vector<std::string> tokenize(std::string_view text);

// Anything that can return ranked course passages for a query.
class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::vector<CourseChunk> retrieve(std::string_view query, std::size_t k) const = 0;
};

// Immutable inverted index over course chunks, ranked by
//   score(c) = sum over distinct query terms q of
//              count(q in query) * count(q in c) * ln(1 + N / df(q))
// with N the number of chunks. Zero-score chunks are never returned; ties go
// to the smaller (doc_id, seq).
class ChunkIndex final : public Retriever {
 public:
  ChunkIndex() = default;

  const std::vector<CourseChunk>& chunks() const { return chunks_; }
  std::size_t size() const { return chunks_.size(); }
  double idf(const std::string& term) const;

  std::vector<CourseChunk> retrieve(std::string_view query, std::size_t k) const override;

  friend ChunkIndex ingest_course_material(std::vector<SourceDocument> docs,
                                           ChunkingOptions options);

 private:
  struct Posting {
    std::uint32_t chunk;
    std::uint32_t tf;
  };
  std::vector<CourseChunk> chunks_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

// Errors: EmptyCorpus when there is nothing to index, InvalidArgument when
// chunk_chars <= overlap_chars or doc ids repeat.
ChunkIndex ingest_course_material(std::vector<SourceDocument> docs,
                                  ChunkingOptions options = {});

// Every regular file in `dir` (non-recursive), sorted by name; doc_id is the
// file name.
std::vector<SourceDocument> load_corpus_dir(const std::filesystem::path& dir);

}  // namespace kgap
