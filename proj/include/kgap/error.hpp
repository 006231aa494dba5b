#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kgap {

// Every failure the core raises carries one of these codes. The C API maps
// them one-to-one onto kgap_status.
enum class Errc {
  InvalidArgument,
  Io,
  MalformedDocument,
  DuplicateId,
  OrphanParent,
  EmptyRegistry,
  NotFound,
  Transport,
  ProviderRejection,
  SchemaViolation,
  ScriptExhausted,
  EmptyCorpus,
  RespondFailed,
  AnalysisFailed,
  StaleRegistry,
  EmptyResults,
  NoDetections,
  MisalignedIds,
  CorruptEvent,
  Startup,
  Internal,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Raised by event-log replay; seq is the sequence number of the first event
// that could not be applied.
class CorruptEventError : public Error {
 public:
  CorruptEventError(std::int64_t seq, const std::string& message)
      : Error(Errc::CorruptEvent, message), seq_(seq) {}

  std::int64_t seq() const noexcept { return seq_; }

 private:
  std::int64_t seq_;
};

}  // namespace kgap
