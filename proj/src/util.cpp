#include "kgap/util.hpp"

#include <openssl/sha.h>

#include <array>
#include <atomic>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include "kgap/error.hpp"

namespace kgap {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
    case Errc::MalformedDocument: return "MalformedDocument";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::OrphanParent: return "OrphanParent";
    case Errc::EmptyRegistry: return "EmptyRegistry";
    case Errc::NotFound: return "NotFound";
    case Errc::Transport: return "Transport";
    case Errc::ProviderRejection: return "ProviderRejection";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::ScriptExhausted: return "ScriptExhausted";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::RespondFailed: return "RespondFailed";
    case Errc::AnalysisFailed: return "AnalysisFailed";
    case Errc::StaleRegistry: return "StaleRegistry";
    case Errc::EmptyResults: return "EmptyResults";
    case Errc::NoDetections: return "NoDetections";
    case Errc::MisalignedIds: return "MisalignedIds";
    case Errc::CorruptEvent: return "CorruptEvent";
    case Errc::Startup: return "Startup";
    case Errc::Internal: return "Internal";
  }
  return "Internal";
}

Millis system_now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

Clock logical_clock(Millis start, Millis step) {
  auto next = std::make_shared<std::atomic<Millis>>(start);
  return [next, step] { return next->fetch_add(step); };
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(),
         digest.data());
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(digest.size() * 2);
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

std::string random_token() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream os;
  os << std::hex;
  for (int i = 0; i < 2; ++i) {
    os.width(16);
    os.fill('0');
    os << rng();
  }
  return os.str();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(Errc::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string trim(std::string_view text) {
  const auto* ws = " \t\r\n\f\v";
  auto b = text.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = text.find_last_not_of(ws);
  return std::string(text.substr(b, e - b + 1));
}

}  // namespace kgap
