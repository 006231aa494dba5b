#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace kgap {

// Milliseconds since the Unix epoch.
using Millis = std::int64_t;
using Clock = std::function<Millis()>;

Millis system_now();

// Returns a clock that starts at `start` and advances by `step` on every call.
// Used wherever runs must be bit-reproducible.
Clock logical_clock(Millis start = 1'700'000'000'000, Millis step = 1000);

std::string sha256_hex(std::string_view data);

// 128 random bits, hex encoded.
std::string random_token();

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

std::string trim(std::string_view text);

}  // namespace kgap
