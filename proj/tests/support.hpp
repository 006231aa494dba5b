#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "kgap/kc_registry.hpp"
#include "kgap/llm_gateway.hpp"
#include "kgap/util.hpp"

namespace kgap::test {

inline std::filesystem::path data_dir() { return KGAP_DATA_DIR; }
inline std::filesystem::path schema_dir() { return KGAP_SCHEMA_DIR; }

inline nlohmann::json load_json(const std::filesystem::path& p) {
  return nlohmann::json::parse(read_file(p));
}

inline nlohmann::json load_schema(const std::string& name) {
  return load_json(schema_dir() / (name + ".json"));
}

// Script arrays may hold strings or JSON values (structured replies).
inline std::vector<std::string> script_lines(const nlohmann::json& arr) {
  std::vector<std::string> out;
  for (const auto& r : arr) out.push_back(r.is_string() ? r.get<std::string>() : r.dump());
  return out;
}

inline std::shared_ptr<ScriptedProvider> script_from_file(const std::filesystem::path& p,
                                                          const std::string& section) {
  return scripted_provider(script_lines(load_json(p).at(section)));
}

inline KcRegistry course_registry() { return load_kc_list((data_dir() / "kc" / "ai_course.json").string()); }

// No backoff so transport-failure tests stay fast.
inline GatewayOptions fast_gateway() {
  GatewayOptions o;
  o.retry_backoff = std::chrono::milliseconds(0);
  return o;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("kgap-test-" + random_token().substr(0, 12) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

using Rng = std::mt19937_64;

inline std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

}  // namespace kgap::test
