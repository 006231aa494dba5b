#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace kgap {

enum class Role { System, User, Assistant };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);  // throws InvalidArgument

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct CompletionRequest {
  std::vector<ChatMessage> messages;
  // When set, the reply must be a JSON value accepted by this schema.
  std::optional<nlohmann::json> response_schema;
  double temperature = 0.7;
  int max_tokens = 1024;
};

// Throws InvalidArgument when the request breaks the message-ordering rules
// (at most one system message, and only in first position; non-empty
// user/assistant content) or its sampling parameters are out of range.
void validate_request(const CompletionRequest& request);

struct ProviderConfig {
  std::string endpoint;     // full chat-completions URL
  std::string model;
  std::string api_key_env;  // name of the environment variable holding the key
  double timeout_seconds = 60.0;
  int retry_limit = 2;

  void validate() const;

  // QQ_PROVIDER_URL, QQ_MODEL, QQ_API_KEY_VAR.
  static ProviderConfig from_env();
  // { "endpoint", "model", "api_key_env", "timeout_seconds", "retry_limit" };
  // absent fields fall back to the environment.
  static ProviderConfig from_json(const nlohmann::json& doc);
};

// A model backend. Implementations throw Error(Transport) for network or
// timeout failures and Error(ProviderRejection) for non-2xx replies.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string chat(const CompletionRequest& request) = 0;
};

// Returns its script one reply per call, in order, and records every request
// it receives. Calls past the end of the script raise ScriptExhausted.
class ScriptedProvider final : public ChatProvider {
 public:
  explicit ScriptedProvider(std::vector<std::string> script);

  std::string chat(const CompletionRequest& request) override;

  std::size_t calls() const;
  std::size_t remaining() const;
  std::vector<CompletionRequest> requests() const;

 private:
  mutable std::mutex mu_;
  std::deque<std::string> script_;
  std::vector<CompletionRequest> requests_;
};

std::shared_ptr<ScriptedProvider> scripted_provider(std::vector<std::string> script);

// Chat-completion over HTTP(S):
//   POST endpoint {"model","messages":[{"role","content"}],"temperature","max_tokens"}
//   -> {"choices":[{"message":{"content": ...}}]}
class HttpProvider final : public ChatProvider {
 public:
  explicit HttpProvider(ProviderConfig config);

  std::string chat(const CompletionRequest& request) override;

  // Process-wide count of HTTP requests attempted by any HttpProvider.
  static std::uint64_t total_requests();

 private:
  ProviderConfig config_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
};

struct GatewayOptions {
  int retry_limit = 2;
  int max_concurrent = 8;
  std::chrono::milliseconds retry_backoff{200};

  static GatewayOptions from(const ProviderConfig& config);
};

// The only path by which the pipeline talks to a model. Adds transport
// retries, a concurrency cap, and structured-output enforcement with a single
// repair reprompt.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<ChatProvider> provider, GatewayOptions options = {});

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  std::string complete(const CompletionRequest& request);

  // complete() followed by parsing; request.response_schema must be set.
  nlohmann::json complete_json(const CompletionRequest& request);

  std::uint64_t provider_calls() const { return provider_calls_.load(); }
  std::uint64_t repairs() const { return repairs_.load(); }

 private:
  std::string call_with_retries(const CompletionRequest& request);

  std::shared_ptr<ChatProvider> provider_;
  GatewayOptions options_;
  std::counting_semaphore<> slots_;
  std::atomic<std::uint64_t> provider_calls_{0};
  std::atomic<std::uint64_t> repairs_{0};
};

// Strips surrounding whitespace and a Markdown code fence, then parses.
// nullopt when the text is not JSON.
std::optional<nlohmann::json> extract_json(std::string_view text);

}  // namespace kgap
