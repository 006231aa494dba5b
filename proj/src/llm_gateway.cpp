#include "kgap/llm_gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "kgap/error.hpp"
#include "kgap/json_schema.hpp"
#include "kgap/util.hpp"

namespace kgap {

using nlohmann::json;

std::string_view role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  throw Error(Errc::InvalidArgument, "unknown role '" + std::string(name) + "'");
}

void validate_request(const CompletionRequest& request) {
  for (std::size_t i = 0; i < request.messages.size(); ++i) {
    const auto& m = request.messages[i];
    if (m.role == Role::System && i != 0) {
      throw Error(Errc::InvalidArgument, "system message must appear once, first");
    }
    if (m.role != Role::System && m.content.empty()) {
      throw Error(Errc::InvalidArgument, "empty " + std::string(role_name(m.role)) + " message");
    }
  }
  if (!(request.temperature >= 0.0 && request.temperature <= 1.0)) {
    throw Error(Errc::InvalidArgument, "temperature must lie in [0,1]");
  }
  if (request.max_tokens <= 0) {
    throw Error(Errc::InvalidArgument, "max_tokens must be positive");
  }
}

void ProviderConfig::validate() const {
  if (endpoint.empty()) throw Error(Errc::InvalidArgument, "provider endpoint is empty");
  if (!(timeout_seconds > 0)) throw Error(Errc::InvalidArgument, "provider timeout must be > 0");
  if (retry_limit < 0) throw Error(Errc::InvalidArgument, "provider retry limit must be >= 0");
}

namespace {

std::string env_or(const char* name, std::string fallback = {}) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

}  // namespace

ProviderConfig ProviderConfig::from_env() {
  ProviderConfig c;
  c.endpoint = env_or("QQ_PROVIDER_URL");
  c.model = env_or("QQ_MODEL");
  c.api_key_env = env_or("QQ_API_KEY_VAR");
  return c;
}

ProviderConfig ProviderConfig::from_json(const json& doc) {
  ProviderConfig c = from_env();
  if (!doc.is_object()) throw Error(Errc::InvalidArgument, "provider config must be a JSON object");
  c.endpoint = doc.value("endpoint", c.endpoint);
  c.model = doc.value("model", c.model);
  c.api_key_env = doc.value("api_key_env", c.api_key_env);
  c.timeout_seconds = doc.value("timeout_seconds", c.timeout_seconds);
  c.retry_limit = doc.value("retry_limit", c.retry_limit);
  c.validate();
  return c;
}

ScriptedProvider::ScriptedProvider(std::vector<std::string> script)
    : script_(std::make_move_iterator(script.begin()), std::make_move_iterator(script.end())) {}

std::string ScriptedProvider::chat(const CompletionRequest& request) {
  std::lock_guard lock(mu_);
  requests_.push_back(request);
  if (script_.empty()) {
    throw Error(Errc::ScriptExhausted,
                "scripted provider exhausted after " + std::to_string(requests_.size() - 1) + " replies");
  }
  std::string reply = std::move(script_.front());
  script_.pop_front();
  return reply;
}

std::size_t ScriptedProvider::calls() const {
  std::lock_guard lock(mu_);
  return requests_.size();
}

std::size_t ScriptedProvider::remaining() const {
  std::lock_guard lock(mu_);
  return script_.size();
}

std::vector<CompletionRequest> ScriptedProvider::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::shared_ptr<ScriptedProvider> scripted_provider(std::vector<std::string> script) {
  return std::make_shared<ScriptedProvider>(std::move(script));
}

GatewayOptions GatewayOptions::from(const ProviderConfig& config) {
  GatewayOptions o;
  o.retry_limit = config.retry_limit;
  return o;
}

Gateway::Gateway(std::shared_ptr<ChatProvider> provider, GatewayOptions options)
    : provider_(std::move(provider)),
      options_(options),
      slots_(std::max(1, options.max_concurrent)) {
  if (!provider_) throw Error(Errc::InvalidArgument, "gateway needs a provider");
  if (options_.retry_limit < 0) throw Error(Errc::InvalidArgument, "retry limit must be >= 0");
}

std::string Gateway::call_with_retries(const CompletionRequest& request) {
  for (int attempt = 0;; ++attempt) {
    slots_.acquire();
    try {
      ++provider_calls_;
      std::string reply = provider_->chat(request);
      slots_.release();
      return reply;
    } catch (const Error& e) {
      slots_.release();
      if (e.code() != Errc::Transport || attempt >= options_.retry_limit) throw;
    } catch (...) {
      slots_.release();
      throw;
    }
    std::this_thread::sleep_for(options_.retry_backoff * (attempt + 1));
  }
}

std::optional<json> extract_json(std::string_view text) {
  std::string body = trim(text);
  if (body.starts_with("```")) {
    auto first_nl = body.find('\n');
    auto last_fence = body.rfind("```");
    if (first_nl != std::string::npos && last_fence > first_nl) {
      body = trim(std::string_view(body).substr(first_nl + 1, last_fence - first_nl - 1));
    }
  }
  json parsed = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) return std::nullopt;
  return parsed;
}

namespace {

std::optional<std::string> schema_problem(std::string_view reply, const json& schema) {
  auto parsed = extract_json(reply);
  if (!parsed) return std::string("reply is not valid JSON");
  return validate_json(*parsed, schema);
}

}  // namespace

std::string Gateway::complete(const CompletionRequest& request) {
  validate_request(request);
  if (!request.response_schema) return call_with_retries(request);

  const json& schema = *request.response_schema;
  CompletionRequest first = request;
  const std::string instruction =
      "Reply with a single JSON value and nothing else. It must satisfy this JSON schema:\n" +
      schema.dump();
  if (!first.messages.empty() && first.messages.front().role == Role::System) {
    first.messages.front().content += "\n\n" + instruction;
  } else {
    first.messages.insert(first.messages.begin(), ChatMessage{Role::System, instruction});
  }

  std::string reply = call_with_retries(first);
  auto problem = schema_problem(reply, schema);
  if (!problem) return reply;

  ++repairs_;
  CompletionRequest repair = first;
  if (!trim(reply).empty()) repair.messages.push_back({Role::Assistant, reply});
  repair.messages.push_back(
      {Role::User, "Your previous reply was rejected (" + *problem +
                       "). Reply again with only the JSON value required by the schema."});
  std::string second = call_with_retries(repair);
  if (auto again = schema_problem(second, schema)) {
    throw Error(Errc::SchemaViolation, "model output violates schema after repair: " + *again);
  }
  return second;
}

json Gateway::complete_json(const CompletionRequest& request) {
  if (!request.response_schema) {
    throw Error(Errc::InvalidArgument, "complete_json needs a response schema");
  }
  return *extract_json(complete(request));
}

}  // namespace kgap
