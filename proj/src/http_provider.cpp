#include <httplib.h>

#include <regex>

#include "kgap/error.hpp"
#include "kgap/llm_gateway.hpp"

namespace kgap {

using nlohmann::json;

namespace {
std::atomic<std::uint64_t> g_http_requests{0};
}

HttpProvider::HttpProvider(ProviderConfig config) : config_(std::move(config)) {
  config_.validate();
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, kUrl)) {
    throw Error(Errc::InvalidArgument, "provider endpoint is not an http(s) URL: " + config_.endpoint);
  }
  base_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/";
}

std::uint64_t HttpProvider::total_requests() { return g_http_requests.load(); }

std::string HttpProvider::chat(const CompletionRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }
  json body = {{"model", config_.model},
               {"messages", std::move(messages)},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens}};

  httplib::Client client(base_);
  auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config_.timeout_seconds));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  ++g_http_requests;
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(Errc::Transport, "request to " + base_ + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(Errc::ProviderRejection,
                "provider answered HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) {
    throw Error(Errc::ProviderRejection, "provider reply is not JSON");
  }
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(Errc::ProviderRejection, "provider reply lacks choices[0].message.content");
  }
}

}  // namespace kgap
