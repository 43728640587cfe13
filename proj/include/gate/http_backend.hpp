#pragma once

// OpenAI-style chat-completions backend over HTTP(S).

#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gate/lm.hpp"

namespace gate {

class HttpChatBackend final : public ChatBackend {
 public:
  /// `base_url` is scheme://host[:port][/prefix], e.g. https://api.openai.com/v1.
  explicit HttpChatBackend(std::string base_url, std::string api_key)
      : api_key_(std::move(api_key)) {
    if (base_url.empty()) throw Error(Errc::invalid_argument, "http_chat backend needs a base URL (GATE_LM_BASE_URL)");
    while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
    const auto scheme_end = base_url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = base_url.find('/', host_start);
    origin_ = path_start == std::string::npos ? base_url : base_url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : base_url.substr(path_start);
  }

  static nlohmann::json request_body(const ChatRequest& request, const LMProfile& profile) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    nlohmann::json body = {{"model", profile.model_id},
                           {"messages", messages},
                           {"temperature", request.temperature.value_or(profile.temperature)}};
    if (request.seed) body["seed"] = *request.seed;
    return body;
  }

  static std::string parse_content(const std::string& payload) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(payload);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::empty_response, std::string("malformed chat completion: ") + e.what());
    }
  }

  BackendReply send(const ChatRequest& request, const LMProfile& profile) override {
    httplib::Client client(origin_);
    client.set_connection_timeout(profile.timeout);
    client.set_read_timeout(profile.timeout);
    client.set_write_timeout(profile.timeout);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    const auto body = request_body(request, profile).dump();
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::Read || err == httplib::Error::Write)
        throw Error(Errc::timeout, "chat request timed out or was cut off: " + httplib::to_string(err));
      throw Error(Errc::transport, "chat request failed: " + httplib::to_string(err));
    }
    if (res->status == 429 || res->status >= 500)
      throw Error(Errc::transport, "chat backend returned HTTP " + std::to_string(res->status));
    if (res->status != 200)
      throw Error(Errc::invalid_argument, "chat backend returned HTTP " + std::to_string(res->status) + ": " + res->body);
    return {parse_content(res->body), std::nullopt, {{"backend", "http_chat"}, {"status", res->status}}};
  }

  BackendKind kind() const override { return BackendKind::http_chat; }

 private:
  std::string origin_;
  std::string path_prefix_;
  std::string api_key_;
};

}  // namespace gate
