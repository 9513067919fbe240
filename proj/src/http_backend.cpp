#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>

#include <fmt/format.h>
#include <httplib.h>

#include "edgecloud/backend.hpp"
#include "edgecloud/error.hpp"

namespace edgecloud {

namespace {

// Splits "http://host:port/v1" into "http://host:port" and "/v1".
std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError(fmt::format("endpoint '{}' is not an http(s) URL", url));
  auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {url, ""};
  std::string path = url.substr(path_begin);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_begin), path};
}

}  // namespace

HttpBackend::HttpBackend(BackendProfile profile) : profile_(std::move(profile)) {
  std::tie(scheme_host_, base_path_) = split_url(profile_.endpoint);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme_host_.starts_with("https://")) {
    throw ConfigError(fmt::format("endpoint '{}' needs TLS but the build has no OpenSSL support", profile_.endpoint));
  }
#endif
}

nlohmann::json HttpBackend::chat_body(const ChatRequest& request, const std::string& model) {
  nlohmann::json messages = nlohmann::json::array();
  if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
  messages.push_back({{"role", "user"}, {"content", request.user}});
  nlohmann::json body = {
      {"model", model},
      {"messages", std::move(messages)},
      {"max_tokens", request.max_tokens},
      {"temperature", request.temperature},
  };
  if (request.want_token_probs) body["logprobs"] = true;
  return body;
}

ChatResponse HttpBackend::parse_chat_response(const std::string& body, bool want_token_probs,
                                              const std::string& endpoint) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(fmt::format("endpoint '{}' returned non-JSON body: {}", endpoint, e.what()));
  }
  try {
    const auto& choice = doc.at("choices").at(0);
    ChatResponse out;
    const auto& content = choice.at("message").at("content");
    out.text = content.is_null() ? std::string{} : content.get<std::string>();
    if (doc.contains("usage")) {
      out.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
      out.completion_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
    }
    const bool has_logprobs = choice.contains("logprobs") && choice["logprobs"].is_object() &&
                              choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array();
    if (want_token_probs) {
      if (!has_logprobs) {
        throw CapabilityError(fmt::format("endpoint '{}' did not return token log-probabilities", endpoint));
      }
      for (const auto& tok : choice["logprobs"]["content"]) {
        double lp = tok.at("logprob").get<double>();
        // Clamp: a logprob of exactly 0 is probability 1; tiny underflow is floored.
        double p = std::exp(std::min(lp, 0.0));
        out.token_probs.push_back(std::max(p, std::numeric_limits<double>::min()));
      }
      // Token probabilities define the completion length when usage is absent or disagrees.
      out.completion_tokens = static_cast<std::int64_t>(out.token_probs.size());
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(fmt::format("endpoint '{}' returned an unexpected payload: {}", endpoint, e.what()));
  }
}

std::string HttpBackend::post(const std::string& path, const std::string& body) const {
  httplib::Client client(scheme_host_);
  auto timeout = std::chrono::duration<double>(profile_.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers;
  if (!profile_.api_key_env.empty()) {
    if (const char* key = std::getenv(profile_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  auto res = client.Post(base_path_ + path, headers, body, "application/json");
  if (!res) {
    throw TransportError(fmt::format("POST {}{} failed: {}", profile_.endpoint, path, httplib::to_string(res.error())));
  }
  if (res->status >= 500 || res->status == 429) {
    throw TransportError(fmt::format("POST {}{} returned HTTP {}", profile_.endpoint, path, res->status));
  }
  if (res->status != 200) {
    throw DecodeError(fmt::format("POST {}{} returned HTTP {}", profile_.endpoint, path, res->status));
  }
  return res->body;
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
  auto start = std::chrono::steady_clock::now();
  std::string body = post("/chat/completions", chat_body(request, profile_.model_name).dump());
  ChatResponse out = parse_chat_response(body, request.want_token_probs, profile_.endpoint);
  out.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

EmbeddingVector HttpBackend::embed(const std::string& prompt) {
  if (!profile_.embeddings) {
    throw CapabilityError(fmt::format("endpoint '{}' is not configured with an embeddings route", profile_.endpoint));
  }
  nlohmann::json req = {{"model", profile_.model_name}, {"input", prompt}};
  std::string body = post("/embeddings", req.dump());
  try {
    auto doc = nlohmann::json::parse(body);
    EmbeddingVector v;
    v.values = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
    if (v.values.empty()) throw DecodeError(fmt::format("endpoint '{}' returned an empty embedding", profile_.endpoint));
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(fmt::format("endpoint '{}' returned an unexpected embedding payload: {}", profile_.endpoint,
                                  e.what()));
  }
}

}  // namespace edgecloud
