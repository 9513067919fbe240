#pragma once

// Model endpoints for the two tiers. A Backend answers chat requests with
// per-token probabilities; the BackendRouter owns one backend per tier and
// layers retries, rate limiting and pricing on top.

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgecloud/core.hpp"

namespace edgecloud {

struct ChatRequest {
  std::string system;
  std::string user;
  int max_tokens = 512;
  double temperature = 0.0;
  bool want_token_probs = true;
};

struct ChatResponse {
  std::string text;
  std::vector<double> token_probs;  // each in (0, 1]
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double elapsed_seconds = 0.0;

  friend bool operator==(const ChatResponse&, const ChatResponse&) = default;
};

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

struct BackendProfile {
  ModelTier tier = ModelTier::Device;
  std::string endpoint = "mock";  // base URL, or "mock"
  std::string model_name;
  double price_per_prompt_token_cents = 0.0;
  double price_per_completion_token_cents = 0.0;
  std::string api_key_env;             // name of the env var holding the key; empty for none
  std::filesystem::path script;        // mock only
  bool embeddings = false;             // real endpoints: POST {endpoint}/embeddings is available
  int max_in_flight = 4;
  double timeout_seconds = 120.0;

  bool is_mock() const { return endpoint == "mock"; }
};

/// Fills api_cents, wall_seconds, token and call counters for one response.
CostLedger price(const ChatResponse& response, const BackendProfile& profile);

/// Wraps text in the one-word summarisation template used for sentence embeddings.
std::string sentence_embedding_prompt(std::string_view text);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  /// Hidden state of the continuation token for an already-templated prompt.
  virtual EmbeddingVector embed(const std::string& prompt);
  virtual std::string describe() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted mock

struct MockReply {
  std::string text;
  std::vector<double> token_probs;  // empty means "no probabilities available"
  double elapsed_seconds = 0.0;
};

struct MockRule {
  std::string match;  // substring of the user prompt
  MockReply reply;
};

struct MockEmbeddingRule {
  std::string match;   // substring of the sentence text
  double difficulty;   // in [0, 1]
};

/// Ordered rules; first rule whose `match` occurs in the user prompt wins.
struct MockScript {
  MockReply fallback;
  std::vector<MockRule> rules;
  std::vector<MockEmbeddingRule> embeddings;
  std::size_t embedding_dim = 64;

  static MockScript from_json(const nlohmann::json& doc);
  static MockScript load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// Deterministic backend driven by a MockScript. Pure in (script, request, seed).
class MockBackend final : public Backend {
 public:
  MockBackend(MockScript script, std::uint64_t seed, std::string name = "mock");

  ChatResponse complete(const ChatRequest& request) override;
  EmbeddingVector embed(const std::string& prompt) override;
  std::string describe() const override { return name_; }

  /// Unit vector along which embeddings encode scripted difficulty.
  const std::vector<double>& difficulty_direction() const { return direction_; }
  const MockScript& script() const { return script_; }

 private:
  const MockReply& lookup(std::string_view user) const;

  MockScript script_;
  std::uint64_t seed_;
  std::string name_;
  std::vector<double> direction_;
};

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP endpoint

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendProfile profile);

  ChatResponse complete(const ChatRequest& request) override;
  EmbeddingVector embed(const std::string& prompt) override;
  std::string describe() const override { return profile_.endpoint; }

  /// Request body for POST {endpoint}/chat/completions.
  static nlohmann::json chat_body(const ChatRequest& request, const std::string& model);
  /// Parses a chat-completions response. Log-probabilities are exponentiated.
  static ChatResponse parse_chat_response(const std::string& body, bool want_token_probs,
                                          const std::string& endpoint);

 private:
  std::string post(const std::string& path, const std::string& body) const;

  BackendProfile profile_;
  std::string scheme_host_;
  std::string base_path_;
};

// ---------------------------------------------------------------------------

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{1000};
};

/// Owns one backend per tier. Safe for concurrent use once configured.
class BackendRouter {
 public:
  BackendRouter();

  void register_backend(BackendProfile profile, std::shared_ptr<Backend> backend);
  bool has(ModelTier tier) const;
  const BackendProfile& profile(ModelTier tier) const;
  Backend& backend(ModelTier tier) const;

  void set_retry_policy(RetryPolicy policy) { retry_ = policy; }
  const RetryPolicy& retry_policy() const { return retry_; }

  /// Sends one request to the tier, retrying transport failures.
  ChatResponse complete(ModelTier tier, const ChatRequest& request) const;
  /// complete() followed by price() against the tier's profile.
  std::pair<ChatResponse, CostLedger> call(ModelTier tier, const ChatRequest& request) const;

  EmbeddingVector embed_sentence(ModelTier tier, std::string_view text) const;

  /// Reads a profiles file: {"device": {...}, "cloud": {...}}. Mock script
  /// paths are resolved against the file's directory.
  static BackendRouter from_profiles_file(const std::filesystem::path& path, std::uint64_t seed);

 private:
  class Slots {
   public:
    explicit Slots(int capacity) : free_(capacity) {}
    void acquire();
    void release();

   private:
    std::mutex mu_;
    std::condition_variable cv_;
    int free_;
  };

  struct Entry {
    BackendProfile profile;
    std::shared_ptr<Backend> backend;
    std::shared_ptr<Slots> slots;
    std::shared_ptr<std::atomic<std::size_t>> embedding_dim;  // 0 until first embedding
  };

  const Entry& entry(ModelTier tier) const;

  std::array<std::optional<Entry>, 2> entries_;
  RetryPolicy retry_;
};

BackendProfile profile_from_json(const nlohmann::json& doc, ModelTier tier);

}  // namespace edgecloud
