#include "edgecloud/backend.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "edgecloud/error.hpp"
#include "edgecloud/hash.hpp"

namespace edgecloud {

namespace {

constexpr double kEmbeddingSignal = 3.0;

std::int64_t count_words(std::string_view text) {
  std::int64_t n = 0;
  bool in_word = false;
  for (char c : text) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

void validate_probs(const std::vector<double>& probs, std::string_view where) {
  for (double p : probs) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw ConfigError(fmt::format("{}: token probability {} outside (0, 1]", where, p));
    }
  }
}

MockReply reply_from_json(const nlohmann::json& j, std::string_view where) {
  MockReply r;
  r.text = j.value("text", std::string{});
  if (j.contains("token_probs")) r.token_probs = j.at("token_probs").get<std::vector<double>>();
  r.elapsed_seconds = j.value("elapsed_seconds", 0.0);
  if (r.elapsed_seconds < 0.0) throw ConfigError(fmt::format("{}: negative elapsed_seconds", where));
  validate_probs(r.token_probs, where);
  return r;
}

nlohmann::json reply_to_json(const MockReply& r) {
  nlohmann::json j;
  j["text"] = r.text;
  j["token_probs"] = r.token_probs;
  j["elapsed_seconds"] = r.elapsed_seconds;
  return j;
}

}  // namespace

CostLedger price(const ChatResponse& response, const BackendProfile& profile) {
  CostLedger ledger;
  ledger.wall_seconds = response.elapsed_seconds;
  ledger.prompt_tokens = response.prompt_tokens;
  ledger.completion_tokens = response.completion_tokens;
  if (profile.tier == ModelTier::Cloud) {
    ledger.cloud_calls = 1;
    ledger.api_cents = static_cast<double>(response.prompt_tokens) * profile.price_per_prompt_token_cents +
                       static_cast<double>(response.completion_tokens) * profile.price_per_completion_token_cents;
  } else {
    ledger.device_calls = 1;
  }
  return ledger;
}

std::string sentence_embedding_prompt(std::string_view text) {
  return fmt::format("This sentence: \"{}\" means in one word: \"", text);
}

EmbeddingVector Backend::embed(const std::string&) {
  throw CapabilityError(fmt::format("backend '{}' has no embedding capability", describe()));
}

// ---------------------------------------------------------------------------

MockScript MockScript::from_json(const nlohmann::json& doc) {
  try {
    MockScript script;
    if (doc.contains("default")) script.fallback = reply_from_json(doc.at("default"), "mock default");
    if (doc.contains("rules")) {
      std::size_t i = 0;
      for (const auto& r : doc.at("rules")) {
        MockRule rule;
        rule.match = r.at("match").get<std::string>();
        rule.reply = reply_from_json(r, fmt::format("mock rule {}", i++));
        script.rules.push_back(std::move(rule));
      }
    }
    if (doc.contains("embeddings")) {
      for (const auto& e : doc.at("embeddings")) {
        double d = e.at("difficulty").get<double>();
        if (!(d >= 0.0 && d <= 1.0)) throw ConfigError(fmt::format("embedding difficulty {} outside [0, 1]", d));
        script.embeddings.push_back({e.at("match").get<std::string>(), d});
      }
    }
    script.embedding_dim = doc.value("embedding_dim", std::size_t{64});
    if (script.embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
    return script;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed mock script: {}", e.what()));
  }
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open mock script {}", path.string()));
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("mock script {} is not valid JSON: {}", path.string(), e.what()));
  }
  return from_json(doc);
}

nlohmann::json MockScript::to_json() const {
  nlohmann::json doc;
  doc["default"] = reply_to_json(fallback);
  doc["rules"] = nlohmann::json::array();
  for (const auto& r : rules) {
    auto j = reply_to_json(r.reply);
    j["match"] = r.match;
    doc["rules"].push_back(std::move(j));
  }
  doc["embeddings"] = nlohmann::json::array();
  for (const auto& e : embeddings) doc["embeddings"].push_back({{"match", e.match}, {"difficulty", e.difficulty}});
  doc["embedding_dim"] = embedding_dim;
  return doc;
}

MockBackend::MockBackend(MockScript script, std::uint64_t seed, std::string name)
    : script_(std::move(script)), seed_(seed), name_(std::move(name)) {
  direction_.resize(script_.embedding_dim);
  SplitMix64 rng(seed_ ^ 0xD1FFC0117ULL);
  double norm = 0.0;
  for (auto& v : direction_) {
    v = rng.uniform(-1.0, 1.0);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : direction_) v /= norm;
}

const MockReply& MockBackend::lookup(std::string_view user) const {
  for (const auto& rule : script_.rules) {
    if (user.find(rule.match) != std::string_view::npos) return rule.reply;
  }
  return script_.fallback;
}

ChatResponse MockBackend::complete(const ChatRequest& request) {
  if (request.max_tokens < 1) throw PreconditionError("max_tokens must be at least 1");
  if (request.temperature < 0.0) throw PreconditionError("temperature must be nonnegative");
  const MockReply& reply = lookup(request.user);
  if (request.want_token_probs && reply.token_probs.empty()) {
    throw CapabilityError(fmt::format("endpoint '{}' returned no token probabilities for a request that needs them",
                                      name_));
  }
  ChatResponse out;
  out.text = reply.text;
  out.prompt_tokens = count_words(request.system) + count_words(request.user);
  out.completion_tokens = reply.token_probs.empty() ? count_words(reply.text)
                                                    : static_cast<std::int64_t>(reply.token_probs.size());
  if (request.want_token_probs) out.token_probs = reply.token_probs;
  out.elapsed_seconds = reply.elapsed_seconds;
  return out;
}

EmbeddingVector MockBackend::embed(const std::string& prompt) {
  double difficulty = 0.5;
  for (const auto& rule : script_.embeddings) {
    if (prompt.find(rule.match) != std::string::npos) {
      difficulty = rule.difficulty;
      break;
    }
  }
  const std::size_t dim = script_.embedding_dim;
  SplitMix64 rng(fnv1a64(prompt) ^ (seed_ * 0x9E3779B97F4A7C15ULL));
  std::vector<double> noise(dim);
  double along = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    noise[i] = rng.uniform(-1.0, 1.0);
    along += noise[i] * direction_[i];
  }
  const double signal = (difficulty - 0.5) * 2.0 * kEmbeddingSignal;
  EmbeddingVector out;
  out.values.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    out.values[i] = noise[i] - along * direction_[i] + signal * direction_[i];
  }
  return out;
}

// ---------------------------------------------------------------------------

void BackendRouter::Slots::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return free_ > 0; });
  --free_;
}

void BackendRouter::Slots::release() {
  {
    std::lock_guard lock(mu_);
    ++free_;
  }
  cv_.notify_one();
}

BackendRouter::BackendRouter() = default;

void BackendRouter::register_backend(BackendProfile profile, std::shared_ptr<Backend> backend) {
  if (!backend) throw ConfigError("null backend");
  if (profile.max_in_flight < 1) throw ConfigError("max_in_flight must be at least 1");
  auto idx = static_cast<std::size_t>(profile.tier);
  int capacity = profile.max_in_flight;
  entries_[idx] = Entry{std::move(profile), std::move(backend), std::make_shared<Slots>(capacity),
                        std::make_shared<std::atomic<std::size_t>>(0)};
}

bool BackendRouter::has(ModelTier tier) const { return entries_[static_cast<std::size_t>(tier)].has_value(); }

const BackendRouter::Entry& BackendRouter::entry(ModelTier tier) const {
  const auto& e = entries_[static_cast<std::size_t>(tier)];
  if (!e) throw ConfigError(fmt::format("no backend registered for the {} tier", to_string(tier)));
  return *e;
}

const BackendProfile& BackendRouter::profile(ModelTier tier) const { return entry(tier).profile; }
Backend& BackendRouter::backend(ModelTier tier) const { return *entry(tier).backend; }

ChatResponse BackendRouter::complete(ModelTier tier, const ChatRequest& request) const {
  const Entry& e = entry(tier);
  if (request.max_tokens < 1) throw PreconditionError("max_tokens must be at least 1");
  if (request.temperature < 0.0) throw PreconditionError("temperature must be nonnegative");
  const int max_attempts = std::max(1, retry_.max_attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      e.slots->acquire();
      struct Release {
        Slots* s;
        ~Release() { s->release(); }
      } release{e.slots.get()};
      ChatResponse resp = e.backend->complete(request);
      for (double p : resp.token_probs) {
        if (!(p > 0.0 && p <= 1.0)) {
          throw DecodeError(fmt::format("endpoint '{}' produced token probability {}", e.backend->describe(), p));
        }
      }
      if (request.want_token_probs &&
          static_cast<std::int64_t>(resp.token_probs.size()) != resp.completion_tokens) {
        throw DecodeError(fmt::format("endpoint '{}' returned {} probabilities for {} completion tokens",
                                      e.backend->describe(), resp.token_probs.size(), resp.completion_tokens));
      }
      return resp;
    } catch (const TransportError& err) {
      if (attempt >= max_attempts) {
        throw TransportError(fmt::format("{} (gave up after {} attempts)", err.what(), attempt), attempt);
      }
      auto delay = retry_.base_delay * (1LL << (attempt - 1));
      spdlog::warn("transport error on {} tier (attempt {}/{}), retrying in {} ms", to_string(tier), attempt,
                   max_attempts, delay.count());
      std::this_thread::sleep_for(delay);
    }
  }
}

std::pair<ChatResponse, CostLedger> BackendRouter::call(ModelTier tier, const ChatRequest& request) const {
  ChatResponse resp = complete(tier, request);
  CostLedger ledger = price(resp, profile(tier));
  return {std::move(resp), ledger};
}

EmbeddingVector BackendRouter::embed_sentence(ModelTier tier, std::string_view text) const {
  if (trim(text).empty()) throw PreconditionError("cannot embed empty text");
  const Entry& e = entry(tier);
  EmbeddingVector v;
  {
    e.slots->acquire();
    struct Release {
      Slots* s;
      ~Release() { s->release(); }
    } release{e.slots.get()};
    v = e.backend->embed(sentence_embedding_prompt(text));
  }
  for (double x : v.values) {
    if (!std::isfinite(x)) throw DecodeError(fmt::format("endpoint '{}' produced a non-finite embedding", e.backend->describe()));
  }
  std::size_t expected = 0;
  if (!e.embedding_dim->compare_exchange_strong(expected, v.dim()) && expected != v.dim()) {
    throw DecodeError(fmt::format("endpoint '{}' changed embedding dimension from {} to {}", e.backend->describe(),
                                  expected, v.dim()));
  }
  return v;
}

BackendProfile profile_from_json(const nlohmann::json& doc, ModelTier tier) {
  try {
    BackendProfile p;
    p.tier = tier;
    p.endpoint = doc.value("endpoint", std::string{"mock"});
    p.model_name = doc.value("model_name", std::string{});
    p.price_per_prompt_token_cents = doc.value("price_per_prompt_token_cents", 0.0);
    p.price_per_completion_token_cents = doc.value("price_per_completion_token_cents", 0.0);
    p.api_key_env = doc.value("api_key_env", std::string{});
    p.script = doc.value("script", std::string{});
    p.embeddings = doc.value("embeddings", false);
    p.max_in_flight = doc.value("max_in_flight", 4);
    p.timeout_seconds = doc.value("timeout_seconds", 120.0);
    if (p.price_per_prompt_token_cents < 0.0 || p.price_per_completion_token_cents < 0.0) {
      throw ConfigError(fmt::format("{} tier: prices must be nonnegative", to_string(tier)));
    }
    if (tier == ModelTier::Device && (p.price_per_prompt_token_cents != 0.0 || p.price_per_completion_token_cents != 0.0)) {
      throw ConfigError("device tier must have zero token prices");
    }
    if (p.is_mock() && p.script.empty()) {
      throw ConfigError(fmt::format("{} tier: mock endpoint needs a 'script' path", to_string(tier)));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed {} profile: {}", to_string(tier), e.what()));
  }
}

BackendRouter BackendRouter::from_profiles_file(const std::filesystem::path& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open backend profiles {}", path.string()));
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("backend profiles {} are not valid JSON: {}", path.string(), e.what()));
  }
  BackendRouter router;
  for (ModelTier tier : {ModelTier::Device, ModelTier::Cloud}) {
    std::string key(to_string(tier));
    if (!doc.contains(key)) continue;
    BackendProfile p = profile_from_json(doc.at(key), tier);
    std::shared_ptr<Backend> backend;
    if (p.is_mock()) {
      if (p.script.is_relative()) p.script = path.parent_path() / p.script;
      // Tiers get distinct seeds so their embeddings are not identical.
      backend = std::make_shared<MockBackend>(MockScript::load(p.script), seed + static_cast<std::uint64_t>(tier),
                                              fmt::format("mock:{}", key));
    } else {
      backend = std::make_shared<HttpBackend>(p);
    }
    router.register_backend(std::move(p), std::move(backend));
  }
  if (doc.contains("retry")) {
    RetryPolicy policy;
    policy.max_attempts = doc["retry"].value("max_attempts", 3);
    policy.base_delay = std::chrono::milliseconds(doc["retry"].value("base_delay_ms", 1000));
    router.set_retry_policy(policy);
  }
  return router;
}

}  // namespace edgecloud
