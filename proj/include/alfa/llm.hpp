#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "alfa/util.hpp"

namespace alfa::llm {

enum class Role { system, user, assistant };

std::string to_string(Role r);
Role role_from_string(const std::string& s);

struct ChatMessage {
  Role role = Role::user;
  std::string content;
};

struct CompletionRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  int max_tokens = 512;
  std::optional<std::int64_t> seed;

  // Throws ValidationError on empty messages, a leading assistant message,
  // negative temperature or non-positive max_tokens.
  void validate() const;

  json to_json() const;
  static CompletionRequest from_json(const json& j);

  // Concatenated message contents, used by mock rule matching.
  std::string joined_content() const;
  const std::string& last_user_message() const;
};

enum class FinishReason { stop, length, content_filter, error };

std::string to_string(FinishReason r);
FinishReason finish_reason_from_string(const std::string& s);

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct CompletionResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  bool cached = false;
  // Retries spent by the gateway before this response arrived. Not cached.
  int retries = 0;

  json to_json() const;
  static CompletionResponse from_json(const json& j);
};

// Hex SHA-256 over the canonical (sorted-key, compact) JSON serialization of
// {endpoint id, request}. Content is never whitespace-normalized.
std::string cache_key(const std::string& endpoint_id, const CompletionRequest& req);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionResponse send(const CompletionRequest& req) = 0;
};

// Scriptable in-process backend. Resolution order per call: pending scripted
// failures, enqueued responses, pattern rules (first match, ECMAScript regex
// searched over all message contents), then the fallback handler.
class MockBackend : public Backend {
 public:
  using Handler = std::function<std::string(const CompletionRequest&)>;
  enum class Failure { transport, timeout, server_error };

  MockBackend& on(const std::string& pattern, std::string response);
  MockBackend& on(const std::string& pattern, Handler handler);
  MockBackend& enqueue(std::string response);
  MockBackend& fail_next(int count, Failure kind = Failure::transport);
  MockBackend& fail_always(Failure kind = Failure::transport);
  MockBackend& fallback(Handler handler);
  MockBackend& echo();

  CompletionResponse send(const CompletionRequest& req) override;

  std::size_t calls() const;
  std::vector<CompletionRequest> history() const;

 private:
  struct Rule {
    std::regex pattern;
    Handler handler;
  };
  mutable std::mutex mu_;
  std::vector<Rule> rules_;
  std::deque<std::string> queue_;
  std::deque<Failure> failures_;
  std::optional<Failure> always_fail_;
  Handler fallback_;
  std::vector<CompletionRequest> history_;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30000};

  // Delay before retry number `attempt` (0-based): base * 2^attempt, capped.
  std::chrono::milliseconds delay_for(int attempt) const;
};

struct EndpointConfig {
  std::string id;
  std::string kind = "http";  // "http" or "mock"
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env;
  int max_in_flight = 4;
  double timeout_s = 120.0;
  RetryPolicy retry;
  // Behaviour of config-declared mock endpoints; see make_backend().
  json mock;

  static EndpointConfig from_json(const json& j);
  json to_json() const;
};

// Speaks the OpenAI-compatible chat completion protocol over HTTP(S).
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(EndpointConfig cfg);
  CompletionResponse send(const CompletionRequest& req) override;

 private:
  EndpointConfig cfg_;
};

CompletionResponse parse_chat_completion(const std::string& body);
json chat_completion_body(const CompletionRequest& req);

// Builds a backend for a config entry. `mock.behavior` selects "echo",
// "rules" (mock.rules: [{pattern, response}]) or "pipeline" (the offline
// heuristic responder in alfa/offline.hpp).
std::shared_ptr<Backend> make_backend(const EndpointConfig& cfg);

// Directory of digest-named files. Entries carry a checksum; a failed check
// is reported and treated as a miss.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  std::optional<CompletionResponse> load(const std::string& key) const;
  void store(const std::string& key, const CompletionResponse& resp) const;
  std::filesystem::path path_for(const std::string& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int count_;
};

struct GatewayStats {
  std::size_t backend_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t retries = 0;
};

// Thread-safe front door to every configured endpoint.
class Gateway {
 public:
  explicit Gateway(std::optional<std::filesystem::path> cache_dir = std::nullopt);

  void add_endpoint(EndpointConfig cfg, std::shared_ptr<Backend> backend);
  void add_endpoint(EndpointConfig cfg);
  bool has_endpoint(const std::string& id) const;
  const EndpointConfig& endpoint(const std::string& id) const;

  // Retries transport errors, timeouts and retryable API statuses with
  // exponential backoff. An empty req.model is filled from the endpoint.
  CompletionResponse complete(const std::string& endpoint_id, CompletionRequest req);

  // complete() memoized through the response cache (plain complete() when the
  // gateway has no cache directory).
  CompletionResponse cached_complete(const std::string& endpoint_id, CompletionRequest req);

  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper);
  GatewayStats stats() const;
  const ResponseCache* cache() const { return cache_ ? &*cache_ : nullptr; }

 private:
  struct Slot {
    EndpointConfig cfg;
    std::shared_ptr<Backend> backend;
    std::unique_ptr<Semaphore> in_flight;
  };
  Slot& slot(const std::string& id);

  mutable std::mutex mu_;
  std::map<std::string, Slot> endpoints_;
  std::optional<ResponseCache> cache_;
  std::function<void(std::chrono::milliseconds)> sleeper_;
  GatewayStats stats_;
};

// Convenience for the common single-turn system+user exchange.
CompletionRequest make_request(std::string system, std::string user,
                               double temperature = 1.0, int max_tokens = 512);

}  // namespace alfa::llm
