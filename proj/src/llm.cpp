#include "alfa/llm.hpp"

#include <cstdlib>
#include <thread>

#include "httplib.h"

#include "alfa/error.hpp"
#include "alfa/offline.hpp"

namespace alfa::llm {

std::string to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw ValidationError("unknown message role: " + s);
}

void CompletionRequest::validate() const {
  if (messages.empty()) throw ValidationError("completion request has no messages");
  if (messages.front().role == Role::assistant) {
    throw ValidationError("first message must be a system or user message");
  }
  if (temperature < 0.0) throw ValidationError("temperature must be >= 0");
  if (max_tokens <= 0) throw ValidationError("max_tokens must be positive");
}

json CompletionRequest::to_json() const {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  json j = {{"model", model},
            {"messages", msgs},
            {"temperature", temperature},
            {"max_tokens", max_tokens}};
  if (seed) j["seed"] = *seed;
  return j;
}

CompletionRequest CompletionRequest::from_json(const json& j) {
  CompletionRequest r;
  r.model = j.value("model", "");
  for (const auto& m : j.at("messages")) {
    r.messages.push_back({role_from_string(m.at("role")), m.at("content")});
  }
  r.temperature = j.value("temperature", 1.0);
  r.max_tokens = j.value("max_tokens", 512);
  if (j.contains("seed") && !j["seed"].is_null()) r.seed = j["seed"].get<std::int64_t>();
  return r;
}

std::string CompletionRequest::joined_content() const {
  std::string out;
  for (const auto& m : messages) {
    out += m.content;
    out += '\n';
  }
  return out;
}

const std::string& CompletionRequest::last_user_message() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::user) return it->content;
  }
  throw ValidationError("request has no user message");
}

std::string to_string(FinishReason r) {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::content_filter: return "content_filter";
    case FinishReason::error: return "error";
  }
  return "stop";
}

FinishReason finish_reason_from_string(const std::string& s) {
  if (s == "length") return FinishReason::length;
  if (s == "content_filter") return FinishReason::content_filter;
  if (s == "error") return FinishReason::error;
  return FinishReason::stop;
}

json CompletionResponse::to_json() const {
  return {{"text", text},
          {"finish_reason", to_string(finish_reason)},
          {"usage", {{"prompt_tokens", usage.prompt_tokens},
                     {"completion_tokens", usage.completion_tokens}}}};
}

CompletionResponse CompletionResponse::from_json(const json& j) {
  CompletionResponse r;
  r.text = j.at("text").get<std::string>();
  r.finish_reason = finish_reason_from_string(j.value("finish_reason", "stop"));
  if (j.contains("usage")) {
    r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
    r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
  }
  return r;
}

std::string cache_key(const std::string& endpoint_id, const CompletionRequest& req) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  json canonical = {{"endpoint", endpoint_id}, {"request", req.to_json()}};
  return sha256_hex(canonical.dump());
}

// ---------------------------------------------------------------- mock

MockBackend& MockBackend::on(const std::string& pattern, std::string response) {
  return on(pattern, [response = std::move(response)](const CompletionRequest&) { return response; });
}

MockBackend& MockBackend::on(const std::string& pattern, Handler handler) {
  std::lock_guard lock(mu_);
  rules_.push_back({std::regex(pattern), std::move(handler)});
  return *this;
}

MockBackend& MockBackend::enqueue(std::string response) {
  std::lock_guard lock(mu_);
  queue_.push_back(std::move(response));
  return *this;
}

MockBackend& MockBackend::fail_next(int count, Failure kind) {
  std::lock_guard lock(mu_);
  for (int i = 0; i < count; ++i) failures_.push_back(kind);
  return *this;
}

MockBackend& MockBackend::fail_always(Failure kind) {
  std::lock_guard lock(mu_);
  always_fail_ = kind;
  return *this;
}

MockBackend& MockBackend::fallback(Handler handler) {
  std::lock_guard lock(mu_);
  fallback_ = std::move(handler);
  return *this;
}

MockBackend& MockBackend::echo() {
  return fallback([](const CompletionRequest& r) { return r.last_user_message(); });
}

namespace {
[[noreturn]] void raise(MockBackend::Failure f) {
  switch (f) {
    case MockBackend::Failure::timeout: throw TimeoutError("mock: scripted timeout");
    case MockBackend::Failure::server_error: throw ApiError(503, "mock: scripted server error");
    case MockBackend::Failure::transport: break;
  }
  throw TransportError("mock: scripted transport failure");
}

int rough_tokens(const std::string& s) { return static_cast<int>(s.size() / 4 + 1); }
}  // namespace

CompletionResponse MockBackend::send(const CompletionRequest& req) {
  Handler handler;
  std::optional<std::string> queued;
  {
    std::lock_guard lock(mu_);
    history_.push_back(req);
    if (!failures_.empty()) {
      auto f = failures_.front();
      failures_.pop_front();
      raise(f);
    }
    if (always_fail_) raise(*always_fail_);
    if (!queue_.empty()) {
      queued = std::move(queue_.front());
      queue_.pop_front();
    } else {
      std::string content = req.joined_content();
      for (const auto& rule : rules_) {
        if (std::regex_search(content, rule.pattern)) {
          handler = rule.handler;
          break;
        }
      }
      if (!handler) handler = fallback_;
    }
  }
  CompletionResponse resp;
  if (queued) {
    resp.text = std::move(*queued);
  } else if (handler) {
    resp.text = handler(req);
  } else {
    throw ApiError(404, "mock: no rule matched the request");
  }
  resp.usage.prompt_tokens = rough_tokens(req.joined_content());
  resp.usage.completion_tokens = rough_tokens(resp.text);
  return resp;
}

std::size_t MockBackend::calls() const {
  std::lock_guard lock(mu_);
  return history_.size();
}

std::vector<CompletionRequest> MockBackend::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

// ---------------------------------------------------------------- http

std::chrono::milliseconds RetryPolicy::delay_for(int attempt) const {
  auto d = base_delay.count();
  for (int i = 0; i < attempt && d < max_delay.count(); ++i) d *= 2;
  return std::chrono::milliseconds(std::min<long long>(d, max_delay.count()));
}

EndpointConfig EndpointConfig::from_json(const json& j) {
  EndpointConfig c;
  c.id = j.at("id").get<std::string>();
  c.kind = j.value("kind", "http");
  c.base_url = j.value("base_url", "");
  c.path = j.value("path", c.path);
  c.model = j.value("model", "");
  c.api_key_env = j.value("api_key_env", "");
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    c.retry.max_retries = r.value("max_retries", c.retry.max_retries);
    c.retry.base_delay = std::chrono::milliseconds(r.value("base_delay_ms", 500));
    c.retry.max_delay = std::chrono::milliseconds(r.value("max_delay_ms", 30000));
  }
  c.mock = j.value("mock", json::object());
  if (c.kind != "http" && c.kind != "mock") throw ConfigError("endpoint " + c.id + ": unknown kind " + c.kind);
  if (c.kind == "http" && c.base_url.empty()) throw ConfigError("endpoint " + c.id + ": base_url required");
  if (c.max_in_flight < 1) throw ConfigError("endpoint " + c.id + ": max_in_flight must be >= 1");
  return c;
}

json EndpointConfig::to_json() const {
  // Credentials are referenced by env-var name only.
  return {{"id", id},
          {"kind", kind},
          {"base_url", base_url},
          {"path", path},
          {"model", model},
          {"api_key_env", api_key_env},
          {"max_in_flight", max_in_flight},
          {"timeout_s", timeout_s},
          {"retry", {{"max_retries", retry.max_retries},
                     {"base_delay_ms", retry.base_delay.count()},
                     {"max_delay_ms", retry.max_delay.count()}}},
          {"mock", mock}};
}

json chat_completion_body(const CompletionRequest& req) { return req.to_json(); }

CompletionResponse parse_chat_completion(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw ParseError("chat completion body is not JSON", body);
  try {
    const auto& choice = j.at("choices").at(0);
    CompletionResponse r;
    const auto& content = choice.at("message").at("content");
    r.text = content.is_null() ? "" : content.get<std::string>();
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
      r.finish_reason = finish_reason_from_string(choice["finish_reason"]);
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed chat completion: ") + e.what(), body);
  }
}

HttpBackend::HttpBackend(EndpointConfig cfg) : cfg_(std::move(cfg)) {}

CompletionResponse HttpBackend::send(const CompletionRequest& req) {
  httplib::Client client(cfg_.base_url);
  auto secs = static_cast<time_t>(cfg_.timeout_s);
  auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!cfg_.api_key_env.empty()) {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (key == nullptr) throw ConfigError("environment variable " + cfg_.api_key_env + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(cfg_.path, headers, chat_completion_body(req).dump(), "application/json");
  if (!res) {
    if (res.error() == httplib::Error::Read || res.error() == httplib::Error::Write) {
      throw TimeoutError("request to " + cfg_.id + " timed out or was cut off: " + httplib::to_string(res.error()));
    }
    throw TransportError("request to " + cfg_.id + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) throw ApiError(res->status, res->body);
  return parse_chat_completion(res->body);
}

std::shared_ptr<Backend> make_backend(const EndpointConfig& cfg) {
  if (cfg.kind == "http") return std::make_shared<HttpBackend>(cfg);
  std::string behavior = cfg.mock.value("behavior", "echo");
  if (behavior == "pipeline") return offline::make_pipeline_backend(cfg.mock);
  auto mock = std::make_shared<MockBackend>();
  if (behavior == "echo") {
    mock->echo();
  } else if (behavior == "rules") {
    for (const auto& r : cfg.mock.value("rules", json::array())) {
      mock->on(r.at("pattern").get<std::string>(), r.at("response").get<std::string>());
    }
    if (cfg.mock.contains("default")) {
      auto def = cfg.mock["default"].get<std::string>();
      mock->fallback([def](const CompletionRequest&) { return def; });
    }
  } else {
    throw ConfigError("endpoint " + cfg.id + ": unknown mock behavior " + behavior);
  }
  return mock;
}

// ---------------------------------------------------------------- cache

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / (key + ".json");
}

std::optional<CompletionResponse> ResponseCache::load(const std::string& key) const {
  auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  std::string raw;
  try {
    raw = read_file(path);
  } catch (const Error&) {
    return std::nullopt;
  }
  json entry = json::parse(raw, nullptr, false);
  if (entry.is_discarded() || !entry.is_object() || entry.value("digest", "") != key ||
      !entry.contains("response") ||
      entry.value("checksum", "") != sha256_hex(entry["response"].dump())) {
    log_warning("cache entry " + path.string() + " failed integrity check; ignoring");
    return std::nullopt;
  }
  try {
    auto resp = CompletionResponse::from_json(entry["response"]);
    resp.cached = true;
    return resp;
  } catch (const json::exception&) {
    log_warning("cache entry " + path.string() + " is malformed; ignoring");
    return std::nullopt;
  }
}

void ResponseCache::store(const std::string& key, const CompletionResponse& resp) const {
  json body = resp.to_json();
  json entry = {{"digest", key}, {"checksum", sha256_hex(body.dump())}, {"response", body}};
  write_file_atomic(path_for(key), entry.dump());
}

// ---------------------------------------------------------------- gateway

void Semaphore::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return count_ > 0; });
  --count_;
}

void Semaphore::release() {
  {
    std::lock_guard lock(mu_);
    ++count_;
  }
  cv_.notify_one();
}

Gateway::Gateway(std::optional<std::filesystem::path> cache_dir)
    : sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (cache_dir) cache_.emplace(*cache_dir);
}

void Gateway::add_endpoint(EndpointConfig cfg, std::shared_ptr<Backend> backend) {
  std::lock_guard lock(mu_);
  std::string id = cfg.id;
  int limit = std::max(1, cfg.max_in_flight);
  endpoints_[id] = Slot{std::move(cfg), std::move(backend), std::make_unique<Semaphore>(limit)};
}

void Gateway::add_endpoint(EndpointConfig cfg) {
  auto backend = make_backend(cfg);
  add_endpoint(std::move(cfg), std::move(backend));
}

bool Gateway::has_endpoint(const std::string& id) const {
  std::lock_guard lock(mu_);
  return endpoints_.count(id) > 0;
}

const EndpointConfig& Gateway::endpoint(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = endpoints_.find(id);
  if (it == endpoints_.end()) throw ConfigError("unknown endpoint: " + id);
  return it->second.cfg;
}

Gateway::Slot& Gateway::slot(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = endpoints_.find(id);
  if (it == endpoints_.end()) throw ConfigError("unknown endpoint: " + id);
  return it->second;
}

CompletionResponse Gateway::complete(const std::string& endpoint_id, CompletionRequest req) {
  Slot& s = slot(endpoint_id);
  if (req.model.empty()) req.model = s.cfg.model;
  req.validate();
  const RetryPolicy& policy = s.cfg.retry;
  for (int attempt = 0;; ++attempt) {
    bool retryable = false;
    std::exception_ptr failure;
    s.in_flight->acquire();
    try {
      {
        std::lock_guard lock(mu_);
        ++stats_.backend_calls;
      }
      auto resp = s.backend->send(req);
      s.in_flight->release();
      resp.retries = attempt;
      resp.cached = false;
      return resp;
    } catch (const TransportError&) {
      retryable = true;
      failure = std::current_exception();
    } catch (const ApiError& e) {
      retryable = e.retryable();
      failure = std::current_exception();
    } catch (...) {
      failure = std::current_exception();
    }
    s.in_flight->release();
    if (!retryable) std::rethrow_exception(failure);
    if (attempt >= policy.max_retries) {
      try {
        std::rethrow_exception(failure);
      } catch (const TimeoutError& e) {
        throw TimeoutError("endpoint " + endpoint_id + ": retries exhausted: " + e.what());
      } catch (const std::exception& e) {
        throw TransportError("endpoint " + endpoint_id + ": retries exhausted after " +
                             std::to_string(attempt + 1) + " attempts: " + e.what());
      }
    }
    {
      std::lock_guard lock(mu_);
      ++stats_.retries;
    }
    sleeper_(policy.delay_for(attempt));
  }
}

CompletionResponse Gateway::cached_complete(const std::string& endpoint_id, CompletionRequest req) {
  if (!cache_) return complete(endpoint_id, std::move(req));
  if (req.model.empty()) req.model = endpoint(endpoint_id).model;
  req.validate();
  std::string key = cache_key(endpoint_id, req);
  if (auto hit = cache_->load(key)) {
    std::lock_guard lock(mu_);
    ++stats_.cache_hits;
    return *hit;
  }
  auto resp = complete(endpoint_id, std::move(req));
  cache_->store(key, resp);
  return resp;
}

void Gateway::set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
  std::lock_guard lock(mu_);
  sleeper_ = std::move(sleeper);
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

CompletionRequest make_request(std::string system, std::string user, double temperature,
                               int max_tokens) {
  CompletionRequest r;
  if (!system.empty()) r.messages.push_back({Role::system, std::move(system)});
  r.messages.push_back({Role::user, std::move(user)});
  r.temperature = temperature;
  r.max_tokens = max_tokens;
  return r;
}

}  // namespace alfa::llm
