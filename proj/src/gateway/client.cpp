#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "egoqa/errors.hpp"
#include "egoqa/gateway.hpp"

namespace egoqa {

// ------------------------------------------------------------------ clocks

double SystemClock::now() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

double VirtualClock::now() {
  std::lock_guard lock(mu_);
  return now_;
}

void VirtualClock::sleep(double seconds) {
  std::lock_guard lock(mu_);
  sleeps_.push_back(seconds);
  now_ += seconds;
}

std::vector<double> VirtualClock::sleeps() const {
  std::lock_guard lock(mu_);
  return sleeps_;
}

// ------------------------------------------------------------------ retries

void RetryPolicy::validate() const {
  if (max_attempts < 1) throw ConfigError("retry: max_attempts must be >= 1");
  if (base_backoff_s < 0.0) throw ConfigError("retry: base_backoff must be >= 0");
  if (backoff_multiplier < 1.0) throw ConfigError("retry: backoff_multiplier must be >= 1");
}

double RetryPolicy::backoff_after(int failed_attempt) const {
  return base_backoff_s * std::pow(backoff_multiplier, failed_attempt);
}

ChatResponse send_chat(ChatBackend& backend, const ChatRequest& request, const RetryPolicy& policy,
                       Clock& clock) {
  policy.validate();
  request.validate();
  const std::string body = serialize_request(request);
  std::ostringstream log;
  for (int attempt = 0; attempt < policy.max_attempts; ++attempt) {
    const double start = clock.now();
    const RawReply reply = backend.post(body);
    const double elapsed = clock.now() - start;
    if (reply.status >= 200 && reply.status < 300) {
      ChatResponse r = decode_response(reply.body);
      r.latency_s = elapsed;
      r.attempts = attempt + 1;
      return r;
    }
    log << "attempt " << attempt + 1 << ": ";
    if (reply.status == 0) {
      log << "transport failure (" << reply.transport_error << ")\n";
    } else {
      log << "HTTP " << reply.status << "\n";
    }
    if (!policy.retryable_statuses.contains(reply.status)) {
      throw ProtocolError("chat request " + request.request_tag + " rejected with HTTP " +
                              std::to_string(reply.status) + ": " + reply.body.substr(0, 512),
                          reply.status);
    }
    if (attempt + 1 < policy.max_attempts) clock.sleep(policy.backoff_after(attempt));
  }
  throw TransportError("chat request " + request.request_tag + " failed after " +
                           std::to_string(policy.max_attempts) + " attempt(s)\n" + log.str(),
                       log.str(), policy.max_attempts);
}

// ------------------------------------------------------------------ HTTP

HttpChatBackend::HttpChatBackend(std::string base_url, std::string api_key, double timeout_s)
    : api_key_(std::move(api_key)), timeout_s_(timeout_s) {
  while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  origin_ = base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : base_url.substr(path_start);
}

RawReply HttpChatBackend::post(const std::string& body) {
  httplib::Client client(origin_);
  const auto secs = static_cast<time_t>(timeout_s_);
  const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
  RawReply reply;
  if (!res) {
    reply.status = 0;
    reply.transport_error = httplib::to_string(res.error());
    return reply;
  }
  reply.status = res->status;
  reply.body = res->body;
  return reply;
}

// ------------------------------------------------------------------ client

ChatClient::ChatClient(std::shared_ptr<ChatBackend> backend, RetryPolicy policy, int max_parallel,
                       std::shared_ptr<Clock> clock)
    : backend_(std::move(backend)),
      policy_(std::move(policy)),
      clock_(std::move(clock)),
      slots_(std::clamp(max_parallel, 1, 1024)) {
  policy_.validate();
}

ChatResponse ChatClient::send(const ChatRequest& request) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};
  return send_chat(*backend_, request, policy_, *clock_);
}

GatewayConfig GatewayConfig::from_json(const nlohmann::json& j, GatewayConfig c) {
  try {
    c.base_url = j.value("base_url", c.base_url);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.model_id = j.value("model_id", c.model_id);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.max_parallel = j.value("max_parallel", c.max_parallel);
    if (j.contains("retry")) {
      const auto& r = j["retry"];
      c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
      c.retry.base_backoff_s = r.value("base_backoff_s", c.retry.base_backoff_s);
      c.retry.backoff_multiplier = r.value("backoff_multiplier", c.retry.backoff_multiplier);
      if (r.contains("retryable_statuses"))
        c.retry.retryable_statuses = r["retryable_statuses"].get<std::set<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad gateway config: ") + e.what());
  }
  return c;
}

nlohmann::json GatewayConfig::to_json() const {
  return {{"base_url", base_url},
          {"api_key_env", api_key_env},
          {"model_id", model_id},
          {"timeout_s", timeout_s},
          {"max_parallel", max_parallel},
          {"retry",
           {{"max_attempts", retry.max_attempts},
            {"base_backoff_s", retry.base_backoff_s},
            {"backoff_multiplier", retry.backoff_multiplier},
            {"retryable_statuses", retry.retryable_statuses}}}};
}

std::unique_ptr<ModelProvider> make_http_provider(const GatewayConfig& config) {
  const char* key = std::getenv(config.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("environment variable " + config.api_key_env + " is not set");
  }
  auto backend = std::make_shared<HttpChatBackend>(config.base_url, key, config.timeout_s);
  return std::make_unique<ChatClient>(std::move(backend), config.retry, config.max_parallel);
}

}  // namespace egoqa
