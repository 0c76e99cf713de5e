#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace egoqa {

enum class Role { System, User, Assistant };
std::string_view to_string(Role r);

struct ContentPart {
  enum class Kind { Text, Image };
  Kind kind = Kind::Text;
  std::string text;
  std::shared_ptr<const std::string> image;  // raw bytes for Kind::Image
  std::string mime;

  static ContentPart make_text(std::string text);
  static ContentPart make_image(std::shared_ptr<const std::string> bytes, std::string mime);
  bool is_image() const { return kind == Kind::Image; }
};

struct ChatMessage {
  Role role = Role::User;
  std::vector<ContentPart> parts;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 512;
  // Opaque to backends; used for tracing and by test oracles.
  std::string request_tag;

  // At least one user message; images only inside user messages.
  void validate() const;
  // Concatenated text parts of all messages, separated by newlines.
  std::string joined_text() const;
  std::size_t image_count() const;
};

struct TokenUsage {
  long prompt = 0;
  long completion = 0;
};

struct ChatResponse {
  std::string text;
  double latency_s = 0.0;
  std::optional<TokenUsage> usage;
  int attempts = 1;
};

// Anything that can answer a chat request: live client, scripted mock, oracle.
// Implementations must be safe for concurrent calls.
class ModelProvider {
 public:
  virtual ~ModelProvider() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

// "data:<mime>;base64,<payload>". Throws DegenerateInputError on empty bytes.
std::string encode_image(std::string_view bytes, std::string_view mime);

// OpenAI-compatible chat-completions body. Field order: model, messages,
// temperature, max_tokens.
std::string serialize_request(const ChatRequest& request);

// Stable 16-hex-digit key over model id, message text, image digests and
// temperature. max_tokens and the request tag do not participate.
std::string request_fingerprint(const ChatRequest& request);

// Reads choices[0].message.content (string or typed-part array) and usage.
ChatResponse decode_response(std::string_view body);

// ------------------------------------------------------------------ retries

// Status 0 stands for transport failures (refused connection, timeout).
struct RetryPolicy {
  int max_attempts = 3;
  double base_backoff_s = 1.0;
  double backoff_multiplier = 2.0;
  std::set<int> retryable_statuses{0, 408, 409, 429, 500, 502, 503, 504};

  void validate() const;
  // Delay slept after failed attempt i (0-based): base * multiplier^i.
  double backoff_after(int failed_attempt) const;
};

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() = 0;  // seconds, monotonic
  virtual void sleep(double seconds) = 0;
};

class SystemClock final : public Clock {
 public:
  double now() override;
  void sleep(double seconds) override;
};

// Time only moves when sleep() is called. Records every sleep.
class VirtualClock final : public Clock {
 public:
  double now() override;
  void sleep(double seconds) override;
  std::vector<double> sleeps() const;

 private:
  mutable std::mutex mu_;
  double now_ = 0.0;
  std::vector<double> sleeps_;
};

struct RawReply {
  int status = 0;  // 0 = transport failure
  std::string body;
  std::string transport_error;
};

// One HTTP exchange, no retries.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual RawReply post(const std::string& body) = 0;
};

class HttpChatBackend final : public ChatBackend {
 public:
  // base_url like "https://api.example.com/v1"; POSTs to {base_url}/chat/completions.
  HttpChatBackend(std::string base_url, std::string api_key, double timeout_s);
  RawReply post(const std::string& body) override;

 private:
  std::string origin_;
  std::string path_prefix_;
  std::string api_key_;
  double timeout_s_;
};

// Sends with retry and exponential backoff; latency covers the successful
// attempt only. Throws TransportError (retries exhausted), ProtocolError
// (non-retryable status) or DecodeError (bad body).
ChatResponse send_chat(ChatBackend& backend, const ChatRequest& request, const RetryPolicy& policy,
                       Clock& clock);

struct GatewayConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string model_id = "gpt-4o";
  double timeout_s = 120.0;
  int max_parallel = 4;
  RetryPolicy retry;

  // Fields absent from j keep their value in base.
  static GatewayConfig from_json(const nlohmann::json& j, GatewayConfig base);
  static GatewayConfig from_json(const nlohmann::json& j) { return from_json(j, GatewayConfig{}); }
  nlohmann::json to_json() const;
};

// Live provider: backend + retry policy + global in-flight cap.
class ChatClient final : public ModelProvider {
 public:
  ChatClient(std::shared_ptr<ChatBackend> backend, RetryPolicy policy, int max_parallel,
             std::shared_ptr<Clock> clock = std::make_shared<SystemClock>());
  ChatResponse send(const ChatRequest& request) override;

 private:
  std::shared_ptr<ChatBackend> backend_;
  RetryPolicy policy_;
  std::shared_ptr<Clock> clock_;
  std::counting_semaphore<1024> slots_;
};

// Reads the API key from the configured environment variable.
std::unique_ptr<ModelProvider> make_http_provider(const GatewayConfig& config);

// ------------------------------------------------------------------ mocks

// Pure lookup keyed by request_fingerprint. Misses throw ScriptedMissError
// naming the closest known fingerprints.
class ScriptedProvider final : public ModelProvider {
 public:
  explicit ScriptedProvider(std::map<std::string, std::string> script);
  // JSON object {fingerprint: response text}.
  static ScriptedProvider from_file(const std::string& path);

  ChatResponse send(const ChatRequest& request) override;
  const std::map<std::string, std::string>& script() const { return script_; }

 private:
  std::map<std::string, std::string> script_;
};

std::unique_ptr<ModelProvider> scripted_provider(std::map<std::string, std::string> script);

}  // namespace egoqa
