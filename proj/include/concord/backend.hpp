#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "concord/serialize.hpp"
#include "concord/types.hpp"

namespace concord {

inline constexpr std::string_view kMemberSystemText =
    "You are one member of a model consortium. Answer the task on your own, following the required output format.";
inline constexpr std::string_view kReasonerSystemText =
    "You are the reasoning-layer governance agent. Evaluate the candidate outputs and emit a decision in the required "
    "grammar.";

struct BackendConfig {
  std::string backend_ref;
  std::string endpoint_url;
  // Name of the environment variable holding the bearer token. Empty means
  // the endpoint takes no credential.
  std::string auth_token_env;
  std::string model_name;
  std::int64_t timeout_ms = 60000;
  int max_retries = 2;
  double temperature = 0.0;

  void validate() const;
};

struct InvokeOptions {
  std::string model_name;
  std::int64_t timeout_ms = 60000;
  double temperature = 0.0;
  std::string system_text{kMemberSystemText};
};

struct InvokeResult {
  std::string content;
  std::int64_t latency_ms = 0;
};

// One model endpoint. Implementations must tolerate concurrent invoke calls.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual InvokeResult invoke(const CanonicalPrompt& prompt, const InvokeOptions& options) = 0;
};

// ── wire format ─────────────────────────────────────────────────────────────

// Chat-completions request document. The user message is a plain string for
// text-only prompts, else a list of content parts: the text part first, then
// one image_url part per attached image. With embed_image_bytes the image url
// is a base64 data URL read from media_ref; otherwise it is "sha256:<hash>".
json build_chat_request(const CanonicalPrompt& prompt, const InvokeOptions& options, bool embed_image_bytes = true);

// choices[0].message.content, byte for byte. Throws MalformedResponse with
// the path of the first missing or mistyped field.
std::string parse_wire_response(std::string_view body);

struct HttpRequest {
  std::string url;
  std::map<std::string, std::string> headers;
  std::string body;
  std::int64_t timeout_ms = 60000;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// POSTs a request. Throws Timeout or TransportError; any HTTP status is a
// normal return.
using Transport = std::function<HttpResponse(const HttpRequest&)>;
using Sleeper = std::function<void(std::int64_t ms)>;

Transport http_transport();
Sleeper real_sleeper();

struct RetryPolicy {
  int max_retries = 2;
  std::int64_t base_ms = 250;
  double factor = 2.0;
};

// Delay before retry number `retry` (0-based): base * factor^retry plus a
// uniform jitter in [0, base).
std::int64_t backoff_delay_ms(const RetryPolicy& policy, int retry, std::mt19937_64& rng);

// OpenAI-compatible chat-completions client.
class HttpBackend : public Backend {
 public:
  HttpBackend(BackendConfig config, std::uint64_t seed, Transport transport = http_transport(),
              Sleeper sleeper = real_sleeper(), std::int64_t retry_base_ms = 250);

  // Only transport errors are retried, at most config.max_retries times.
  InvokeResult invoke(const CanonicalPrompt& prompt, const InvokeOptions& options) override;

  const BackendConfig& config() const { return config_; }

 private:
  BackendConfig config_;
  Transport transport_;
  Sleeper sleeper_;
  RetryPolicy retry_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

// ── scripted backend ────────────────────────────────────────────────────────

enum class ScriptedFailure { none, timeout, transport, upstream, auth };

struct ScriptedResponse {
  std::string text;
  std::int64_t latency_ms = 0;
  ScriptedFailure failure = ScriptedFailure::none;
};

struct RecordedRequest {
  std::string prompt_hash;
  // canonical_dump of build_chat_request(prompt, options, false)
  std::string wire_body;
};

// Answers from a table keyed by prompt_hash, with an optional default. An
// unknown hash without default raises UpstreamError(404, ...). A response
// whose latency exceeds the caller's timeout raises Timeout. Latency is
// virtual: nothing sleeps.
class ScriptedBackend : public Backend {
 public:
  ScriptedBackend(std::string backend_ref, std::map<std::string, ScriptedResponse> script,
                  std::optional<ScriptedResponse> fallback = std::nullopt, std::uint64_t seed = 0,
                  std::int64_t latency_jitter_ms = 0);

  static std::shared_ptr<ScriptedBackend> always(std::string backend_ref, ScriptedResponse response);

  InvokeResult invoke(const CanonicalPrompt& prompt, const InvokeOptions& options) override;

  std::vector<RecordedRequest> requests() const;
  std::size_t call_count() const;
  const std::string& backend_ref() const { return backend_ref_; }

 private:
  std::string backend_ref_;
  std::map<std::string, ScriptedResponse> script_;
  std::optional<ScriptedResponse> fallback_;
  std::uint64_t seed_;
  std::int64_t jitter_ms_;
  mutable std::mutex mutex_;
  std::vector<RecordedRequest> requests_;
};

// ── registry ────────────────────────────────────────────────────────────────

// Resolves the backend for a model: a per-model override if one is set,
// otherwise the backend registered under the descriptor's backend_ref.
class BackendRegistry {
 public:
  void add(BackendConfig config, std::shared_ptr<Backend> backend);
  void override_model(const std::string& model_id, std::shared_ptr<Backend> backend);

  struct Resolved {
    std::shared_ptr<Backend> backend;
    BackendConfig config;
  };

  // Throws ConfigError when nothing resolves.
  Resolved resolve(const ModelDescriptor& model) const;

  bool has_config(const std::string& backend_ref) const { return configs_.count(backend_ref) != 0; }

 private:
  std::map<std::string, BackendConfig> configs_;
  std::map<std::string, std::shared_ptr<Backend>> backends_;
  std::map<std::string, std::shared_ptr<Backend>> overrides_;
};

}  // namespace concord
