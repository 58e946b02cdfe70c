#include "concord/backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "concord/error.hpp"
#include "concord/hash.hpp"

namespace concord {

namespace {

std::string read_file_bytes(const ImageInput& image) {
  if (image.media_ref.empty()) throw MissingImage(image.source_id);
  std::ifstream in(image.media_ref, std::ios::binary);
  if (!in) throw MissingImage(image.source_id);
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return bytes.str();
}

std::string excerpt(std::string_view body) {
  constexpr std::size_t kMax = 200;
  return std::string(body.substr(0, kMax));
}

}  // namespace

void BackendConfig::validate() const {
  if (backend_ref.empty()) throw ConfigError("backends.backend_ref", "required");
  const std::string path = "backends." + backend_ref;
  if (timeout_ms <= 0) throw ConfigError(path + ".timeout_ms", "must be positive");
  if (max_retries < 0 || max_retries > 10) throw ConfigError(path + ".max_retries", "must be in [0, 10]");
  if (temperature < 0.0) throw ConfigError(path + ".temperature", "must be >= 0");
}

json build_chat_request(const CanonicalPrompt& prompt, const InvokeOptions& options, bool embed_image_bytes) {
  json user_content;
  if (prompt.attached_images.empty()) {
    user_content = prompt.rendered_text;
  } else {
    user_content = json::array();
    user_content.push_back({{"type", "text"}, {"text", prompt.rendered_text}});
    for (const auto& image : prompt.attached_images) {
      std::string url = embed_image_bytes
                            ? "data:" + media_type_of(image) + ";base64," + base64_encode(read_file_bytes(image))
                            : "sha256:" + image.content_hash;
      user_content.push_back({{"type", "image_url"}, {"image_url", {{"url", std::move(url)}}}});
    }
  }
  return {{"model", options.model_name},
          {"messages", json::array({{{"role", "system"}, {"content", options.system_text}},
                                    {{"role", "user"}, {"content", std::move(user_content)}}})},
          {"temperature", options.temperature}};
}

std::string parse_wire_response(std::string_view body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error&) {
    throw MalformedResponse("$");
  }
  if (!doc.is_object()) throw MalformedResponse("$");
  auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) throw MalformedResponse("choices");
  const auto& first = (*choices)[0];
  auto message = first.find("message");
  if (message == first.end() || !message->is_object()) throw MalformedResponse("choices[0].message");
  auto content = message->find("content");
  if (content == message->end() || !content->is_string()) throw MalformedResponse("choices[0].message.content");
  return content->get<std::string>();
}

Sleeper real_sleeper() {
  return [](std::int64_t ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
}

std::int64_t backoff_delay_ms(const RetryPolicy& policy, int retry, std::mt19937_64& rng) {
  const double scaled = static_cast<double>(policy.base_ms) * std::pow(policy.factor, retry);
  std::uniform_int_distribution<std::int64_t> jitter(0, std::max<std::int64_t>(policy.base_ms - 1, 0));
  return static_cast<std::int64_t>(scaled) + jitter(rng);
}

HttpBackend::HttpBackend(BackendConfig config, std::uint64_t seed, Transport transport, Sleeper sleeper,
                         std::int64_t retry_base_ms)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      retry_{config_.max_retries, retry_base_ms, 2.0},
      rng_(seed) {}

InvokeResult HttpBackend::invoke(const CanonicalPrompt& prompt, const InvokeOptions& options) {
  HttpRequest request;
  request.url = config_.endpoint_url;
  while (!request.url.empty() && request.url.back() == '/') request.url.pop_back();
  request.url += "/chat/completions";
  request.timeout_ms = options.timeout_ms;
  request.headers["Content-Type"] = "application/json";
  request.headers["X-Prompt-Hash"] = prompt.prompt_hash;
  if (!config_.auth_token_env.empty()) {
    const char* token = std::getenv(config_.auth_token_env.c_str());
    if (token == nullptr || *token == '\0') throw AuthMissing(config_.auth_token_env);
    request.headers["Authorization"] = std::string("Bearer ") + token;
  }
  request.body = canonical_dump(build_chat_request(prompt, options, true));

  const auto started = std::chrono::steady_clock::now();
  for (int attempt = 0;; ++attempt) {
    try {
      const HttpResponse response = transport_(request);
      if (response.status < 200 || response.status >= 300) throw UpstreamError(response.status, excerpt(response.body));
      InvokeResult result;
      result.content = parse_wire_response(response.body);
      result.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - started)
                              .count();
      return result;
    } catch (const TransportError&) {
      if (attempt >= retry_.max_retries) throw;
      std::int64_t delay = 0;
      {
        std::lock_guard lock(rng_mutex_);
        delay = backoff_delay_ms(retry_, attempt, rng_);
      }
      sleeper_(delay);
    }
  }
}

ScriptedBackend::ScriptedBackend(std::string backend_ref, std::map<std::string, ScriptedResponse> script,
                                 std::optional<ScriptedResponse> fallback, std::uint64_t seed,
                                 std::int64_t latency_jitter_ms)
    : backend_ref_(std::move(backend_ref)),
      script_(std::move(script)),
      fallback_(std::move(fallback)),
      seed_(seed),
      jitter_ms_(latency_jitter_ms) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::always(std::string backend_ref, ScriptedResponse response) {
  return std::make_shared<ScriptedBackend>(std::move(backend_ref), std::map<std::string, ScriptedResponse>{},
                                           std::move(response));
}

InvokeResult ScriptedBackend::invoke(const CanonicalPrompt& prompt, const InvokeOptions& options) {
  {
    std::lock_guard lock(mutex_);
    requests_.push_back({prompt.prompt_hash, canonical_dump(build_chat_request(prompt, options, false))});
  }
  const ScriptedResponse* response = nullptr;
  if (auto it = script_.find(prompt.prompt_hash); it != script_.end()) {
    response = &it->second;
  } else if (fallback_) {
    response = &*fallback_;
  } else {
    throw UpstreamError(404, "no scripted response for prompt " + prompt.prompt_hash);
  }

  std::int64_t latency = response->latency_ms;
  if (jitter_ms_ > 0) {
    const auto digest = hash_content(std::to_string(seed_) + ":" + prompt.prompt_hash);
    latency += static_cast<std::int64_t>(std::stoull(digest.substr(0, 12), nullptr, 16) %
                                         static_cast<std::uint64_t>(jitter_ms_ + 1));
  }

  switch (response->failure) {
    case ScriptedFailure::timeout: throw Timeout("scripted timeout on " + backend_ref_);
    case ScriptedFailure::transport: throw TransportError("scripted transport failure on " + backend_ref_);
    case ScriptedFailure::upstream: throw UpstreamError(500, "scripted upstream failure on " + backend_ref_);
    case ScriptedFailure::auth: throw AuthMissing("SCRIPTED_" + backend_ref_);
    case ScriptedFailure::none: break;
  }
  if (latency > options.timeout_ms) {
    throw Timeout("scripted latency " + std::to_string(latency) + " ms exceeds " +
                  std::to_string(options.timeout_ms) + " ms");
  }
  return {response->text, latency};
}

std::vector<RecordedRequest> ScriptedBackend::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t ScriptedBackend::call_count() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

void BackendRegistry::add(BackendConfig config, std::shared_ptr<Backend> backend) {
  const std::string ref = config.backend_ref;
  configs_[ref] = std::move(config);
  if (backend) backends_[ref] = std::move(backend);
}

void BackendRegistry::override_model(const std::string& model_id, std::shared_ptr<Backend> backend) {
  overrides_[model_id] = std::move(backend);
}

BackendRegistry::Resolved BackendRegistry::resolve(const ModelDescriptor& model) const {
  BackendConfig config;
  if (auto it = configs_.find(model.backend_ref); it != configs_.end()) {
    config = it->second;
  } else {
    config.backend_ref = model.backend_ref;
  }
  if (config.model_name.empty()) config.model_name = model.model_id;
  if (auto it = overrides_.find(model.model_id); it != overrides_.end()) return {it->second, config};
  if (auto it = backends_.find(model.backend_ref); it != backends_.end()) return {it->second, config};
  throw ConfigError("backend_ref", "no backend resolves for model " + model.model_id + " (" + model.backend_ref + ")");
}

}  // namespace concord
