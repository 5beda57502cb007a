#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <semaphore>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "labmate/decision.hpp"
#include "labmate/errors.hpp"
#include "labmate/reasoning.hpp"
#include "labmate/rng.hpp"
#include "labmate/text.hpp"

namespace labmate {
namespace {

using json = nlohmann::json;

constexpr const char* kApiKeyEnv = "LABMATE_API_KEY";

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw ConfigError("endpoint url needs a scheme: '" + url + "'");
  }
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) {
    return {url, "/"};
  }
  return {url.substr(0, slash), url.substr(slash)};
}

std::string mime_for(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : text::to_lower(path.substr(dot + 1));
  if (ext == "png") return "image/png";
  if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
  if (ext == "webp") return "image/webp";
  return "application/octet-stream";
}

/// Remote references pass through; local files are inlined as data URLs.
std::optional<std::string> image_url(const std::string& ref) {
  if (ref.rfind("http://", 0) == 0 || ref.rfind("https://", 0) == 0 ||
      ref.rfind("data:", 0) == 0) {
    return ref;
  }
  std::ifstream in(ref, std::ios::binary);
  if (!in) {
    return std::nullopt;
  }
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return "data:" + mime_for(ref) + ";base64," + httplib::detail::base64_encode(bytes.str());
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string_view to_string(BackendKind kind) { return kind == BackendKind::Mock ? "mock" : "http"; }

BackendKind parse_backend_kind(std::string_view name) {
  const std::string lower = text::to_lower(name);
  if (lower == "mock") return BackendKind::Mock;
  if (lower == "http") return BackendKind::Http;
  throw ConfigError("unknown backend '" + std::string(name) + "'");
}

void BackendConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  if (timeout_ms <= 0) throw ConfigError("timeout_ms must be positive");
  if (max_retries < 0) throw ConfigError("max_retries must be non-negative");
  if (backoff_ms < 0) throw ConfigError("backoff_ms must be non-negative");
  if (max_in_flight <= 0) throw ConfigError("max_in_flight must be positive");
  if (kind == BackendKind::Http && endpoint_url.empty()) {
    throw ConfigError("http backend requires an endpoint url");
  }
}

std::string BackendConfig::label() const {
  if (!name.empty()) return name;
  if (kind == BackendKind::Mock) return "mock(eps=" + text::fixed(epsilon, 4) + ")";
  return "http(" + model_name + ")";
}

std::uint64_t mock_scene_seed(std::uint64_t seed, std::string_view scene_id) {
  return rng::mix(seed, rng::fnv1a(scene_id));
}

VlmResponse mock_judgment(const Scene& scene, const BackendConfig& cfg, const RuleConfig& rules) {
  const DistanceReport report = distance_matrix(scene);
  const SceneJudgment oracle = classify_scene(scene, report, rules);

  rng::Engine gen(mock_scene_seed(cfg.seed, scene.scene_id));
  const bool flip_obstruction = rng::uniform01(gen) < cfg.epsilon;
  const bool flip_interaction = rng::uniform01(gen) < cfg.epsilon;

  VlmResponse out;
  out.obstruction = oracle.obstruction != flip_obstruction;
  out.interaction = oracle.interaction != flip_interaction;
  if (out.obstruction && out.interaction) {
    out.message = compose_message(true, true, focus_equipment(scene, report));
  }
  out.raw = format_response(out.obstruction, out.interaction, out.message);
  return out;
}

MockBackend::MockBackend(BackendConfig cfg, RuleConfig rules)
    : cfg_(std::move(cfg)), rules_(rules) {
  cfg_.validate();
}

VlmResponse MockBackend::query(const PromptBundle&, const Scene& scene) {
  return mock_judgment(scene, cfg_, rules_);
}

struct HttpBackend::Impl {
  explicit Impl(int cap) : in_flight(cap) {}
  std::counting_semaphore<1024> in_flight;
  Endpoint endpoint;
};

HttpBackend::HttpBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  impl_ = std::make_unique<Impl>(std::min(cfg_.max_in_flight, 1024));
  impl_->endpoint = split_url(cfg_.endpoint_url);
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::request_body(const PromptBundle& bundle) const {
  json content;
  std::optional<std::string> image;
  if (cfg_.attach_images && bundle.image_ref) {
    image = image_url(*bundle.image_ref);
  }
  if (image) {
    content = json::array({{{"type", "text"}, {"text", bundle.text}},
                           {{"type", "image_url"}, {"image_url", {{"url", *image}}}}});
  } else {
    content = bundle.text;
  }
  json body = {{"model", cfg_.model_name},
               {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  return body.dump();
}

std::string extract_completion_text(std::string_view body) {
  const json doc = json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded()) {
    throw ParseError(0, "response body is not JSON", std::string(body));
  }
  const json* content = nullptr;
  if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
    const json& choice = doc["choices"][0];
    if (choice.contains("message") && choice["message"].contains("content")) {
      content = &choice["message"]["content"];
    }
  }
  if (content == nullptr) {
    throw ParseError(0, "missing choices[0].message.content", std::string(body));
  }
  if (content->is_string()) {
    return content->get<std::string>();
  }
  if (content->is_array()) {
    std::string joined;
    for (const auto& part : *content) {
      if (part.contains("text") && part["text"].is_string()) {
        joined += part["text"].get<std::string>();
      }
    }
    return joined;
  }
  throw ParseError(0, "unsupported content type", std::string(body));
}

VlmResponse HttpBackend::query(const PromptBundle& bundle, const Scene&) {
  impl_->in_flight.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{impl_->in_flight};

  const std::string body = request_body(bundle);
  httplib::Headers headers;
  if (const char* key = std::getenv(kApiKeyEnv); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
  std::string last_error;
  bool last_was_timeout = false;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto delay = std::chrono::milliseconds(
          static_cast<long long>(cfg_.backoff_ms) << std::min(attempt - 1, 20));
      std::this_thread::sleep_for(delay);
    }
    httplib::Client client(impl_->endpoint.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(impl_->endpoint.path, headers, body, "application/json");
    const auto elapsed = std::chrono::steady_clock::now() - started;

    if (!res) {
      last_error = httplib::to_string(res.error());
      last_was_timeout = res.error() == httplib::Error::ConnectionTimeout || elapsed >= timeout;
      continue;
    }
    if (retryable_status(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
      last_was_timeout = false;
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    const std::string completion = extract_completion_text(res->body);
    return parse_response(completion, ParseOptions{cfg_.lenient_parse});
  }
  const std::string what = "request to " + cfg_.endpoint_url + " failed after " +
                           std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error;
  if (last_was_timeout) {
    throw TimeoutError(what);
  }
  throw TransportError(what);
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, const RuleConfig& rules) {
  if (cfg.kind == BackendKind::Mock) {
    return std::make_unique<MockBackend>(cfg, rules);
  }
  return std::make_unique<HttpBackend>(cfg);
}

VlmResponse query_backend(const PromptBundle& bundle, const BackendConfig& cfg,
                          const Scene& scene, const RuleConfig& rules) {
  return make_backend(cfg, rules)->query(bundle, scene);
}

}  // namespace labmate
