#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "labmate/perception.hpp"
#include "labmate/rules.hpp"

namespace labmate {

enum class PromptVariant { VisionOnly, VisionPlusDepth };

std::string_view to_string(PromptVariant variant);  // "vision" | "vision+depth"
PromptVariant parse_variant(std::string_view name);

struct PromptBundle {
  std::string text;
  std::optional<std::string> image_ref;
  std::vector<ClassLabel> labels;
  bool distances_included = false;
};

/// Instantiates the standard lab-scene question. The depth variant inserts the
/// rendered distances and the threshold rules; every other sentence is shared,
/// so the vision-only text is always a subsequence of the depth text.
PromptBundle build_prompt(const Scene& scene, const DistanceReport& report,
                          PromptVariant variant, const RuleConfig& rules = {});

struct VlmResponse {
  bool obstruction = false;
  bool interaction = false;
  std::string message;
  std::string raw;

  SceneJudgment to_judgment(JudgmentSource source) const {
    return SceneJudgment::make(obstruction, interaction, message, source);
  }
};

/// "Obstruction: Yes; Interaction: No; Message: ..." exactly as the parser
/// expects it.
std::string format_response(bool obstruction, bool interaction, std::string_view message);

struct ParseOptions {
  /// Fall back to the first two standalone yes/no tokens when the structured
  /// grammar does not match.
  bool lenient = false;
};

VlmResponse parse_response(std::string_view raw, const ParseOptions& options = {});

enum class BackendKind { Mock, Http };

std::string_view to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view name);

struct BackendConfig {
  BackendKind kind = BackendKind::Mock;
  /// Report label for this backend, e.g. "base" or "fine-tuned".
  std::string name;
  std::string endpoint_url;
  std::string model_name = "llava-1.5-7b";
  int timeout_ms = 30000;
  int max_retries = 3;
  int backoff_ms = 250;
  int max_in_flight = 4;
  bool attach_images = true;
  bool lenient_parse = false;
  double epsilon = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::string label() const;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual VlmResponse query(const PromptBundle& bundle, const Scene& scene) = 0;
  virtual JudgmentSource source() const = 0;
};

/// Seed of the per-scene flip generator; depends only on the configured seed
/// and the scene id, never on evaluation order.
std::uint64_t mock_scene_seed(std::uint64_t seed, std::string_view scene_id);

VlmResponse mock_judgment(const Scene& scene, const BackendConfig& cfg, const RuleConfig& rules);

class MockBackend final : public Backend {
 public:
  MockBackend(BackendConfig cfg, RuleConfig rules);
  VlmResponse query(const PromptBundle& bundle, const Scene& scene) override;
  JudgmentSource source() const override { return JudgmentSource::Mock; }

 private:
  BackendConfig cfg_;
  RuleConfig rules_;
};

/// Chat-completions client. Thread-safe; at most `max_in_flight` requests run
/// concurrently per instance.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig cfg);
  ~HttpBackend() override;
  VlmResponse query(const PromptBundle& bundle, const Scene& scene) override;
  JudgmentSource source() const override { return JudgmentSource::Live; }

  /// JSON request body for a bundle; exposed for tests.
  std::string request_body(const PromptBundle& bundle) const;

 private:
  struct Impl;
  BackendConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, const RuleConfig& rules);

VlmResponse query_backend(const PromptBundle& bundle, const BackendConfig& cfg,
                          const Scene& scene, const RuleConfig& rules = {});

/// Text at the chat-completions content path of a response body.
std::string extract_completion_text(std::string_view body);

}  // namespace labmate
