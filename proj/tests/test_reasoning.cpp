#include <atomic>
#include <random>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "labmate/errors.hpp"
#include "labmate/reasoning.hpp"

using namespace labmate;
using nlohmann::json;

namespace {

const std::string kOccupiedReply =
    "Obstruction: Yes; Interaction: Yes; Message: You seem to be using the fumehood. Shall I "
    "wait until you are done?";

Scene lab_scene() {
  Scene s;
  s.scene_id = "lab-1";
  s.objects = {{ClassLabel::HumanChemist, 0, {5, 1.6, 0}}, {ClassLabel::Fumehood, 0, {5, 2, 0}}};
  s.goal = Position3{4.5, 1.2, 0};
  return s;
}

bool is_subsequence(const std::string& small, const std::string& big) {
  std::size_t j = 0;
  for (char c : big) {
    if (j < small.size() && small[j] == c) ++j;
  }
  return j == small.size();
}

// Chat-completions stub that answers every request with a fixed content string.
class StubServer {
 public:
  explicit StubServer(std::string content, int fail_first = 0, int status = 500)
      : content_(std::move(content)), fail_first_(fail_first), status_(status) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      if (hits_++ < fail_first_) {
        res.status = status_;
        return;
      }
      json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content_}}}}}}};
      res.set_content(body.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }
  int hits() const { return hits_; }
  std::string last_body_, last_auth_;

 private:
  httplib::Server server_;
  std::thread thread_;
  std::string content_;
  int fail_first_;
  int status_;
  int port_ = 0;
  std::atomic<int> hits_{0};
};

BackendConfig http_config(const std::string& url) {
  BackendConfig cfg;
  cfg.kind = BackendKind::Http;
  cfg.endpoint_url = url;
  cfg.timeout_ms = 2000;
  cfg.max_retries = 2;
  cfg.backoff_ms = 1;
  return cfg;
}

}  // namespace

TEST(Prompt, DepthVariantAddsDistances) {
  const Scene s = lab_scene();
  const auto r = distance_matrix(s);
  const auto depth = build_prompt(s, r, PromptVariant::VisionPlusDepth);
  const auto vision = build_prompt(s, r, PromptVariant::VisionOnly);
  EXPECT_NE(depth.text.find("This scene contains the following objects: human_chemist[0] and "
                            "fumehood[0]."),
            std::string::npos);
  EXPECT_NE(depth.text.find("The distances between these objects are:"), std::string::npos);
  EXPECT_NE(depth.text.find("fumehood[0]\xE2\x80\x93human_chemist[0]: 0.40 m"), std::string::npos);
  EXPECT_EQ(vision.text.find("distances"), std::string::npos);
  EXPECT_NE(vision.text.find("Respond with Yes or No."), std::string::npos);
  EXPECT_TRUE(depth.distances_included);
  EXPECT_FALSE(vision.distances_included);
  EXPECT_TRUE(is_subsequence(vision.text, depth.text));
}

TEST(Prompt, MultiHumanLabelsIndexed) {
  Scene s = lab_scene();
  s.objects.push_back({ClassLabel::HumanChemist, 1, {1, 1, 0}});
  const auto p = build_prompt(s, distance_matrix(s), PromptVariant::VisionOnly);
  EXPECT_NE(p.text.find("human_chemist[0], fumehood[0] and human_chemist[1]"), std::string::npos);
}

TEST(Prompt, EmptySceneRejected) {
  Scene s;
  EXPECT_THROW(build_prompt(s, distance_matrix(s), PromptVariant::VisionOnly), EmptyScene);
}

TEST(Parse, Examples) {
  auto r = parse_response(kOccupiedReply);
  EXPECT_TRUE(r.obstruction);
  EXPECT_TRUE(r.interaction);
  EXPECT_EQ(r.message, "You seem to be using the fumehood. Shall I wait until you are done?");
  r = parse_response("obstruction: no; interaction: no; message:");
  EXPECT_FALSE(r.obstruction);
  EXPECT_FALSE(r.interaction);
  EXPECT_EQ(r.message, "");
  EXPECT_THROW(parse_response("maybe, depends"), ParseError);
}

TEST(Parse, LenientIsOptIn) {
  EXPECT_THROW(parse_response("Yes. No."), ParseError);
  const auto r = parse_response("Yes. No.", ParseOptions{true});
  EXPECT_TRUE(r.obstruction);
  EXPECT_FALSE(r.interaction);
}

TEST(Parse, ErrorCarriesOffset) {
  try {
    parse_response("Obstruction: Perhaps; Interaction: No");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 13u);
  }
}

TEST(Parse, FuzzNeverCrashes) {
  std::mt19937_64 g(99);
  const std::string alphabet = "Obstruction:Interaction;Message yesnoYESNO \t\n\x01\xff";
  for (int i = 0; i < 20000; ++i) {
    std::string s(g() % 64, ' ');
    for (char& c : s) c = (g() & 1) ? static_cast<char>(g() & 0xff) : alphabet[g() % alphabet.size()];
    try {
      const auto r = parse_response(s);
      EXPECT_EQ(parse_response(format_response(r.obstruction, r.interaction, r.message)).message,
                r.message);
    } catch (const ParseError&) {
    }
  }
}

TEST(Mock, NoiselessMatchesOracle) {
  BackendConfig cfg;
  const Scene s = lab_scene();
  const auto r = query_backend(build_prompt(s, distance_matrix(s), PromptVariant::VisionOnly), cfg, s);
  const auto oracle = classify_scene(s, RuleConfig{});
  EXPECT_EQ(r.obstruction, oracle.obstruction);
  EXPECT_EQ(r.interaction, oracle.interaction);
  EXPECT_EQ(r.raw, kOccupiedReply);
}

TEST(Mock, FullNoiseFlipsBoth) {
  BackendConfig cfg;
  cfg.epsilon = 1.0;
  const Scene s = lab_scene();
  const auto r = mock_judgment(s, cfg, RuleConfig{});
  EXPECT_FALSE(r.obstruction);
  EXPECT_FALSE(r.interaction);
}

TEST(Mock, DeterministicPerScene) {
  BackendConfig cfg;
  cfg.epsilon = 0.5;
  cfg.seed = 17;
  Scene s = lab_scene();
  for (int i = 0; i < 50; ++i) {
    s.scene_id = "id" + std::to_string(i);
    const auto a = mock_judgment(s, cfg, RuleConfig{});
    const auto b = mock_judgment(s, cfg, RuleConfig{});
    EXPECT_EQ(a.raw, b.raw);
    const auto p = parse_response(a.raw);
    EXPECT_EQ(p.obstruction, a.obstruction);
    EXPECT_EQ(p.interaction, a.interaction);
    EXPECT_EQ(p.message, a.message);
  }
}

TEST(Mock, RejectsBadEpsilon) {
  BackendConfig cfg;
  cfg.epsilon = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Http, StubServerReturnsOccupiedReply) {
  StubServer stub(kOccupiedReply);
  const Scene s = lab_scene();
  const auto bundle = build_prompt(s, distance_matrix(s), PromptVariant::VisionOnly);
  const auto r = query_backend(bundle, http_config(stub.url()), s);
  EXPECT_TRUE(r.obstruction);
  EXPECT_TRUE(r.interaction);
  EXPECT_EQ(r.message, "You seem to be using the fumehood. Shall I wait until you are done?");
  const json sent = json::parse(stub.last_body_);
  EXPECT_EQ(sent["model"], "llava-1.5-7b");
  EXPECT_EQ(sent["messages"][0]["role"], "user");
}

TEST(Http, RetriesServerErrors) {
  StubServer stub(kOccupiedReply, 2, 503);
  const Scene s = lab_scene();
  const auto bundle = build_prompt(s, distance_matrix(s), PromptVariant::VisionOnly);
  EXPECT_NO_THROW(query_backend(bundle, http_config(stub.url()), s));
  EXPECT_EQ(stub.hits(), 3);
}

TEST(Http, ClientErrorIsNotRetried) {
  StubServer stub(kOccupiedReply, 100, 400);
  const Scene s = lab_scene();
  const auto bundle = build_prompt(s, distance_matrix(s), PromptVariant::VisionOnly);
  EXPECT_THROW(query_backend(bundle, http_config(stub.url()), s), TransportError);
  EXPECT_EQ(stub.hits(), 1);
}

TEST(Http, MalformedContentIsParseError) {
  StubServer stub("I think so");
  const Scene s = lab_scene();
  const auto bundle = build_prompt(s, distance_matrix(s), PromptVariant::VisionOnly);
  EXPECT_THROW(query_backend(bundle, http_config(stub.url()), s), ParseError);
}

TEST(Http, UnreachableEndpointIsTransportError) {
  int port;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  const Scene s = lab_scene();
  const auto bundle = build_prompt(s, distance_matrix(s), PromptVariant::VisionOnly);
  auto cfg = http_config("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions");
  EXPECT_THROW(query_backend(bundle, cfg, s), TransportError);
}

TEST(Http, ApiKeyIsBearerToken) {
  StubServer stub(kOccupiedReply);
  ::setenv("LABMATE_API_KEY", "sekrit", 1);
  const Scene s = lab_scene();
  const auto bundle = build_prompt(s, distance_matrix(s), PromptVariant::VisionOnly);
  query_backend(bundle, http_config(stub.url()), s);
  ::unsetenv("LABMATE_API_KEY");
  EXPECT_EQ(stub.last_auth_, "Bearer sekrit");
}

TEST(Http, ImageReferenceAttached) {
  HttpBackend backend(http_config("http://127.0.0.1:1/x"));
  PromptBundle b;
  b.text = "hello";
  b.image_ref = "https://example.org/img.png";
  const json body = json::parse(backend.request_body(b));
  const json& content = body["messages"][0]["content"];
  ASSERT_TRUE(content.is_array());
  EXPECT_EQ(content[1]["image_url"]["url"], "https://example.org/img.png");
  b.image_ref.reset();
  EXPECT_TRUE(json::parse(backend.request_body(b))["messages"][0]["content"].is_string());
}

TEST(Http, ExtractsArrayContent) {
  const std::string body =
      R"({"choices":[{"message":{"content":[{"type":"text","text":"Obstruction: No; "},{"type":"text","text":"Interaction: No; Message:"}]}}]})";
  EXPECT_EQ(extract_completion_text(body), "Obstruction: No; Interaction: No; Message:");
}
