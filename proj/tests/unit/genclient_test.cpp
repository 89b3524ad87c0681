#include <gtest/gtest.h>

#include <atomic>
#include <thread>

// must match the core library build of httplib
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "prefalign/genclient.hpp"
#include "prefalign/sandbox.hpp"

using namespace prefalign;

namespace {

SourceProgram minstack() {
  SourceProgram p;
  p.id = "ms";
  p.problem = ProblemId::MinStack;
  p.language = Language::Cpp;
  p.text = buggy_minstack_solution();
  return p;
}

class ScriptedEndpoint : public ChatEndpoint {
 public:
  explicit ScriptedEndpoint(std::vector<std::function<std::string()>> script) : script_(std::move(script)) {}
  std::string complete(const ChatRequest&) override {
    const std::size_t i = calls_++;
    return script_[std::min(i, script_.size() - 1)]();
  }
  std::string model_name() const override { return "scripted"; }
  std::size_t calls() const { return calls_; }

 private:
  std::vector<std::function<std::string()>> script_;
  std::atomic<std::size_t> calls_{0};
};

GenerateOptions single(TemplateId t, int k = 1) {
  GenerateOptions o;
  o.templates = {t};
  o.k_samples = k;
  o.concurrency = 1;
  o.retry.sleeper = [](double) {};
  return o;
}

}  // namespace

TEST(Prompt, TemplateAOpening) {
  const auto p = minstack();
  const auto text = render_prompt(PromptTemplate::builtin(TemplateId::A), p, Profile::Novice);
  EXPECT_EQ(text.rfind("You are a senior programming engineer and code reviewer.", 0), 0u);
  EXPECT_NE(text.find(p.text), std::string::npos);
  EXPECT_NE(text.find("Corrected Code:"), std::string::npos);
  EXPECT_EQ(text, render_prompt(PromptTemplate::builtin(TemplateId::A), p, Profile::Novice));
}

TEST(Prompt, MissingPlaceholders) {
  const auto p = minstack();
  try {
    render_prompt(PromptTemplate::builtin(TemplateId::B), p, Profile::Novice);
    FAIL();
  } catch (const MissingPlaceholder& e) {
    EXPECT_NE(std::string(e.what()).find("function_name"), std::string::npos);
  }
  EXPECT_THROW(render_prompt(PromptTemplate::builtin(TemplateId::C), p, Profile::Novice, "push"),
               MissingPlaceholder);
  const auto c = render_prompt(PromptTemplate::builtin(TemplateId::C), p, Profile::Experienced, "push",
                               {{"MinStack.h", ""}, {"MinStack.cpp", ""}});
  EXPECT_NE(c.find("MinStack.h"), std::string::npos);
  for (const char* ph : {"{profile}", "{Profile}", "{script}", "{function_name}", "{context_files}"}) {
    EXPECT_EQ(c.find(ph), std::string::npos) << ph;
  }
}

TEST(Extract, MarkerRules) {
  EXPECT_EQ(extract_corrected_code("fix it\nCorrected Code:\n```cpp\nint x;\n```"), "int x;");
  EXPECT_THROW(extract_corrected_code("prose only"), NoCodeFound);
  const std::string two_before = "```\nfirst\n```\n```\nsecond\n```\nCorrected Code:\n```python\nthird\n```\n";
  EXPECT_EQ(extract_corrected_code(two_before), "third");
  EXPECT_EQ(extract_corrected_code("```a\none\n```\ntext\n```b\ntwo\n```"), "two");
  const auto got = extract_corrected_code("Corrected Code:\n```cpp\nint y;\n```");
  EXPECT_EQ(got.find("```"), std::string::npos);
  EXPECT_EQ(got.find("Corrected Code"), std::string::npos);
}

TEST(Generate, PassThroughAndOrdering) {
  ScriptedEndpoint ep({[] { return std::string("fixed text\n```\ncode\n```"); }});
  auto opts = single(TemplateId::A, 3);
  opts.templates = {TemplateId::A, TemplateId::B, TemplateId::C};
  const auto res = generate_candidates(ep, minstack(), opts);
  ASSERT_EQ(res.candidates.size(), 9u);
  EXPECT_TRUE(res.failures.empty());
  for (std::size_t i = 0; i < res.candidates.size(); ++i) {
    const auto& c = res.candidates[i];
    EXPECT_EQ(c.raw_response, "fixed text\n```\ncode\n```");
    EXPECT_EQ(c.corrected_code, "code");
    EXPECT_EQ(static_cast<std::size_t>(c.template_id), i / 3);
    EXPECT_EQ(static_cast<std::size_t>(c.sample_index), i % 3);
    EXPECT_EQ(FeedbackCandidate::from_json(c.to_json()).to_json(), c.to_json());
  }
}

TEST(Generate, KZeroIsPreconditionViolation) {
  ScriptedEndpoint ep({[] { return std::string("x"); }});
  EXPECT_THROW(generate_candidates(ep, minstack(), single(TemplateId::A, 0)), PreconditionViolation);
}

TEST(Generate, EmptyRepliesBecomeFailuresWithinBudget) {
  ScriptedEndpoint ep({[] { return std::string("  "); }});
  const auto res = generate_candidates(ep, minstack(), single(TemplateId::A));
  EXPECT_TRUE(res.candidates.empty());
  ASSERT_EQ(res.failures.size(), 1u);
  EXPECT_EQ(ep.calls(), 3u);
}

TEST(Generate, TransportErrorsRetriedThenSurfaced) {
  ScriptedEndpoint flaky({[]() -> std::string { throw TransportError("down"); },
                          [] { return std::string("ok\n```\nz\n```"); }});
  const auto res = generate_candidates(flaky, minstack(), single(TemplateId::A));
  ASSERT_EQ(res.candidates.size(), 1u);
  EXPECT_EQ(flaky.calls(), 2u);

  ScriptedEndpoint dead({[]() -> std::string { throw TransportError("down"); }});
  EXPECT_THROW(generate_candidates(dead, minstack(), single(TemplateId::A)), TransportError);
  EXPECT_EQ(dead.calls(), 3u);
}

TEST(Retry, HonorsRetryAfter) {
  std::vector<double> slept;
  RetryPolicy pol;
  pol.sleeper = [&](double s) { slept.push_back(s); };
  ScriptedEndpoint ep({[]() -> std::string { throw RateLimited("slow down", 7.0); },
                       []() -> std::string { throw TransportError("x"); },
                       [] { return std::string("done"); }});
  EXPECT_EQ(complete_with_retry(ep, ChatRequest{}, pol), "done");
  EXPECT_EQ(slept, (std::vector<double>{7.0, 1.0}));
  ScriptedEndpoint limited({[]() -> std::string { throw RateLimited("no", 1.0); }});
  try {
    complete_with_retry(limited, ChatRequest{}, pol);
    FAIL();
  } catch (const RateLimited& e) {
    EXPECT_EQ(e.retry_after(), 1.0);
  }
}

TEST(Simulated, GeneratorIsDeterministic) {
  SimulatedGenerator g1, g2;
  auto opts = single(TemplateId::B, 4);
  opts.seed = 9;
  const auto a = generate_candidates(g1, minstack(), opts);
  const auto b = generate_candidates(g2, minstack(), opts);
  ASSERT_EQ(a.candidates.size(), b.candidates.size());
  for (std::size_t i = 0; i < a.candidates.size(); ++i) {
    EXPECT_EQ(a.candidates[i].raw_response, b.candidates[i].raw_response);
  }
}

TEST(Http, RequestAndResponseShapes) {
  ChatRequest req;
  req.messages = {{"user", "hi"}};
  req.max_tokens = 10;
  const auto body = HttpChatEndpoint::request_body("m", req);
  EXPECT_EQ(body.at("model"), "m");
  EXPECT_EQ(body.at("messages").at(0).at("content"), "hi");
  EXPECT_FALSE(body.contains("temperature"));
  EXPECT_EQ(HttpChatEndpoint::parse_response_body(R"({"choices":[{"message":{"content":"yo"}}]})"), "yo");
  EXPECT_THROW(HttpChatEndpoint::parse_response_body("not json"), MalformedResponse);
  EXPECT_THROW(HttpChatEndpoint::parse_response_body(R"({"choices":[]})"), MalformedResponse);
  EndpointConfig cfg{"http://x/v1", "m", "secret", 1.0, 0.0};
  EXPECT_FALSE(cfg.to_json().dump().find("secret") != std::string::npos);
}

TEST(Http, LocalServerRoundTrip) {
  httplib::Server svr;
  std::atomic<int> hits{0};
  std::string auth;
  svr.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 429;
      res.set_header("Retry-After", "0");
      return;
    }
    auth = req.get_header_value("Authorization");
    const auto body = json::parse(req.body);
    const json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo " + body["model"].get<std::string>()}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  const int port = svr.bind_to_any_port("127.0.0.1");
  std::thread th([&] { svr.listen_after_bind(); });
  svr.wait_until_ready();

  HttpChatEndpoint ep({"http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "mdl", "k", 5.0, 0.0});
  RetryPolicy pol;
  pol.sleeper = [](double) {};
  ChatRequest req;
  req.messages = {{"user", "x"}};
  EXPECT_EQ(complete_with_retry(ep, req, pol), "echo mdl");
  EXPECT_EQ(auth, "Bearer k");
  EXPECT_EQ(hits.load(), 2);
  svr.stop();
  th.join();

  HttpChatEndpoint closed({"http://127.0.0.1:" + std::to_string(port) + "/v1", "m", "", 1.0, 0.0});
  EXPECT_THROW(closed.complete(req), TransportError);
}

TEST(Endpoints, Factory) {
  EXPECT_EQ(make_endpoint({"mock://judge", "j", "", 1, 0})->model_name(), "j");
  EXPECT_THROW(make_endpoint({"mock://nothing", "x", "", 1, 0}), DomainError);
  EXPECT_THROW(make_endpoint({"ftp://host", "x", "", 1, 0}), DomainError);
}
