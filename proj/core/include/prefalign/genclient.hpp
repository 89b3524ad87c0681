#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "prefalign/common.hpp"
#include "prefalign/corpus.hpp"

namespace prefalign {

enum class TemplateId { A, B, C };
enum class Profile { Novice, Experienced };

std::string to_string(TemplateId t);
std::string to_string(Profile p);
TemplateId parse_template_id(std::string_view s);
Profile parse_profile(std::string_view s);

struct ContextFile {
  std::string name;
  std::string content;  // may be empty: only the name is cited
};

struct PromptTemplate {
  TemplateId id = TemplateId::A;
  /// Placeholders: {profile}, {Profile}, {script}, {function_name}, {context_files}.
  std::string body;

  static const PromptTemplate& builtin(TemplateId id);
};

/// Throws MissingPlaceholder when B/C lack a function name or C lacks context files.
std::string render_prompt(const PromptTemplate& t, const SourceProgram& program, Profile profile,
                          const std::optional<std::string>& function_name = std::nullopt,
                          const std::vector<ContextFile>& context = {});

struct FeedbackCandidate {
  std::string id;
  std::string program_id;
  TemplateId template_id = TemplateId::A;
  std::string generator_model;
  Profile profile = Profile::Novice;
  int sample_index = 0;
  std::string prompt;
  std::string feedback_text;
  std::optional<std::string> corrected_code;
  std::string raw_response;

  json to_json() const;
  static FeedbackCandidate from_json(const json& j);
};

/// Content of the first fenced block after the last "Corrected Code:" marker,
/// else the last fenced block. Throws NoCodeFound when there is no fence.
std::string extract_corrected_code(const std::string& raw_response);

// ---------------------------------------------------------------------------
// Chat endpoints

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::optional<double> temperature;  // unset: endpoint default
  int max_tokens = 1024;
  std::optional<std::uint64_t> seed;
};

class ChatEndpoint {
 public:
  virtual ~ChatEndpoint() = default;
  /// Throws TransportError, RateLimited or MalformedResponse.
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string model_name() const = 0;
};

struct EndpointConfig {
  std::string url;      // http(s)://host[:port]/path or mock://generator, mock://judge
  std::string model = "default";
  std::string api_key;
  double timeout = 60.0;
  double min_interval = 0.0;  // seconds between requests (client-side rate limit)

  json to_json() const;  // never includes the API key
  static EndpointConfig from_json(const json& j);
};

/// OpenAI-style chat-completions client.
class HttpChatEndpoint final : public ChatEndpoint {
 public:
  explicit HttpChatEndpoint(EndpointConfig cfg);
  std::string complete(const ChatRequest& request) override;
  std::string model_name() const override { return cfg_.model; }

  static json request_body(const std::string& model, const ChatRequest& request);
  static std::string parse_response_body(const std::string& body);

 private:
  EndpointConfig cfg_;
  std::string scheme_host_port_;
  std::string path_;
  std::mutex pace_mu_;
  double last_request_ = -1e300;
};

/// Deterministic stand-in for a generator model: answers a feedback prompt
/// with guidance plus a corrected program whose quality depends on the seed.
class SimulatedGenerator final : public ChatEndpoint {
 public:
  explicit SimulatedGenerator(std::string model = "mock-generator") : model_(std::move(model)) {}
  std::string complete(const ChatRequest& request) override;
  std::string model_name() const override { return model_; }

 private:
  std::string model_;
};

/// Deterministic stand-in for a judge model: honest about identical inputs,
/// scores feedback from surface features.
class SimulatedJudge final : public ChatEndpoint {
 public:
  explicit SimulatedJudge(std::string model = "mock-judge") : model_(std::move(model)) {}
  std::string complete(const ChatRequest& request) override;
  std::string model_name() const override { return model_; }

  static std::vector<int> rubric_for(const std::string& feedback);

 private:
  std::string model_;
};

std::unique_ptr<ChatEndpoint> make_endpoint(const EndpointConfig& cfg);

using Sleeper = std::function<void(double seconds)>;

struct RetryPolicy {
  int max_attempts = 3;
  double backoff = 0.5;  // seconds, doubled per retry unless the server says otherwise
  Sleeper sleeper;       // default: std::this_thread::sleep_for
};

/// Calls `endpoint` at most `policy.max_attempts` times, retrying transport
/// failures and rate limits. Rethrows the last error once the budget is spent.
std::string complete_with_retry(ChatEndpoint& endpoint, const ChatRequest& request,
                                const RetryPolicy& policy);

// ---------------------------------------------------------------------------
// Candidate generation

struct GenerateOptions {
  std::vector<TemplateId> templates{TemplateId::A, TemplateId::B, TemplateId::C};
  int k_samples = 5;
  Profile profile = Profile::Novice;
  std::optional<std::string> function_name;  // default: the problem's suite function
  std::vector<ContextFile> context;          // default for C: <problem>.h and <problem>.cpp
  std::optional<double> temperature;
  int max_tokens = 1024;
  std::uint64_t seed = 0;
  RetryPolicy retry;
  unsigned concurrency = 4;
};

struct GenerationFailure {
  std::string program_id;
  TemplateId template_id = TemplateId::A;
  int sample_index = 0;
  std::string error;

  json to_json() const;
};

struct GenerationResult {
  std::vector<FeedbackCandidate> candidates;
  std::vector<GenerationFailure> failures;
};

/// Candidates come back ordered by (template, sample index).
GenerationResult generate_candidates(ChatEndpoint& endpoint, const SourceProgram& program,
                                     const GenerateOptions& opts);

/// Default function name and context files used when a program's template
/// needs them and the caller supplied none.
std::string default_function_name(ProblemId problem);
std::vector<ContextFile> default_context(ProblemId problem, Language language);

}  // namespace prefalign
