#include "prefalign/genclient.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <thread>

#include "prefalign/sandbox.hpp"

namespace prefalign {

std::string to_string(TemplateId t) {
  switch (t) {
    case TemplateId::A: return "A";
    case TemplateId::B: return "B";
    case TemplateId::C: return "C";
  }
  return "A";
}

std::string to_string(Profile p) { return p == Profile::Novice ? "Novice" : "Experienced"; }

TemplateId parse_template_id(std::string_view s) {
  if (s == "A" || s == "a") return TemplateId::A;
  if (s == "B" || s == "b") return TemplateId::B;
  if (s == "C" || s == "c") return TemplateId::C;
  throw DomainError("unknown template id '" + std::string(s) + "'");
}

Profile parse_profile(std::string_view s) {
  if (s == "Novice" || s == "novice") return Profile::Novice;
  if (s == "Experienced" || s == "experienced") return Profile::Experienced;
  throw DomainError("unknown profile '" + std::string(s) + "'");
}

const PromptTemplate& PromptTemplate::builtin(TemplateId id) {
  static const PromptTemplate a{
      TemplateId::A,
      "You are a senior programming engineer and code reviewer.\n"
      "The {profile} programmer has written the following script: {script}.\n"
      "If the programmer's code is well-written and functional, offer positive feedback; "
      "otherwise, provide clear, step-by-step guidance to help them identify the problem and "
      "then include corrected code derived from your guidance.\n"
      "Corrected Code: <insert corrected code here>"};
  static const PromptTemplate b{
      TemplateId::B,
      "You are a senior programming engineer and code reviewer.\n"
      "{Profile} programmers are required to complete a function {function_name}. "
      "The programmer has written the following script: {script}.\n"
      "If the programmer's code is well-written and functional, offer positive feedback; "
      "otherwise, provide clear, step-by-step guidance to help them identify the problem and "
      "then include corrected code derived from your guidance.\n"
      "Corrected Code: <insert corrected code here>"};
  static const PromptTemplate c{
      TemplateId::C,
      "You are a senior programming engineer and code reviewer.\n"
      "{Profile} programmers are required to complete a function {function_name}. "
      "The task context is provided in {context_files}.\n"
      "The programmer has written the following script: {script}.\n"
      "If the programmer's code is well-written and functional, offer positive feedback; "
      "otherwise, provide clear, step-by-step guidance to identify the problem and explain "
      "why it occurs, then include corrected code derived from your guidance.\n"
      "Corrected Code: <insert corrected code here>"};
  switch (id) {
    case TemplateId::A: return a;
    case TemplateId::B: return b;
    case TemplateId::C: return c;
  }
  return a;
}

namespace {

std::string fence_tag(Language l) { return l == Language::Cpp ? "cpp" : "python"; }

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string render_context(const std::vector<ContextFile>& ctx, Language lang) {
  std::string names;
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    if (i > 0) names += (i + 1 == ctx.size()) ? " and " : ", ";
    names += ctx[i].name;
  }
  for (const auto& f : ctx) {
    if (f.content.empty()) continue;
    names += "\n" + f.name + ":\n```" + fence_tag(lang) + "\n" + f.content;
    if (f.content.back() != '\n') names += '\n';
    names += "```";
  }
  return names;
}

}  // namespace

std::string render_prompt(const PromptTemplate& t, const SourceProgram& program, Profile profile,
                          const std::optional<std::string>& function_name,
                          const std::vector<ContextFile>& context) {
  std::string out = t.body;
  const bool needs_fn = out.find("{function_name}") != std::string::npos;
  const bool needs_ctx = out.find("{context_files}") != std::string::npos;
  if (needs_fn && (!function_name || function_name->empty())) {
    throw MissingPlaceholder("function_name");
  }
  if (needs_ctx && context.empty()) throw MissingPlaceholder("context_files");

  std::string lower = profile == Profile::Novice ? "novice" : "experienced";
  std::string upper = lower;
  upper[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(upper[0])));

  std::string script = "\n```" + fence_tag(program.language) + "\n" + program.text;
  if (script.back() != '\n') script += '\n';
  script += "```\n";

  // Substitute the script last so braces inside code are never read as placeholders.
  replace_all(out, "{profile}", lower);
  replace_all(out, "{Profile}", upper);
  if (needs_fn) replace_all(out, "{function_name}", *function_name);
  if (needs_ctx) replace_all(out, "{context_files}", render_context(context, program.language));
  const auto pos = out.find("{script}");
  if (pos == std::string::npos) throw MissingPlaceholder("script");
  out.replace(pos, 8, script);
  if (out.find("Corrected Code:") == std::string::npos) {
    throw MissingPlaceholder("Corrected Code marker");
  }
  return out;
}

json FeedbackCandidate::to_json() const {
  return {{"id", id},
          {"program_id", program_id},
          {"template_id", prefalign::to_string(template_id)},
          {"generator_model", generator_model},
          {"profile", prefalign::to_string(profile)},
          {"sample_index", sample_index},
          {"prompt", prompt},
          {"feedback_text", feedback_text},
          {"corrected_code", corrected_code ? json(*corrected_code) : json(nullptr)},
          {"raw_response", raw_response}};
}

FeedbackCandidate FeedbackCandidate::from_json(const json& j) {
  FeedbackCandidate c;
  c.id = j.at("id").get<std::string>();
  c.program_id = j.at("program_id").get<std::string>();
  c.template_id = parse_template_id(j.at("template_id").get<std::string>());
  c.generator_model = j.value("generator_model", std::string{});
  c.profile = parse_profile(j.value("profile", std::string("Novice")));
  c.sample_index = j.value("sample_index", 0);
  c.prompt = j.value("prompt", std::string{});
  c.feedback_text = j.at("feedback_text").get<std::string>();
  if (j.contains("corrected_code") && !j["corrected_code"].is_null()) {
    c.corrected_code = j["corrected_code"].get<std::string>();
  }
  c.raw_response = j.value("raw_response", std::string{});
  return c;
}

namespace {

struct Fence {
  std::size_t start;  // offset of the opening ``` line
  std::string content;
};

std::vector<Fence> find_fences(const std::string& s) {
  std::vector<Fence> out;
  std::size_t pos = 0;
  while (true) {
    const auto open = s.find("```", pos);
    if (open == std::string::npos) break;
    const auto line_end = s.find('\n', open);
    if (line_end == std::string::npos) break;
    // Closing fence must start a line.
    std::size_t close = line_end;
    while (true) {
      close = s.find("```", close);
      if (close == std::string::npos || s[close - 1] == '\n') break;
      close += 3;
    }
    if (close == std::string::npos) break;
    std::string content = s.substr(line_end + 1, close - line_end - 1);
    while (!content.empty() && (content.back() == '\n' || content.back() == '\r')) content.pop_back();
    out.push_back({open, std::move(content)});
    const auto after = s.find('\n', close);
    pos = after == std::string::npos ? s.size() : after + 1;
  }
  return out;
}

}  // namespace

std::string extract_corrected_code(const std::string& raw) {
  const auto fences = find_fences(raw);
  if (fences.empty()) throw NoCodeFound("response contains no fenced code block");
  const auto marker = raw.rfind("Corrected Code:");
  if (marker != std::string::npos) {
    for (const auto& f : fences) {
      if (f.start > marker) return f.content;
    }
  }
  return fences.back().content;
}

json GenerationFailure::to_json() const {
  return {{"program_id", program_id},
          {"template_id", prefalign::to_string(template_id)},
          {"sample_index", sample_index},
          {"error", error}};
}

std::string default_function_name(ProblemId problem) {
  if (problem == ProblemId::Other) return {};
  return builtin_suite(problem).function_name;
}

std::vector<ContextFile> default_context(ProblemId problem, Language language) {
  std::string stem;
  switch (problem) {
    case ProblemId::TwoSum: stem = "twosum"; break;
    case ProblemId::MinStack: stem = "minstack"; break;
    case ProblemId::TicTacToe: stem = "tictactoe"; break;
    case ProblemId::Other: return {};
  }
  if (language == Language::Python) return {{stem + ".py", ""}};
  return {{stem + ".h", ""}, {stem + ".cpp", ""}};
}

std::string complete_with_retry(ChatEndpoint& endpoint, const ChatRequest& request,
                                const RetryPolicy& policy) {
  if (policy.max_attempts < 1) throw PreconditionViolation("retry budget must be >= 1");
  auto sleep = [&](double s) {
    if (s <= 0) return;
    if (policy.sleeper) {
      policy.sleeper(s);
    } else {
      std::this_thread::sleep_for(std::chrono::duration<double>(s));
    }
  };
  double backoff = policy.backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return endpoint.complete(request);
    } catch (const RateLimited& e) {
      if (attempt >= policy.max_attempts) throw;
      sleep(e.retry_after() > 0 ? e.retry_after() : backoff);
    } catch (const TransportError&) {
      if (attempt >= policy.max_attempts) throw;
      sleep(backoff);
    }
    backoff *= 2;
  }
}

GenerationResult generate_candidates(ChatEndpoint& endpoint, const SourceProgram& program,
                                     const GenerateOptions& opts) {
  if (opts.k_samples < 1) throw PreconditionViolation("k_samples must be >= 1");
  if (opts.templates.empty()) throw PreconditionViolation("no templates requested");

  const std::optional<std::string> fn =
      opts.function_name ? opts.function_name
                         : (program.problem == ProblemId::Other
                                ? std::nullopt
                                : std::optional<std::string>(default_function_name(program.problem)));
  const std::vector<ContextFile> ctx =
      opts.context.empty() ? default_context(program.problem, program.language) : opts.context;

  struct Job {
    TemplateId tid;
    int sample;
    std::string prompt;
  };
  std::vector<Job> jobs;
  for (auto tid : opts.templates) {
    const std::string prompt = render_prompt(PromptTemplate::builtin(tid), program, opts.profile, fn, ctx);
    for (int s = 0; s < opts.k_samples; ++s) jobs.push_back({tid, s, prompt});
  }

  struct Slot {
    std::optional<FeedbackCandidate> cand;
    std::optional<GenerationFailure> fail;
  };
  std::vector<Slot> slots(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;

  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      {
        std::lock_guard lock(fatal_mu);
        if (fatal) return;
      }
      const Job& job = jobs[i];
      const std::string key = program.id + "/" + to_string(job.tid) + "/" + std::to_string(job.sample);
      ChatRequest req;
      req.messages = {{"user", job.prompt}};
      req.temperature = opts.temperature;
      req.max_tokens = opts.max_tokens;
      req.seed = derive_seed(opts.seed, key);
      try {
        std::string raw, last_error;
        // Transport failures, rate limits and malformed replies share one budget.
        RetryPolicy once = opts.retry;
        once.max_attempts = 1;
        double backoff = opts.retry.backoff;
        for (int attempt = 1; attempt <= opts.retry.max_attempts; ++attempt) {
          const bool last = attempt == opts.retry.max_attempts;
          double wait = 0.0;
          try {
            raw = complete_with_retry(endpoint, req, once);
            if (!trim(raw).empty()) break;
            last_error = "empty response";
          } catch (const MalformedResponse& e) {
            last_error = e.what();
            raw.clear();
          } catch (const RateLimited& e) {
            if (last) throw;
            wait = e.retry_after() > 0 ? e.retry_after() : backoff;
          } catch (const TransportError&) {
            if (last) throw;
            wait = backoff;
          }
          if (wait > 0 && !last) {
            if (opts.retry.sleeper) {
              opts.retry.sleeper(wait);
            } else {
              std::this_thread::sleep_for(std::chrono::duration<double>(wait));
            }
          }
          backoff *= 2;
        }
        if (trim(raw).empty()) {
          slots[i].fail = GenerationFailure{program.id, job.tid, job.sample, last_error};
          continue;
        }
        FeedbackCandidate c;
        c.id = key;
        c.program_id = program.id;
        c.template_id = job.tid;
        c.generator_model = endpoint.model_name();
        c.profile = opts.profile;
        c.sample_index = job.sample;
        c.prompt = job.prompt;
        c.raw_response = raw;
        c.feedback_text = trim(raw);
        try {
          c.corrected_code = extract_corrected_code(raw);
        } catch (const NoCodeFound&) {
        }
        slots[i].cand = std::move(c);
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(opts.concurrency, static_cast<unsigned>(jobs.size())));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  GenerationResult res;
  for (auto& s : slots) {
    if (s.cand) res.candidates.push_back(std::move(*s.cand));
    if (s.fail) res.failures.push_back(std::move(*s.fail));
  }
  return res;
}

}  // namespace prefalign
