#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <thread>

#include "prefalign/genclient.hpp"

namespace prefalign {

json EndpointConfig::to_json() const {
  return {{"url", url}, {"model", model}, {"timeout", timeout}, {"min_interval", min_interval}};
}

EndpointConfig EndpointConfig::from_json(const json& j) {
  EndpointConfig c;
  c.url = j.value("url", c.url);
  c.model = j.value("model", c.model);
  c.api_key = j.value("api_key", c.api_key);
  c.timeout = j.value("timeout", c.timeout);
  c.min_interval = j.value("min_interval", c.min_interval);
  return c;
}

HttpChatEndpoint::HttpChatEndpoint(EndpointConfig cfg) : cfg_(std::move(cfg)) {
  const auto scheme_end = cfg_.url.find("://");
  if (scheme_end == std::string::npos) throw DomainError("endpoint URL lacks a scheme: " + cfg_.url);
  const std::string scheme = cfg_.url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw DomainError("unsupported endpoint scheme: " + scheme);
  const auto path_start = cfg_.url.find('/', scheme_end + 3);
  scheme_host_port_ = cfg_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/chat/completions" : cfg_.url.substr(path_start);
}

json HttpChatEndpoint::request_body(const std::string& model, const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json body{{"model", model}, {"messages", messages}, {"max_tokens", request.max_tokens}};
  if (request.temperature) body["temperature"] = *request.temperature;
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

std::string HttpChatEndpoint::parse_response_body(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("response is not JSON: ") + e.what());
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw MalformedResponse("message content is not a string");
    return content.get<std::string>();
  } catch (const json::exception&) {
    throw MalformedResponse("response lacks choices[0].message.content");
  }
}

std::string HttpChatEndpoint::complete(const ChatRequest& request) {
  if (cfg_.min_interval > 0) {
    std::lock_guard lock(pace_mu_);
    const double now = std::chrono::duration<double>(
                           std::chrono::steady_clock::now().time_since_epoch()).count();
    const double wait = last_request_ + cfg_.min_interval - now;
    if (wait > 0) std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    last_request_ = std::max(now, last_request_ + cfg_.min_interval);
  }
  httplib::Client client(scheme_host_port_);
  const auto secs = static_cast<time_t>(cfg_.timeout);
  const auto usecs = static_cast<time_t>((cfg_.timeout - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  const std::string body = request_body(cfg_.model, request).dump();
  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) throw TransportError("request to " + cfg_.url + " failed: " + httplib::to_string(res.error()));
  if (res->status == 429) {
    double retry_after = 0.0;
    if (res->has_header("Retry-After")) {
      try {
        retry_after = std::stod(res->get_header_value("Retry-After"));
      } catch (const std::exception&) {
        retry_after = 0.0;
      }
    }
    throw RateLimited("endpoint returned 429", retry_after);
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
  }
  return parse_response_body(res->body);
}

std::unique_ptr<ChatEndpoint> make_endpoint(const EndpointConfig& cfg) {
  if (cfg.url.rfind("mock://", 0) == 0) {
    const std::string kind = cfg.url.substr(7);
    const std::string model = cfg.model == "default" ? "mock-" + kind : cfg.model;
    if (kind == "generator") return std::make_unique<SimulatedGenerator>(model);
    if (kind == "judge") return std::make_unique<SimulatedJudge>(model);
    throw DomainError("unknown mock endpoint '" + cfg.url + "'");
  }
  if (cfg.url.empty()) throw DomainError("endpoint URL is empty");
  return std::make_unique<HttpChatEndpoint>(cfg);
}

}  // namespace prefalign
