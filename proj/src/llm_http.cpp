#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <future>
#include <semaphore>
#include <thread>

#include "gct/error.hpp"
#include "gct/llm.hpp"

namespace gct {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string origin;  ///< scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("LLM endpoint must be an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

struct HttpChatLLM::Impl {
  Endpoint endpoint;
  std::string api_key;
  std::counting_semaphore<1024> slots;

  explicit Impl(const HttpChatConfig& c) : endpoint(split_endpoint(c.endpoint)), slots(std::max(1, std::min(1024, c.max_concurrency))) {
    if (const char* k = std::getenv(c.api_key_env.c_str())) api_key = k;
  }
};

HttpChatLLM::HttpChatLLM(HttpChatConfig config) : config_(std::move(config)), impl_(std::make_unique<Impl>(config_)) {}

HttpChatLLM::~HttpChatLLM() = default;

json HttpChatLLM::request_body(const Conversation& conv) const {
  json messages = json::array();
  for (const auto& m : conv) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", config_.model}, {"messages", messages}, {"temperature", config_.temperature}, {"seed", config_.seed}};
}

std::string HttpChatLLM::parse_response(std::string_view body) {
  try {
    auto j = json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw LLMError(std::string("malformed chat-completion response: ") + e.what());
  }
}

std::string HttpChatLLM::complete(const Conversation& conv) {
  impl_->slots.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{impl_->slots};

  httplib::Client client(impl_->endpoint.origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(config_.timeout_s));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!impl_->api_key.empty()) headers.emplace("Authorization", "Bearer " + impl_->api_key);
  const std::string body = request_body(conv).dump();

  std::string last_error;
  double backoff = config_.backoff_initial_s;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
    auto res = client.Post(impl_->endpoint.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return parse_response(res->body);
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
    if (!retryable(res->status)) break;
  }
  throw LLMError("chat completion failed at " + config_.endpoint + " (" + last_error + ")");
}

std::vector<std::string> HttpChatLLM::complete_batch(const std::vector<Conversation>& convs) {
  std::vector<std::future<std::string>> futures;
  futures.reserve(convs.size());
  for (const auto& c : convs) futures.push_back(std::async(std::launch::async, [this, &c] { return complete(c); }));
  std::vector<std::string> out;
  out.reserve(convs.size());
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

}  // namespace gct
