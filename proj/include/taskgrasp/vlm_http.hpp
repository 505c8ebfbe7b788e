#pragma once

// HTTP transport for chat-with-images endpoints. Kept apart from vlm.hpp so
// offline users do not pull in cpp-httplib and OpenSSL.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <regex>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "taskgrasp/error.hpp"
#include "taskgrasp/image.hpp"
#include "taskgrasp/vlm.hpp"

namespace taskgrasp
{

struct VlmEndpointConfig
{
  std::string base_url;  // full endpoint URL, e.g. https://host/v1/chat/completions
  std::string model_name;
  std::string api_key_env_var_name;  // empty: no Authorization header
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double retry_backoff_seconds = 1.0;

  void validate() const
  {
    if (base_url.empty())
      fail(ErrorKind::ConfigError, "endpoint base_url is required");
    if (!(timeout_seconds > 0.0))
      fail(ErrorKind::ConfigError, "timeout_seconds must be positive");
    if (max_retries < 0)
      fail(ErrorKind::ConfigError, "max_retries must be >= 0");
    if (!(retry_backoff_seconds >= 0.0))
      fail(ErrorKind::ConfigError, "retry_backoff_seconds must be >= 0");
  }
};

inline VlmEndpointConfig endpoint_from_json(const nlohmann::json& j)
{
  VlmEndpointConfig c;
  try
  {
    c.base_url = j.at("base_url").get<std::string>();
    c.model_name = j.value("model_name", std::string());
    c.api_key_env_var_name = j.value("api_key_env_var_name", std::string());
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.retry_backoff_seconds = j.value("retry_backoff_seconds", c.retry_backoff_seconds);
  }
  catch (const nlohmann::json::exception& e)
  {
    fail(ErrorKind::ConfigError, std::string("endpoint: ") + e.what());
  }
  c.validate();
  return c;
}

// The request body: one user message with the prompt, then every image as
// base64 PNG, in bundle order.
inline nlohmann::json chat_request_body(const QueryBundle& bundle, const std::string& model)
{
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", bundle.prompt}});
  for (const auto& img : bundle.images)
    content.push_back({{"type", "image"}, {"data", httplib::detail::base64_encode(encode_png(img))}});
  return {{"model", model}, {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
}

inline std::string reply_text_from_body(const std::string& body)
{
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
    fail(ErrorKind::ModelError, "response has no choices");
  const auto& msg = j["choices"][0].value("message", nlohmann::json::object());
  if (!msg.contains("content") || !msg["content"].is_string())
    fail(ErrorKind::ModelError, "response message has no text content");
  return msg["content"].get<std::string>();
}

class HttpVlm : public VlmBackend
{
public:
  using Sleeper = std::function<void(double seconds)>;

  explicit HttpVlm(VlmEndpointConfig cfg, Sleeper sleeper = default_sleeper()) : cfg_(std::move(cfg)), sleep_(sleeper)
  {
    cfg_.validate();
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.base_url, m, url_re))
      fail(ErrorKind::ConfigError, "base_url must look like http(s)://host[:port]/path");
    origin_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/";
  }

  static Sleeper default_sleeper()
  {
    return [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
  }

  // Retries transport failures, timeouts and 5xx with exponential backoff;
  // any 4xx fails at once.
  std::string query(const QueryBundle& bundle, const QueryContext&) const override
  {
    const std::string body = chat_request_body(bundle, cfg_.model_name).dump();
    httplib::Headers headers;
    if (!cfg_.api_key_env_var_name.empty())
    {
      const char* key = std::getenv(cfg_.api_key_env_var_name.c_str());
      if (!key || !*key)
        fail(ErrorKind::AuthError, "environment variable " + cfg_.api_key_env_var_name + " is not set");
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    ErrorKind last_kind = ErrorKind::TransportError;
    std::string last_msg;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt)
    {
      if (attempt > 0)
        sleep_(cfg_.retry_backoff_seconds * std::pow(2.0, attempt - 1));
      // A fresh client per attempt keeps concurrent queries independent.
      httplib::Client cli(origin_);
      const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
      const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - secs) * 1e6);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      const auto started = std::chrono::steady_clock::now();
      auto res = cli.Post(path_, headers, body, "application/json");
      if (!res)
      {
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        const bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                               ((res.error() == httplib::Error::Read || res.error() == httplib::Error::Write) &&
                                elapsed >= 0.9 * cfg_.timeout_seconds);
        last_kind = timed_out ? ErrorKind::Timeout : ErrorKind::TransportError;
        last_msg = httplib::to_string(res.error());
        continue;
      }
      const int status = res->status;
      if (status >= 200 && status < 300)
        return reply_text_from_body(res->body);
      if (status == 401 || status == 403)
        fail(ErrorKind::AuthError, "HTTP " + std::to_string(status) + ": " + res->body);
      if (status < 500)
        fail(ErrorKind::ModelError, "HTTP " + std::to_string(status) + ": " + res->body);
      last_kind = ErrorKind::ModelError;
      last_msg = "HTTP " + std::to_string(status) + ": " + res->body;
    }
    fail(last_kind, last_msg + " (after " + std::to_string(cfg_.max_retries) + " retries)");
  }

  std::string name() const override { return "http:" + cfg_.model_name; }

private:
  VlmEndpointConfig cfg_;
  Sleeper sleep_;
  std::string origin_;
  std::string path_;
};

}  // namespace taskgrasp
