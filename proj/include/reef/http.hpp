#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "reef/common.hpp"

namespace reef::http {

using Headers = std::map<std::string, std::string>;

struct Response {
  int status = 0;
  std::string body;
  Headers headers;
};

struct Request {
  std::string method = "GET";
  std::string url;
  Headers headers;
  std::string body;
  std::string content_type;
};

// Anything that can answer an HTTP request. Implementations must be safe to
// call from several workers at once.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual Response send(const Request& request) = 0;
};

// Real network access through cpp-httplib (http and https).
class NetworkTransport final : public Transport {
 public:
  explicit NetworkTransport(std::chrono::seconds timeout = std::chrono::seconds(30));
  Response send(const Request& request) override;

 private:
  std::chrono::seconds timeout_;
};

class NetworkAccessDenied : public TransportError {
 public:
  explicit NetworkAccessDenied(const std::string& url)
      : TransportError("network access attempted in offline mode: " + url, false) {}
};

// Installed in offline mode: every request fails and is counted.
class NetworkGuard final : public Transport {
 public:
  Response send(const Request& request) override;
  std::size_t attempts() const noexcept { return attempts_.load(); }

 private:
  std::atomic<std::size_t> attempts_{0};
};

// Token bucket shared by all workers of a stage.
class RateLimiter {
 public:
  // rate <= 0 disables limiting.
  RateLimiter(double tokens_per_second, double burst);
  void acquire();

 private:
  using Clock = std::chrono::steady_clock;
  double rate_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mu_;
};

struct Url {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string path;  // path plus query, always starts with '/'
};

Url parse_url(const std::string& url);

}  // namespace reef::http
